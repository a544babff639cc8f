"""Modified VGG16: 13-conv backbone plus a 1024/512/softmax classification head.

The graph is a flat list of layer specs with a parameter store keyed by
canonical layer name (block1_conv1 ... block5_conv3, head_dense1,
head_dense2, head_out). Forward records a gradient tape; backward replays
it in reverse and fills a gradient store for the trainable parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import ops

# VGG16 convolutional backbone: blocks of 2,2,3,3,3 conv layers
CONV_BLOCKS = [
    (64, 64),
    (128, 128),
    (256, 256, 256),
    (512, 512, 512),
    (512, 512, 512),
]

DROPOUT_RATE = 0.5


@dataclass
class LayerSpec:
    kind: str                 # conv3x3 | relu | maxpool2x2 | flatten | dense | dropout | softmax
    name: str = ""
    in_width: int = 0         # input channels (conv) or units (dense)
    out_width: int = 0        # output channels (conv) or units (dense)
    rate: float = 0.0         # dropout only
    trainable: bool = False


class GradTape:
    """Ordered record of executed ops; replayed in exact reverse order."""

    def __init__(self):
        self.entries = []     # (layer_index, cache) in execution order

    def record(self, layer_index, cache):
        self.entries.append((layer_index, cache))


@dataclass
class NetworkGraph:
    layers: list
    params: dict              # layer name -> {"kernel"/"weight": arr, "bias": arr}
    input_size: int
    num_classes: int
    dtype: type = np.float32
    flatten_width: int = 0
    metadata: dict = field(default_factory=dict)

    # -- parameter accounting ------------------------------------------------

    def param_layers(self):
        return [l for l in self.layers if l.kind in ("conv3x3", "dense")]

    def conv_param_count(self):
        return sum(
            v.size for name, tensors in self.params.items()
            if name.startswith("block") for v in tensors.values()
        )

    def head_param_count(self):
        return sum(
            v.size for name, tensors in self.params.items()
            if name.startswith("head") for v in tensors.values()
        )

    def trainable_param_count(self):
        return sum(
            sum(v.size for v in self.params[l.name].values())
            for l in self.param_layers() if l.trainable
        )

    def astype(self, dtype):
        """Cast all parameters in place (used to switch to the 64-bit mode)."""
        self.dtype = dtype
        for tensors in self.params.values():
            for key in tensors:
                tensors[key] = tensors[key].astype(dtype)
        return self

    # -- execution -----------------------------------------------------------

    def forward(self, batch, mode="eval", rng=None, tape=None):
        """Run the whole graph; returns class probabilities [n, num_classes].

        Pass a GradTape to record the caches needed for backward (train
        mode). Dropout in train mode draws masks from `rng`.
        """
        expected = (3, self.input_size, self.input_size)
        if batch.ndim != 4 or batch.shape[1:] != expected:
            raise ValueError(f"input shape {batch.shape} does not match (n, {expected})")
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode {mode!r}")
        x = batch.astype(self.dtype, copy=False)
        for i, layer in enumerate(self.layers):
            if layer.kind == "conv3x3":
                p = self.params[layer.name]
                out = ops.conv2d_forward(x, p["kernel"], p["bias"])
                cache = x
            elif layer.kind == "relu":
                out = ops.relu_forward(x)
                cache = x
            elif layer.kind == "maxpool2x2":
                out, cache = ops.maxpool2x2_forward(x)
            elif layer.kind == "flatten":
                cache = x.shape
                out = x.reshape(x.shape[0], -1)
            elif layer.kind == "dense":
                p = self.params[layer.name]
                out = ops.dense_forward(x, p["weight"], p["bias"])
                cache = x
            elif layer.kind == "dropout":
                out, mask = ops.dropout(x, layer.rate, mode, rng)
                cache = mask
            elif layer.kind == "softmax":
                out = ops.softmax(x)
                cache = out
            else:
                raise ValueError(f"unknown layer kind {layer.kind!r}")
            if tape is not None:
                tape.record(i, cache)
            x = out
        if not np.isfinite(x).all():
            raise FloatingPointError("non-finite activation in network output")
        return x

    def backward(self, tape, loss_grad):
        """Reverse-mode accumulation over the tape.

        `loss_grad` is the loss gradient w.r.t. the network output
        (probabilities). Returns {layer_name: {field: grad}} covering
        exactly the trainable parameters; propagation stops once the
        earliest trainable layer has been handled.
        """
        if len(tape.entries) != len(self.layers):
            raise ValueError("tape does not match graph")
        trainable_idx = [i for i, l in enumerate(self.layers) if l.kind in ("conv3x3", "dense") and l.trainable]
        first_trainable = min(trainable_idx) if trainable_idx else len(self.layers)
        grads = {}
        upstream = loss_grad
        for i, cache in reversed(tape.entries):
            if i < first_trainable:
                break
            layer = self.layers[i]
            if layer.kind == "conv3x3":
                p = self.params[layer.name]
                upstream, gk, gb = ops.conv2d_backward(cache, p["kernel"], p["bias"], upstream)
                if layer.trainable:
                    grads[layer.name] = {"kernel": gk, "bias": gb}
            elif layer.kind == "relu":
                upstream = ops.relu_backward(cache, upstream)
            elif layer.kind == "maxpool2x2":
                upstream = ops.maxpool2x2_backward(cache, upstream)
            elif layer.kind == "flatten":
                upstream = upstream.reshape(cache)
            elif layer.kind == "dense":
                p = self.params[layer.name]
                upstream, gw, gb = ops.dense_backward(cache, p["weight"], p["bias"], upstream)
                if layer.trainable:
                    grads[layer.name] = {"weight": gw, "bias": gb}
            elif layer.kind == "dropout":
                upstream = ops.dropout_backward(cache, upstream)
            elif layer.kind == "softmax":
                upstream = ops.softmax_backward(cache, upstream)
        return grads


def build_modified_vgg16(num_classes=3, input_size=150, width_divisor=1, dtype=np.float32):
    """Construct the graph: VGG16 backbone + flatten/dense(1024)/dense(512)/dense(c)/softmax.

    Conv parameters start as zero placeholders awaiting a pretrained-weight
    import; call init_head / init_all to randomize. width_divisor shrinks
    every channel/unit count (used by verification suites).
    """
    if input_size < 32:
        raise ValueError(f"input_size must be >= 32 to survive five poolings, got {input_size}")
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")

    layers = []
    params = {}
    in_ch = 3
    size = input_size
    for b, block in enumerate(CONV_BLOCKS, start=1):
        for c, out_ch in enumerate(block, start=1):
            out_ch = out_ch // width_divisor
            name = f"block{b}_conv{c}"
            layers.append(LayerSpec("conv3x3", name, in_ch, out_ch))
            layers.append(LayerSpec("relu"))
            params[name] = {
                "kernel": np.zeros((out_ch, in_ch, 3, 3), dtype=dtype),
                "bias": np.zeros(out_ch, dtype=dtype),
            }
            in_ch = out_ch
        layers.append(LayerSpec("maxpool2x2"))
        size //= 2

    flatten_width = size * size * in_ch
    layers.append(LayerSpec("flatten"))

    head = [
        ("head_dense1", 1024 // width_divisor, True),
        ("head_dense2", 512 // width_divisor, True),
        ("head_out", num_classes, False),
    ]
    in_units = flatten_width
    for name, units, with_relu_dropout in head:
        layers.append(LayerSpec("dense", name, in_units, units, trainable=True))
        params[name] = {
            "weight": np.zeros((units, in_units), dtype=dtype),
            "bias": np.zeros(units, dtype=dtype),
        }
        if with_relu_dropout:
            layers.append(LayerSpec("relu"))
            layers.append(LayerSpec("dropout", rate=DROPOUT_RATE))
        in_units = units
    layers.append(LayerSpec("softmax"))

    return NetworkGraph(
        layers=layers,
        params=params,
        input_size=input_size,
        num_classes=num_classes,
        dtype=dtype,
        flatten_width=flatten_width,
    )


def _glorot(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def init_head(graph, rng):
    """Glorot-uniform dense weights, zero biases; deterministic given the rng seed."""
    for name in ("head_dense1", "head_dense2", "head_out"):
        w = graph.params[name]["weight"]
        out_units, in_units = w.shape
        graph.params[name]["weight"] = _glorot(rng, w.shape, in_units, out_units, graph.dtype)
        graph.params[name]["bias"] = np.zeros(out_units, dtype=graph.dtype)
    return graph


def init_all(graph, rng):
    """Glorot init for the conv backbone too (training from scratch, no import)."""
    for layer in graph.param_layers():
        if layer.kind != "conv3x3":
            continue
        k = graph.params[layer.name]["kernel"]
        c_out, c_in = k.shape[:2]
        graph.params[layer.name]["kernel"] = _glorot(rng, k.shape, c_in * 9, c_out * 9, graph.dtype)
        graph.params[layer.name]["bias"] = np.zeros(c_out, dtype=graph.dtype)
    return init_head(graph, rng)


def set_trainable(graph, freeze_base):
    """freeze_base=True: conv backbone frozen, head trainable (transfer mode)."""
    for layer in graph.param_layers():
        if layer.kind == "conv3x3":
            layer.trainable = not freeze_base
        else:
            layer.trainable = True
    return graph
