"""Layer-level forward and backward kernels.

Everything operates on plain numpy arrays (float32 in production, float64
for gradient-verification runs). Each backward returns analytic gradients
of its forward map; conventions that matter for determinism (ReLU
derivative at 0, maxpool tie-breaking) are fixed here.
"""

from collections import namedtuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_CLAMP = 1e-7

# argmax positions plus the original input shape, needed to rebuild the
# gradient tensor in maxpool2x2_backward
PoolIndices = namedtuple("PoolIndices", ["argmax", "input_shape"])


def relu_forward(x):
    """Elementwise max(0, x)."""
    return np.maximum(x, 0)


def relu_backward(x, upstream):
    """Pass upstream where x > 0; the derivative at exactly 0 is 0."""
    if x.shape != upstream.shape:
        raise ValueError(f"relu_backward shape mismatch: {x.shape} vs {upstream.shape}")
    return np.where(x > 0, upstream, np.zeros_like(upstream))


def softmax(x, axis=-1):
    """Probabilities along `axis`, computed with max-subtraction for stability."""
    if x.shape[axis] < 1:
        raise ValueError("softmax needs at least one element along the axis")
    if not np.isfinite(x).all():
        raise FloatingPointError("softmax input contains non-finite values")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def softmax_backward(probs, upstream):
    """Jacobian-vector product of softmax along the last axis."""
    if probs.shape != upstream.shape:
        raise ValueError("softmax_backward shape mismatch")
    inner = np.sum(upstream * probs, axis=-1, keepdims=True)
    return probs * (upstream - inner)


def _check_one_hot(y):
    if not (np.all((y == 0) | (y == 1)) and np.all(np.sum(y, axis=-1) == 1)):
        raise ValueError("labels must be one-hot")


def cross_entropy(y, yhat):
    """Categorical cross-entropy -sum(y * log(yhat)).

    yhat is clamped to [1e-7, 1] before the log. 1-D inputs give the
    single-sample loss; 2-D inputs give the mean over rows.
    """
    if y.shape != yhat.shape:
        raise ValueError(f"cross_entropy shape mismatch: {y.shape} vs {yhat.shape}")
    _check_one_hot(y)
    clamped = np.clip(yhat, LOG_CLAMP, 1.0)
    losses = -np.sum(y * np.log(clamped), axis=-1)
    return float(np.mean(losses))


def cross_entropy_backward(y, yhat):
    """Gradient of the (mean) cross-entropy with respect to yhat."""
    if y.shape != yhat.shape:
        raise ValueError("cross_entropy_backward shape mismatch")
    n = 1 if y.ndim == 1 else y.shape[0]
    clamped = np.clip(yhat, LOG_CLAMP, 1.0)
    grad = -y / clamped / n
    # the clamp is flat outside [LOG_CLAMP, 1], so no gradient flows there
    inside = (yhat >= LOG_CLAMP) & (yhat <= 1.0)
    return np.where(inside, grad, np.zeros_like(grad))


def _conv_cols(x_padded, h, w):
    # (n, c_in, h, w, 3, 3) view over the padded input
    return sliding_window_view(x_padded, (3, 3), axis=(2, 3))[:, :, :h, :w]


def conv2d_forward(x, kernel, bias):
    """3x3 cross-correlation, stride 1, padding 1; spatial size preserved."""
    n, c_in, h, w = x.shape
    c_out, k_in, kh, kw = kernel.shape
    if (kh, kw) != (3, 3):
        raise ValueError("conv kernel must be 3x3")
    if k_in != c_in:
        raise ValueError(f"conv channel mismatch: input {c_in}, kernel expects {k_in}")
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    k_mat = kernel.reshape(c_out, c_in * 9)
    out = np.empty((n, c_out, h, w), dtype=x.dtype)
    for i in range(n):
        cols = _conv_cols(xp[i : i + 1], h, w)[0]          # (c_in, h, w, 3, 3)
        cols = cols.transpose(1, 2, 0, 3, 4).reshape(h * w, c_in * 9)
        out[i] = (cols @ k_mat.T).T.reshape(c_out, h, w)
    return out + bias[None, :, None, None]


def conv2d_backward(x, kernel, bias, upstream):
    """Gradients of conv2d_forward w.r.t. input, kernel, and bias."""
    if upstream.shape != (x.shape[0], kernel.shape[0], x.shape[2], x.shape[3]):
        raise ValueError("conv2d_backward upstream shape mismatch")
    n, c_in, h, w = x.shape
    c_out = kernel.shape[0]

    grad_bias = upstream.sum(axis=(0, 2, 3))

    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    gk_mat = np.zeros((c_out, c_in * 9), dtype=kernel.dtype)
    for i in range(n):
        cols = _conv_cols(xp[i : i + 1], h, w)[0]          # (c_in, h, w, 3, 3)
        cols = cols.transpose(1, 2, 0, 3, 4).reshape(h * w, c_in * 9)
        gk_mat += upstream[i].reshape(c_out, h * w) @ cols
    grad_kernel = gk_mat.reshape(kernel.shape)

    # grad wrt input: correlate upstream with the 180-degree-rotated kernel,
    # in/out channels swapped (stride 1 / pad 1 keeps sizes aligned)
    k_flip = kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    grad_x = conv2d_forward(upstream, np.ascontiguousarray(k_flip), np.zeros(c_in, dtype=x.dtype))
    return grad_x, grad_kernel, grad_bias


def maxpool2x2_forward(x):
    """Non-overlapping 2x2 max pooling; odd trailing row/column dropped.

    Ties resolve to the first element in row-major window order, which
    makes the backward scatter deterministic.
    """
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ValueError("maxpool2x2 needs spatial dims >= 2")
    h2, w2 = h // 2, w // 2
    windows = (
        x[:, :, : h2 * 2, : w2 * 2]
        .reshape(n, c, h2, 2, w2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2, w2, 4)
    )
    argmax = np.argmax(windows, axis=-1)
    out = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return out, PoolIndices(argmax=argmax, input_shape=x.shape)


def maxpool2x2_backward(indices, upstream):
    """Scatter upstream to the recorded argmax positions, zero elsewhere."""
    n, c, h, w = indices.input_shape
    h2, w2 = h // 2, w // 2
    if upstream.shape != (n, c, h2, w2):
        raise ValueError("maxpool2x2_backward: upstream does not match pool indices")
    windows = np.zeros((n, c, h2, w2, 4), dtype=upstream.dtype)
    np.put_along_axis(windows, indices.argmax[..., None], upstream[..., None], axis=-1)
    grad = np.zeros((n, c, h, w), dtype=upstream.dtype)
    grad[:, :, : h2 * 2, : w2 * 2] = (
        windows.reshape(n, c, h2, w2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h2 * 2, w2 * 2)
    )
    return grad


def dense_forward(x, weight, bias):
    """x @ W^T + b for weight of shape [out_units, in_units]."""
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"dense dimension mismatch: input {x.shape[1]}, weight expects {weight.shape[1]}")
    return x @ weight.T + bias


def dense_backward(x, weight, bias, upstream):
    """Gradients of dense_forward w.r.t. input, weight, and bias."""
    if upstream.shape != (x.shape[0], weight.shape[0]):
        raise ValueError("dense_backward upstream shape mismatch")
    grad_x = upstream @ weight
    grad_w = upstream.T @ x
    grad_b = upstream.sum(axis=0)
    return grad_x, grad_w, grad_b


def dropout(x, rate, mode, rng=None):
    """Inverted dropout. Returns (output, mask); backward is upstream * mask.

    Train mode keeps each element with probability 1-rate and scales
    survivors by 1/(1-rate); eval mode is the identity.
    """
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown dropout mode {mode!r}")
    if mode == "eval" or rate == 0:
        return x, np.ones_like(x)
    if rng is None:
        raise ValueError("train-mode dropout requires an rng")
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / keep
    return x * mask, mask


def dropout_backward(mask, upstream):
    if mask.shape != upstream.shape:
        raise ValueError("dropout_backward shape mismatch")
    return upstream * mask
