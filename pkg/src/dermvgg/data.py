"""Dataset loading, 150x150 RGB preprocessing, augmentation, and batching.

Layout contract: <root>/train/<ClassName>/*.{jpg,jpeg,png} and the same
under test/. Class indices follow lexicographic class-name order so the
confusion-matrix axes are stable across runs.
"""

import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, UnidentifiedImageError

IMAGE_EXTS = {".jpg", ".jpeg", ".png"}
IMAGE_SIZE = 150
IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class DataError(Exception):
    """Dataset layout or decoding problem."""


@dataclass
class DatasetIndex:
    root: str
    class_names: list
    files: dict               # split -> {class_name: sorted file paths}

    def count(self, split, class_name=None):
        if class_name is not None:
            return len(self.files[split][class_name])
        return sum(len(v) for v in self.files[split].values())

    def label_of(self, class_name):
        return self.class_names.index(class_name)

    def samples(self, split):
        """Canonical (path, class_index) order: class-lexicographic, then filename."""
        out = []
        for ci, name in enumerate(self.class_names):
            out.extend((p, ci) for p in self.files[split][name])
        return out


@dataclass
class Sample:
    pixels: np.ndarray        # [3, 150, 150]
    label: np.ndarray         # one-hot [num_classes], or None for bare inference
    source_path: str = ""


@dataclass
class AugmentConfig:
    rotation_max_deg: float = 20.0
    shift_max_frac: float = 0.10
    zoom_max_frac: float = 0.10
    enabled: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.rotation_max_deg < 0:
            raise ValueError("rotation_max_deg must be nonnegative")
        if not 0 <= self.shift_max_frac < 1:
            raise ValueError("shift_max_frac must be in [0, 1)")
        if not 0 <= self.zoom_max_frac < 1:
            raise ValueError("zoom_max_frac must be in [0, 1)")


def scan_dataset(root_dir):
    """Index the class-per-directory layout; both splits must agree on classes."""
    files = {}
    classes_per_split = {}
    for split in ("train", "test"):
        if not os.path.isdir(os.path.join(root_dir, split)):
            raise DataError(f"missing split directory: {os.path.join(root_dir, split)}")
    for split in ("train", "test"):
        split_dir = os.path.join(root_dir, split)
        class_dirs = sorted(
            d for d in os.listdir(split_dir) if os.path.isdir(os.path.join(split_dir, d))
        )
        classes_per_split[split] = class_dirs
        files[split] = {}
        for cname in class_dirs:
            cdir = os.path.join(split_dir, cname)
            paths = sorted(
                os.path.join(cdir, f)
                for f in os.listdir(cdir)
                if os.path.splitext(f)[1].lower() in IMAGE_EXTS
            )
            if not paths:
                raise DataError(f"empty class directory: {cdir}")
            files[split][cname] = paths
    if classes_per_split["train"] != classes_per_split["test"]:
        raise DataError(
            "class mismatch across splits: "
            f"train={classes_per_split['train']} test={classes_per_split['test']}"
        )
    if not classes_per_split["train"]:
        raise DataError(f"no classes found under {root_dir}")
    return DatasetIndex(root=root_dir, class_names=classes_per_split["train"], files=files)


def resize_bilinear(img, out_h, out_w):
    """Bilinear resize of an [h, w, c] float array, corner-aligned sampling."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.copy()

    def grid(n_src, n_dst):
        if n_dst == 1 or n_src == 1:
            return np.zeros(n_dst, dtype=np.float64)
        return np.arange(n_dst, dtype=np.float64) * (n_src - 1) / (n_dst - 1)

    ys, xs = grid(h, out_h), grid(w, out_w)
    y0 = np.clip(np.floor(ys).astype(int), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(int), 0, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (ys - y0).astype(img.dtype)[:, None, None]
    tx = (xs - x0).astype(img.dtype)[None, :, None]

    # lerp as a + t*(b-a) so constant regions stay bit-exact
    top = img[y0][:, x0] + tx * (img[y0][:, x1] - img[y0][:, x0])
    bot = img[y1][:, x0] + tx * (img[y1][:, x1] - img[y1][:, x0])
    return top + ty * (bot - top)


def normalize(img01, mode):
    """img01 is [h, w, 3] in [0,1]; returns the normalized array."""
    if mode == "scale01":
        return img01
    if mode == "imagenet":
        return (img01 - IMAGENET_MEAN) / IMAGENET_STD
    raise ValueError(f"unknown normalization mode {mode!r}")


def load_sample(path, normalization_mode="scale01", label=None):
    """Decode, force RGB, resize to 150x150, normalize. Deterministic."""
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float32)
    except (UnidentifiedImageError, OSError) as e:
        raise DataError(f"cannot decode image {path}: {e}") from e
    if arr.size == 0 or arr.ndim != 3:
        raise DataError(f"zero-dimension image: {path}")
    arr = resize_bilinear(arr / np.float32(255.0), IMAGE_SIZE, IMAGE_SIZE)
    arr = normalize(arr, normalization_mode)
    return Sample(pixels=arr.transpose(2, 0, 1), label=label, source_path=path)


def affine_transform(pixels, angle_deg, dx, dy, zoom):
    """Rotate about the image center, shift by (dx, dy) pixels, then zoom.

    Inverse-mapped bilinear sampling with edge-replicate fill. `pixels` is
    [c, h, w]; zoom > 1 magnifies.
    """
    c, h, w = pixels.shape
    if angle_deg == 0.0 and dx == 0.0 and dy == 0.0 and zoom == 1.0:
        return pixels.copy()
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # undo zoom about the center, then the shift, then the rotation
    ys = (yy - cy) / zoom + cy - dy
    xs = (xx - cx) / zoom + cx - dx
    ys_r = cos_t * (ys - cy) + sin_t * (xs - cx) + cy
    xs_r = -sin_t * (ys - cy) + cos_t * (xs - cx) + cx

    ys_r = np.clip(ys_r, 0, h - 1)
    xs_r = np.clip(xs_r, 0, w - 1)
    y0 = np.floor(ys_r).astype(int)
    x0 = np.floor(xs_r).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    ty = (ys_r - y0).astype(pixels.dtype)
    tx = (xs_r - x0).astype(pixels.dtype)

    out = np.empty_like(pixels)
    for ch in range(c):
        p = pixels[ch]
        top = p[y0, x0] + tx * (p[y0, x1] - p[y0, x0])
        bot = p[y1, x0] + tx * (p[y1, x1] - p[y1, x0])
        out[ch] = top + ty * (bot - top)
    return out


def augment(sample, cfg, rng):
    """Random rotation, shift, and zoom; label untouched, seed-deterministic."""
    if not cfg.enabled:
        return sample
    h, w = sample.pixels.shape[1:]
    angle = rng.uniform(-cfg.rotation_max_deg, cfg.rotation_max_deg)
    dx = rng.uniform(-cfg.shift_max_frac, cfg.shift_max_frac) * w
    dy = rng.uniform(-cfg.shift_max_frac, cfg.shift_max_frac) * h
    zoom = rng.uniform(1.0 - cfg.zoom_max_frac, 1.0 + cfg.zoom_max_frac)
    pixels = affine_transform(sample.pixels, angle, dx, dy, zoom)
    return Sample(pixels=pixels, label=sample.label, source_path=sample.source_path)


def batches(index, split, batch_size=8, shuffle=False, augment_cfg=None, rng=None,
            normalization="scale01"):
    """Yield (images [b,3,150,150], one-hot labels [b,c]) for one epoch.

    The final partial batch is emitted. The test split never shuffles and
    never augments, regardless of the flags.
    """
    samples = index.samples(split)
    if not samples:
        raise DataError(f"empty split {split!r}")
    num_classes = len(index.class_names)
    is_train = split == "train"
    if is_train and shuffle:
        if rng is None:
            raise ValueError("shuffle requires an rng")
        order = rng.permutation(len(samples))
        samples = [samples[i] for i in order]
    eye = np.eye(num_classes, dtype=np.float32)
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        xs, ys = [], []
        for path, ci in chunk:
            s = load_sample(path, normalization, label=eye[ci])
            if is_train and augment_cfg is not None and augment_cfg.enabled:
                s = augment(s, augment_cfg, rng)
            xs.append(s.pixels)
            ys.append(s.label)
        yield np.stack(xs), np.stack(ys)
