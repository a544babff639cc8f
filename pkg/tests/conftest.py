import os

import numpy as np
import pytest
from PIL import Image


def central_difference(f, x, eps=1e-6):
    """Central finite differences of a scalar-valued f at x (flattened loop)."""
    x = x.astype(np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def rel_error(a, b, floor=1e-8):
    return np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor))


def write_image(path, arr):
    """arr: [h, w, 3] uint8."""
    os.makedirs(os.path.dirname(path), exist_ok=True)
    Image.fromarray(arr.astype(np.uint8), mode="RGB").save(path)


def make_dataset(root, class_counts, size=(20, 20), seed=0):
    """Build a class-per-directory fixture with random-noise images.

    class_counts: {class_name: (n_train, n_test)}.
    """
    rng = np.random.default_rng(seed)
    for split_i, split in enumerate(("train", "test")):
        for cname, counts in class_counts.items():
            n = counts[split_i]
            for k in range(n):
                arr = rng.integers(0, 256, size=(*size, 3), dtype=np.uint8)
                write_image(os.path.join(root, split, cname, f"img_{k:04d}.png"), arr)
    return root


@pytest.fixture
def tiny_dataset(tmp_path):
    """24 train / 6 test images over 3 classes."""
    root = str(tmp_path / "data")
    make_dataset(root, {"alpha": (8, 2), "beta": (8, 2), "gamma": (8, 2)})
    return root
