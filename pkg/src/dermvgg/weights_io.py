"""Portable weight archive: pretrained-base import, checkpoints, final models.

File layout: magic b"DWT1", 8-byte little-endian manifest length, UTF-8
JSON manifest, then a blob of concatenated little-endian float32 tensors.
Manifest keys: version, tensors (name/shape/offset/length/crc32), metadata.
Archives for identical parameters are byte-identical across platforms.
"""

import json
import os
import struct
import tempfile
import zlib

import numpy as np

MAGIC = b"DWT1"
FORMAT_VERSION = 1

# param fields in on-disk order per layer
_FIELD_ORDER = ("kernel", "weight", "bias")


class ArchiveError(Exception):
    """Malformed, corrupted, or mismatched weight archive."""


def _tensor_items(graph):
    """(name, array) pairs in graph layer order, fields in fixed order."""
    for layer in graph.param_layers():
        tensors = graph.params[layer.name]
        for f in _FIELD_ORDER:
            if f in tensors:
                yield f"{layer.name}.{f}", tensors[f]


def save(graph, path, metadata=None):
    """Write the archive atomically (temp file then rename)."""
    entries = []
    blobs = []
    offset = 0
    for name, arr in _tensor_items(graph):
        raw = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({
            "name": name,
            "shape": list(arr.shape),
            "offset": offset,
            "length": len(raw),
            "crc32": zlib.crc32(raw),
        })
        blobs.append(raw)
        offset += len(raw)
    manifest = {
        "version": FORMAT_VERSION,
        "tensors": entries,
        "metadata": metadata or {},
    }
    mjson = json.dumps(manifest, sort_keys=False, separators=(",", ":")).encode("utf-8")
    dirname = os.path.dirname(os.path.abspath(path))
    os.makedirs(dirname, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=dirname, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<Q", len(mjson)))
            f.write(mjson)
            for raw in blobs:
                f.write(raw)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def read_manifest(path):
    with open(path, "rb") as f:
        if f.read(4) != MAGIC:
            raise ArchiveError(f"{path}: bad magic bytes")
        (mlen,) = struct.unpack("<Q", f.read(8))
        try:
            manifest = json.loads(f.read(mlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ArchiveError(f"{path}: unreadable manifest: {e}") from e
    if manifest.get("version") != FORMAT_VERSION:
        raise ArchiveError(f"{path}: unsupported format version {manifest.get('version')}")
    return manifest


def load(path, graph, scope="all"):
    """Assign archive tensors into the graph; never partially applies.

    scope "base_only" assigns only block*_conv* tensors (head keeps its
    current initialization); "all" assigns everything the graph declares.
    Every required tensor must be present, shape-matched, and pass its
    CRC32 check before anything is written into the graph.
    """
    if scope not in ("all", "base_only"):
        raise ValueError(f"unknown scope {scope!r}")
    manifest = read_manifest(path)
    by_name = {e["name"]: e for e in manifest["tensors"]}
    blob_start = 4 + 8 + len(
        json.dumps(manifest, sort_keys=False, separators=(",", ":")).encode("utf-8")
    )
    # recompute blob start from the file itself to be safe about key order
    with open(path, "rb") as f:
        f.seek(4)
        (mlen,) = struct.unpack("<Q", f.read(8))
        blob_start = 4 + 8 + mlen
        needed = {}
        for name, arr in _tensor_items(graph):
            if scope == "base_only" and not name.startswith("block"):
                continue
            entry = by_name.get(name)
            if entry is None:
                raise ArchiveError(f"{path}: missing required tensor {name}")
            if tuple(entry["shape"]) != arr.shape:
                raise ArchiveError(
                    f"{path}: shape mismatch for {name}: archive {entry['shape']}, graph {list(arr.shape)}"
                )
            f.seek(blob_start + entry["offset"])
            raw = f.read(entry["length"])
            if len(raw) != entry["length"]:
                raise ArchiveError(f"{path}: truncated blob for {name}")
            if zlib.crc32(raw) != entry["crc32"]:
                raise ArchiveError(f"{path}: checksum failure for tensor {name}")
            needed[name] = np.frombuffer(raw, dtype="<f4").reshape(arr.shape)
    # all validated; apply atomically
    for name, arr in needed.items():
        layer, fld = name.rsplit(".", 1)
        graph.params[layer][fld] = arr.astype(graph.dtype)
    return graph
