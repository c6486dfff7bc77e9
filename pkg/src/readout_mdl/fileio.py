"""On-disk formats.

Feature file (``PQSF``), little-endian::

    magic "PQSF" | version u32 | N u64 | d u32 | C u32 | dtype tag 4 bytes ("f32\\0")
    N*d float32 features, row-major
    N uint32 labels

An optional sidecar ``<path>.json`` carries the dataset name and provenance.

Loss-matrix file (``PQLM``), little-endian::

    magic "PQLM" | version u32 | N u64 | K u32
    K expert names, each u32 byte length + UTF-8 bytes
    N*K float64 losses, step-major
"""
from __future__ import annotations

import csv
import json
import os
import struct

import numpy as np

from .core import DataError, FeatureSequence, LossMatrix

FEATURE_MAGIC = b"PQSF"
LOSS_MAGIC = b"PQLM"
FORMAT_VERSION = 1
DTYPE_F32 = b"f32\x00"

_FEATURE_HEADER = struct.Struct("<4sIQII4s")
_LOSS_HEADER = struct.Struct("<4sIQI")


def sidecar_path(path) -> str:
    return os.fspath(path) + ".json"


def write_feature_file(path, seq: FeatureSequence, provenance: dict | None = None) -> None:
    x = np.ascontiguousarray(seq.features, dtype="<f4")
    y = np.ascontiguousarray(seq.labels, dtype="<u4")
    n, d = x.shape
    with open(path, "wb") as fh:
        fh.write(_FEATURE_HEADER.pack(FEATURE_MAGIC, FORMAT_VERSION, n, d, seq.n_classes, DTYPE_F32))
        fh.write(x.tobytes())
        fh.write(y.tobytes())
    meta = {"name": seq.name, "provenance": provenance or {}}
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def read_feature_file(path) -> FeatureSequence:
    with open(path, "rb") as fh:
        raw = fh.read()
    hs = _FEATURE_HEADER.size
    if len(raw) < hs:
        raise DataError(f"{path}: truncated header")
    magic, version, n, d, c, tag = _FEATURE_HEADER.unpack_from(raw)
    if magic != FEATURE_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {FEATURE_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    if tag != DTYPE_F32:
        raise DataError(f"{path}: unsupported dtype tag {tag!r}")
    expected = hs + 4 * n * d + 4 * n
    if len(raw) != expected:
        raise DataError(f"{path}: size {len(raw)} bytes, header implies {expected}")
    x = np.frombuffer(raw, dtype="<f4", count=n * d, offset=hs).reshape(n, d)
    y = np.frombuffer(raw, dtype="<u4", count=n, offset=hs + 4 * n * d)
    name = os.path.basename(os.fspath(path))
    if os.path.exists(sidecar_path(path)):
        with open(sidecar_path(path)) as fh:
            name = json.load(fh).get("name", name)
    return FeatureSequence(x, y.astype(np.int64), int(c), name)


def read_feature_csv(path, n_classes: int | None = None) -> FeatureSequence:
    """Delimited features with the label in the last column; a non-numeric
    first row is treated as a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if rows and not _is_numeric(rows[0]):
        rows = rows[1:]
    if not rows:
        raise DataError(f"{path}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise DataError(f"{path}: ragged row {i}")
    a = np.array(rows, dtype=np.float64)
    y = a[:, -1].astype(np.int64)
    c = int(n_classes) if n_classes else int(y.max()) + 1
    return FeatureSequence(a[:, :-1], y, c, os.path.basename(os.fspath(path)))


def _is_numeric(row) -> bool:
    try:
        [float(c) for c in row]
    except ValueError:
        return False
    return True


def load_features(path, n_classes: int | None = None) -> FeatureSequence:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such feature file: {path}")
    if os.fspath(path).lower().endswith((".csv", ".tsv", ".txt")):
        return read_feature_csv(path, n_classes)
    return read_feature_file(path)


def write_loss_matrix(path, lm: LossMatrix) -> None:
    N, K = lm.losses.shape
    with open(path, "wb") as fh:
        fh.write(_LOSS_HEADER.pack(LOSS_MAGIC, FORMAT_VERSION, N, K))
        for name in lm.expert_names:
            b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
        fh.write(np.ascontiguousarray(lm.losses, dtype="<f8").tobytes())


def read_loss_matrix(path) -> LossMatrix:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such loss matrix file: {path}")
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _LOSS_HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, N, K = _LOSS_HEADER.unpack_from(raw)
    if magic != LOSS_MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}, expected {LOSS_MAGIC!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    pos = _LOSS_HEADER.size
    names = []
    for _ in range(K):
        if pos + 4 > len(raw):
            raise DataError(f"{path}: truncated expert names")
        (n,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        names.append(raw[pos:pos + n].decode("utf-8"))
        pos += n
    if len(raw) - pos != 8 * N * K:
        raise DataError(f"{path}: payload has {len(raw) - pos} bytes, header implies {8 * N * K}")
    a = np.frombuffer(raw, dtype="<f8", count=N * K, offset=pos).reshape(N, K)
    return LossMatrix(a, tuple(names))
