"""Shared value types and log-space numerics.

Every probability in this package travels as a natural log and every
codelength is in nats.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class DataError(ValueError):
    """Malformed input data (bad shapes, NaNs, out-of-range labels)."""


def log_sum_exp(values) -> float:
    """Return ``log(sum(exp(values)))`` without overflow.

    An all ``-inf`` input yields ``-inf``.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("empty vector")
    vmax = v.max()
    if vmax == -np.inf:
        return -np.inf
    acc = 0.0
    # fixed left-to-right order keeps results bit-reproducible
    for x in v - vmax:
        acc += np.exp(x)
    return float(vmax + np.log(acc))


def log_sum_exp_rows(a: np.ndarray) -> np.ndarray:
    """Row-wise log-sum-exp over the last axis; vectorised companion of
    :func:`log_sum_exp` used on the hot path."""
    a = np.asarray(a, dtype=np.float64)
    amax = a.max(axis=-1, keepdims=True)
    safe = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.exp(a - safe).sum(axis=-1)) + safe[..., 0]
    return np.where(amax[..., 0] == -np.inf, -np.inf, out)


def normalize_log(a: np.ndarray) -> np.ndarray:
    return a - log_sum_exp_rows(a)[..., None]


@dataclass(frozen=True)
class FeatureSequence:
    """Precomputed encoder features and their class labels, in stream order."""

    features: np.ndarray  # (N, d)
    labels: np.ndarray  # (N,)
    n_classes: int
    name: str = "unnamed"

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1] if self.features.ndim == 2 else 0

    def check(self) -> None:
        problems = validate_feature_sequence(self)
        if problems:
            raise DataError("; ".join(problems))


def validate_feature_sequence(seq: FeatureSequence) -> list[str]:
    """Collect every invariant violation of ``seq``; an empty list means valid."""
    problems = []
    x, y = seq.features, seq.labels
    if x.ndim != 2:
        problems.append(f"features must be 2-D (N, d), got shape {x.shape}")
        return problems
    n, d = x.shape
    if n < 1:
        problems.append("sequence is empty (N must be >= 1)")
    if d < 1:
        problems.append("feature dimension must be >= 1")
    if y.shape != (n,):
        problems.append(f"expected {n} labels, got shape {y.shape}")
    if seq.n_classes < 1:
        problems.append(f"n_classes must be >= 1, got {seq.n_classes}")
    if y.ndim == 1:
        for i in np.flatnonzero((y < 0) | (y >= seq.n_classes)):
            problems.append(f"label out of range at index {i}: {y[i]} not in [0, {seq.n_classes})")
    for i, j in np.argwhere(np.isnan(x)):
        problems.append(f"NaN feature at ({i}, {j})")
    return problems


@dataclass(frozen=True)
class LossMatrix:
    """Per-step next-token log-losses (nats) of K experts over N steps."""

    losses: np.ndarray  # (N, K)
    expert_names: tuple[str, ...] = field(default=())
    diverged: tuple[int, ...] = field(default=())

    def __post_init__(self):
        a = np.array(self.losses, dtype=np.float64, copy=True)
        if a.ndim == 1:
            a = a[:, None]
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise DataError(f"loss matrix must be N x K with N, K >= 1, got shape {a.shape}")
        bad = np.argwhere(~np.isfinite(a))
        if bad.size:
            t, k = bad[0]
            raise DataError(f"non-finite loss at (t={t}, k={k}): {a[t, k]}")
        neg = np.argwhere(a < 0)
        if neg.size:
            t, k = neg[0]
            raise DataError(f"negative loss at (t={t}, k={k}): {a[t, k]}")
        a.setflags(write=False)
        object.__setattr__(self, "losses", a)
        names = tuple(self.expert_names) or tuple(f"expert{k}" for k in range(a.shape[1]))
        if len(names) != a.shape[1]:
            raise DataError(f"{len(names)} expert names for {a.shape[1]} columns")
        object.__setattr__(self, "expert_names", names)

    @property
    def n_steps(self) -> int:
        return self.losses.shape[0]

    @property
    def n_experts(self) -> int:
        return self.losses.shape[1]

    def column_totals(self) -> np.ndarray:
        return self.losses.sum(axis=0)


def as_log_prob_vector(values: Sequence[float], tol: float = 1e-9) -> np.ndarray:
    """Validate a normalized log-probability vector."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("log-probability vector must be 1-D and non-empty")
    if abs(log_sum_exp(v)) > tol:
        raise ValueError(f"log-probabilities not normalized (log-sum-exp = {log_sum_exp(v):.3g})")
    return v
