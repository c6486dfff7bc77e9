"""Average ranks across datasets and the Nemenyi critical difference."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata, studentized_range

from .core import DataError

# q used for every comparison in the VTAB rank tables (gamma = 0.1)
DEFAULT_Q_GAMMA = 3.12

# (confidence, r) -> q; the published tables reuse 3.12 for both table widths
Q_TABLE = {(0.1, 6): 3.12, (0.1, 12): 3.12}


def q_gamma_for(r: int, confidence: float = 0.1, override: float | None = None) -> float:
    """Override if given, else the built-in table, else the studentized-range value."""
    if override is not None:
        return float(override)
    if (confidence, r) in Q_TABLE:
        return Q_TABLE[(confidence, r)]
    return nemenyi_q(r, confidence)


@dataclass(frozen=True)
class ScoreTable:
    """Datasets x representations score matrix."""

    scores: np.ndarray  # (D, R)
    dataset_names: tuple[str, ...]
    representation_names: tuple[str, ...]
    lower_is_better: bool = True

    def __post_init__(self):
        s = np.array(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise DataError(f"score table must be 2-D, got shape {s.shape}")
        D, R = s.shape
        if D < 1 or R < 2:
            raise DataError(f"need >= 1 dataset and >= 2 representations, got {D} x {R}")
        nan = np.argwhere(np.isnan(s))
        if nan.size:
            i, j = nan[0]
            raise DataError(f"NaN score for dataset {i}, representation {j}")
        if len(self.dataset_names) != D or len(self.representation_names) != R:
            raise DataError("name lists do not match the score matrix shape")
        s.setflags(write=False)
        object.__setattr__(self, "scores", s)

    @classmethod
    def from_csv(cls, path, lower_is_better: bool = True, delimiter: str | None = None) -> "ScoreTable":
        """Read ``dataset,rep1,rep2,...`` with one dataset per row.

        A table with representations as rows can be read and then passed
        through :meth:`transposed`.
        """
        with open(path, newline="") as fh:
            text = fh.read()
        if delimiter is None:
            delimiter = "\t" if "\t" in text.splitlines()[0] else ","
        rows = [r for r in csv.reader(text.splitlines(), delimiter=delimiter) if r and any(c.strip() for c in r)]
        if len(rows) < 2:
            raise DataError(f"{path}: need a header row and at least one data row")
        header = [c.strip() for c in rows[0]]
        width = len(header)
        names, data = [], []
        for lineno, r in enumerate(rows[1:], start=2):
            if len(r) != width:
                raise DataError(f"{path}: ragged table, line {lineno} has {len(r)} fields, header has {width}")
            names.append(r[0].strip())
            try:
                data.append([float(c) for c in r[1:]])
            except ValueError as exc:
                raise DataError(f"{path}: line {lineno}: {exc}") from None
        return cls(np.array(data), tuple(names), tuple(header[1:]), lower_is_better)

    def transposed(self) -> "ScoreTable":
        return ScoreTable(self.scores.T, self.representation_names, self.dataset_names, self.lower_is_better)


def rank_matrix(table: ScoreTable) -> np.ndarray:
    """Per-dataset ranks, 1 = best; ties share the mean of their positions."""
    s = table.scores if table.lower_is_better else -table.scores
    return rankdata(s, method="average", axis=1)


def average_rank(table: ScoreTable) -> np.ndarray:
    return rank_matrix(table).mean(axis=0)


def nemenyi_critical_difference(r: int, n: int, q_gamma: float = DEFAULT_Q_GAMMA) -> float:
    """``q_gamma * sqrt(r (r + 1) / (6 n))`` for r methods over n datasets."""
    if r < 2 or n < 1 or q_gamma <= 0:
        raise ValueError("need r >= 2, n >= 1 and q_gamma > 0")
    return float(q_gamma * np.sqrt(r * (r + 1) / (6.0 * n)))


def nemenyi_q(r: int, alpha: float = 0.1) -> float:
    """Two-tailed Nemenyi q from the studentized range distribution.

    Offered for comparison; results that must match published tables
    should pass the table's own q instead.
    """
    return float(studentized_range.ppf(1.0 - alpha, r, np.inf) / np.sqrt(2.0))


@dataclass(frozen=True)
class RankSummary:
    average_ranks: np.ndarray
    critical_difference: float
    q_value: float
    confidence: float
    representation_names: tuple[str, ...]
    n_datasets: int

    def order(self) -> list[int]:
        """Representation indices from best to worst; ties keep input order."""
        return [int(i) for i in np.argsort(self.average_ranks, kind="stable")]


def summarize(table: ScoreTable, q_gamma: float = DEFAULT_Q_GAMMA, confidence: float = 0.1) -> RankSummary:
    ranks = average_rank(table)
    D, R = table.scores.shape
    return RankSummary(
        average_ranks=ranks,
        critical_difference=nemenyi_critical_difference(R, D, q_gamma),
        q_value=q_gamma,
        confidence=confidence,
        representation_names=table.representation_names,
        n_datasets=D,
    )


def significance_matrix(summary: RankSummary) -> np.ndarray:
    """True where two representations' average ranks differ by at least the critical difference."""
    a = np.asarray(summary.average_ranks)
    sig = np.abs(a[:, None] - a[None, :]) >= summary.critical_difference
    np.fill_diagonal(sig, False)
    return sig
