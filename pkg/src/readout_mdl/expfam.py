"""Closed-form plug-in experts and a synthetic regret harness.

Experts here are exponential-family models whose predictive distribution
is the model evaluated at a smoothed running estimate.  That makes both
the switching codelength and the hindsight comparator cheap and exact, so
the logarithmic regret rate of switching codes can be checked empirically
at horizons of 10^5 and beyond.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numba
import numpy as np

from .switching import BAYESIAN_MIXTURE, SwitchingStrategy, forward_codelength

BERNOULLI = "bernoulli"
CATEGORICAL = "categorical"
GAUSSIAN = "gaussian"
FAMILIES = (BERNOULLI, CATEGORICAL, GAUSSIAN)

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass
class ExpFamExpert:
    """A plug-in predictor with its running sufficient statistics.

    ``smoothing`` is the add-gamma pseudo-count of the discrete families
    (0.5 gives the Krichevsky-Trofimov estimator).  The Gaussian family has
    known ``variance`` and estimates its mean as
    ``(sum(x) + prior_mean) / (t + 1)``.
    """

    family: str
    n_outcomes: int = 2
    smoothing: float = 0.5
    variance: float = 1.0
    prior_mean: float = 0.0
    counts: np.ndarray = field(default=None, repr=False)
    total: float = 0.0
    t: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == BERNOULLI:
            self.n_outcomes = 2
        if self.family != GAUSSIAN:
            if self.smoothing <= 0:
                raise ValueError("smoothing pseudo-count must be > 0")
            if self.n_outcomes < 2:
                raise ValueError("need at least two outcomes")
            if self.counts is None:
                self.counts = np.zeros(self.n_outcomes)
        elif self.variance <= 0:
            raise ValueError("variance must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ExpFamExpert":
        allowed = {"family", "n_outcomes", "smoothing", "variance", "prior_mean"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown expert field(s) {sorted(extra)}")
        return cls(**d)

    def config(self) -> dict:
        return {k: v for k, v in asdict(self).items() if k not in ("counts", "total", "t")}

    def fresh(self) -> "ExpFamExpert":
        return ExpFamExpert(**self.config())

    @property
    def label(self) -> str:
        if self.family == GAUSSIAN:
            return f"gaussian(var={self.variance:g})"
        return f"{self.family}(C={self.n_outcomes},gamma={self.smoothing:g})"

    def update(self, x) -> None:
        if self.family == GAUSSIAN:
            self.total += float(x)
        else:
            self.counts[int(x)] += 1
        self.t += 1

    # vectorised forms used by the harness ---------------------------------
    def prequential_losses(self, xs: np.ndarray) -> np.ndarray:
        """-log of the plug-in prediction of each x_t from x_<t (no state change)."""
        xs = np.asarray(xs)
        n = xs.shape[-1]
        steps = np.arange(n)
        if self.family == GAUSSIAN:
            seen = np.cumsum(xs, axis=-1) - xs
            mean = (seen + self.prior_mean) / (steps + 1.0)
            return _gauss_nll(xs, mean, self.variance)
        onehot = xs[..., None] == np.arange(self.n_outcomes)
        seen = np.cumsum(onehot, axis=-2) - onehot
        cnt = np.take_along_axis(seen, xs[..., None].astype(np.int64), axis=-1)[..., 0]
        return -np.log((cnt + self.smoothing) / (steps + self.n_outcomes * self.smoothing))

    def batch_ml_losses(self, xs: np.ndarray) -> np.ndarray:
        """-log M(x_t; theta_ML(x_1:n)) for every t, with the fit on the whole of ``xs``."""
        xs = np.asarray(xs)
        n = xs.shape[-1]
        if self.family == GAUSSIAN:
            return _gauss_nll(xs, xs.mean(axis=-1, keepdims=True), self.variance)
        counts = (xs[..., None] == np.arange(self.n_outcomes)).sum(axis=-2)
        p = counts / n
        return -np.log(np.take_along_axis(p, xs.astype(np.int64), axis=-1))


def _gauss_nll(x, mean, var):
    return _HALF_LOG_2PI + 0.5 * np.log(var) + (x - mean) ** 2 / (2.0 * var)


def predictive_log_prob(expert: ExpFamExpert, x) -> float:
    """Log probability (density, for the Gaussian) of ``x`` under the current plug-in estimate."""
    if expert.family == GAUSSIAN:
        mean = (expert.total + expert.prior_mean) / (expert.t + 1)
        return float(-_gauss_nll(float(x), mean, expert.variance))
    C, g = expert.n_outcomes, expert.smoothing
    return float(np.log((expert.counts[int(x)] + g) / (expert.t + C * g)))


@numba.njit(cache=True)
def _switch_dp(L, S):
    N, K = L.shape
    INF = np.inf
    cost = np.full((K, S + 1), INF)
    back = np.zeros((N, K, S + 1), dtype=np.int32)  # predecessor expert; -1 = stay
    for k in range(K):
        cost[k, 0] = L[0, k]
    for t in range(1, N):
        # best and second-best predecessor per switch budget, for O(K S) moves
        new = np.full((K, S + 1), INF)
        for j in range(S + 1):
            for k in range(K):
                best = cost[k, j]
                arg = -1
                if j > 0:
                    for kp in range(K):
                        if kp != k and cost[kp, j - 1] < best:
                            best = cost[kp, j - 1]
                            arg = kp
                new[k, j] = best + L[t, k]
                back[t, k, j] = arg
        cost = new
    bk, bj = 0, 0
    bestv = INF
    for k in range(K):
        for j in range(S + 1):
            if cost[k, j] < bestv:
                bestv = cost[k, j]
                bk, bj = k, j
    path = np.empty(N, dtype=np.int64)
    k, j = bk, bj
    for t in range(N - 1, -1, -1):
        path[t] = k
        p = back[t, k, j]
        if p >= 0:
            k = p
            j -= 1
    return bestv, path


def best_path_codelength(losses, max_switches: int | None = None) -> tuple[float, np.ndarray]:
    """Minimum of ``sum_t L[t, xi_t]`` over expert paths with at most
    ``max_switches`` switches (``None`` means unlimited).

    Ties resolve to the lower expert index, then to fewer switches.
    """
    L = np.ascontiguousarray(losses, dtype=np.float64)
    if L.ndim == 1:
        L = L[:, None]
    N, K = L.shape
    if max_switches is not None and max_switches < 0:
        raise ValueError("max_switches must be >= 0")
    if max_switches is None or max_switches >= N - 1 or K == 1:
        path = np.argmin(L, axis=1)
        return float(L[np.arange(N), path].sum()), path
    if N * K * (max_switches + 1) > 5 * 10**8:
        raise ValueError("hindsight dynamic program too large")
    v, path = _switch_dp(L, int(max_switches))
    return float(v), path


def hindsight_best_codelength(xs, experts: Sequence[ExpFamExpert], max_switches: int | None = 0):
    """Best-in-hindsight path codelength with every expert's parameters fit
    by maximum likelihood on the entire sequence ``xs``."""
    xs = np.asarray(xs)
    L = np.stack([e.batch_ml_losses(xs) for e in experts], axis=-1)
    return best_path_codelength(L, max_switches)


# ---------------------------------------------------------------------------
# synthetic regret experiments


@dataclass(frozen=True)
class Segment:
    start: int
    params: dict


@dataclass(frozen=True)
class RegretExperiment:
    """Piecewise-stationary source, expert family list and switching prior."""

    source_family: str
    segments: tuple[Segment, ...]
    experts: tuple[dict, ...]
    horizon: int
    strategy: str = BAYESIAN_MIXTURE
    n_trials: int = 100
    seed: int = 0
    points_per_decade: int = 8
    comparator_switches: int | None = None

    def __post_init__(self):
        if self.n_trials < 1:
            raise ValueError("n_trials must be ≥ 1")
        if self.horizon < 10:
            raise ValueError("horizon must be >= 10")
        if self.source_family not in FAMILIES:
            raise ValueError(f"unknown source family {self.source_family!r}")
        starts = [s.start for s in self.segments]
        if not starts or starts[0] != 0:
            raise ValueError("first segment must start at 0")
        if any(b <= a for a, b in zip(starts, starts[1:])) or starts[-1] >= self.horizon:
            raise ValueError("segment starts must be strictly increasing and below the horizon")
        if not self.experts:
            raise ValueError("at least one expert is required")
        for e in self.experts:
            ExpFamExpert.from_dict(e)
        SwitchingStrategy.parse(self.strategy, len(self.experts))

    @classmethod
    def from_dict(cls, d: dict) -> "RegretExperiment":
        d = dict(d)
        src = d.pop("source")
        segs = tuple(Segment(int(s.get("start", 0)), {k: v for k, v in s.items() if k != "start"})
                     for s in src["segments"])
        return cls(source_family=src["family"], segments=segs, experts=tuple(d.pop("experts")),
                   horizon=int(d.pop("horizon")), **d)

    @classmethod
    def from_json(cls, path) -> "RegretExperiment":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def make_strategy(self) -> SwitchingStrategy:
        return SwitchingStrategy.parse(self.strategy, len(self.experts))

    def switches_allowed(self) -> int:
        if self.comparator_switches is not None:
            return self.comparator_switches
        return len(self.segments) - 1

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        out = np.empty(self.horizon)
        bounds = [s.start for s in self.segments] + [self.horizon]
        for seg, a, b in zip(self.segments, bounds, bounds[1:]):
            out[a:b] = _draw(self.source_family, seg.params, b - a, rng)
        return out if self.source_family == GAUSSIAN else out.astype(np.int64)


def _draw(family: str, params: dict, n: int, rng: np.random.Generator) -> np.ndarray:
    if family == BERNOULLI:
        return (rng.random(n) < params["p"]).astype(np.float64)
    if family == CATEGORICAL:
        probs = np.asarray(params["probs"], dtype=np.float64)
        return rng.choice(len(probs), size=n, p=probs / probs.sum()).astype(np.float64)
    return params.get("mean", 0.0) + params.get("std", 1.0) * rng.standard_normal(n)


def log_grid(horizon: int, points_per_decade: int = 8, start: int = 10) -> np.ndarray:
    n_dec = np.log10(horizon / start)
    pts = np.unique(np.round(np.logspace(np.log10(start), np.log10(horizon),
                                         max(2, int(np.ceil(n_dec * points_per_decade)) + 1))).astype(int))
    return pts


@dataclass
class RegretCurve:
    grid: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float
    fit_range: tuple[int, int]
    n_trials: int
    strategy: str
    constant_regret: bool

    def as_dict(self) -> dict:
        return {
            "grid": self.grid.tolist(),
            "mean_regret": self.mean.tolist(),
            "stderr": self.stderr.tolist(),
            "slope": self.slope,
            "slope_stderr": self.slope_stderr,
            "intercept": self.intercept,
            "fit_range": list(self.fit_range),
            "n_trials": self.n_trials,
            "strategy": self.strategy,
            "constant_regret": self.constant_regret,
            "final_regret_per_step": float(self.mean[-1] / self.grid[-1]),
        }


CONSTANT_SLOPE_TOL = 0.05


def _fit_slope(grid, curves):
    """Least-squares slope against log N; works on (n_trials, G) or (G,)."""
    x = np.log(grid)
    xc = x - x.mean()
    slope = (curves - curves.mean(axis=-1, keepdims=True)) @ xc / (xc @ xc)
    intercept = curves.mean(axis=-1) - slope * x.mean()
    return slope, intercept


def regret_trials(exp: RegretExperiment, chunk: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Per-trial regret on the log grid; returns ``(grid, regrets[n_trials, G])``."""
    grid = log_grid(exp.horizon, exp.points_per_decade)
    experts = [ExpFamExpert.from_dict(e) for e in exp.experts]
    strategy = exp.make_strategy()
    S = exp.switches_allowed()
    seeds = np.random.SeedSequence(exp.seed).spawn(exp.n_trials)
    out = np.empty((exp.n_trials, len(grid)))
    for lo in range(0, exp.n_trials, chunk):
        idx = range(lo, min(lo + chunk, exp.n_trials))
        xs = np.stack([exp.sample(np.random.default_rng(seeds[i])) for i in idx])
        L = np.stack([e.prequential_losses(xs) for e in experts], axis=-1)
        res = forward_codelength(L, strategy, keep_posteriors=False)
        code = np.cumsum(res.trace.per_step_marginal_loss, axis=-1)[:, grid - 1]
        for r, i in enumerate(idx):
            for g, n in enumerate(grid):
                best, _ = hindsight_best_codelength(xs[r, :n], experts, S)
                out[i, g] = code[r, g] - best
    return grid, out


def run_regret_experiment(exp: RegretExperiment) -> RegretCurve:
    """Average regret curve over trials and its log-N slope over the final decade."""
    grid, R = regret_trials(exp)
    sel = grid >= exp.horizon / 10
    mean = R.mean(axis=0)
    se = R.std(axis=0, ddof=1) / np.sqrt(exp.n_trials) if exp.n_trials > 1 else np.zeros_like(mean)
    slope, intercept = _fit_slope(grid[sel], mean[sel])
    per_trial, _ = _fit_slope(grid[sel], R[:, sel])
    slope_se = float(per_trial.std(ddof=1) / np.sqrt(exp.n_trials)) if exp.n_trials > 1 else 0.0
    return RegretCurve(
        grid=grid, mean=mean, stderr=se, slope=float(slope), slope_stderr=slope_se,
        intercept=float(intercept), fit_range=(int(grid[sel][0]), int(grid[sel][-1])),
        n_trials=exp.n_trials, strategy=exp.strategy,
        constant_regret=bool(abs(slope) < CONSTANT_SLOPE_TOL),
    )
