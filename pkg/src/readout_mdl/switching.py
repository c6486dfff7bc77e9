"""Expert-sequence priors and exact forward inference over them.

A :class:`SwitchingStrategy` is a hidden Markov prior over which readout
model ("expert") is active at each step.  :class:`ForwardFilter` runs the
forward recursion one step at a time; :func:`forward_codelength` wraps it
for a whole loss matrix.  All state is kept in log space and normalized
after every step, so sequences of millions of steps neither underflow nor
lose precision.

Losses may carry leading batch axes (``(..., N, K)``); the regret harness
uses this to filter many independent trials at once.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .core import LossMatrix, as_log_prob_vector, log_sum_exp_rows

FIXED_SHARE_DECREASING = "fixed-share-dec"
FIXED_SHARE_CONSTANT = "fixed-share-const"
BAYESIAN_MIXTURE = "bayes"
ELEMENTWISE_MIXTURE = "elementwise"
SWITCH_DISTRIBUTION = "switch"

KINDS = (
    FIXED_SHARE_DECREASING,
    FIXED_SHARE_CONSTANT,
    BAYESIAN_MIXTURE,
    ELEMENTWISE_MIXTURE,
    SWITCH_DISTRIBUTION,
)

_LOG_HALF = np.log(0.5)


@dataclass(frozen=True)
class SwitchingStrategy:
    """Transition prior ``p(xi_t | xi_{t-1})`` plus initial distribution.

    Use the named constructors (:meth:`fixed_share`, :meth:`bayes`, ...)
    rather than filling fields by hand; ``m``, ``alpha`` and ``kappa`` only
    mean something for their own kind.
    """

    kind: str
    n_experts: int
    m: int = 2
    alpha: float = 0.0
    kappa: float = 0.5
    initial_log_prior: tuple[float, ...] | None = None
    weights: tuple[float, ...] | None = field(default=None)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if self.n_experts < 1:
            raise ValueError("n_experts must be >= 1")
        if self.kind == FIXED_SHARE_DECREASING and (int(self.m) != self.m or self.m < 1):
            raise ValueError(f"fixed share needs integer m >= 1, got {self.m}")
        if self.kind == FIXED_SHARE_CONSTANT and not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.kind == SWITCH_DISTRIBUTION and not 0.0 < self.kappa < 1.0:
            raise ValueError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.initial_log_prior is not None:
            v = as_log_prob_vector(self.initial_log_prior)
            if v.size != self.n_experts:
                raise ValueError("initial_log_prior length differs from n_experts")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=np.float64)
            if w.shape != (self.n_experts,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("switch target weights must be a probability vector of length K")

    # -- constructors -------------------------------------------------
    @classmethod
    def fixed_share(cls, n_experts: int, m: int = 2, **kw) -> "SwitchingStrategy":
        return cls(FIXED_SHARE_DECREASING, n_experts, m=m, **kw)

    @classmethod
    def fixed_share_constant(cls, n_experts: int, alpha: float, **kw) -> "SwitchingStrategy":
        return cls(FIXED_SHARE_CONSTANT, n_experts, alpha=alpha, **kw)

    @classmethod
    def bayes(cls, n_experts: int, **kw) -> "SwitchingStrategy":
        return cls(BAYESIAN_MIXTURE, n_experts, **kw)

    @classmethod
    def elementwise(cls, n_experts: int, **kw) -> "SwitchingStrategy":
        return cls(ELEMENTWISE_MIXTURE, n_experts, **kw)

    @classmethod
    def switch_distribution(cls, n_experts: int, kappa: float = 0.5, **kw) -> "SwitchingStrategy":
        return cls(SWITCH_DISTRIBUTION, n_experts, kappa=kappa, **kw)

    @classmethod
    def parse(cls, text: str, n_experts: int) -> "SwitchingStrategy":
        """Parse ``kind[:key=value,...]``, e.g. ``fixed-share-dec:m=11``.

        Any kind accepts ``K=INT``, the expert count the strategy was written
        for; it must equal ``n_experts``.
        """
        kind, _, rest = text.strip().partition(":")
        params = {}
        for item in filter(None, re.split(r"[,;]", rest)):
            key, eq, val = item.partition("=")
            if not eq:
                raise ValueError(f"bad strategy parameter {item!r} in {text!r}")
            params[key.strip()] = val.strip()
        if "K" in params and int(params.pop("K")) != n_experts:
            raise ValueError(f"strategy {text!r} expects a different K than the {n_experts} experts in the loss matrix")
        allowed = {
            FIXED_SHARE_DECREASING: {"m": int},
            FIXED_SHARE_CONSTANT: {"alpha": float},
            BAYESIAN_MIXTURE: {},
            ELEMENTWISE_MIXTURE: {},
            SWITCH_DISTRIBUTION: {"kappa": float},
        }
        if kind not in allowed:
            raise ValueError(f"unknown strategy kind {kind!r}; expected one of {KINDS}")
        unknown = set(params) - set(allowed[kind])
        if unknown:
            raise ValueError(f"strategy {kind!r} takes no parameter(s) {sorted(unknown)}")
        typed = {k: allowed[kind][k](v) for k, v in params.items()}
        return cls(kind, n_experts, **typed)

    # -- derived quantities --------------------------------------------
    def describe(self) -> str:
        if self.kind == FIXED_SHARE_DECREASING:
            return f"{self.kind}:m={self.m}"
        if self.kind == FIXED_SHARE_CONSTANT:
            return f"{self.kind}:alpha={self.alpha:g}"
        if self.kind == SWITCH_DISTRIBUTION:
            return f"{self.kind}:kappa={self.kappa:g}"
        return self.kind

    @property
    def n_states(self) -> int:
        return 2 * self.n_experts if self.kind == SWITCH_DISTRIBUTION else self.n_experts

    def log_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.n_experts, -np.log(self.n_experts))
        with np.errstate(divide="ignore"):
            return np.log(np.asarray(self.weights, dtype=np.float64))

    def log_initial(self) -> np.ndarray:
        """Initial log-distribution over the (possibly augmented) state space."""
        if self.initial_log_prior is None:
            init = np.full(self.n_experts, -np.log(self.n_experts))
        else:
            init = np.asarray(self.initial_log_prior, dtype=np.float64)
        if self.kind == SWITCH_DISTRIBUTION:
            return np.concatenate([init + _LOG_HALF, init + _LOG_HALF])
        return init

    def switch_rate(self, t: int) -> float:
        """alpha_t for the fixed-share kinds, tau_t for the switch distribution."""
        if self.kind == FIXED_SHARE_DECREASING:
            return min(1.0, (self.m - 1) / t)
        if self.kind == FIXED_SHARE_CONSTANT:
            return self.alpha
        if self.kind == SWITCH_DISTRIBUTION:
            return self.kappa / t
        return 0.0


def transition_log_probs(strategy: SwitchingStrategy, t: int) -> np.ndarray:
    """Dense log transition matrix used at (1-based) step ``t >= 2``.

    Row is the previous state, column the next.  For the switch
    distribution the state space is augmented: indices ``0..K-1`` are the
    unstable chain and ``K..2K-1`` the stable one.
    """
    if t < 2:
        raise ValueError(f"transitions start at t=2 (t=1 uses the initial prior), got t={t}")
    K = strategy.n_experts
    w = np.exp(strategy.log_weights())
    kind = strategy.kind
    if kind == BAYESIAN_MIXTURE:
        P = np.eye(K)
    elif kind == ELEMENTWISE_MIXTURE:
        P = np.tile(w, (K, 1))
    elif kind in (FIXED_SHARE_DECREASING, FIXED_SHARE_CONSTANT):
        a = strategy.switch_rate(t)
        P = (1.0 - a) * np.eye(K) + a * np.tile(w, (K, 1))
    else:
        tau = strategy.switch_rate(t)
        P = np.zeros((2 * K, 2 * K))
        fresh = 0.5 * tau * w
        P[:K, :K] = (1.0 - tau) * np.eye(K) + np.tile(fresh, (K, 1))
        P[:K, K:] = np.tile(fresh, (K, 1))
        P[K:, K:] = np.eye(K)
    with np.errstate(divide="ignore"):
        return np.log(P)


def _propagate(strategy: SwitchingStrategy, s: np.ndarray, t: int, log_w: np.ndarray) -> np.ndarray:
    """Push a normalized log state through the step-``t`` transition in O(K)."""
    kind = strategy.kind
    if kind == BAYESIAN_MIXTURE:
        return s
    if kind == ELEMENTWISE_MIXTURE:
        return np.broadcast_to(log_w + log_sum_exp_rows(s)[..., None], s.shape).copy()
    if kind == SWITCH_DISTRIBUTION:
        K = strategy.n_experts
        su, ss = s[..., :K], s[..., K:]
        tau = strategy.switch_rate(t)
        fresh = np.log(tau) + _LOG_HALF + log_w + log_sum_exp_rows(su)[..., None]
        new_u = np.logaddexp(np.log1p(-tau) + su, fresh)
        new_s = np.logaddexp(ss, fresh)
        return np.concatenate([new_u, new_s], axis=-1)
    a = strategy.switch_rate(t)
    if a == 0.0:
        return s
    resample = np.log(a) + log_w + log_sum_exp_rows(s)[..., None]
    if a == 1.0:
        return resample
    return np.logaddexp(np.log1p(-a) + s, resample)


class ForwardFilter:
    """Step-by-step forward inference for one strategy.

    Call :meth:`predict` for ``p(xi_t | D_<t)`` and then :meth:`update`
    with the K losses observed at step t.  ``batch_shape`` runs many
    independent sequences in lockstep.
    """

    def __init__(self, strategy: SwitchingStrategy, batch_shape: tuple[int, ...] = ()):
        self.strategy = strategy
        self.t = 0
        self._log_w = strategy.log_weights()
        self._state = np.broadcast_to(strategy.log_initial(), batch_shape + (strategy.n_states,)).copy()
        self._prior = None
        self.total = np.zeros(batch_shape)

    def _prior_state(self) -> np.ndarray:
        if self._prior is None:
            if self.t == 0:
                s = self._state
            else:
                s = _propagate(self.strategy, self._state, self.t + 1, self._log_w)
            self._prior = s - log_sum_exp_rows(s)[..., None]
        return self._prior

    def _collapse(self, s: np.ndarray) -> np.ndarray:
        if self.strategy.kind == SWITCH_DISTRIBUTION:
            K = self.strategy.n_experts
            return np.logaddexp(s[..., :K], s[..., K:])
        return s

    def predict(self) -> np.ndarray:
        """Log posterior over experts for the upcoming step, ``log p(xi_t | D_<t)``."""
        return self._collapse(self._prior_state())

    def update(self, losses_t) -> np.ndarray:
        """Consume step-t losses (shape ``batch + (K,)``); returns the marginal loss."""
        prior = self._prior_state()
        loglik = -np.asarray(losses_t, dtype=np.float64)
        if self.strategy.kind == SWITCH_DISTRIBUTION:
            loglik = np.concatenate([loglik, loglik], axis=-1)
        joint = prior + loglik
        norm = log_sum_exp_rows(joint)
        marginal = -norm
        self._state = joint - norm[..., None]
        self._prior = None
        self.t += 1
        self.total = self.total + marginal
        return marginal


@dataclass(frozen=True)
class PosteriorTrace:
    posteriors: np.ndarray  # (..., N, K) rows p(xi_t = k | D_<t)
    per_step_marginal_loss: np.ndarray  # (..., N)

    def time_averaged(self) -> np.ndarray:
        return self.posteriors.mean(axis=-2)

    def most_probable_expert(self) -> int:
        """argmax_k of the time-averaged posterior; ties go to the lower index."""
        return int(np.argmax(self.time_averaged()))


@dataclass(frozen=True)
class CodelengthResult:
    total_nats: float | np.ndarray
    trace: PosteriorTrace
    strategy: SwitchingStrategy

    @property
    def n_steps(self) -> int:
        return self.trace.per_step_marginal_loss.shape[-1]

    @property
    def per_example_nats(self):
        return self.total_nats / self.n_steps


def _loss_array(losses) -> np.ndarray:
    if isinstance(losses, LossMatrix):
        return losses.losses
    a = np.asarray(losses, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if np.isnan(a).any():
        idx = tuple(int(i) for i in np.argwhere(np.isnan(a))[0])
        raise ValueError(f"NaN loss at (t, k) = {idx[-2:]}")
    return a


def forward_codelength(losses, strategy: SwitchingStrategy, keep_posteriors: bool = True) -> CodelengthResult:
    """Switching codelength of a loss matrix under ``strategy``.

    ``losses`` is a :class:`LossMatrix` or an array of shape ``(..., N, K)``.
    """
    a = _loss_array(losses)
    N, K = a.shape[-2:]
    if K != strategy.n_experts:
        raise ValueError(f"loss matrix has K={K} experts but strategy expects {strategy.n_experts}")
    filt = ForwardFilter(strategy, a.shape[:-2])
    post = np.empty(a.shape) if keep_posteriors else None
    marg = np.empty(a.shape[:-1])
    for t in range(N):
        if keep_posteriors:
            post[..., t, :] = np.exp(filt.predict())
        marg[..., t] = filt.update(a[..., t, :])
    total = filt.total if filt.total.ndim else float(filt.total)
    return CodelengthResult(total, PosteriorTrace(post, marg), strategy)


def bayesian_mixture_codelength(losses, log_prior=None) -> float:
    """Closed-form codelength of the no-switching Bayesian mixture."""
    a = _loss_array(losses)
    K = a.shape[-1]
    lp = np.full(K, -np.log(K)) if log_prior is None else as_log_prob_vector(log_prior)
    if lp.size != K:
        raise ValueError("prior length differs from number of experts")
    return float(-log_sum_exp_rows(lp - a.sum(axis=0)))


def elementwise_mixture_codelength(losses, weights=None) -> float:
    """Sum over steps of the per-step mixture loss with fixed weights."""
    a = _loss_array(losses)
    K = a.shape[-1]
    w = np.full(K, 1.0 / K) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != (K,):
        raise ValueError("weights length differs from number of experts")
    with np.errstate(divide="ignore"):
        lw = np.log(w)
    return float(-log_sum_exp_rows(lw - a).sum())


def switch_distribution_codelength(losses, kappa: float = 0.5, weights=None) -> float:
    a = _loss_array(losses)
    strat = SwitchingStrategy.switch_distribution(
        a.shape[-1], kappa=kappa, weights=None if weights is None else tuple(weights)
    )
    return forward_codelength(a, strat, keep_posteriors=False).total_nats


def regret_vs_comparator(result: CodelengthResult, comparator_per_step_loss) -> np.ndarray:
    """Cumulative excess loss of ``result`` over a per-step comparator."""
    own = result.trace.per_step_marginal_loss
    comp = np.asarray(comparator_per_step_loss, dtype=np.float64)
    if comp.shape[-1] != own.shape[-1]:
        raise ValueError(f"comparator has {comp.shape[-1]} steps, result has {own.shape[-1]}")
    return np.cumsum(own - comp, axis=-1)


def path_log_prior(strategy: SwitchingStrategy, path) -> float:
    """``log p(xi_1:N)`` of one expert path (chains marginalized for the
    switch distribution)."""
    path = np.asarray(path, dtype=np.int64)
    K = strategy.n_experts
    if path.size and (path.min() < 0 or path.max() >= K):
        raise ValueError("path refers to an expert outside [0, K)")
    mask = np.full((path.size, K), np.inf)
    mask[np.arange(path.size), path] = 0.0
    with np.errstate(invalid="ignore"):
        total = forward_codelength(mask, strategy, keep_posteriors=False).total_nats
    # a zero-probability transition leaves NaN behind once all mass is gone
    return -float(total) if np.isfinite(total) else -np.inf
