"""Prequential (predict-then-train) online training of an expert pool.

At every step t each expert first emits its loss on example t using
parameters fit only on examples ``< t``; only then is example t added to the
seen prefix and every expert takes one AdamW step on a mini-batch made of
the new example plus replayed ones.

Indices are 0-based throughout: step ``t`` handles ``data[t]`` and may
replay any index in ``[0, t)``.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .core import FeatureSequence, LossMatrix
from .readout import (
    DivergedExpertError,
    ExpertState,
    Hyperparameters,
    ReadoutArchitecture,
    init_expert,
    loss_and_gradient,
    predict_log_probs,
    sgd_step,
)
from .switching import CodelengthResult, ForwardFilter, PosteriorTrace, SwitchingStrategy

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpertSpec:
    arch: ReadoutArchitecture
    hyper: Hyperparameters

    @property
    def name(self) -> str:
        h = self.hyper
        return (f"{self.arch.name}/lr={h.learning_rate:g},wd={h.weight_decay:g},"
                f"b1={h.beta1:g},ema={h.ema_step_size:g}")


def expert_grid(input_dim: int, n_classes: int, hidden_layers: Sequence[int] = (0,),
                hidden_width: int | None = None, **hyper_grid) -> list[ExpertSpec]:
    """Cartesian product of architectures and hyperparameter values.

    Every keyword is a :class:`Hyperparameters` field mapped to a list of
    values, e.g. ``expert_grid(16, 2, [0, 1], learning_rate=[1e-3, 3e-3])``.
    """
    keys = sorted(hyper_grid)
    values = [v if isinstance(v, (list, tuple)) else [v] for v in (hyper_grid[k] for k in keys)]
    pool = []
    for h in hidden_layers:
        arch = ReadoutArchitecture(input_dim, n_classes, int(h), hidden_width)
        for combo in itertools.product(*values):
            pool.append(ExpertSpec(arch, Hyperparameters(**dict(zip(keys, combo)))))
    return pool


class ReplayStreamSet:
    """Cursors into the already-seen prefix, advanced round-robin.

    With ``persistence == 0`` (the default) every draw restarts its stream at
    a uniformly random seen position, i.e. replay is uniform over the prefix.
    A positive ``persistence`` lets a stream step forward in original order
    with that probability, which biases replay towards recent examples.
    """

    def __init__(self, n_streams: int, seed=0, persistence: float = 0.0):
        if n_streams < 0:
            raise ValueError("n_streams must be >= 0")
        if not 0.0 <= persistence < 1.0:
            raise ValueError("persistence must lie in [0, 1)")
        self.n_streams = n_streams
        self.persistence = persistence
        self.rng = np.random.default_rng(seed)
        self.cursors: list[int | None] = [None] * n_streams
        self._turn = 0

    def draw(self, frontier: int) -> int:
        """Next replay index from the stream whose turn it is; result < frontier."""
        i = self._turn
        self._turn = (i + 1) % self.n_streams
        c = self.cursors[i]
        advance = (
            c is not None
            and c + 1 < frontier
            and self.persistence > 0.0
            and self.rng.random() < self.persistence
        )
        c = c + 1 if advance else int(self.rng.integers(frontier))
        self.cursors[i] = c
        return c


def assemble_batch(streams: ReplayStreamSet, new_index: int, batch_size: int) -> list[int]:
    """The new example followed by up to ``batch_size - 1`` replayed indices."""
    if new_index < 0:
        raise ValueError("new_index must be >= 0")
    batch = [new_index]
    if streams.n_streams == 0 or new_index == 0:
        return batch
    n_replay = min(batch_size - 1, new_index)
    batch.extend(streams.draw(new_index) for _ in range(n_replay))
    return batch


@dataclass(frozen=True)
class TrainerConfig:
    batch_size: int = 32
    n_streams: int = 10
    seed: int = 0
    stream_persistence: float = 0.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_streams < 0:
            raise ValueError("n_streams must be >= 0")


@dataclass
class _Expert:
    spec: ExpertSpec
    state: ExpertState
    diverged_at: int | None = None


def _init_pool(pool: Sequence[ExpertSpec], seed: int) -> list[_Expert]:
    out = []
    for k, spec in enumerate(pool):
        ss = np.random.SeedSequence([seed, k])
        out.append(_Expert(spec, init_expert(spec.arch, spec.hyper, ss)))
    return out


@dataclass
class Stage1Run:
    """Step iterator state; exposes which experts diverged."""

    experts: list[_Expert] = field(default_factory=list)

    @property
    def diverged(self) -> tuple[int, ...]:
        return tuple(k for k, e in enumerate(self.experts) if e.diverged_at is not None)


def iter_prequential_losses(data: FeatureSequence, pool: Sequence[ExpertSpec],
                            config: TrainerConfig, run: Stage1Run | None = None) -> Iterator[np.ndarray]:
    """Yield the K next-step losses for t = 0..N-1, training after each yield."""
    data.check()
    if not pool:
        raise ValueError("expert pool is empty")
    for spec in pool:
        if spec.arch.input_dim != data.dim or spec.arch.n_classes != data.n_classes:
            raise ValueError(f"expert {spec.name} expects d={spec.arch.input_dim}, "
                             f"C={spec.arch.n_classes}; data has d={data.dim}, C={data.n_classes}")
    run = run if run is not None else Stage1Run()
    run.experts = _init_pool(pool, config.seed)
    streams = ReplayStreamSet(config.n_streams, np.random.SeedSequence([config.seed, 10**6]),
                              config.stream_persistence)
    X, Y = data.features, data.labels
    uniform = float(np.log(data.n_classes))
    row = np.empty(len(pool))

    for t in range(len(data)):
        for k, e in enumerate(run.experts):
            if e.diverged_at is not None:
                row[k] = uniform
                continue
            try:
                row[k] = -predict_log_probs(e.state, e.spec.arch, X[t])[Y[t]]
            except DivergedExpertError:
                _flag(e, k, t)
                row[k] = uniform
        yield row.copy()

        idx = assemble_batch(streams, t, config.batch_size)
        xb, yb = X[idx], Y[idx]
        for k, e in enumerate(run.experts):
            if e.diverged_at is not None:
                continue
            try:
                _, g = loss_and_gradient(e.state, e.spec.arch, xb, yb, e.spec.hyper.label_smoothing)
                sgd_step(e.state, g)
            except DivergedExpertError:
                _flag(e, k, t)


def _flag(e: _Expert, k: int, t: int) -> None:
    e.diverged_at = t
    log.warning("expert %d (%s) diverged at step %d; using uniform predictions from here on", k, e.spec.name, t)


def run_stage1(data: FeatureSequence, pool: Sequence[ExpertSpec], config: TrainerConfig) -> LossMatrix:
    """Record every expert's prequential log-loss at every step."""
    run = Stage1Run()
    rows = list(iter_prequential_losses(data, pool, config, run))
    return LossMatrix(np.array(rows), tuple(s.name for s in pool), run.diverged)


def run_online(data: FeatureSequence, pool: Sequence[ExpertSpec], config: TrainerConfig,
               strategy: SwitchingStrategy) -> tuple[CodelengthResult, LossMatrix]:
    """Single pass: train the pool and update the switching posterior together."""
    if strategy.n_experts != len(pool):
        raise ValueError("strategy size differs from the expert pool")
    filt = ForwardFilter(strategy)
    run = Stage1Run()
    posts, margs, rows = [], [], []
    for row in iter_prequential_losses(data, pool, config, run):
        posts.append(np.exp(filt.predict()))
        margs.append(filt.update(row))
        rows.append(row)
    trace = PosteriorTrace(np.array(posts), np.array(margs))
    losses = LossMatrix(np.array(rows), tuple(s.name for s in pool), run.diverged)
    return CodelengthResult(float(filt.total), trace, strategy), losses
