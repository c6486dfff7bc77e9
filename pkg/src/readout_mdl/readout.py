"""Linear and MLP readout heads trained with AdamW on fixed features.

Parameters live in one flat float64 vector per expert; :meth:`ReadoutArchitecture.unpack`
returns per-layer ``(W, b)`` views into it.  Gradients are derived by hand
(softmax cross-entropy through ReLU layers) and checked against finite
differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

MAX_HIDDEN_LAYERS = 7


class DivergedExpertError(FloatingPointError):
    pass


@dataclass(frozen=True)
class ReadoutArchitecture:
    """``hidden_layers == 0`` is a linear probe; otherwise a ReLU MLP."""

    input_dim: int
    n_classes: int
    hidden_layers: int = 0
    hidden_width: int | None = None  # defaults to input_dim

    def __post_init__(self):
        if not 0 <= self.hidden_layers <= MAX_HIDDEN_LAYERS:
            raise ValueError(f"hidden_layers must be in [0, {MAX_HIDDEN_LAYERS}]")
        if self.input_dim < 1 or self.n_classes < 1:
            raise ValueError("input_dim and n_classes must be >= 1")
        if self.hidden_width is not None and self.hidden_width < 1:
            raise ValueError("hidden_width must be >= 1")

    @property
    def width(self) -> int:
        return self.hidden_width or self.input_dim

    @property
    def name(self) -> str:
        return "linear" if self.hidden_layers == 0 else f"mlp{self.hidden_layers}"

    @property
    def layer_sizes(self) -> list[int]:
        return [self.input_dim] + [self.width] * self.hidden_layers + [self.n_classes]

    @property
    def n_params(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    def unpack(self, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        layers, pos = [], 0
        s = self.layer_sizes
        for fan_in, fan_out in zip(s[:-1], s[1:]):
            W = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = flat[pos:pos + fan_out]
            pos += fan_out
            layers.append((W, b))
        return layers


@dataclass(frozen=True)
class Hyperparameters:
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    ema_step_size: float = 1.0
    label_smoothing: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.ema_step_size <= 1.0:
            raise ValueError("ema_step_size must lie in (0, 1]")
        if not 0.0 <= self.label_smoothing < 0.5:
            raise ValueError("label_smoothing must lie in [0, 0.5)")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be non-negative")


@dataclass
class ExpertState:
    params: np.ndarray
    ema_params: np.ndarray
    hyper: Hyperparameters
    m: np.ndarray = field(default=None)
    v: np.ndarray = field(default=None)
    step: int = 0

    def __post_init__(self):
        if self.params.shape != self.ema_params.shape:
            raise ValueError("params and ema_params differ in shape")
        if self.m is None:
            self.m = np.zeros_like(self.params)
        if self.v is None:
            self.v = np.zeros_like(self.params)

    def copy(self) -> "ExpertState":
        return replace(self, params=self.params.copy(), ema_params=self.ema_params.copy(),
                       m=self.m.copy(), v=self.v.copy())


def init_expert(arch: ReadoutArchitecture, hyper: Hyperparameters, seed) -> ExpertState:
    """Fan-in uniform hidden weights, zero biases, zero output layer.

    The zero output layer makes the very first prediction uniform.
    """
    rng = np.random.default_rng(seed)
    flat = np.zeros(arch.n_params)
    layers = arch.unpack(flat)
    for W, _ in layers[:-1]:
        bound = 1.0 / np.sqrt(W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return ExpertState(params=flat, ema_params=flat.copy(), hyper=hyper)


def _forward(flat: np.ndarray, arch: ReadoutArchitecture, X: np.ndarray):
    acts = [X]
    h = X
    layers = arch.unpack(flat)
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
        acts.append(h)
    W, b = layers[-1]
    return h @ W + b, acts


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def predict_log_probs(state: ExpertState, arch: ReadoutArchitecture, feature, use_ema: bool = True) -> np.ndarray:
    """Log class probabilities for one feature vector ``(d,)`` or a batch ``(B, d)``."""
    flat = state.ema_params if use_ema else state.params
    if not np.all(np.isfinite(flat)):
        raise DivergedExpertError("diverged expert: non-finite parameters")
    logits, _ = _forward(flat, arch, np.asarray(feature, dtype=np.float64))
    if not np.all(np.isfinite(logits)):
        raise DivergedExpertError("diverged expert: non-finite logits")
    return _log_softmax(logits)


def smoothed_targets(labels: np.ndarray, n_classes: int, eps: float) -> np.ndarray:
    """1 - eps on the true class, eps / (C - 1) spread over the rest."""
    q = np.full((len(labels), n_classes), eps / (n_classes - 1) if n_classes > 1 else 0.0)
    q[np.arange(len(labels)), labels] = 1.0 - eps if n_classes > 1 else 1.0
    return q


def loss_and_gradient(state: ExpertState, arch: ReadoutArchitecture, X, y, label_smoothing: float = 0.0):
    """Mean smoothed cross-entropy of the raw (non-EMA) parameters and its gradient.

    Weight decay is not part of this loss; :func:`sgd_step` applies it
    decoupled from the gradient.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if len(y) == 0:
        raise ValueError("empty batch")
    logits, acts = _forward(state.params, arch, X)
    if not np.all(np.isfinite(logits)):
        raise DivergedExpertError("diverged expert: non-finite logits during training")
    logp = _log_softmax(logits)
    q = smoothed_targets(y, arch.n_classes, label_smoothing)
    B = len(y)
    loss = float(-(q * logp).sum() / B)

    grad = np.zeros_like(state.params)
    glayers = arch.unpack(grad)
    layers = arch.unpack(state.params)
    delta = (np.exp(logp) - q) / B
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = glayers[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = (delta @ layers[i][0].T) * (acts[i] > 0)
    return loss, grad


def sgd_step(state: ExpertState, gradient: np.ndarray) -> ExpertState:
    """One AdamW update (decoupled weight decay) followed by the EMA update.

    Mutates and returns ``state``.
    """
    hp = state.hyper
    if gradient.shape != state.params.shape:
        raise ValueError("gradient shape differs from parameters")
    state.step += 1
    state.m *= hp.beta1
    state.m += (1.0 - hp.beta1) * gradient
    state.v *= hp.beta2
    state.v += (1.0 - hp.beta2) * gradient * gradient
    m_hat = state.m / (1.0 - hp.beta1 ** state.step)
    v_hat = state.v / (1.0 - hp.beta2 ** state.step)
    if hp.weight_decay:
        state.params *= 1.0 - hp.learning_rate * hp.weight_decay
    state.params -= hp.learning_rate * m_hat / (np.sqrt(v_hat) + hp.adam_eps)
    a = hp.ema_step_size
    if a == 1.0:
        state.ema_params[...] = state.params
    else:
        state.ema_params *= 1.0 - a
        state.ema_params += a * state.params
    return state
