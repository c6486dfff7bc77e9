"""Acceptance criteria, one test per criterion.

Each test records a one-line PASS/FAIL verdict that is printed in the
terminal summary (run ``pytest tests/test_acceptance.py -v`` or execute
this file directly).  Criteria 1, 2, 5 and 9 cache their first-run
outputs so criterion 10 can compare a second run bit for bit.
"""
import hashlib
import json
import math
import os
import sys
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

import oracles  # noqa: E402
from conftest import DATA_DIR  # noqa: E402
from readout_mdl.cli import main as cli_main  # noqa: E402
from readout_mdl.core import FeatureSequence, LossMatrix  # noqa: E402
from readout_mdl.expfam import RegretExperiment, run_regret_experiment  # noqa: E402
from readout_mdl.fileio import write_feature_file  # noqa: E402
from readout_mdl.ranking import nemenyi_critical_difference  # noqa: E402
from readout_mdl.switching import SwitchingStrategy, forward_codelength  # noqa: E402
from readout_mdl.trainer import TrainerConfig, expert_grid, run_online, run_stage1  # noqa: E402
from test_readout import gradient_check  # noqa: E402

VERDICTS: dict[int, str] = {}
_FIRST_RUN: dict[int, str] = {}


def verdict(n: int, ok: bool, text: str) -> None:
    VERDICTS[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n:>2}: {text}"
    print(VERDICTS[n])
    assert ok, VERDICTS[n]


def digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a).tobytes() if isinstance(a, np.ndarray) else repr(a).encode())
    return h.hexdigest()


# -- 1: brute-force equivalence ------------------------------------------------

KINDS = {
    "fixed-share-dec": (lambda K: SwitchingStrategy.fixed_share(K, 2), {"m": 2}),
    "fixed-share-const": (lambda K: SwitchingStrategy.fixed_share_constant(K, 0.2), {"alpha": 0.2}),
    "bayes": (SwitchingStrategy.bayes, {}),
    "elementwise": (SwitchingStrategy.elementwise, {}),
    "switch": (lambda K: SwitchingStrategy.switch_distribution(K, 0.5), {"kappa": 0.5}),
}
MAX_AUGMENTED_PATHS = 2 ** 16


def compute_c1(seed=2024):
    rng = np.random.default_rng(seed)
    worst, engine_time, totals = 0.0, 0.0, []
    for _ in range(200):
        K = int(rng.integers(1, 4))
        N = int(rng.integers(1, 9))
        L = rng.uniform(0, 5, size=(N, K))
        for kind, (make, kw) in KINDS.items():
            # the switch oracle enumerates (2K)^N paths; keep it bounded
            n_eval = N if kind != "switch" else max(1, min(N, int(math.log(MAX_AUGMENTED_PATHS, 2 * K))))
            sub = L[:n_eval]
            t0 = time.perf_counter()
            got = forward_codelength(sub, make(K), keep_posteriors=False).total_nats
            engine_time += time.perf_counter() - t0
            worst = max(worst, abs(got - oracles.enumerate_codelength_np(sub, kind, **kw)))
            totals.append(got)
    return worst, engine_time, digest(np.array(totals))


def test_c1_brute_force_equivalence():
    t0 = time.perf_counter()
    worst, engine_time, fp = compute_c1()
    wall = time.perf_counter() - t0
    _FIRST_RUN[1] = fp
    verdict(1, worst <= 1e-9 and wall < 10,
            f"brute-force equivalence, 200 instances x 5 strategies: max |diff| = {worst:.2e} nats (tol 1e-9); "
            f"{wall:.1f} s including the oracle (limit 10 s; engine alone {engine_time:.2f} s)")


# -- 2: online / two-stage equivalence ------------------------------------------

def gaussian_mixture(n, d, seed, sep=0.35):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    mu = rng.normal(size=d)
    mu *= sep / np.linalg.norm(mu) * math.sqrt(d)
    x = rng.normal(size=(n, d)) + np.where(y[:, None] == 1, mu, -mu) / 2
    return FeatureSequence(x, y, 2, f"gmm-{d}d")


def compute_c2(seed=0):
    data = gaussian_mixture(512, 8, seed=11)
    pool = expert_grid(8, 2, [0, 1], learning_rate=[1e-3, 1e-2])
    cfg = TrainerConfig(batch_size=16, n_streams=5, seed=seed)
    strat = SwitchingStrategy.fixed_share(len(pool), 2)
    online, _ = run_online(data, pool, cfg, strat)
    lm = run_stage1(data, pool, cfg)
    two_stage = forward_codelength(lm, strat)
    return online.total_nats, two_stage.total_nats, digest(lm.losses, online.total_nats, two_stage.total_nats)


def test_c2_online_equals_two_stage():
    t0 = time.perf_counter()
    a, b, fp = compute_c2()
    wall = time.perf_counter() - t0
    _FIRST_RUN[2] = fp
    verdict(2, abs(a - b) <= 1e-9 and wall < 60,
            f"online vs stage1+stage2 at N=512: {a:.9f} vs {b:.9f}, |diff| = {abs(a - b):.1e} (tol 1e-9), {wall:.1f} s")


# -- 3: fixed-share prior bound ---------------------------------------------------

def fs_bound(m, K, N):
    return m * math.log(K) + ((m - 1) * math.log(N / (m - 1)) if m > 1 else 0.0) + 2.0


def position_sets(N, max_switches):
    from itertools import combinations
    for r in range(max_switches + 1):
        yield from combinations(range(1, N), r)


def worst_prior_excess(K, m, N):
    """max over paths with <= m-1 switches of -log p(path) - bound, via batched masked forward passes."""
    strat = SwitchingStrategy.fixed_share(K, m)
    sets = list(position_sets(N, m - 1 if K > 1 else 0))
    masks = np.full((len(sets), N, K), np.inf)
    for i, pos in enumerate(sets):
        k, last = 0, 0
        for p in list(pos) + [N]:
            masks[i, last:p, k] = 0.0
            k, last = (k + 1) % K, p
    with np.errstate(invalid="ignore"):
        cost = forward_codelength(masks, strat, keep_posteriors=False).total_nats
    i = int(np.argmax(cost))
    return float(cost[i] - fs_bound(m, K, N)), sets[i]


def test_c3_fixed_share_prior_bound():
    worst = (-np.inf, None)
    failures = 0
    for K in range(1, 5):
        for m in range(1, 5):
            for N in (4, 8, 16, 32, 64):
                excess, pos = worst_prior_excess(K, m, N)
                failures += excess > 0
                if excess > worst[0]:
                    worst = (excess, (K, m, N, tuple(p + 1 for p in pos)))
    excess, (K, m, N, pos) = worst
    verdict(3, failures == 0,
            f"fixed-share prior bound (+2 slack), N<=64, K<=4, m<=4: {failures} of 80 settings violate; "
            f"worst excess {excess:.3f} nats at K={K}, m={m}, N={N}, switches at t={list(pos)}")


# -- 4: catch-up -------------------------------------------------------------------

def test_c4_catch_up():
    N = 10_000
    rng = np.random.default_rng(4)
    L = rng.uniform(0.5, 0.8, size=(N, 2))
    L[: N // 2, 0] -= 0.2
    L[N // 2:, 1] -= 0.2
    lm = LossMatrix(L)
    fs = forward_codelength(lm, SwitchingStrategy.fixed_share(2, 2)).total_nats
    bayes = forward_codelength(lm, SwitchingStrategy.bayes(2)).total_nats
    elem = forward_codelength(lm, SwitchingStrategy.elementwise(2)).total_nats
    verdict(4, fs <= bayes - 1.0 and elem > fs,
            f"catch-up at N=1e4: fixed share {fs:.2f} < Bayes {bayes:.2f} by {bayes - fs:.2f} nats (need >= 1); "
            f"elementwise {elem:.2f} > fixed share")


# -- 5: regret rates -----------------------------------------------------------------

KT_SPEC = {
    "source": {"family": "bernoulli", "segments": [{"start": 0, "p": 0.3}]},
    "experts": [{"family": "bernoulli", "smoothing": 0.5}],
    "horizon": 100_000, "n_trials": 100, "strategy": "bayes", "seed": 5,
}
PIECEWISE_SPEC = {
    "source": {"family": "gaussian",
               "segments": [{"start": 0, "mean": 0.0, "std": 1.0}, {"start": 1000, "mean": 0.0, "std": 3.0}]},
    "experts": [{"family": "gaussian", "variance": 1.0}, {"family": "gaussian", "variance": 9.0}],
    "horizon": 100_000, "n_trials": 20, "strategy": "fixed-share-dec:m=2", "seed": 6,
}


def compute_c5():
    kt = run_regret_experiment(RegretExperiment.from_dict(KT_SPEC))
    pw = run_regret_experiment(RegretExperiment.from_dict(PIECEWISE_SPEC))
    return kt, pw, digest(json.dumps(kt.as_dict(), sort_keys=True), json.dumps(pw.as_dict(), sort_keys=True))


def test_c5_regret_rates():
    t0 = time.perf_counter()
    kt, pw, fp = compute_c5()
    wall = time.perf_counter() - t0
    _FIRST_RUN[5] = fp
    per_step = pw.mean[-1] / pw.grid[-1]
    ok = 0.35 <= kt.slope <= 0.65 and per_step <= 0.01 and math.isfinite(pw.slope) and wall < 300
    verdict(5, ok,
            f"KT slope {kt.slope:.3f} +- {kt.slope_stderr:.3f} (need [0.35, 0.65]); piecewise R(N)/N = {per_step:.2e} "
            f"(need <= 0.01), slope {pw.slope:.2f} +- {pw.slope_stderr:.2f}; {wall:.0f} s (limit 300 s)")


# -- 6: gradients -----------------------------------------------------------------------

def test_c6_gradients():
    worst = {h: max(gradient_check(h, eps, seed=600 + h) for eps in (0.0, 0.1)) for h in range(4)}
    verdict(6, max(worst.values()) <= 1e-4,
            "analytic vs central differences, 100 coordinates per architecture: max relative error "
            + ", ".join(f"h={h}: {v:.1e}" for h, v in worst.items()) + " (tol 1e-4)")


# -- 7: Nemenyi constants ----------------------------------------------------------------

def test_c7_nemenyi_constants():
    a = nemenyi_critical_difference(6, 19, 3.12)
    b = nemenyi_critical_difference(12, 19, 3.12)
    verdict(7, abs(a - 1.894) <= 1e-3 and abs(b - 3.65) <= 1e-2,
            f"critical differences {a:.4f} (want 1.894 +- 0.001) and {b:.4f} (want 3.65 +- 0.01)")


# -- 8: rank reproduction -----------------------------------------------------------------

PUBLISHED_RANKS = {"ViT/B16 DINO": 1.89, "ResNet-50 BYOL": 2.53, "ViT/B16 MAE": 3.79,
                   "ViT/B16 SUP": 4.16, "ResNet-50 SimCLR": 4.21, "ResNet-50 SUP": 4.42}


def test_c8_rank_reproduction(tmp_path):
    out = tmp_path / "ranks.json"
    src = os.path.join(DATA_DIR, "codelength_per_example_6.csv")
    assert cli_main(["rank", "--scores", src, "--transpose", "--orientation", "lower", "--q-gamma", "3.12",
                     "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    ours = dict(zip(doc["representations"], doc["average_ranks"]))
    diffs = {k: ours[k] - v for k, v in PUBLISHED_RANKS.items()}
    order_ok = doc["order"] == list(PUBLISHED_RANKS)
    worst = max(diffs, key=lambda k: abs(diffs[k]))
    verdict(8, order_ok and all(abs(d) <= 0.01 for d in diffs.values()),
            f"mid-rank average ranks {', '.join(f'{k} {ours[k]:.3f}' for k in doc['order'])}; "
            f"max deviation {diffs[worst]:+.3f} ({worst}); ordering {'matches' if order_ok else 'differs'}")


# -- 9: end-to-end desk-scale run -------------------------------------------------------------

C9_GRID = json.dumps({"hidden_layers": [0, 1, 2], "learning_rate": [1e-3, 1e-2],
                      "trainer": {"batch_size": 32, "n_streams": 10}})


def compute_c9(workdir, seed=0):
    data = gaussian_mixture(20_000, 16, seed=99)
    feats = os.path.join(workdir, "gmm.pqsf")
    write_feature_file(feats, data, {"generator": "two-class Gaussian mixture", "seed": 99})
    losses = os.path.join(workdir, "gmm.pqlm")
    report = os.path.join(workdir, "report.json")
    assert cli_main(["--seed", str(seed), "stage1", "--features", feats, "--grid", C9_GRID, "--out", losses]) == 0
    assert cli_main(["--seed", str(seed), "stage2", "--losses", losses, "--strategy", "fixed-share-dec:m=2",
                     "--out", report]) == 0
    with open(losses, "rb") as fh:
        raw = fh.read()
    with open(report) as fh:
        doc = json.load(fh)
    # the report config records file paths, which differ between work dirs
    return doc, digest(raw, json.dumps(doc["strategies"], sort_keys=True))


def test_c9_end_to_end(tmp_path):
    t0 = time.perf_counter()
    doc, fp = compute_c9(str(tmp_path))
    wall = time.perf_counter() - t0
    _FIRST_RUN[9] = fp
    sec = doc["strategies"][0]
    N = doc["n_steps"]
    baseline = N * math.log(2)
    fam, mass = max(sec["family_posterior"].items(), key=lambda kv: kv[1])
    ok = sec["total_nats"] < baseline and mass >= 0.5 and wall < 600
    verdict(9, ok,
            f"N={N}, d=16, 6 readouts: {sec['total_nats']:.1f} nats < {baseline:.1f} (N log 2); "
            f"family posterior {fam} {mass:.2f} (need >= 0.5); most probable readout "
            f"{sec['most_probable_expert']['name']}; {wall:.0f} s (limit 600 s)")


# -- 10: determinism ------------------------------------------------------------------------------

def test_c10_determinism(tmp_path):
    if 1 not in _FIRST_RUN:
        _FIRST_RUN[1] = compute_c1()[2]
    if 2 not in _FIRST_RUN:
        _FIRST_RUN[2] = compute_c2()[2]
    if 5 not in _FIRST_RUN:
        _FIRST_RUN[5] = compute_c5()[2]
    if 9 not in _FIRST_RUN:
        os.makedirs(tmp_path / "first")
        _FIRST_RUN[9] = compute_c9(str(tmp_path / "first"))[1]
    os.makedirs(tmp_path / "second")
    second = {1: compute_c1()[2], 2: compute_c2()[2], 5: compute_c5()[2], 9: compute_c9(str(tmp_path / "second"))[1]}
    same = [n for n in (1, 2, 5, 9) if second[n] == _FIRST_RUN[n]]
    verdict(10, len(same) == 4,
            f"second run bit-identical for criteria {same} of [1, 2, 5, 9] (SHA-256 of all outputs)")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
