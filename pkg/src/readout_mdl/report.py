"""Machine-readable reports (JSON documents plus optional CSV exports)."""
from __future__ import annotations

import csv
import json
from typing import Sequence

import numpy as np

from .core import LossMatrix
from .ranking import RankSummary, significance_matrix
from .switching import CodelengthResult, SwitchingStrategy, forward_codelength, regret_vs_comparator


def sample_steps(n: int, n_points: int = 40) -> np.ndarray:
    """1-based step counts, log-spaced from 1 to n inclusive."""
    return np.unique(np.round(np.logspace(0, np.log10(n), n_points)).astype(int).clip(1, n))


def family_of(expert_name: str) -> str:
    return expert_name.split("/", 1)[0]


def _curve(values: np.ndarray, steps: np.ndarray) -> dict:
    return {"steps": steps.tolist(), "values": values[steps - 1].tolist()}


def strategy_section(result: CodelengthResult, lm: LossMatrix, baseline: CodelengthResult | None,
                     steps: np.ndarray) -> dict:
    post = result.trace.time_averaged()
    k = result.trace.most_probable_expert()
    families: dict[str, float] = {}
    for name, p in zip(lm.expert_names, post):
        families[family_of(name)] = families.get(family_of(name), 0.0) + float(p)
    best = int(np.argmin(lm.column_totals()))
    sec = {
        "strategy": result.strategy.describe(),
        "total_nats": float(result.total_nats),
        "per_example_nats": float(result.total_nats) / lm.n_steps,
        "time_averaged_posterior": post.tolist(),
        "most_probable_expert": {"index": k, "name": lm.expert_names[k]},
        "family_posterior": families,
        "regret_vs_best_single_expert": _curve(regret_vs_comparator(result, lm.losses[:, best]), steps),
    }
    if baseline is not None:
        sec["regret_vs_baseline"] = _curve(
            regret_vs_comparator(result, baseline.trace.per_step_marginal_loss), steps)
        sec["baseline"] = baseline.strategy.describe()
    return sec


def stage2_report(lm: LossMatrix, strategies: Sequence[SwitchingStrategy], config: dict | None = None,
                  seed: int | None = None) -> tuple[dict, list[CodelengthResult]]:
    """Run every strategy on ``lm``; the first one is the regret baseline of the others."""
    results = [forward_codelength(lm, s) for s in strategies]
    steps = sample_steps(lm.n_steps)
    totals = lm.column_totals()
    best = int(np.argmin(totals))
    doc = {
        "n_steps": lm.n_steps,
        "n_experts": lm.n_experts,
        "expert_names": list(lm.expert_names),
        "diverged_experts": list(lm.diverged),
        "single_expert_totals": {n: float(v) for n, v in zip(lm.expert_names, totals)},
        "best_single_expert": {"index": best, "name": lm.expert_names[best], "total_nats": float(totals[best])},
        "strategies": [
            strategy_section(r, lm, results[0] if i else None, steps) for i, r in enumerate(results)
        ],
        "config": config or {},
        "seed": seed,
    }
    return doc, results


def rank_report(summary: RankSummary) -> dict:
    names = summary.representation_names
    sig = significance_matrix(summary)
    return {
        "representations": list(names),
        "average_ranks": [float(r) for r in summary.average_ranks],
        "order": [names[i] for i in summary.order()],
        "n_datasets": summary.n_datasets,
        "q_gamma": summary.q_value,
        "confidence": summary.confidence,
        "critical_difference": summary.critical_difference,
        "significant_pairs": [
            [names[i], names[j]] for i in range(len(names)) for j in range(i + 1, len(names)) if sig[i, j]
        ],
        "significance_matrix": sig.astype(int).tolist(),
    }


def write_json(path, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def write_posterior_csv(path, result: CodelengthResult, expert_names: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "marginal_loss", *expert_names])
        for t, (m, row) in enumerate(zip(result.trace.per_step_marginal_loss, result.trace.posteriors), start=1):
            w.writerow([t, repr(float(m)), *(repr(float(p)) for p in row)])


def write_curves_csv(path, columns: dict[str, Sequence[float]]) -> None:
    keys = list(columns)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys)
        for row in zip(*(columns[k] for k in keys)):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
