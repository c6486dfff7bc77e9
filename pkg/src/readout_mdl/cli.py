"""Command line entry point: ``readout-mdl {stage1,stage2,synth-regret,rank}``.

Exit codes: 0 on success, 2 on usage or data errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .core import DataError
from .expfam import RegretExperiment, run_regret_experiment
from .fileio import load_features, read_loss_matrix, write_loss_matrix
from .ranking import DEFAULT_Q_GAMMA, ScoreTable, summarize
from .report import rank_report, stage2_report, write_curves_csv, write_json, write_posterior_csv
from .switching import SwitchingStrategy
from .trainer import TrainerConfig, expert_grid, run_stage1

log = logging.getLogger("readout_mdl")

SWEEP = ("bayes", "elementwise", "switch:kappa=0.5")
_HYPER_KEYS = {"learning_rate", "weight_decay", "beta1", "beta2", "adam_eps", "ema_step_size", "label_smoothing"}


class UsageError(Exception):
    pass


def parse_grid(text: str) -> dict:
    """Grid spec from a JSON file path or an inline JSON object."""
    if os.path.exists(text):
        with open(text) as fh:
            text = fh.read()
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"cannot parse expert grid: {exc}") from None
    if not isinstance(spec, dict):
        raise UsageError("expert grid must be a JSON object")
    unknown = set(spec) - _HYPER_KEYS - {"hidden_layers", "hidden_width", "trainer"}
    if unknown:
        raise UsageError(f"unknown expert grid key(s): {sorted(unknown)}")
    return spec


def cmd_stage1(args) -> int:
    data = load_features(args.features, args.n_classes)
    spec = parse_grid(args.grid)
    trainer = dict(spec.get("trainer", {}))
    for key in ("batch_size", "n_streams"):
        if getattr(args, key) is not None:
            trainer[key] = getattr(args, key)
    config = TrainerConfig(seed=args.seed or 0, **trainer)
    hyper = {k: v for k, v in spec.items() if k in _HYPER_KEYS}
    pool = expert_grid(data.dim, data.n_classes, spec.get("hidden_layers", [0]), spec.get("hidden_width"), **hyper)
    lm = run_stage1(data, pool, config)
    write_loss_matrix(args.out, lm)
    meta = {
        "features": os.fspath(args.features),
        "dataset": data.name,
        "n_steps": lm.n_steps,
        "experts": list(lm.expert_names),
        "diverged_experts": list(lm.diverged),
        "trainer": {"batch_size": config.batch_size, "n_streams": config.n_streams,
                    "stream_persistence": config.stream_persistence},
        "seed": config.seed,
    }
    write_json(args.out + ".json", meta)
    for k in lm.diverged:
        log.warning("expert %s diverged; its losses fall back to log C", lm.expert_names[k])
    print(f"wrote {lm.n_steps} x {lm.n_experts} loss matrix to {args.out}")
    return 0


def cmd_stage2(args) -> int:
    lm = read_loss_matrix(args.losses)
    texts = list(args.strategy or ["fixed-share-dec:m=2"])
    if args.sweep:
        texts += [s for s in SWEEP if s not in texts]
    try:
        strategies = [SwitchingStrategy.parse(t, lm.n_experts) for t in texts]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    doc, results = stage2_report(lm, strategies, config={"losses": os.fspath(args.losses), "strategies": texts},
                                 seed=args.seed or 0)
    write_json(args.out, doc)
    if args.posterior_out:
        write_posterior_csv(args.posterior_out, results[0], lm.expert_names)
    if args.curves_out:
        cols = {"step": doc["strategies"][0]["regret_vs_best_single_expert"]["steps"]}
        for sec in doc["strategies"]:
            cols[f"{sec['strategy']} vs best expert"] = sec["regret_vs_best_single_expert"]["values"]
            if "regret_vs_baseline" in sec:
                cols[f"{sec['strategy']} vs {sec['baseline']}"] = sec["regret_vs_baseline"]["values"]
        write_curves_csv(args.curves_out, cols)
    head = doc["strategies"][0]
    print(f"{head['strategy']}: {head['total_nats']:.6f} nats ({head['per_example_nats']:.6f} per example); "
          f"most probable readout {head['most_probable_expert']['name']}")
    return 0


def cmd_synth_regret(args) -> int:
    try:
        exp = RegretExperiment.from_json(args.spec)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"bad experiment spec {args.spec}: {exc}") from None
    if args.seed is not None:
        exp = dataclasses.replace(exp, seed=args.seed)
    curve = run_regret_experiment(exp)
    doc = {"experiment": os.fspath(args.spec), "seed": exp.seed, "horizon": exp.horizon, "regret": curve.as_dict()}
    write_json(args.out, doc)
    if args.curves_out:
        write_curves_csv(args.curves_out, {"n": curve.grid.tolist(), "mean_regret": curve.mean,
                                           "stderr": curve.stderr})
    print(f"slope {curve.slope:.4f} +- {curve.slope_stderr:.4f} per log N over {curve.fit_range}; "
          f"constant regret: {curve.constant_regret}")
    return 0


def cmd_rank(args) -> int:
    table = ScoreTable.from_csv(args.scores, lower_is_better=args.orientation == "lower")
    if args.transpose:
        table = table.transposed()
    summary = summarize(table, args.q_gamma)
    doc = rank_report(summary)
    doc["orientation"] = args.orientation
    write_json(args.out, doc)
    for name, r in sorted(zip(doc["representations"], doc["average_ranks"]), key=lambda p: p[1]):
        print(f"{r:6.3f}  {name}")
    print(f"critical difference {summary.critical_difference:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="readout-mdl", description="Prequential codelengths with readout switching.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--seed", type=int, default=None,
                   help="global seed (default 0; synth-regret defaults to the seed in its spec)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s1 = sub.add_parser("stage1", help="train the expert pool and record per-step losses")
    s1.add_argument("--features", required=True, help="PQSF binary or CSV (label in last column)")
    s1.add_argument("--grid", required=True, help="expert grid as JSON file or inline JSON")
    s1.add_argument("--out", required=True, help="output loss-matrix file (PQLM)")
    s1.add_argument("--n-classes", type=int, default=None, help="override class count for CSV input")
    s1.add_argument("--batch-size", type=int, default=None)
    s1.add_argument("--n-streams", type=int, default=None)
    s1.set_defaults(func=cmd_stage1)

    s2 = sub.add_parser("stage2", help="switching codelength and posterior report from a loss matrix")
    s2.add_argument("--losses", required=True)
    s2.add_argument("--strategy", action="append",
                    help="fixed-share-dec:m=INT | fixed-share-const:alpha=F | bayes | elementwise | switch:kappa=F; any kind also takes K=INT "
                         "(repeatable; the first is the baseline)")
    s2.add_argument("--sweep", action="store_true", help="also run bayes, elementwise and switch distribution")
    s2.add_argument("--out", required=True, help="JSON report path")
    s2.add_argument("--posterior-out", help="CSV export of the baseline posterior trace")
    s2.add_argument("--curves-out", help="CSV export of the sampled regret curves")
    s2.set_defaults(func=cmd_stage2)

    sr = sub.add_parser("synth-regret", help="regret-rate experiment with closed-form experts")
    sr.add_argument("spec", help="experiment spec (JSON)")
    sr.add_argument("--out", required=True)
    sr.add_argument("--curves-out")
    sr.set_defaults(func=cmd_synth_regret)

    rk = sub.add_parser("rank", help="average ranks and Nemenyi critical difference")
    rk.add_argument("--scores", required=True, help="delimited table, one dataset per row")
    rk.add_argument("--orientation", choices=["lower", "higher"], default="lower")
    rk.add_argument("--q-gamma", type=float, default=DEFAULT_Q_GAMMA)
    rk.add_argument("--transpose", action="store_true", help="table has one representation per row")
    rk.add_argument("--out", required=True)
    rk.set_defaults(func=cmd_rank)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        name = exc.filename or str(exc)
        print(f"error: file not found: {name}" if exc.filename else f"error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, DataError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
