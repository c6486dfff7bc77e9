"""Regret of universal codes grows like log N.

A KT estimator on a Bernoulli source has regret close to (1/2) log N
against the best parameter in hindsight.  A piecewise Gaussian source
with a variance change is tracked by fixed share over two known-variance
experts, with one extra log N for the switch.

    python3 demos/03_regret_rates.py
"""
from readout_mdl import RegretExperiment, run_regret_experiment

kt = RegretExperiment.from_dict({
    "source": {"family": "bernoulli", "segments": [{"start": 0, "p": 0.3}]},
    "experts": [{"family": "bernoulli", "smoothing": 0.5}],
    "horizon": 20_000, "n_trials": 20, "strategy": "bayes", "seed": 0,
})
piecewise = RegretExperiment.from_dict({
    "source": {"family": "gaussian",
               "segments": [{"start": 0, "mean": 0.0, "std": 1.0}, {"start": 1000, "mean": 0.0, "std": 3.0}]},
    "experts": [{"family": "gaussian", "variance": 1.0}, {"family": "gaussian", "variance": 9.0}],
    "horizon": 20_000, "n_trials": 10, "strategy": "fixed-share-dec:m=2", "seed": 0,
})

for label, exp in (("KT, stationary", kt), ("fixed share, piecewise", piecewise)):
    c = run_regret_experiment(exp)
    print(f"{label}: slope {c.slope:.3f} +- {c.slope_stderr:.3f} per unit log N")
    for n, r in list(zip(c.grid, c.mean))[::4]:
        print(f"   N={int(n):>6}  regret {r:8.3f}")
