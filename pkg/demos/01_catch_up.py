"""Why switch between readouts at all?

Two synthetic experts trade places halfway through a stream.  A Bayesian
mixture keeps betting on whichever expert led so far, so it pays for the
early leader long after it stopped being good.  Fixed share moves its
weight within a few dozen steps.

    python3 demos/01_catch_up.py
"""
import numpy as np

from readout_mdl import LossMatrix, SwitchingStrategy, forward_codelength

N = 10_000
rng = np.random.default_rng(0)

# expert 0 is better on the first half, expert 1 on the second
L = rng.uniform(0.5, 0.8, size=(N, 2))
L[: N // 2, 0] -= 0.2
L[N // 2:, 1] -= 0.2
lm = LossMatrix(L, expert_names=("early", "late"))

strategies = {
    "bayes": SwitchingStrategy.bayes(2),
    "fixed share (m=2)": SwitchingStrategy.fixed_share(2, 2),
    "switch distribution": SwitchingStrategy.switch_distribution(2, 0.5),
    "elementwise": SwitchingStrategy.elementwise(2),
}

print(f"best single expert: {lm.column_totals().min():9.2f} nats")
results = {}
for name, s in strategies.items():
    results[name] = forward_codelength(lm, s)
    print(f"{name:>20}: {results[name].total_nats:9.2f} nats")

# How long until each strategy puts most of its weight on the late expert?
print("\nsteps after the change point until p(late) > 0.5:")
for name, r in results.items():
    p_late = r.trace.posteriors[N // 2:, 1]
    hits = np.flatnonzero(p_late > 0.5)
    print(f"{name:>20}: {hits[0] if hits.size else 'never'}")
