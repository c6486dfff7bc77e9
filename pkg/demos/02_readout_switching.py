"""Score a feature sequence with a small pool of readouts.

Stage 1 trains every readout prequentially (predict, record the loss, then
update) and stores an N x K loss matrix.  Stage 2 runs switching strategies
over that matrix.  The class boundary here is curved, so linear readouts
never catch up; the posterior moves between one- and two-layer MLPs as
their relative learning speed changes.

    python3 demos/02_readout_switching.py
"""
import numpy as np

from readout_mdl import FeatureSequence, SwitchingStrategy, TrainerConfig, expert_grid, forward_codelength, run_stage1

N, d = 4000, 8
rng = np.random.default_rng(1)
X = rng.normal(size=(N, d))
# mildly non-linear boundary
y = (X[:, 0] + 0.8 * X[:, 1] ** 2 - 0.8 > 0).astype(int)
data = FeatureSequence(X, y, 2, "quadratic-boundary")

pool = expert_grid(d, 2, [0, 1, 2], hidden_width=16, learning_rate=[1e-3, 1e-2])
print(f"training {len(pool)} readouts on {N} examples ...")
lm = run_stage1(data, pool, TrainerConfig(batch_size=32, n_streams=10, seed=0))

uniform = N * np.log(2)
print(f"uniform code: {uniform:.1f} nats")
for name, total in sorted(zip(lm.expert_names, lm.column_totals()), key=lambda p: p[1]):
    print(f"  {name:<45} {total:9.1f}")

res = forward_codelength(lm, SwitchingStrategy.fixed_share(lm.n_experts, 2))
print(f"\nfixed share over the pool: {res.total_nats:.1f} nats")

# posterior mass per family over time, in ten windows
fam = np.array([n.split("/")[0] for n in lm.expert_names])
post = res.trace.posteriors
print("\nwindow   " + "  ".join(f"{f:>6}" for f in sorted(set(fam))))
for w, chunk in enumerate(np.array_split(post, 10)):
    mass = [chunk[:, fam == f].sum(axis=1).mean() for f in sorted(set(fam))]
    print(f"{w:>6}   " + "  ".join(f"{m:6.2f}" for m in mass))
