"""Average ranks and Nemenyi critical differences across datasets.

Uses the per-example description lengths shipped with the tests
(six representations, nineteen datasets, lower is better).

    python3 demos/04_ranking.py
"""
import os

from readout_mdl import ScoreTable, significance_matrix, summarize

path = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "codelength_per_example_6.csv")
table = ScoreTable.from_csv(path, lower_is_better=True).transposed()
s = summarize(table, q_gamma=3.12)

print(f"{s.n_datasets} datasets, critical difference {s.critical_difference:.3f}")
for i in s.order():
    print(f"  {s.representation_names[i]:<20} {s.average_ranks[i]:.3f}")

sig = significance_matrix(s)
names = s.representation_names
pairs = [(names[i], names[j]) for i in range(len(names)) for j in range(i + 1, len(names)) if sig[i, j]]
print("\nsignificantly different pairs:")
for a, b in pairs:
    print(f"  {a} vs {b}")
