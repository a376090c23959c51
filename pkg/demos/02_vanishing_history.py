"""How the privacy-aware state remembers past placements.

The agent never sees queue lengths. Instead it keeps a tensor over
(action, cluster, category) that is bumped at the last placement and then
renormalized, so older placements fade geometrically.
"""

import numpy as np

from fogbalance.state import dist_update

d = np.zeros((3, 2, 2))
history = [(0, 0, 0), (1, 0, 1), (2, 1, 0), (0, 1, 1)]
for step, cell in enumerate(history, start=1):
    d = dist_update(d, *cell)
    nonzero = {tuple(int(i) for i in idx): float(d[idx]) for idx in zip(*np.nonzero(d))}
    print(f"after update {step}: {nonzero}")

# With distinct cells the newest placement holds 1/2, the one before 1/4, and so
# on; the two oldest share the last slice so that everything sums to one.
print("sum:", d.sum())

# Hitting the same cell again keeps piling weight on it.
for _ in range(5):
    d = dist_update(d, 2, 1, 0)
print("after five repeats of (2, 1, 0):", round(float(d[2, 1, 0]), 4))

# Passing None starts a fresh history (used at the first decision of an episode).
print("reset:", dist_update(d, None, 0, 0).sum())
