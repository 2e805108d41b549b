"""Scoring candidate changepoints on a hand-made stream.

Run with ``python3 notebooks/01_detectors.py``.
"""
import numpy as np

from changestream import StatTable, detect, detect_incremental, score_profile

# Six frames, change before frame 3.  Pairs that straddle the change get a
# high statistic and share a representation direction.
n, kappa_star = 6, 3
rng = np.random.default_rng(0)
p = np.zeros((n, n))
h = np.zeros((n, n, 4))
direction = np.array([1.0, 0.0, 0.0, 0.0])
for t in range(n):
    for u in range(t + 1, n):
        if t < kappa_star <= u:
            p[t, u] = 1.0 + 0.1 * rng.standard_normal()
            v = direction + 0.2 * rng.standard_normal(4)
        else:
            p[t, u] = 0.1 * rng.standard_normal()
            v = rng.standard_normal(4)
        h[t, u] = v / np.linalg.norm(v)
table = StatTable.from_arrays(p, h)

for method in ("step", "gc", "rc", "rc-lambda0"):
    profile = score_profile(table, method)
    result = detect(table, method)
    print(f"{method:11s} kappa_hat={result.kappa_hat}  profile={np.round(profile, 3)}")

# The running-sum path gives the same answer in O(N^2 d) total.
print("incremental rc:", detect_incremental(table, "rc").kappa_hat)
