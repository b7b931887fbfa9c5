"""
Distribution metrics between two click sets
===========================================

Compares click sets with the three sample metrics: mean pairwise L1
(PL1), exact 2D Wasserstein distance and the two-sample 2D
Kolmogorov-Smirnov test.
"""

import numpy as np

from clickbench.metrics import ClickSet, ks2d, pl1, wasserstein2d

rng = np.random.default_rng(11)
frame = (0, 0, 100, 80)  # object bounding box: x0, y0, width, height

# two samples from the same blob should look alike
blob = rng.normal((50, 40), (8, 6), size=(40, 2))
other = rng.normal((50, 40), (8, 6), size=(40, 2))
a = ClickSet(np.clip(blob, 0, (99, 79)), frame)
b = ClickSet(np.clip(other, 0, (99, 79)), frame)

print("same distribution:")
print(f"  PL1 {pl1(a, b):.4f}")
print(f"  WD  {wasserstein2d(a, b):.4f}")
res = ks2d(a, b, rng=np.random.default_rng(0))
print(f"  KS  stat {res.statistic:.4f}, p {res.p_value:.4f}, pass {res.passed}")

# shift one set and the metrics call it out
shifted = ClickSet(np.clip(other + (30, 20), 0, (99, 79)), frame)
print("shifted distribution:")
print(f"  PL1 {pl1(a, shifted):.4f}")
print(f"  WD  {wasserstein2d(a, shifted):.4f}")
res = ks2d(a, shifted, rng=np.random.default_rng(0))
print(f"  KS  stat {res.statistic:.4f}, p {res.p_value:.4f}, pass {res.passed}")

# a set is indistinguishable from itself
res = ks2d(a, a, rng=np.random.default_rng(0))
print(f"identical sets: WD {wasserstein2d(a, a):.4f}, KS pass {res.passed}")
