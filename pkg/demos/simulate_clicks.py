"""
Clickability maps and clicking groups on a synthetic object
===========================================================

Builds a fake error region, fits a clickability map from a handful of
observed clicks, splits the map into ten equal-mass clicking groups
and draws one simulated click per group.
"""

import numpy as np

from clickbench.clicksim import build_clickability_map, partition_groups, sample_click

# a blob-shaped error region in a 60x80 frame
yy, xx = np.ogrid[:60, :80]
error = ((xx - 45) ** 2 / 400 + (yy - 30) ** 2 / 150) <= 1.0
print(f"error region: {error.sum()} of {error.size} pixels")

# pretend five users clicked near the blob's right lobe
observed = [(52, 28), (55, 31), (50, 33), (57, 29), (53, 30)]
pmap = build_clickability_map(observed, error, sigma=5.0)
print(f"map mass {pmap.probs.sum():.9f}, peak {pmap.probs.max():.6f}")

# ten groups of equal probability mass; group 10 is the most probable
groups = partition_groups(pmap, 10)
for i in range(1, 11):
    mass = groups.group_mass(i)
    mean_p = groups.mean_probability(i)
    print(f"group {i:2d}: mass {mass:.6f}, mean pixel probability {mean_p:.2e}")

# one click per group; high groups land near the observed cluster
rng = np.random.default_rng(7)
for i in (1, 5, 10):
    click = sample_click(groups, i, rng)
    print(f"sampled from group {i:2d}: ({click.x}, {click.y})")
