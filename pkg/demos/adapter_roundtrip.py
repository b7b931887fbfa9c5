"""
Driving an external segmenter over the wire protocol
====================================================

Spawns the reference adapter as a subprocess and evaluates it exactly
like any external model: newline-delimited JSON requests on stdin, RLE
masks on stdout.
"""

import sys

import numpy as np

from clickbench.adapter import AdapterSegmenter, rle_encode
from clickbench.harness import BaselineSource, EvalConfig, EvalInstance, run_instance

# ground truth: a radius-12 disk; the adapter paints the same geometry
yy, xx = np.ogrid[:41, :41]
gt = (xx - 20) ** 2 + (yy - 20) ** 2 <= 12 * 12
instance = EvalInstance(id="disk", gt=gt)
print(f"ground truth RLE: {rle_encode(gt)[:8]} ... ({len(rle_encode(gt))} runs)")

command = f"{sys.executable} -m clickbench.adapter --radius 12"
config = EvalConfig(strategy="baseline")

with AdapterSegmenter(command) as segmenter:
    trajectory = run_instance(
        segmenter, instance, BaselineSource(), config,
        lambda r: np.random.default_rng(r),
    )

print(f"IoU after click 1: {trajectory.ious[0]:.3f}")
print(f"NoC@90: {trajectory.noc}, converged: {trajectory.converged}")
