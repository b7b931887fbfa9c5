"""Benchmarking toolkit for interactive image segmentation.

The package covers the full loop of a click-based evaluation study:

* ``imaging``  -- binary masks, exact distance transforms, connected
  components, Gaussian blur, IoU and error decomposition.
* ``clicksim`` -- clickability maps, decile clicking groups and click
  sampling, plus the deterministic boundary-distance baseline click.
* ``metrics``  -- distribution-comparison metrics between click sets
  (PL1, Wasserstein, 2D Kolmogorov-Smirnov, NSS, PDE).
* ``harness``  -- multi-round evaluation loop, NoC/NoF/IoU-AuC scores
  and robustness aggregates over clicking groups.
* ``adapter``  -- line-delimited JSON wire protocol for external
  segmenter processes.
* ``dataset``  -- click-record CSV parsing, click validation and
  dataset manifests.
* ``collect``  -- timed click-collection HTTP service.
"""

__version__ = "0.1.0"

from .clicksim import (
    Click,
    ClickingGroups,
    DegenerateMapError,
    ProbabilityMap,
    baseline_click,
    build_clickability_map,
    dt_model,
    partition_groups,
    sample_click,
    soft_error_mask,
    uniform_model,
)
from .imaging import (
    connected_components,
    distance_transform,
    error_regions,
    gaussian_blur,
    iou,
)
from .metrics import ClickSet, ks2d, nss, pde, pl1, wasserstein2d

__all__ = [
    "__version__",
    "Click",
    "ClickingGroups",
    "ClickSet",
    "DegenerateMapError",
    "ProbabilityMap",
    "baseline_click",
    "build_clickability_map",
    "connected_components",
    "distance_transform",
    "dt_model",
    "error_regions",
    "gaussian_blur",
    "iou",
    "ks2d",
    "nss",
    "partition_groups",
    "pde",
    "pl1",
    "sample_click",
    "soft_error_mask",
    "uniform_model",
    "wasserstein2d",
]
