"""Mask and scalar-field primitives shared by the rest of the package.

All masks are 2D boolean numpy arrays in row-major (height, width) order
and all scalar fields are 2D float64 arrays of the same layout.  Pixel
coordinates are (x, y) with x the column index and y the row index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage


def as_mask(arr) -> np.ndarray:
    """Coerce an array-like into a 2D boolean mask."""
    mask = np.asarray(arr)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2D, got shape {mask.shape}")
    if mask.dtype != bool:
        mask = mask.astype(bool)
    return mask


def as_field(arr) -> np.ndarray:
    """Coerce an array-like into a 2D float64 field."""
    field = np.asarray(arr, dtype=np.float64)
    if field.ndim != 2:
        raise ValueError(f"field must be 2D, got shape {field.shape}")
    return field


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance from each True pixel to the nearest False pixel.

    The image border is treated as if surrounded by a virtual ring of
    False pixels, so a True pixel touching the border has distance 1.
    False pixels map to 0.  Distances are exact Euclidean values, not
    chamfer approximations.
    """
    mask = as_mask(mask)
    # pad with an explicit False ring, transform, then crop it away
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    dist = ndimage.distance_transform_edt(padded)
    return dist[1:-1, 1:-1]


def distance_to_foreground(mask) -> np.ndarray:
    """Exact Euclidean distance from each pixel to the nearest True pixel.

    Unlike :func:`distance_transform` no virtual border ring is added:
    the measurement is against the mask content only.  If the mask has
    no True pixel every distance is +inf.
    """
    mask = as_mask(mask)
    if not mask.any():
        return np.full(mask.shape, np.inf)
    return ndimage.distance_transform_edt(~mask)


@dataclass(frozen=True)
class LabeledRegions:
    """Connected components of a mask.

    ``labels`` holds 0 for background and ids 1..K assigned in raster
    scan order of each region's first pixel.  ``sizes[k - 1]`` is the
    pixel count of region k.
    """

    labels: np.ndarray
    sizes: np.ndarray

    @property
    def count(self) -> int:
        return len(self.sizes)

    def region_mask(self, label: int) -> np.ndarray:
        if not 1 <= label <= self.count:
            raise ValueError(f"label {label} out of range 1..{self.count}")
        return self.labels == label


_STRUCTURES = {
    4: np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool),
    8: np.ones((3, 3), dtype=bool),
}


def connected_components(mask, connectivity: int = 8) -> LabeledRegions:
    """Label connected regions of a boolean mask.

    ``connectivity`` is 4 or 8 (default 8).  Ids are contiguous from 1
    and ordered by the raster position of each region's first pixel, so
    labeling is deterministic for a given mask.
    """
    mask = as_mask(mask)
    if connectivity not in _STRUCTURES:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    raw, n = ndimage.label(mask, structure=_STRUCTURES[connectivity])
    labels = np.zeros(mask.shape, dtype=np.int32)
    if n == 0:
        return LabeledRegions(labels=labels, sizes=np.zeros(0, dtype=np.int64))
    # renumber by first raster occurrence; scipy already scans in raster
    # order but the contract should not rest on that implementation detail
    flat = raw.ravel()
    first_seen = {}
    remap = np.zeros(n + 1, dtype=np.int32)
    next_id = 1
    for lab in flat[flat != 0]:
        if lab not in first_seen:
            first_seen[lab] = next_id
            remap[lab] = next_id
            next_id += 1
    labels = remap[raw].astype(np.int32)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:].astype(np.int64)
    return LabeledRegions(labels=labels, sizes=sizes)


def gaussian_blur(field, sigma: float) -> np.ndarray:
    """Blur a field with a truncated, sum-normalized Gaussian kernel.

    The kernel is separable with radius ceil(3 * sigma) per axis and each
    1D kernel is renormalized to sum 1 after truncation.  Values outside
    the image are treated as zero.
    """
    field = as_field(field)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    return ndimage.gaussian_filter(
        field, sigma=sigma, mode="constant", cval=0.0, radius=radius
    )


def iou(a, b) -> float:
    """Intersection over union of two masks; 1.0 if both are empty."""
    a = as_mask(a)
    b = as_mask(b)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def error_regions(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    """Split a prediction's errors into (false_negative, false_positive) masks."""
    pred = as_mask(pred)
    gt = as_mask(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return gt & ~pred, pred & ~gt


def load_mask(path) -> np.ndarray:
    """Read a mask from an image file; any nonzero pixel is True."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[..., :3].max(axis=2)
    return arr != 0


def save_mask(mask, path) -> None:
    """Write a mask as an 8-bit grayscale PNG (True -> 255)."""
    mask = as_mask(mask)
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)
