"""Click simulation: clickability maps, clicking groups and click sampling.

A clickability map is a probability distribution over the pixels of an
image estimating where a user would click to correct a segmentation
error.  Maps are built either from collected user clicks (Gaussian
density of the click positions, masked to the error region) or from
simple models (uniform or boundary-distance weighted).  A map is split
into ``n`` clicking groups of equal probability mass, ordered from
least to most probable pixels, so a benchmark can sample clicks that
range from adversarial (group 1) to typical (group n).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .imaging import (
    as_mask,
    connected_components,
    distance_transform,
    error_regions,
    gaussian_blur,
)

logger = logging.getLogger(__name__)

POLARITIES = ("positive", "negative")


class DegenerateMapError(ValueError):
    """Raised when a map has no probability mass to distribute."""


class MapFormatError(ValueError):
    """Raised when a stored probability map cannot be decoded."""


@dataclass(frozen=True)
class Click:
    """A single click at integer pixel (x, y).

    ``polarity`` is "positive" for clicks marking missing object pixels
    and "negative" for clicks marking wrongly included ones.  ``round``
    is the 1-based interaction round the click belongs to.
    """

    x: int
    y: int
    polarity: str = "positive"
    round: int = 1
    device: str = "simulated"

    def __post_init__(self):
        if self.polarity not in POLARITIES:
            raise ValueError(f"polarity must be one of {POLARITIES}")
        if self.round < 1:
            raise ValueError(f"round must be >= 1, got {self.round}")


@dataclass(frozen=True)
class ProbabilityMap:
    """A per-pixel probability distribution (row-major, sums to 1)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2:
            raise ValueError(f"probs must be 2D, got shape {probs.shape}")
        if not np.isfinite(probs).all():
            raise ValueError("probs must be finite")
        if (probs < 0).any():
            raise ValueError("probs must be non-negative")
        total = probs.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"probs must sum to 1, got {total!r}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_weights(cls, weights) -> "ProbabilityMap":
        """Normalize non-negative weights into a probability map."""
        weights = np.asarray(weights, dtype=np.float64)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0.0:
            raise DegenerateMapError("weights have no positive mass")
        return cls(probs=weights / total)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    @property
    def height(self) -> int:
        return self.probs.shape[0]

    @property
    def width(self) -> int:
        return self.probs.shape[1]


@dataclass(frozen=True)
class SoftErrorMask:
    """A blurred error mask in [0, 1] and the click radius used to blur it."""

    values: np.ndarray
    click_radius: float


def click_radius(width: int, height: int, diag_fraction: float = 0.01) -> float:
    """Click radius in pixels: a fraction of the image diagonal."""
    if not diag_fraction > 0:
        raise ValueError(f"diag_fraction must be positive, got {diag_fraction}")
    return diag_fraction * float(np.hypot(width, height))


def soft_error_mask(error, diag_fraction: float = 0.01) -> SoftErrorMask:
    """Blur a binary error mask with sigma equal to the click radius.

    The result softens the region boundary so that clicks slightly
    outside the error still receive mass, matching how users overshoot
    small targets.  Values are clipped to [0, 1].
    """
    error = as_mask(error)
    h, w = error.shape
    radius = click_radius(w, h, diag_fraction)
    values = gaussian_blur(error.astype(np.float64), radius)
    np.clip(values, 0.0, 1.0, out=values)
    return SoftErrorMask(values=values, click_radius=radius)


def build_clickability_map(
    clicks,
    error,
    sigma: float = 5.0,
    diag_fraction: float = 0.01,
) -> ProbabilityMap:
    """Estimate a clickability map from observed clicks.

    Pipeline: accumulate a unit impulse per click, blur with ``sigma``,
    multiply by the soft error mask, normalize to total mass 1.  Raises
    :class:`DegenerateMapError` when the masked density has no mass
    (e.g. every click fell far outside the error region).
    """
    error = as_mask(error)
    h, w = error.shape
    impulses = np.zeros((h, w), dtype=np.float64)
    n_clicks = 0
    for click in clicks:
        x, y = (click.x, click.y) if isinstance(click, Click) else click
        if not (0 <= x < w and 0 <= y < h):
            raise ValueError(f"click ({x}, {y}) outside {w}x{h} image")
        impulses[y, x] += 1.0
        n_clicks += 1
    if n_clicks == 0:
        raise DegenerateMapError("no clicks to build a map from")
    density = gaussian_blur(impulses, sigma)
    soft = soft_error_mask(error, diag_fraction)
    return ProbabilityMap.from_weights(density * soft.values)


def uniform_model(error) -> ProbabilityMap:
    """Uniform clickability over the error region."""
    error = as_mask(error)
    if not error.any():
        raise DegenerateMapError("error region is empty")
    return ProbabilityMap.from_weights(error.astype(np.float64))


def dt_model(error) -> ProbabilityMap:
    """Boundary-distance clickability: mass grows toward the region center.

    Weights are the exact Euclidean distance transform of the error
    region, so pixels far from the region boundary are most probable.
    """
    error = as_mask(error)
    if not error.any():
        raise DegenerateMapError("error region is empty")
    return ProbabilityMap.from_weights(distance_transform(error))


def condition_on_error(
    pmap: ProbabilityMap,
    error,
    diag_fraction: float = 0.01,
) -> ProbabilityMap:
    """Restrict a full-image map to an error region via the soft mask.

    When the masked map keeps essentially no mass (below 1e-12) the map
    carries no information about this error; a uniform map over the
    region is returned instead and a warning is logged.
    """
    error = as_mask(error)
    if pmap.shape != error.shape:
        raise ValueError(f"map shape {pmap.shape} != error shape {error.shape}")
    soft = soft_error_mask(error, diag_fraction)
    weights = pmap.probs * soft.values
    if weights.sum() <= 1e-12:
        logger.warning(
            "clickability map has no mass on the error region; "
            "falling back to a uniform map"
        )
        return uniform_model(error)
    return ProbabilityMap.from_weights(weights)


def target_region(pred, gt, connectivity: int = 8) -> tuple[np.ndarray, str]:
    """Largest connected error component and the matching click polarity.

    Ties break toward false negatives over false positives, then toward
    the region first reached in raster order.  A false-negative region
    calls for a positive click, a false-positive one for a negative.
    """
    fn, fp = error_regions(pred, gt)
    best = None  # key = (-size, polarity_rank, label)
    for rank, (mask, polarity) in enumerate([(fn, "positive"), (fp, "negative")]):
        regions = connected_components(mask, connectivity)
        for label in range(1, regions.count + 1):
            key = (-int(regions.sizes[label - 1]), rank, label)
            if best is None or key < best[0]:
                best = (key, regions, label, polarity)
    if best is None:
        raise ValueError("prediction matches ground truth; nothing to click")
    _, regions, label, polarity = best
    return regions.region_mask(label), polarity


def baseline_click(pred, gt, connectivity: int = 8) -> Click:
    """Deterministic baseline: click the innermost pixel of the largest error.

    The target region comes from :func:`target_region`; within it the
    click lands on the pixel with maximal boundary distance, remaining
    ties resolving to the first pixel in raster order.
    """
    region, polarity = target_region(pred, gt, connectivity)
    dist = distance_transform(region)
    flat = int(np.argmax(dist))  # first maximum in raster order
    h, w = dist.shape
    return Click(x=flat % w, y=flat // w, polarity=polarity)


@dataclass(frozen=True)
class ClickingGroups:
    """A probability map split into groups of equal probability mass.

    Pixels are sorted by ascending probability (ties in raster order)
    and the cumulative mass is cut into ``n_groups`` equal intervals.
    A pixel whose mass straddles a cut contributes the overlapping
    portion to each side.  ``segments[i]`` holds the flat pixel indices
    and mass weights of 1-based group i+1; group n covers the most
    probable pixels.
    """

    shape: tuple[int, int]
    probs: np.ndarray
    segments: list = field(repr=False)

    @property
    def n_groups(self) -> int:
        return len(self.segments)

    def group(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        """(flat pixel indices, mass weights) of 1-based group ``index``."""
        if not 1 <= index <= self.n_groups:
            raise ValueError(f"group index {index} out of range 1..{self.n_groups}")
        return self.segments[index - 1]

    def group_mass(self, index: int) -> float:
        return float(self.group(index)[1].sum())

    def mean_probability(self, index: int) -> float:
        """Mass-weighted mean pixel probability of a group."""
        indices, weights = self.group(index)
        return float((self.probs.ravel()[indices] * weights).sum() / weights.sum())


def partition_groups(pmap: ProbabilityMap, n_groups: int = 10) -> ClickingGroups:
    """Split a probability map into ``n_groups`` equal-mass clicking groups."""
    if n_groups < 1:
        raise ValueError(f"n_groups must be >= 1, got {n_groups}")
    flat = pmap.probs.ravel()
    order = np.argsort(flat, kind="stable")  # ascending, ties raster order
    sorted_probs = flat[order]
    cum = np.cumsum(sorted_probs)
    total = cum[-1]
    prev = np.concatenate(([0.0], cum[:-1]))
    segments = []
    for i in range(n_groups):
        lo = total * i / n_groups
        hi = total if i == n_groups - 1 else total * (i + 1) / n_groups
        # pixels whose mass interval (prev, cum] overlaps [lo, hi)
        j0 = int(np.searchsorted(cum, lo, side="right"))
        j1 = int(np.searchsorted(prev, hi, side="left"))
        weights = np.minimum(cum[j0:j1], hi) - np.maximum(prev[j0:j1], lo)
        indices = order[j0:j1]
        keep = weights > 0
        segments.append((indices[keep].astype(np.int64), weights[keep]))
    return ClickingGroups(shape=pmap.shape, probs=pmap.probs, segments=segments)


def sample_click(
    groups: ClickingGroups,
    group_index: int,
    rng: np.random.Generator,
    polarity: str = "positive",
    round: int = 1,
) -> Click:
    """Draw one click from a clicking group, weighted by pixel mass."""
    indices, weights = groups.group(group_index)
    if len(indices) == 0:
        raise DegenerateMapError(f"group {group_index} has no pixels")
    flat = int(rng.choice(indices, p=weights / weights.sum()))
    _, w = groups.shape
    return Click(x=flat % w, y=flat // w, polarity=polarity, round=round)


def sample_points(
    pmap: ProbabilityMap, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` (x, y) points from the full map; shape (n, 2)."""
    flat = pmap.probs.ravel()
    picks = rng.choice(flat.size, size=n, p=flat)
    return np.column_stack([picks % pmap.width, picks // pmap.width]).astype(np.int64)


def save_probability_map(pmap: ProbabilityMap, path) -> None:
    """Write a map to disk.

    ``.png`` paths get a 16-bit grayscale PNG scaled so the peak maps
    to 65535; anything else gets the raw binary layout: two uint32
    little-endian dims (height, width) followed by row-major float64
    values.
    """
    path = str(path)
    if path.lower().endswith(".png"):
        peak = pmap.probs.max()
        scaled = np.round(pmap.probs / peak * 65535.0).astype(np.uint16)
        Image.fromarray(scaled).save(path)
        return
    h, w = pmap.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<II", h, w))
        f.write(pmap.probs.astype("<f8").tobytes())


def load_probability_map(path, target_dims: tuple[int, int] | None = None) -> ProbabilityMap:
    """Read a stored probability map and renormalize it.

    Two formats are sniffed from the file contents: single-channel PNG
    (8 or 16 bit) and the raw binary layout written by
    :func:`save_probability_map`.  ``target_dims`` is (width, height);
    when it differs from the stored size the map is bilinearly resampled
    before renormalization.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] == b"\x89PNG\r\n\x1a\n":
        weights = _decode_png_map(path, blob)
    else:
        weights = _decode_binary_map(path, blob)
    if target_dims is not None:
        tw, th = target_dims
        if (weights.shape[1], weights.shape[0]) != (tw, th):
            weights = _bilinear_resample(weights, tw, th)
    total = weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateMapError(f"{path}: stored map has no positive mass")
    return ProbabilityMap(probs=weights / total)


def _decode_png_map(path, blob) -> np.ndarray:
    import io

    try:
        with Image.open(io.BytesIO(blob)) as img:
            arr = np.asarray(img)
    except Exception as exc:
        raise MapFormatError(f"{path}: cannot decode PNG: {exc}") from exc
    if arr.ndim != 2:
        raise MapFormatError(f"{path}: map PNG must be single-channel")
    return arr.astype(np.float64)


def _decode_binary_map(path, blob) -> np.ndarray:
    if len(blob) < 8:
        raise MapFormatError(f"{path}: truncated header")
    h, w = struct.unpack_from("<II", blob, 0)
    expected = 8 + h * w * 8
    if h == 0 or w == 0 or len(blob) != expected:
        raise MapFormatError(
            f"{path}: expected {expected} bytes for {h}x{w} map, got {len(blob)}"
        )
    values = np.frombuffer(blob, dtype="<f8", offset=8, count=h * w).reshape(h, w)
    if not np.isfinite(values).all():
        raise MapFormatError(f"{path}: map contains non-finite values")
    if (values < 0).any():
        raise MapFormatError(f"{path}: map contains negative values")
    return values.astype(np.float64)


def _bilinear_resample(field: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Bilinear resize with pixel-center alignment and edge clamping."""
    in_h, in_w = field.shape
    sx = np.clip((np.arange(out_w) + 0.5) * in_w / out_w - 0.5, 0, in_w - 1)
    sy = np.clip((np.arange(out_h) + 0.5) * in_h / out_h - 0.5, 0, in_h - 1)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = sx - x0
    fy = sy - y0
    top = field[y0][:, x0] * (1 - fx) + field[y0][:, x1] * fx
    bot = field[y1][:, x0] * (1 - fx) + field[y1][:, x1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]
