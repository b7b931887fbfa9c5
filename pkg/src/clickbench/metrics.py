"""Comparison metrics between click sets and clickability maps.

Sample-based metrics (PL1, 2D Wasserstein, 2D Kolmogorov-Smirnov)
compare two sets of clicks in a shared object frame; density-based
metrics (NSS, PDE) score a probability map against ground-truth
clicks.  Click coordinates are normalized by the object bounding box
before sample-based comparison so objects of different scale are
commensurable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog
from scipy.stats import kstwobign, pearsonr

from .clicksim import Click, ProbabilityMap, sample_points
from .imaging import as_mask


@dataclass(frozen=True)
class ClickSet:
    """Click coordinates plus the object frame used for normalization.

    ``points`` is an (n, 2) float array of (x, y) pairs; ``frame`` is
    the object bounding box (x0, y0, width, height) with width and
    height at least 1.
    """

    points: np.ndarray
    frame: tuple[float, float, float, float]

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if points.ndim != 2 or points.shape[1] != 2:
            raise ValueError(f"points must be (n, 2), got shape {points.shape}")
        if len(points) == 0:
            raise ValueError("click set must be non-empty")
        frame = tuple(float(v) for v in self.frame)
        if len(frame) != 4:
            raise ValueError("frame must be (x0, y0, width, height)")
        if frame[2] < 1 or frame[3] < 1:
            raise ValueError(f"frame dims must be >= 1, got {frame[2:]}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "frame", frame)

    @classmethod
    def from_clicks(cls, clicks, frame) -> "ClickSet":
        pts = [(c.x, c.y) if isinstance(c, Click) else tuple(c) for c in clicks]
        return cls(points=np.asarray(pts, dtype=np.float64), frame=frame)

    def __len__(self) -> int:
        return len(self.points)

    def normalized(self) -> np.ndarray:
        """Points mapped into the frame: ((x - x0)/w, (y - y0)/h)."""
        x0, y0, w, h = self.frame
        return (self.points - (x0, y0)) / (w, h)


def frame_from_mask(mask) -> tuple[int, int, int, int]:
    """Tight bounding box (x0, y0, width, height) of a mask's True pixels."""
    mask = as_mask(mask)
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise ValueError("mask is empty; no object frame")
    return (
        int(xs.min()),
        int(ys.min()),
        int(xs.max() - xs.min() + 1),
        int(ys.max() - ys.min() + 1),
    )


def _check_frames(a: ClickSet, b: ClickSet):
    if a.frame != b.frame:
        raise ValueError(f"click sets use different frames: {a.frame} vs {b.frame}")


def pl1(a: ClickSet, b: ClickSet) -> float:
    """Mean L1 distance over all cross pairs, normalized by object dims.

    For every pair (p in a, q in b) the contribution is
    |px - qx| / obj_width + |py - qy| / obj_height.
    """
    _check_frames(a, b)
    an = a.normalized()
    bn = b.normalized()
    return float(np.abs(an[:, None, :] - bn[None, :, :]).sum(axis=2).mean())


def wasserstein2d(a: ClickSet, b: ClickSet) -> float:
    """Exact 1-Wasserstein distance between two empirical click distributions.

    Both sets carry uniform weights (1/n per point); the ground cost is
    Euclidean distance in the normalized frame.  Equal-size sets reduce
    to an assignment problem; unequal sizes solve the transport LP
    exactly.
    """
    _check_frames(a, b)
    an = a.normalized()
    bn = b.normalized()
    cost = np.sqrt(((an[:, None, :] - bn[None, :, :]) ** 2).sum(axis=2))
    n, m = cost.shape
    if n == m:
        rows, cols = linear_sum_assignment(cost)
        return float(cost[rows, cols].sum() / n)
    return _transport_lp(cost)


def _transport_lp(cost: np.ndarray) -> float:
    # exact uniform-marginal transport via the HiGHS LP solver
    n, m = cost.shape
    row_idx = np.repeat(np.arange(n), m)
    col_idx = np.tile(np.arange(m), n) + n
    var_idx = np.arange(n * m)
    a_eq = sparse.coo_matrix(
        (
            np.ones(2 * n * m),
            (
                np.concatenate([row_idx, col_idx]),
                np.concatenate([var_idx, var_idx]),
            ),
        ),
        shape=(n + m, n * m),
    ).tocsr()
    b_eq = np.concatenate([np.full(n, 1.0 / n), np.full(m, 1.0 / m)])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


@dataclass(frozen=True)
class Ks2dResult:
    """Two-sample 2D KS outcome; ``passed`` means p > 0.05 (not distinguishable)."""

    statistic: float
    p_value: float
    passed: bool


def _quadrant_sweep(anchors: np.ndarray, pa: np.ndarray, pb: np.ndarray) -> float:
    """Max |F_a - F_b| over the four quadrants anchored at each anchor point."""
    best = 0.0
    for pts_le_x, pts_le_y in ((True, True), (True, False), (False, True), (False, False)):
        fa = _quadrant_fraction(anchors, pa, pts_le_x, pts_le_y)
        fb = _quadrant_fraction(anchors, pb, pts_le_x, pts_le_y)
        best = max(best, float(np.abs(fa - fb).max()))
    return best


def _quadrant_fraction(anchors, pts, le_x: bool, le_y: bool) -> np.ndarray:
    in_x = pts[None, :, 0] <= anchors[:, 0, None]
    in_y = pts[None, :, 1] <= anchors[:, 1, None]
    if not le_x:
        in_x = ~in_x
    if not le_y:
        in_y = ~in_y
    return (in_x & in_y).mean(axis=1)


def ks2d_statistic(a_pts: np.ndarray, b_pts: np.ndarray) -> float:
    """Fasano-Franceschini statistic: quadrant sweeps from both samples, averaged."""
    da = _quadrant_sweep(a_pts, a_pts, b_pts)
    db = _quadrant_sweep(b_pts, a_pts, b_pts)
    return 0.5 * (da + db)


def _safe_pearson(pts: np.ndarray) -> float:
    if np.ptp(pts[:, 0]) == 0 or np.ptp(pts[:, 1]) == 0:
        return 0.0
    return float(pearsonr(pts[:, 0], pts[:, 1])[0])


def ks2d(
    a: ClickSet,
    b: ClickSet,
    method: str = "auto",
    n_permutations: int = 1000,
    rng: np.random.Generator | None = None,
) -> Ks2dResult:
    """Two-sample two-dimensional Kolmogorov-Smirnov test.

    The statistic follows Fasano and Franceschini: for each data point
    of each sample, compare the samples' fractions in the four
    axis-aligned quadrants anchored there; take the max absolute
    difference per sweep and average the two sweep maxima.

    The p-value uses the published asymptotic approximation with
    effective n = n1*n2/(n1+n2) and the samples' coordinate
    correlations.  That approximation degrades below ~20 points per
    sample, so ``method="auto"`` (the default) switches to a label
    permutation test (``n_permutations`` resamples) for small sets;
    pass an explicit ``rng`` to control its randomness.
    """
    a_pts = np.asarray(a.points, dtype=np.float64)
    b_pts = np.asarray(b.points, dtype=np.float64)
    n1, n2 = len(a_pts), len(b_pts)
    if n1 < 3 or n2 < 3:
        raise ValueError(f"ks2d needs >= 3 points per set, got {n1} and {n2}")
    if method not in ("auto", "asymptotic", "permutation"):
        raise ValueError(f"unknown method {method!r}")
    stat = ks2d_statistic(a_pts, b_pts)
    if method == "auto":
        method = "permutation" if min(n1, n2) < 20 else "asymptotic"
    if method == "asymptotic":
        n_eff = n1 * n2 / (n1 + n2)
        r1 = _safe_pearson(a_pts)
        r2 = _safe_pearson(b_pts)
        rr = np.sqrt(1.0 - 0.5 * (r1 * r1 + r2 * r2))
        sqen = np.sqrt(n_eff)
        p = float(kstwobign.sf(stat * sqen / (1.0 + rr * (0.25 - 0.75 / sqen))))
    else:
        rng = rng if rng is not None else np.random.default_rng(0)
        pool = np.concatenate([a_pts, b_pts])
        hits = 0
        for _ in range(n_permutations):
            perm = rng.permutation(len(pool))
            if ks2d_statistic(pool[perm[:n1]], pool[perm[n1:]]) >= stat:
                hits += 1
        p = (hits + 1.0) / (n_permutations + 1.0)
    return Ks2dResult(statistic=stat, p_value=p, passed=p > 0.05)


def _map_values(pmap) -> np.ndarray:
    if isinstance(pmap, ProbabilityMap):
        return pmap.probs
    values = np.asarray(pmap, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError(f"map must be 2D, got shape {values.shape}")
    return values


def _click_pixels(map_shape, clicks: ClickSet) -> tuple[np.ndarray, np.ndarray]:
    h, w = map_shape
    pts = np.rint(clicks.points).astype(np.int64)
    xs, ys = pts[:, 0], pts[:, 1]
    if (xs < 0).any() or (xs >= w).any() or (ys < 0).any() or (ys >= h).any():
        raise ValueError(f"clicks out of bounds for {w}x{h} map")
    return xs, ys


def nss(pmap, gt_clicks: ClickSet) -> float:
    """Mean z-scored map value at the clicked pixels.

    ``pmap`` is a ProbabilityMap or any 2D field; it is standardized
    over all pixels with the population std, which makes the score
    invariant under positive affine rescaling.  A constant map has no
    signal and scores 0 by convention.
    """
    values = _map_values(pmap)
    xs, ys = _click_pixels(values.shape, gt_clicks)
    std = values.std()
    if std == 0:
        return 0.0
    z = (values - values.mean()) / std
    return float(z[ys, xs].mean())


def pde(pmap, gt_clicks: ClickSet) -> float:
    """Mean per-pixel map probability at the clicked pixels."""
    values = _map_values(pmap)
    xs, ys = _click_pixels(values.shape, gt_clicks)
    return float(values[ys, xs].mean())


def bootstrap_model_metrics(
    pmap: ProbabilityMap,
    real: ClickSet,
    n_boot: int = 100,
    rng: np.random.Generator | None = None,
) -> dict:
    """Sample-based metrics of a clickability model against real clicks.

    Draws ``n_boot`` simulated click sets from the map (each the size of
    the real set), compares each against the real clicks and averages.
    ``ks_pass_rate`` is the fraction of bootstrap rounds whose KS test
    could not distinguish simulated from real clicks; KS entries are
    None when the real set is too small for the test.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    pl1_vals, wd_vals, ks_stats, ks_passes = [], [], [], []
    run_ks = len(real) >= 3
    for _ in range(n_boot):
        sim = ClickSet(
            points=sample_points(pmap, len(real), rng).astype(np.float64),
            frame=real.frame,
        )
        pl1_vals.append(pl1(sim, real))
        wd_vals.append(wasserstein2d(sim, real))
        if run_ks:
            res = ks2d(sim, real, rng=rng)
            ks_stats.append(res.statistic)
            ks_passes.append(res.passed)
    return {
        "pl1": float(np.mean(pl1_vals)),
        "wd": float(np.mean(wd_vals)),
        "ks_stat": float(np.mean(ks_stats)) if run_ks else None,
        "ks_pass_rate": float(np.mean(ks_passes)) if run_ks else None,
    }
