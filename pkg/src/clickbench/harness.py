"""Multi-round interactive-segmentation evaluation harness.

The harness drives a segmenter (in-process callable or external
process behind the adapter protocol) through up to ``max_clicks``
correction rounds per instance.  Each round derives the current error
region, picks a click through the configured strategy and asks the
segmenter for a refreshed mask.  Per-instance IoU trajectories are
folded into NoC/NoF/IoU-AuC scores and the robustness aggregates
(Sample, delta-SB, delta-GR, delta-HH, NSR).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from . import __version__
from .clicksim import (
    Click,
    ProbabilityMap,
    condition_on_error,
    dt_model,
    load_probability_map,
    partition_groups,
    sample_click,
    sample_points,
    target_region,
    uniform_model,
)
from .imaging import as_mask, iou, load_mask

# "real" replays collected first clicks and is handled by
# first_click_eval rather than the multi-round runner
STRATEGIES = ("baseline", "groups", "full", "real")


@dataclass(frozen=True)
class EvalConfig:
    max_clicks: int = 20
    iou_threshold: float = 0.90
    n_groups: int = 10
    master_seed: int = 0
    sigma: float = 5.0
    diag_fraction: float = 0.01
    strategy: str = "groups"
    connectivity: int = 8
    # ratio-of-dataset-means is the stable default for the delta stats;
    # per-instance averages the per-instance ratios instead
    delta_mode: str = "dataset-means"
    # sample std: mean over instances of per-instance group std, or the
    # std of per-instance means
    std_mode: str = "mean-of-stds"

    def __post_init__(self):
        if self.max_clicks < 1:
            raise ValueError(f"max_clicks must be >= 1, got {self.max_clicks}")
        if not 0 < self.iou_threshold <= 1:
            raise ValueError(f"iou_threshold must be in (0, 1], got {self.iou_threshold}")
        if self.n_groups < 1:
            raise ValueError(f"n_groups must be >= 1, got {self.n_groups}")
        if self.strategy not in STRATEGIES and not _parse_single_group(self.strategy):
            raise ValueError(f"strategy must be one of {STRATEGIES} or 'group:<i>'")
        if self.delta_mode not in ("dataset-means", "per-instance"):
            raise ValueError(f"unknown delta_mode {self.delta_mode!r}")
        if self.std_mode not in ("mean-of-stds", "std-of-means"):
            raise ValueError(f"unknown std_mode {self.std_mode!r}")


def _parse_single_group(strategy: str) -> int | None:
    if strategy.startswith("group:"):
        idx = strategy.split(":", 1)[1]
        if idx.isdigit() and int(idx) >= 1:
            return int(idx)
    return None


@dataclass(frozen=True)
class EvalInstance:
    """One evaluation case: ground truth plus optional source imagery."""

    id: str
    gt: np.ndarray
    image_path: str | None = None
    description: str | None = None

    def __post_init__(self):
        gt = as_mask(self.gt)
        if not gt.any():
            raise ValueError(f"instance {self.id}: ground truth mask is empty")
        object.__setattr__(self, "gt", gt)


def load_instances(entries) -> list:
    """Build EvalInstances from manifest entries (see dataset.load_manifest)."""
    return [
        EvalInstance(
            id=e.id,
            gt=load_mask(e.gt_mask),
            image_path=str(e.image) if e.image else None,
            description=e.description,
        )
        for e in entries
    ]


@dataclass(frozen=True)
class Trajectory:
    """IoU after each click, padded with the last value once converged."""

    ious: np.ndarray
    noc: int
    converged: bool

    @classmethod
    def from_ious(cls, ious, threshold: float, cap: int) -> "Trajectory":
        ious = list(ious)
        if len(ious) > cap:
            raise ValueError(f"{len(ious)} rounds exceed cap {cap}")
        padded = np.array(ious + [ious[-1]] * (cap - len(ious)), dtype=np.float64)
        n = noc_from_ious(padded, threshold, cap)
        return cls(ious=padded, noc=n, converged=bool((padded >= threshold).any()))


def noc_from_ious(ious, threshold: float, cap: int) -> int:
    """First 1-based click count reaching the threshold, else the cap."""
    hits = np.nonzero(np.asarray(ious) >= threshold)[0]
    return int(hits[0]) + 1 if len(hits) else cap


def iou_auc(trajectory: Trajectory) -> float:
    """100 x mean of the per-click IoU values (plain mean of the points)."""
    return float(100.0 * trajectory.ious.mean())


def nof(trajectories) -> int:
    """Number of trajectories that never reached the threshold."""
    return sum(1 for t in trajectories if not t.converged)


# ---------------------------------------------------------------------------
# segmenters


def disk_segmenter(clicks, shape: tuple[int, int], radius: float) -> np.ndarray:
    """Union of disks at positive clicks minus disks at negative clicks.

    ``shape`` is (height, width); a pixel belongs to a disk when its
    center is within ``radius`` (inclusive) of the click.  Negative
    clicks override positives.
    """
    if not clicks:
        raise ValueError("disk_segmenter needs at least one click")
    h, w = shape
    yy, xx = np.ogrid[:h, :w]
    pos = np.zeros((h, w), dtype=bool)
    neg = np.zeros((h, w), dtype=bool)
    r2 = radius * radius
    for c in clicks:
        hit = (xx - c.x) ** 2 + (yy - c.y) ** 2 <= r2
        if c.polarity == "positive":
            pos |= hit
        else:
            neg |= hit
    return pos & ~neg


class OracleSegmenter:
    """Returns the ground truth after any click; collapses every statistic."""

    def __call__(self, instance: EvalInstance, clicks, prev_mask):
        return instance.gt


class EmptySegmenter:
    """Never predicts anything; every trajectory fails."""

    def __call__(self, instance: EvalInstance, clicks, prev_mask):
        return np.zeros(instance.gt.shape, dtype=bool)


class DiskSegmenter:
    """In-process synthetic segmenter painting fixed-radius disks."""

    def __init__(self, radius: float):
        self.radius = radius

    def __call__(self, instance: EvalInstance, clicks, prev_mask):
        return disk_segmenter(clicks, instance.gt.shape, self.radius)


# ---------------------------------------------------------------------------
# click sources

# a click model maps (instance, error mask) to a probability map over pixels
def uniform_click_model(instance: EvalInstance, error) -> ProbabilityMap:
    return uniform_model(error)


def dt_click_model(instance: EvalInstance, error) -> ProbabilityMap:
    return dt_model(error)


class FileMapModel:
    """Per-instance stored clickability maps, re-conditioned per error.

    ``paths`` maps instance id to a stored probability-map file.  Each
    call loads the map (resampled to the mask dims), multiplies it by
    the soft mask of the current error and renormalizes; a map with no
    mass on the error falls back to uniform (see condition_on_error).
    """

    def __init__(self, paths: dict, diag_fraction: float = 0.01):
        self.paths = dict(paths)
        self.diag_fraction = diag_fraction
        self._cache: dict = {}

    def __call__(self, instance: EvalInstance, error) -> ProbabilityMap:
        error = as_mask(error)
        h, w = error.shape
        key = (instance.id, w, h)
        if key not in self._cache:
            self._cache[key] = load_probability_map(
                self.paths[instance.id], target_dims=(w, h)
            )
        return condition_on_error(self._cache[key], error, self.diag_fraction)


class BaselineSource:
    """Deterministic furthest-from-boundary click in the largest error region."""

    def __init__(self, connectivity: int = 8):
        self.connectivity = connectivity

    def propose(self, instance, round_no, pred, gt, rng) -> Click:
        from .clicksim import baseline_click

        return replace(baseline_click(pred, gt, self.connectivity), round=round_no)


class GroupSource:
    """Sample each round's click from one clicking group of the model map.

    Every round the largest error component is chosen exactly like the
    baseline rule (it also fixes the click polarity), the model builds
    a clickability map conditioned on that component, the map is split
    into ``n_groups`` equal-mass groups and a click is drawn from group
    ``group_index``.
    """

    def __init__(self, model, group_index: int, n_groups: int = 10, connectivity: int = 8):
        self.model = model
        self.group_index = group_index
        self.n_groups = n_groups
        self.connectivity = connectivity

    def propose(self, instance, round_no, pred, gt, rng) -> Click:
        region, polarity = target_region(pred, gt, self.connectivity)
        pmap = self.model(instance, region)
        groups = partition_groups(pmap, self.n_groups)
        return sample_click(groups, self.group_index, rng, polarity=polarity, round=round_no)


class FullMapSource:
    """Sample each round's click from the whole conditioned map."""

    def __init__(self, model, connectivity: int = 8):
        self.model = model
        self.connectivity = connectivity

    def propose(self, instance, round_no, pred, gt, rng) -> Click:
        region, polarity = target_region(pred, gt, self.connectivity)
        pmap = self.model(instance, region)
        x, y = sample_points(pmap, 1, rng)[0]
        return Click(x=int(x), y=int(y), polarity=polarity, round=round_no)


# ---------------------------------------------------------------------------
# evaluation loop


def run_instance(segmenter, instance: EvalInstance, click_source, config: EvalConfig,
                 rng_for_round) -> Trajectory:
    """Drive one instance for up to ``max_clicks`` correction rounds.

    ``rng_for_round`` maps a 1-based round number to that round's RNG;
    the harness derives these from (master seed, instance, group,
    round) so results do not depend on scheduling.
    """
    gt = instance.gt
    pred = np.zeros(gt.shape, dtype=bool)
    clicks: list[Click] = []
    ious: list[float] = []
    for round_no in range(1, config.max_clicks + 1):
        click = click_source.propose(
            instance, round_no, pred, gt, rng_for_round(round_no)
        )
        clicks.append(click)
        pred = as_mask(segmenter(instance, clicks, pred))
        if pred.shape != gt.shape:
            raise ValueError(
                f"segmenter returned shape {pred.shape}, expected {gt.shape}"
            )
        score = iou(pred, gt)
        ious.append(score)
        if score >= config.iou_threshold:
            break
    return Trajectory.from_ious(ious, config.iou_threshold, config.max_clicks)


@dataclass
class InstanceResult:
    instance_id: str
    baseline: Trajectory | None = None
    groups: list[Trajectory] = field(default_factory=list)
    full: Trajectory | None = None
    error: str | None = None

    @property
    def group_nocs(self) -> np.ndarray:
        return np.array([t.noc for t in self.groups], dtype=np.float64)

    @property
    def sample_mean_noc(self) -> float | None:
        return float(self.group_nocs.mean()) if self.groups else None

    @property
    def sample_std_noc(self) -> float | None:
        return float(self.group_nocs.std()) if self.groups else None


def _round_rng_factory(master_seed: int, instance_idx: int, stream_id: int):
    def rng_for_round(round_no: int) -> np.random.Generator:
        seq = np.random.SeedSequence((master_seed, instance_idx, stream_id, round_no))
        return np.random.default_rng(seq)

    return rng_for_round


def _evaluate_instance(index: int, instance: EvalInstance, segmenter, model,
                       config: EvalConfig) -> InstanceResult:
    from .adapter import AdapterError

    result = InstanceResult(instance_id=instance.id)
    single_group = _parse_single_group(config.strategy)
    try:
        # stream 0 is the baseline; groups use 1..n; the full map uses n+1
        result.baseline = run_instance(
            segmenter, instance, BaselineSource(config.connectivity), config,
            _round_rng_factory(config.master_seed, index, 0),
        )
        if config.strategy == "groups":
            for g in range(1, config.n_groups + 1):
                source = GroupSource(model, g, config.n_groups, config.connectivity)
                result.groups.append(run_instance(
                    segmenter, instance, source, config,
                    _round_rng_factory(config.master_seed, index, g),
                ))
        elif single_group is not None:
            if single_group > config.n_groups:
                raise ValueError(
                    f"strategy {config.strategy!r} exceeds n_groups={config.n_groups}"
                )
            source = GroupSource(model, single_group, config.n_groups, config.connectivity)
            result.groups.append(run_instance(
                segmenter, instance, source, config,
                _round_rng_factory(config.master_seed, index, single_group),
            ))
        elif config.strategy == "full":
            source = FullMapSource(model, config.connectivity)
            result.full = run_instance(
                segmenter, instance, source, config,
                _round_rng_factory(config.master_seed, index, config.n_groups + 1),
            )
    except AdapterError as exc:
        result.error = str(exc)
    return result


def run_dataset(instances, segmenter, config: EvalConfig, model=None,
                workers: int = 1) -> list:
    """Evaluate every instance; returns InstanceResults in input order.

    ``model`` is required for the group/full strategies (defaults to
    the boundary-distance model).  Instances are processed by a thread
    pool; results are deterministic for a given config regardless of
    ``workers`` because every RNG stream is keyed by (master seed,
    instance index, group, round).
    """
    if config.strategy == "real":
        raise ValueError(
            "the real-click strategy replays collected first clicks; "
            "use first_click_eval with a clicks table"
        )
    if model is None:
        model = dt_click_model
    instances = list(instances)
    if workers <= 1:
        return [
            _evaluate_instance(i, inst, segmenter, model, config)
            for i, inst in enumerate(instances)
        ]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_evaluate_instance, i, inst, segmenter, model, config)
            for i, inst in enumerate(instances)
        ]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# aggregation


@dataclass(frozen=True)
class AggregateReport:
    """Dataset-level scores; None marks undefined values (zero denominators)."""

    n_instances: int
    n_failed: int
    sample_noc_mean: float | None
    sample_noc_std: float | None
    base_noc: float | None
    delta_sb: float | None
    delta_gr: float | None
    delta_hh: float | None
    nof: float | None
    iou_auc: float | None
    nsr_at_1: float | None
    nsr_at_20: float | None

    def to_dict(self) -> dict:
        return {
            "n_instances": self.n_instances,
            "n_failed": self.n_failed,
            "sample_noc_mean": self.sample_noc_mean,
            "sample_noc_std": self.sample_noc_std,
            "base_noc": self.base_noc,
            "delta_sb": self.delta_sb,
            "delta_gr": self.delta_gr,
            "delta_hh": self.delta_hh,
            "nof": self.nof,
            "iou_auc": self.iou_auc,
            "nsr_at_1": self.nsr_at_1,
            "nsr_at_20": self.nsr_at_20,
        }


def _ratio_percent(numer: float, denom: float) -> float | None:
    return None if denom == 0 else 100.0 * numer / denom


def _delta(sample_vals, base_vals, mode: str) -> float | None:
    """Percent increase of sample over base, under either averaging mode."""
    sample_vals = np.asarray(sample_vals, dtype=np.float64)
    base_vals = np.asarray(base_vals, dtype=np.float64)
    if len(sample_vals) == 0:
        return None
    if mode == "dataset-means":
        return _ratio_percent(sample_vals.mean() - base_vals.mean(), base_vals.mean())
    if (base_vals == 0).any():
        return None
    return float((100.0 * (sample_vals - base_vals) / base_vals).mean())


def _nsr(values: np.ndarray) -> float | None:
    mean = values.mean()
    if mean == 0:
        return None
    return float(100.0 * values.std() / mean)


def aggregate(results, config: EvalConfig) -> AggregateReport:
    """Fold instance results into the dataset-level report.

    Sample statistics average per-instance group means (and stds); the
    delta percentages compare dataset means by default (see
    ``EvalConfig.delta_mode``).  delta-HH merges the lower and upper
    halves of the groups into two super-groups before comparing.
    Instances that failed (adapter errors) count toward NoF and are
    excluded from the other statistics.
    """
    results = list(results)
    if not results:
        raise ValueError("no results to aggregate")
    ok = [r for r in results if r.error is None]
    n_failed = len(results) - len(ok)

    base_nocs = np.array([r.baseline.noc for r in ok if r.baseline], dtype=np.float64)
    base_noc = float(base_nocs.mean()) if len(base_nocs) else None

    with_groups = [r for r in ok if r.groups]
    sample_noc_mean = sample_noc_std = None
    delta_sb = delta_gr = delta_hh = None
    nsr_at_1 = nsr_at_20 = None
    if with_groups:
        inst_means = np.array([r.sample_mean_noc for r in with_groups])
        inst_stds = np.array([r.sample_std_noc for r in with_groups])
        sample_noc_mean = float(inst_means.mean())
        if config.std_mode == "mean-of-stds":
            sample_noc_std = float(inst_stds.mean())
        else:
            sample_noc_std = float(inst_means.std())
        if all(r.baseline for r in with_groups):
            delta_sb = _delta(
                inst_means,
                [r.baseline.noc for r in with_groups],
                config.delta_mode,
            )
        full_groups = [r for r in with_groups if len(r.groups) == config.n_groups]
        if full_groups and config.n_groups >= 2:
            g1 = np.array([r.groups[0].noc for r in full_groups], dtype=np.float64)
            gn = np.array([r.groups[-1].noc for r in full_groups], dtype=np.float64)
            delta_gr = _delta(g1, gn, config.delta_mode)
            if config.n_groups % 2 == 0:
                half = config.n_groups // 2
                low = np.array([r.group_nocs[:half].mean() for r in full_groups])
                high = np.array([r.group_nocs[half:].mean() for r in full_groups])
                delta_hh = _delta(low, high, config.delta_mode)
            nsrs_1, nsrs_20 = [], []
            for r in full_groups:
                iou_at_1 = np.array([t.ious[0] for t in r.groups])
                iou_at_end = np.array([t.ious[-1] for t in r.groups])
                v1 = _nsr(iou_at_1)
                v20 = _nsr(iou_at_end)
                if v1 is not None:
                    nsrs_1.append(v1)
                if v20 is not None:
                    nsrs_20.append(v20)
            nsr_at_1 = float(np.mean(nsrs_1)) if nsrs_1 else None
            nsr_at_20 = float(np.mean(nsrs_20)) if nsrs_20 else None

    # NoF and IoU-AuC follow the evaluated strategy's trajectories;
    # failed instances count fully toward NoF
    strategy_trajs: list[list[Trajectory]] = []
    for r in ok:
        if r.groups:
            strategy_trajs.append(r.groups)
        elif r.full:
            strategy_trajs.append([r.full])
        elif r.baseline:
            strategy_trajs.append([r.baseline])
    nof_val: float | None = None
    auc_val: float | None = None
    if strategy_trajs:
        nof_val = float(
            np.mean([[0.0 if t.converged else 1.0 for t in trajs]
                     for trajs in strategy_trajs], axis=1).sum()
        ) + n_failed
        auc_val = float(np.mean([
            np.mean([iou_auc(t) for t in trajs]) for trajs in strategy_trajs
        ]))
    elif n_failed:
        nof_val = float(n_failed)

    return AggregateReport(
        n_instances=len(results),
        n_failed=n_failed,
        sample_noc_mean=sample_noc_mean,
        sample_noc_std=sample_noc_std,
        base_noc=base_noc,
        delta_sb=delta_sb,
        delta_gr=delta_gr,
        delta_hh=delta_hh,
        nof=nof_val,
        iou_auc=auc_val,
        nsr_at_1=nsr_at_1,
        nsr_at_20=nsr_at_20,
    )


# ---------------------------------------------------------------------------
# correlations and first-click evaluation


@dataclass(frozen=True)
class CorrelationReport:
    """Pairwise Pearson/Spearman matrices over a methods x metrics table."""

    columns: list
    pearson: list
    spearman: list

    def to_dict(self) -> dict:
        return {
            "columns": list(self.columns),
            "pearson": self.pearson,
            "spearman": self.spearman,
        }


def correlation_report(table, columns=None) -> CorrelationReport:
    """Pearson and Spearman correlations between every pair of columns.

    ``table`` is (n_methods, n_metrics) with n_methods >= 3.  Pairs
    involving a constant column are undefined and reported as None.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2 or table.shape[0] < 3:
        raise ValueError("correlation table needs >= 3 rows")
    n_cols = table.shape[1]
    columns = list(columns) if columns else [f"col{i}" for i in range(n_cols)]
    if len(columns) != n_cols:
        raise ValueError("column name count mismatch")
    constant = [np.ptp(table[:, j]) == 0 for j in range(n_cols)]
    pear = [[None] * n_cols for _ in range(n_cols)]
    spear = [[None] * n_cols for _ in range(n_cols)]
    for i in range(n_cols):
        for j in range(n_cols):
            if constant[i] or constant[j]:
                continue
            pear[i][j] = float(stats.pearsonr(table[:, i], table[:, j])[0])
            spear[i][j] = float(stats.spearmanr(table[:, i], table[:, j])[0])
    return CorrelationReport(columns=columns, pearson=pear, spearman=spear)


@dataclass(frozen=True)
class FirstClickStats:
    mean_iou: float
    std_iou: float
    nsr: float | None


def first_click_eval(segmenter, instances, real_clicks: dict) -> dict:
    """Evaluate one-click segmentation quality over real first clicks.

    ``real_clicks`` maps instance id to its list of first-round clicks
    (in mask coordinates).  For every click the segmenter runs once
    from scratch; the per-instance report carries mean IoU, population
    std and NSR = 100 * std / mean (None when the mean is 0).
    """
    out = {}
    for instance in instances:
        clicks = real_clicks.get(instance.id)
        if not clicks:
            continue
        scores = []
        for click in clicks:
            pred = as_mask(segmenter(instance, [click], None))
            scores.append(iou(pred, instance.gt))
        scores = np.array(scores, dtype=np.float64)
        mean, std = float(scores.mean()), float(scores.std())
        out[instance.id] = FirstClickStats(
            mean_iou=mean,
            std_iou=std,
            nsr=None if mean == 0 else 100.0 * std / mean,
        )
    return out


# ---------------------------------------------------------------------------
# report serialization


def report_json(agg: AggregateReport, config: EvalConfig, extra: dict | None = None) -> str:
    """Deterministic JSON report embedding the resolved config and version."""
    doc = {
        "version": __version__,
        "config": {
            "max_clicks": config.max_clicks,
            "iou_threshold": config.iou_threshold,
            "n_groups": config.n_groups,
            "master_seed": config.master_seed,
            "sigma": config.sigma,
            "diag_fraction": config.diag_fraction,
            "strategy": config.strategy,
            "connectivity": config.connectivity,
            "delta_mode": config.delta_mode,
            "std_mode": config.std_mode,
        },
        "aggregate": agg.to_dict(),
    }
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def instance_results_csv(results) -> str:
    """Per-instance CSV: id, baseline NoC, sample stats, per-group NoCs."""
    lines = ["instance_id,base_noc,sample_mean_noc,sample_std_noc,group_nocs,error"]
    for r in results:
        group_nocs = ";".join(str(t.noc) for t in r.groups)
        lines.append(",".join([
            r.instance_id,
            str(r.baseline.noc) if r.baseline else "",
            f"{r.sample_mean_noc:.6f}" if r.groups else "",
            f"{r.sample_std_noc:.6f}" if r.groups else "",
            group_nocs,
            r.error or "",
        ]))
    return "\n".join(lines) + "\n"


def curves_csv(results, config: EvalConfig) -> str:
    """Mean IoU per click count per strategy, for IoU-vs-clicks curves."""
    series: dict[str, np.ndarray] = {}
    base = [r.baseline.ious for r in results if r.error is None and r.baseline]
    if base:
        series["baseline"] = np.mean(base, axis=0)
    single = _parse_single_group(config.strategy)
    group_results = [r for r in results if r.error is None and r.groups]
    if group_results and config.strategy == "groups":
        for g in range(config.n_groups):
            series[f"group{g + 1}"] = np.mean(
                [r.groups[g].ious for r in group_results if len(r.groups) > g], axis=0
            )
    elif group_results and single is not None:
        series[f"group{single}"] = np.mean([r.groups[0].ious for r in group_results], axis=0)
    full = [r.full.ious for r in results if r.error is None and r.full]
    if full:
        series["full"] = np.mean(full, axis=0)
    names = list(series)
    lines = ["clicks," + ",".join(names)]
    for k in range(config.max_clicks):
        row = [str(k + 1)] + [f"{series[name][k]:.6f}" for name in names]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
