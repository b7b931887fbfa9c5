from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from clickbench.adapter import AdapterError
from clickbench.clicksim import Click
from clickbench.harness import (
    AggregateReport,
    BaselineSource,
    DiskSegmenter,
    EmptySegmenter,
    EvalConfig,
    EvalInstance,
    FileMapModel,
    FullMapSource,
    GroupSource,
    InstanceResult,
    OracleSegmenter,
    Trajectory,
    aggregate,
    correlation_report,
    curves_csv,
    disk_segmenter,
    dt_click_model,
    first_click_eval,
    instance_results_csv,
    iou_auc,
    noc_from_ious,
    nof,
    report_json,
    run_dataset,
    run_instance,
    uniform_click_model,
)

from oracles import rasterized_disk


def disk_mask(cx, cy, r, shape=(41, 41)):
    h, w = shape
    yy, xx = np.ogrid[:h, :w]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def disk_instances(n, shape=(41, 41), r=12):
    rng = np.random.default_rng(100)
    out = []
    for i in range(n):
        cx = int(rng.integers(r + 1, shape[1] - r - 1))
        cy = int(rng.integers(r + 1, shape[0] - r - 1))
        out.append(EvalInstance(id=f"disk{i}", gt=disk_mask(cx, cy, r, shape)))
    return out


def trajectory_with_noc(noc_value, cap=20, threshold=0.9):
    ious = [0.0] * (noc_value - 1) + [1.0]
    return Trajectory.from_ious(ious, threshold, cap)


class TestTrajectory:
    def test_padding_and_noc(self):
        t = Trajectory.from_ious([0.3, 0.95], threshold=0.9, cap=5)
        assert_array_equal(t.ious, [0.3, 0.95, 0.95, 0.95, 0.95])
        assert t.noc == 2
        assert t.converged

    def test_never_converged(self):
        t = Trajectory.from_ious([0.1] * 20, threshold=0.9, cap=20)
        assert t.noc == 20
        assert not t.converged

    def test_noc_monotone_in_threshold(self):
        rng = np.random.default_rng(19)
        for trial in range(20):
            ious = np.sort(rng.random(20))
            lo = noc_from_ious(ious, 0.5, 20)
            hi = noc_from_ious(ious, 0.9, 20)
            assert lo <= hi

    def test_too_many_rounds_rejected(self):
        with pytest.raises(ValueError):
            Trajectory.from_ious([1.0] * 6, threshold=0.9, cap=5)


class TestScores:
    def test_iou_auc_all_ones(self):
        assert iou_auc(Trajectory.from_ious([1.0], 0.9, 20)) == 100.0

    def test_iou_auc_all_zero(self):
        t = Trajectory.from_ious([0.0] * 20, 0.9, 20)
        assert iou_auc(t) == 0.0
        assert nof([t]) == 1

    def test_iou_auc_linear_ramp(self):
        t = Trajectory.from_ious(np.linspace(0.05, 1.0, 20), 0.99999, 20)
        assert iou_auc(t) == pytest.approx(52.5, abs=1e-9)


class TestDiskSegmenter:
    def test_single_disk_matches_rasterization_oracle(self):
        got = disk_segmenter([Click(x=20, y=20)], (41, 41), 12)
        want = rasterized_disk(20, 20, 12, (41, 41))
        assert_array_equal(got, want)
        assert got.sum() == want.sum() >= 441

    def test_negative_click_overrides(self):
        clicks = [Click(x=10, y=10), Click(x=10, y=10, polarity="negative")]
        assert not disk_segmenter(clicks, (21, 21), 5).any()

    def test_two_far_disks_are_disjoint_components(self):
        from clickbench.imaging import connected_components

        clicks = [Click(x=8, y=8), Click(x=32, y=32)]
        mask = disk_segmenter(clicks, (41, 41), 5)
        assert connected_components(mask).count == 2

    def test_needs_a_click(self):
        with pytest.raises(ValueError):
            disk_segmenter([], (5, 5), 2)


class TestRunInstance:
    def make_rng_factory(self):
        return lambda r: np.random.default_rng((0, r))

    def test_oracle_converges_immediately(self):
        inst = disk_instances(1)[0]
        config = EvalConfig(strategy="baseline")
        t = run_instance(OracleSegmenter(), inst, BaselineSource(), config,
                         self.make_rng_factory())
        assert t.noc == 1
        assert t.converged
        assert (t.ious == 1.0).all()

    def test_empty_segmenter_never_converges(self):
        inst = disk_instances(1)[0]
        config = EvalConfig(strategy="baseline")
        t = run_instance(EmptySegmenter(), inst, BaselineSource(), config,
                         self.make_rng_factory())
        assert t.noc == 20
        assert not t.converged

    def test_disk_fixture_noc_one(self):
        # gt is the very disk the segmenter paints around the center click
        inst = EvalInstance(id="d", gt=disk_mask(20, 20, 12))
        config = EvalConfig(strategy="baseline")
        t = run_instance(DiskSegmenter(12), inst, BaselineSource(), config,
                         self.make_rng_factory())
        assert t.noc == 1
        assert t.ious[0] == 1.0

    def test_group_clicks_stay_inside_current_error(self):
        # with an inert segmenter the error region is always the gt disk;
        # uniform and dt maps are supported exactly on that region
        inst = EvalInstance(id="d", gt=disk_mask(20, 20, 10))
        clicks_seen = []

        class Recorder:
            def __call__(self, instance, clicks, prev):
                clicks_seen.append(clicks[-1])
                return np.zeros(instance.gt.shape, bool)

        config = EvalConfig(strategy="groups", max_clicks=8)
        source = GroupSource(uniform_click_model, group_index=3)
        run_instance(Recorder(), inst, source, config, self.make_rng_factory())
        assert len(clicks_seen) == 8
        for c in clicks_seen:
            assert inst.gt[c.y, c.x]
            assert c.polarity == "positive"

    def test_full_map_source_samples_inside_region(self):
        inst = EvalInstance(id="d", gt=disk_mask(20, 20, 10))
        config = EvalConfig(strategy="full", max_clicks=4)
        source = FullMapSource(dt_click_model)
        t = run_instance(EmptySegmenter(), inst, source, config, self.make_rng_factory())
        assert t.noc == 4

    def test_polarity_flips_on_false_positive_error(self):
        # prediction covers everything; the only error is false-positive
        inst = EvalInstance(id="d", gt=disk_mask(20, 20, 6))

        class OvershootThenOracle:
            def __call__(self, instance, clicks, prev):
                if len(clicks) == 1:
                    return np.ones(instance.gt.shape, bool)
                return instance.gt

        clicks_log = []

        class LoggingBaseline(BaselineSource):
            def propose(self, instance, round_no, pred, gt, rng):
                c = super().propose(instance, round_no, pred, gt, rng)
                clicks_log.append(c)
                return c

        config = EvalConfig(strategy="baseline")
        t = run_instance(OvershootThenOracle(), inst, LoggingBaseline(), config,
                         self.make_rng_factory())
        assert t.noc == 2
        assert clicks_log[0].polarity == "positive"
        assert clicks_log[1].polarity == "negative"

    def test_wrong_shape_from_segmenter(self):
        inst = disk_instances(1)[0]

        class BadShape:
            def __call__(self, instance, clicks, prev):
                return np.zeros((3, 3), bool)

        with pytest.raises(ValueError):
            run_instance(BadShape(), inst, BaselineSource(),
                         EvalConfig(strategy="baseline"), self.make_rng_factory())


class TestRunDataset:
    def test_oracle_collapses_every_statistic(self):
        instances = disk_instances(20)
        config = EvalConfig(strategy="groups")
        results = run_dataset(instances, OracleSegmenter(), config)
        agg = aggregate(results, config)
        assert agg.sample_noc_mean == 1.0
        assert agg.sample_noc_std == 0.0
        assert agg.base_noc == 1.0
        assert agg.delta_sb == 0.0
        assert agg.delta_gr == 0.0
        assert agg.delta_hh == 0.0
        assert agg.nof == 0.0
        assert agg.iou_auc == 100.0
        assert agg.nsr_at_1 == 0.0
        assert agg.nsr_at_20 == 0.0

    def test_worker_counts_do_not_change_report(self):
        instances = disk_instances(6)
        config = EvalConfig(strategy="groups", master_seed=7, max_clicks=6)
        seg = DiskSegmenter(12)
        r1 = run_dataset(instances, seg, config, workers=1)
        r3 = run_dataset(instances, seg, config, workers=3)
        j1 = report_json(aggregate(r1, config), config)
        j3 = report_json(aggregate(r3, config), config)
        assert j1 == j3
        assert instance_results_csv(r1) == instance_results_csv(r3)

    def test_repeat_run_byte_identical(self):
        instances = disk_instances(4)
        config = EvalConfig(strategy="groups", master_seed=3, max_clicks=5)
        seg = DiskSegmenter(10)
        j_a = report_json(aggregate(run_dataset(instances, seg, config), config), config)
        j_b = report_json(aggregate(run_dataset(instances, seg, config), config), config)
        assert j_a == j_b

    def test_different_seeds_differ(self):
        instances = disk_instances(4)
        seg = DiskSegmenter(8)
        r_a = run_dataset(instances, seg, EvalConfig(strategy="groups", master_seed=1, max_clicks=5))
        r_b = run_dataset(instances, seg, EvalConfig(strategy="groups", master_seed=2, max_clicks=5))
        a_clicks = [t.noc for r in r_a for t in r.groups]
        b_clicks = [t.noc for r in r_b for t in r.groups]
        assert a_clicks != b_clicks or any(
            not np.array_equal(x.ious, y.ious)
            for rx, ry in zip(r_a, r_b) for x, y in zip(rx.groups, ry.groups)
        )

    def test_adapter_failure_marks_instance(self):
        instances = disk_instances(3)

        class FlakySegmenter:
            def __call__(self, instance, clicks, prev):
                if instance.id == "disk1":
                    raise AdapterError("segmenter fell over")
                return instance.gt

        config = EvalConfig(strategy="baseline")
        results = run_dataset(instances, FlakySegmenter(), config)
        assert results[1].error == "segmenter fell over"
        agg = aggregate(results, config)
        assert agg.n_failed == 1
        assert agg.nof == 1.0
        assert agg.base_noc == 1.0

    def test_real_strategy_is_not_runnable_here(self):
        # the config value exists for report round-trips; replay happens
        # in first_click_eval
        config = EvalConfig(strategy="real")
        with pytest.raises(ValueError, match="first_click_eval"):
            run_dataset(disk_instances(1), OracleSegmenter(), config)

    def test_single_group_strategy(self):
        instances = disk_instances(2)
        config = EvalConfig(strategy="group:10", max_clicks=5)
        results = run_dataset(instances, DiskSegmenter(12), config)
        for r in results:
            assert len(r.groups) == 1
            assert r.baseline is not None


class TestAggregateArithmetic:
    def build_ramp_results(self):
        # 150 instances; group means form the ramp 8, 8-1/3, ..., 5 and
        # baseline NoCs average exactly 5.94 (141 sixes, 9 fives)
        results = []
        for i in range(150):
            groups = []
            for j in range(10):
                mean = Fraction(8) - Fraction(j, 3)
                base = int(mean)  # 8, 7, 7, 7, 6, 6, 6, 5, 5, 5
                frac = mean - base
                value = base + (1 if Fraction(i, 150) < frac else 0)
                groups.append(trajectory_with_noc(value))
            baseline = trajectory_with_noc(6 if i < 141 else 5)
            results.append(InstanceResult(
                instance_id=f"i{i}", baseline=baseline, groups=groups,
            ))
        return results

    def test_ramp_fixture_hand_arithmetic(self):
        results = self.build_ramp_results()
        config = EvalConfig(strategy="groups")
        agg = aggregate(results, config)
        assert agg.base_noc == pytest.approx(5.94, abs=1e-12)
        assert agg.sample_noc_mean == pytest.approx(6.5, abs=1e-12)
        # hand values: dGR = 100*(8-5)/5; dSB = 100*(6.5-5.94)/5.94;
        # dHH = 100*((22/3)-(17/3))/(17/3)
        assert agg.delta_gr == pytest.approx(60.0, abs=1e-12)
        assert agg.delta_sb == pytest.approx(float(Fraction(56, 594) * 100), abs=1e-12)
        assert agg.delta_hh == pytest.approx(float(Fraction(500, 17)), abs=1e-12)

    def test_per_instance_mode_differs(self):
        results = self.build_ramp_results()
        config = EvalConfig(strategy="groups", delta_mode="per-instance")
        agg = aggregate(results, config)
        by_hand = np.mean([
            100.0 * (r.sample_mean_noc - r.baseline.noc) / r.baseline.noc
            for r in results
        ])
        assert agg.delta_sb == pytest.approx(by_hand, abs=1e-12)
        assert agg.delta_sb != pytest.approx(float(Fraction(56, 594) * 100), abs=1e-3)

    def test_two_group_toy(self):
        config = EvalConfig(strategy="groups", n_groups=2)
        results = [InstanceResult(
            instance_id="t",
            baseline=trajectory_with_noc(5),
            groups=[trajectory_with_noc(8), trajectory_with_noc(5)],
        )]
        agg = aggregate(results, config)
        assert agg.delta_gr == pytest.approx(60.0)

    def test_zero_denominator_reports_none(self):
        # all-zero final IoUs make NSR undefined, never infinite
        t = Trajectory.from_ious([0.0] * 20, 0.9, 20)
        results = [InstanceResult(instance_id="z", baseline=t, groups=[t] * 10)]
        agg = aggregate(results, EvalConfig(strategy="groups"))
        assert agg.nsr_at_1 is None
        assert agg.nsr_at_20 is None

    def test_odd_group_count_has_no_half_split(self):
        results = [InstanceResult(
            instance_id="z",
            baseline=trajectory_with_noc(3),
            groups=[trajectory_with_noc(k) for k in (2, 3, 4)],
        )]
        agg = aggregate(results, EvalConfig(strategy="groups", n_groups=3))
        assert agg.delta_hh is None
        assert agg.delta_gr == pytest.approx(100.0 * (2 - 4) / 4)

    def test_delta_gr_defined_for_failed_runs(self):
        t = Trajectory.from_ious([0.0] * 20, 0.9, 20)
        results = [InstanceResult(instance_id="z", baseline=t, groups=[t] * 10)]
        agg = aggregate(results, EvalConfig(strategy="groups"))
        assert agg.delta_gr == 0.0
        assert agg.delta_hh == 0.0

    def test_std_mode_flag(self):
        results = [
            InstanceResult(
                instance_id="a",
                baseline=trajectory_with_noc(2),
                groups=[trajectory_with_noc(2), trajectory_with_noc(4)],
            ),
            InstanceResult(
                instance_id="b",
                baseline=trajectory_with_noc(4),
                groups=[trajectory_with_noc(6), trajectory_with_noc(8)],
            ),
        ]
        mean_of_stds = aggregate(results, EvalConfig(strategy="groups", n_groups=2))
        assert mean_of_stds.sample_noc_std == pytest.approx(1.0)
        std_of_means = aggregate(
            results, EvalConfig(strategy="groups", n_groups=2, std_mode="std-of-means")
        )
        assert std_of_means.sample_noc_std == pytest.approx(2.0)  # means 3 and 7

    def test_sample_mean_within_group_range(self):
        rng = np.random.default_rng(23)
        for r in self.build_ramp_results()[:20]:
            nocs = r.group_nocs
            assert nocs.min() <= r.sample_mean_noc <= nocs.max()

    def test_empty_results_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], EvalConfig())


class TestCorrelationReport:
    def test_self_and_negation(self):
        col = np.array([1.0, 3.0, 2.0, 5.0])
        table = np.column_stack([col, -col])
        rep = correlation_report(table, columns=["m", "neg"])
        assert rep.pearson[0][0] == pytest.approx(1.0)
        assert rep.spearman[0][0] == pytest.approx(1.0)
        assert rep.pearson[0][1] == pytest.approx(-1.0)
        assert rep.spearman[0][1] == pytest.approx(-1.0)

    def test_constant_column_is_null(self):
        table = np.column_stack([np.arange(4.0), np.full(4, 2.0)])
        rep = correlation_report(table)
        assert rep.pearson[0][1] is None
        assert rep.spearman[1][0] is None
        assert rep.pearson[0][0] is not None

    def test_matches_direct_formula_oracle(self):
        rng = np.random.default_rng(29)
        table = rng.random((10, 3))
        rep = correlation_report(table)
        for i in range(3):
            for j in range(3):
                x, y = table[:, i], table[:, j]
                pear = np.corrcoef(x, y)[0, 1]
                rx = np.argsort(np.argsort(x)).astype(float)
                ry = np.argsort(np.argsort(y)).astype(float)
                spear = np.corrcoef(rx, ry)[0, 1]
                assert rep.pearson[i][j] == pytest.approx(pear, abs=1e-12)
                assert rep.spearman[i][j] == pytest.approx(spear, abs=1e-12)

    def test_needs_three_rows(self):
        with pytest.raises(ValueError):
            correlation_report(np.ones((2, 2)))


class TestFirstClickEval:
    def test_click_insensitive_segmenter_has_zero_nsr(self):
        inst = EvalInstance(id="a", gt=disk_mask(20, 20, 8))
        stats = first_click_eval(
            OracleSegmenter(), [inst], {"a": [Click(x=20, y=20), Click(x=25, y=20)]}
        )
        assert stats["a"].std_iou == 0.0
        assert stats["a"].nsr == 0.0

    def test_hand_arithmetic(self):
        gt = np.zeros((5, 10), bool)
        gt[0, :10] = True  # 10 pixels

        class TwoLevel:
            def __call__(self, instance, clicks, prev):
                pred = np.zeros_like(instance.gt)
                n = 8 if clicks[0].x == 0 else 6
                pred[0, :n] = True
                return pred

        inst = EvalInstance(id="a", gt=gt)
        stats = first_click_eval(TwoLevel(), [inst], {"a": [Click(x=0, y=0), Click(x=1, y=0)]})
        assert stats["a"].mean_iou == pytest.approx(0.7)
        assert stats["a"].nsr == pytest.approx(100 * 0.1 / 0.7)

    def test_instances_without_clicks_skipped(self):
        inst = disk_instances(1)[0]
        assert first_click_eval(OracleSegmenter(), [inst], {}) == {}


class TestFileMapModel:
    def test_loads_conditions_and_caches(self, tmp_path):
        from clickbench.clicksim import save_probability_map, uniform_model

        inst = EvalInstance(id="d", gt=disk_mask(10, 10, 6, (21, 21)))
        pm = uniform_model(np.ones((21, 21), bool))
        path = tmp_path / "d.bin"
        save_probability_map(pm, path)
        model = FileMapModel({"d": path})
        out = model(inst, inst.gt)
        assert out.probs.sum() == pytest.approx(1.0)
        assert out.probs[10, 10] > 0
        assert (inst.id, 21, 21) in model._cache
        with pytest.raises(KeyError):
            model(EvalInstance(id="missing", gt=inst.gt), inst.gt)


class TestReportOutputs:
    def test_report_json_embeds_config_and_version(self):
        import json

        from clickbench import __version__

        config = EvalConfig(strategy="baseline", master_seed=5)
        agg = AggregateReport(
            n_instances=1, n_failed=0, sample_noc_mean=None, sample_noc_std=None,
            base_noc=1.0, delta_sb=None, delta_gr=None, delta_hh=None,
            nof=0.0, iou_auc=100.0, nsr_at_1=None, nsr_at_20=None,
        )
        doc = json.loads(report_json(agg, config))
        assert doc["version"] == __version__
        assert doc["config"]["master_seed"] == 5
        assert doc["aggregate"]["base_noc"] == 1.0
        assert doc["aggregate"]["delta_sb"] is None

    def test_curves_csv_flat_for_oracle(self):
        instances = disk_instances(3)
        config = EvalConfig(strategy="groups", max_clicks=4)
        results = run_dataset(instances, OracleSegmenter(), config)
        text = curves_csv(results, config)
        lines = text.strip().split("\n")
        assert lines[0].startswith("clicks,baseline,group1")
        assert len(lines) == 5
        assert all(v == "1.000000" for v in lines[1].split(",")[1:])
