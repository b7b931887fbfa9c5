"""Command line front end.

Subcommands:

    bench run         evaluate a segmenter over a manifest
    maps build        fit clickability maps from collected clicks
    metrics compare   PL1/WD/KS table between two click CSVs
    report plot       SVG curve plot from a benchmark run directory
    collect serve     start the click-collection HTTP service
    dataset validate  strict-parse a clicks CSV and report counts

Configuration comes from an optional JSON file (flat keys mirroring
EvalConfig) overridden by flags; the fully resolved config is written
next to every benchmark report.  Exit codes: 0 success, 2 usage error,
3 input format error, 4 adapter failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .adapter import AdapterError, AdapterSegmenter
from .clicksim import (
    Click,
    DegenerateMapError,
    MapFormatError,
    build_clickability_map,
    save_probability_map,
)
from .dataset import (
    ClicksFormatError,
    ManifestError,
    clicks_by_instance,
    load_manifest,
    mask_distance_field,
    parse_clicks_csv,
    rescale_point,
    validate_click,
)
from .harness import (
    DiskSegmenter,
    EmptySegmenter,
    EvalConfig,
    FileMapModel,
    OracleSegmenter,
    aggregate,
    curves_csv,
    first_click_eval,
    instance_results_csv,
    load_instances,
    report_json,
    run_dataset,
)
from .imaging import load_mask
from .metrics import ClickSet, frame_from_mask, ks2d, pl1, wasserstein2d

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_ADAPTER = 4


class ConfigError(ValueError):
    """Malformed configuration file (an input, not a usage, problem)."""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clickbench",
        description="Benchmark interactive segmenters under simulated user clicks.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    top = parser.add_subparsers(dest="command", required=True)

    bench = top.add_parser("bench", help="benchmark runs").add_subparsers(
        dest="subcommand", required=True
    )
    run = bench.add_parser("run", help="evaluate a segmenter over a manifest")
    run.add_argument("--manifest", required=True, help="dataset manifest JSON")
    run.add_argument("--config", help="JSON config with EvalConfig keys")
    run.add_argument("--seed", type=int, help="override master_seed")
    run.add_argument(
        "--strategy", choices=("baseline", "groups", "full", "real"),
        help="override click strategy",
    )
    run.add_argument("--groups", type=int, help="override n_groups")
    run.add_argument("--sigma", type=float, help="override map sigma")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--adapter", help="external segmenter command")
    run.add_argument(
        "--segmenter", help="built-in segmenter: oracle, empty or disk:<radius>"
    )
    run.add_argument("--maps", help="directory of per-instance clickability maps")
    run.add_argument("--clicks", help="clicks CSV (required for --strategy real)")
    run.add_argument("--out", required=True, help="output directory")
    run.set_defaults(func=cmd_bench_run)

    maps = top.add_parser("maps", help="clickability maps").add_subparsers(
        dest="subcommand", required=True
    )
    build = maps.add_parser("build", help="fit maps from collected clicks")
    build.add_argument("--clicks", required=True)
    build.add_argument("--manifest", required=True)
    build.add_argument("--sigma", type=float, default=5.0)
    build.add_argument("--device", choices=("pc", "mobile"))
    build.add_argument("--out", required=True, help="output directory")
    build.set_defaults(func=cmd_maps_build)

    metrics = top.add_parser("metrics", help="click-set metrics").add_subparsers(
        dest="subcommand", required=True
    )
    compare = metrics.add_parser("compare", help="PL1/WD/KS between two click CSVs")
    compare.add_argument("--set-a", required=True)
    compare.add_argument("--set-b", required=True)
    compare.add_argument("--manifest", required=True)
    compare.add_argument("--out", help="output CSV (default stdout)")
    compare.set_defaults(func=cmd_metrics_compare)

    report = top.add_parser("report", help="report artifacts").add_subparsers(
        dest="subcommand", required=True
    )
    plot = report.add_parser("plot", help="SVG IoU-vs-clicks curves")
    plot.add_argument("--run", required=True, help="bench run output directory")
    plot.add_argument("--out", help="SVG path (default <run>/plot.svg)")
    plot.set_defaults(func=cmd_report_plot)

    collect = top.add_parser("collect", help="click collection").add_subparsers(
        dest="subcommand", required=True
    )
    serve = collect.add_parser("serve", help="run the collection HTTP service")
    serve.add_argument("--manifest", required=True)
    serve.add_argument(
        "--mode",
        default="cutout",
        choices=("text", "cutout", "shifted_cutout", "silhouette", "highlight"),
    )
    serve.add_argument("--dataset-name", default="collected")
    serve.add_argument("--journal", help="append-only click journal CSV")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.set_defaults(func=cmd_collect_serve)

    dataset = top.add_parser("dataset", help="dataset utilities").add_subparsers(
        dest="subcommand", required=True
    )
    validate = dataset.add_parser("validate", help="strict-parse a clicks CSV")
    validate.add_argument("--clicks", required=True)
    validate.add_argument("--manifest", help="check clicks against object masks")
    validate.set_defaults(func=cmd_dataset_validate)

    return parser


def resolve_config(args) -> EvalConfig:
    """Defaults, then config-file keys, then explicit flags."""
    values = {}
    if getattr(args, "config", None):
        try:
            doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        unknown = set(doc) - set(EvalConfig.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"{args.config}: unknown config keys {sorted(unknown)}")
        # JSON can hold any type; check against the field annotations so
        # a bad value fails as a format error, not deep in validation
        for key, value in doc.items():
            expected = EvalConfig.__dataclass_fields__[key].type
            ok = (
                expected == "int"
                and isinstance(value, int)
                and not isinstance(value, bool)
                or expected == "float"
                and isinstance(value, (int, float))
                and not isinstance(value, bool)
                or expected == "str"
                and isinstance(value, str)
            )
            if not ok:
                raise ConfigError(
                    f"{args.config}: {key} must be {expected}, got {value!r}"
                )
        values.update(doc)
    for flag, key in (
        ("seed", "master_seed"),
        ("strategy", "strategy"),
        ("groups", "n_groups"),
        ("sigma", "sigma"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            values[key] = value
    return EvalConfig(**values)


def resolve_segmenter(args):
    if getattr(args, "adapter", None):
        segmenter = AdapterSegmenter(args.adapter)
        segmenter.probe()
        return segmenter
    name = getattr(args, "segmenter", None) or ""
    if name == "oracle":
        return OracleSegmenter()
    if name == "empty":
        return EmptySegmenter()
    if name.startswith("disk:"):
        try:
            radius = float(name.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad disk radius in {name!r}") from None
        return DiskSegmenter(radius)
    raise ValueError("pass --adapter <command> or --segmenter oracle|empty|disk:<radius>")


def _click_lookup(grouped: dict) -> dict:
    """Index click groups by full_stem and, when unique, by its basename."""
    lookup = dict(grouped)
    suffixes: dict[str, list] = {}
    for stem, rows in grouped.items():
        base = stem.rsplit("/", 1)[-1]
        if base != stem:
            suffixes.setdefault(base, []).append(rows)
    for base, groups in suffixes.items():
        if base not in lookup and len(groups) == 1:
            lookup[base] = groups[0]
    return lookup


def _rescaled_valid_points(rows, mask, diag_fraction: float) -> list[tuple[int, int]]:
    h, w = mask.shape
    dist = mask_distance_field(mask)
    points = []
    for r in rows:
        x, y = rescale_point(r.x, r.y, (r.w, r.h), (w, h))
        if validate_click((x, y), mask, diag_fraction, dist_field=dist):
            points.append((x, y))
    return points


def config_json(config: EvalConfig) -> str:
    doc = {"version": __version__, **asdict(config)}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def cmd_bench_run(args) -> int:
    config = resolve_config(args)
    instances = load_instances(load_manifest(args.manifest))
    if config.strategy == "real" and not args.clicks:
        raise ValueError("--strategy real needs --clicks with collected first clicks")
    segmenter = resolve_segmenter(args)
    try:
        out = Path(args.out)
        if config.strategy == "real":
            stats = _run_real(args, config, instances, segmenter, out)
            print(f"evaluated real clicks on {stats} instances -> {out}")
            return EXIT_OK
        model = None
        if args.maps:
            model = FileMapModel(_map_paths(Path(args.maps), instances))
        results = run_dataset(
            instances, segmenter, config, model=model, workers=args.workers
        )
        agg = aggregate(results, config)
        out.mkdir(parents=True, exist_ok=True)
        (out / "aggregate.json").write_text(report_json(agg, config), encoding="utf-8")
        (out / "instances.csv").write_text(instance_results_csv(results), encoding="utf-8")
        (out / "curves.csv").write_text(curves_csv(results, config), encoding="utf-8")
        (out / "config.json").write_text(config_json(config), encoding="utf-8")
        print(f"evaluated {agg.n_instances} instances ({agg.n_failed} failed) -> {out}")
        return EXIT_OK
    finally:
        if hasattr(segmenter, "close"):
            segmenter.close()


def _map_paths(maps_dir: Path, instances) -> dict:
    paths = {}
    for instance in instances:
        for ext in (".bin", ".png"):
            candidate = maps_dir / f"{instance.id}{ext}"
            if candidate.is_file():
                paths[instance.id] = candidate
                break
        else:
            raise ConfigError(f"no clickability map for {instance.id!r} in {maps_dir}")
    return paths


def _run_real(args, config, instances, segmenter, out: Path) -> int:
    records = parse_clicks_csv(args.clicks)
    lookup = _click_lookup(clicks_by_instance(records, click_type="first"))
    real = {}
    for instance in instances:
        rows = lookup.get(instance.id, [])
        points = _rescaled_valid_points(rows, instance.gt, config.diag_fraction)
        if points:
            real[instance.id] = [Click(x=x, y=y) for x, y in points]
    stats = first_click_eval(segmenter, instances, real)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["instance,n_clicks,mean_iou,std_iou,nsr"]
    for iid in sorted(stats):
        s = stats[iid]
        nsr = "" if s.nsr is None else f"{s.nsr:.6f}"
        lines.append(
            f"{iid},{len(real[iid])},{s.mean_iou:.6f},{s.std_iou:.6f},{nsr}"
        )
    (out / "first_click.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    defined = [s.nsr for s in stats.values() if s.nsr is not None]
    doc = {
        "version": __version__,
        "config": asdict(config),
        "aggregate": {
            "n_instances": len(stats),
            "mean_iou": (
                float(np.mean([s.mean_iou for s in stats.values()])) if stats else None
            ),
            "mean_nsr": float(np.mean(defined)) if defined else None,
            "n_undefined_nsr": len(stats) - len(defined),
        },
    }
    (out / "aggregate.json").write_text(
        json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (out / "config.json").write_text(config_json(config), encoding="utf-8")
    return len(stats)


def cmd_maps_build(args) -> int:
    entries = load_manifest(args.manifest)
    records = parse_clicks_csv(args.clicks)
    grouped = clicks_by_instance(records, device=args.device, click_type="first")
    lookup = _click_lookup(grouped)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    built = skipped = 0
    for entry in entries:
        mask = load_mask(entry.gt_mask)
        points = _rescaled_valid_points(lookup.get(entry.id, []), mask, 0.01)
        if not points:
            print(f"skipping {entry.id}: no valid clicks", file=sys.stderr)
            skipped += 1
            continue
        pmap = build_clickability_map(points, mask, sigma=args.sigma)
        save_probability_map(pmap, out / f"{entry.id}.bin")
        built += 1
    print(f"built {built} maps ({skipped} skipped) -> {out}")
    return EXIT_OK


def cmd_metrics_compare(args) -> int:
    entries = load_manifest(args.manifest)
    lookup_a = _click_lookup(clicks_by_instance(parse_clicks_csv(args.set_a)))
    lookup_b = _click_lookup(clicks_by_instance(parse_clicks_csv(args.set_b)))
    lines = ["instance,n_a,n_b,pl1,wd,ks_stat,ks_p,ks_pass"]
    table = []
    for entry in entries:
        rows_a = lookup_a.get(entry.id, [])
        rows_b = lookup_b.get(entry.id, [])
        if not rows_a or not rows_b:
            continue
        mask = load_mask(entry.gt_mask)
        h, w = mask.shape
        frame = frame_from_mask(mask)
        pts_a = [rescale_point(r.x, r.y, (r.w, r.h), (w, h)) for r in rows_a]
        pts_b = [rescale_point(r.x, r.y, (r.w, r.h), (w, h)) for r in rows_b]
        set_a = ClickSet(np.asarray(pts_a, dtype=np.float64), frame)
        set_b = ClickSet(np.asarray(pts_b, dtype=np.float64), frame)
        row = {
            "instance": entry.id,
            "n_a": len(set_a),
            "n_b": len(set_b),
            "pl1": pl1(set_a, set_b),
            "wd": wasserstein2d(set_a, set_b),
        }
        if min(len(set_a), len(set_b)) >= 2:
            ks = ks2d(set_a, set_b, rng=np.random.default_rng(0))
            row["ks_stat"], row["ks_p"], row["ks_pass"] = (
                ks.statistic, ks.p_value, ks.passed,
            )
        else:
            row["ks_stat"] = row["ks_p"] = row["ks_pass"] = None
        table.append(row)
        lines.append(_compare_line(row))
    if table:
        lines.append(_compare_line(_compare_means(table)))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _compare_line(row: dict) -> str:
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, bool):
            return str(v).lower()
        if isinstance(v, float):
            return f"{v:.6f}"
        return str(v)

    keys = ("instance", "n_a", "n_b", "pl1", "wd", "ks_stat", "ks_p", "ks_pass")
    return ",".join(fmt(row[k]) for k in keys)


def _compare_means(table: list[dict]) -> dict:
    def mean_of(key):
        vals = [r[key] for r in table if r[key] is not None]
        return float(np.mean(vals)) if vals else None

    ks_flags = [r["ks_pass"] for r in table if r["ks_pass"] is not None]
    return {
        "instance": "MEAN",
        "n_a": sum(r["n_a"] for r in table),
        "n_b": sum(r["n_b"] for r in table),
        "pl1": mean_of("pl1"),
        "wd": mean_of("wd"),
        "ks_stat": mean_of("ks_stat"),
        "ks_p": mean_of("ks_p"),
        # the pass column aggregates to a pass rate
        "ks_pass": float(np.mean(ks_flags)) if ks_flags else None,
    }


def cmd_report_plot(args) -> int:
    run_dir = Path(args.run)
    curves_path = run_dir / "curves.csv"
    if not curves_path.is_file():
        raise ConfigError(f"{curves_path} not found; point --run at a bench output")
    header, columns = _read_curves(curves_path)
    svg = svg_curves(header[0], header[1:], columns)
    out = Path(args.out) if args.out else run_dir / "plot.svg"
    out.write_text(svg, encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def _read_curves(path: Path):
    lines = path.read_text(encoding="utf-8").strip().split("\n")
    header = lines[0].split(",")
    try:
        rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
    except ValueError as exc:
        raise ConfigError(f"{path}: non-numeric curve value ({exc})") from None
    if not rows or any(len(r) != len(header) for r in rows):
        raise ConfigError(f"{path}: malformed curve table")
    columns = list(zip(*rows))
    return header, columns


PALETTE = (
    "#4269d0", "#efb118", "#ff725c", "#6cc5b0", "#3ca951", "#ff8ab7",
    "#a463f2", "#97bbf5", "#9c6b4e", "#9498a0", "#e15759", "#59a14f",
)


def svg_curves(x_label: str, names, columns, width=640, height=440) -> str:
    """Line plot of IoU-vs-clicks curves, one polyline per series."""
    xs = columns[0]
    series = columns[1:]
    left, right, top, bottom = 56, 150, 16, 40
    plot_w = width - left - right
    plot_h = height - top - bottom
    x_min, x_max = min(xs), max(xs)
    x_span = (x_max - x_min) or 1.0

    def px(x):
        return left + (x - x_min) / x_span * plot_w

    def py(y):
        return top + (1.0 - y) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    # gridlines and axis labels at fixed IoU fractions
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = py(frac)
        parts.append(
            f'<line x1="{left}" y1="{y:.1f}" x2="{left + plot_w}" y2="{y:.1f}" '
            f'stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{left - 8}" y="{y + 4:.1f}" text-anchor="end">{frac:g}</text>'
        )
    for x in xs:
        if int(x) == x and (int(x) % 5 == 0 or x in (x_min, x_max)):
            parts.append(
                f'<text x="{px(x):.1f}" y="{height - bottom + 16}" '
                f'text-anchor="middle">{int(x)}</text>'
            )
    parts.append(
        f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
        f'y2="{top + plot_h}" stroke="#333"/>'
    )
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" stroke="#333"/>')
    parts.append(
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 6}" '
        f'text-anchor="middle">{x_label}</text>'
    )
    parts.append(
        f'<text x="14" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 14 {top + plot_h / 2:.1f})">mean IoU</text>'
    )
    for i, (name, values) in enumerate(zip(names, series)):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{px(x):.1f},{py(v):.1f}" for x, v in zip(xs, values))
        parts.append(
            f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = top + 14 + i * 16
        parts.append(
            f'<line x1="{left + plot_w + 10}" y1="{ly - 4}" x2="{left + plot_w + 30}" '
            f'y2="{ly - 4}" stroke="{color}" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{left + plot_w + 36}" y="{ly}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_collect_serve(args) -> int:
    from .collect import CollectStore, build_app

    entries = load_manifest(args.manifest)
    store = CollectStore(
        entries,
        dataset=args.dataset_name,
        display_mode=args.mode,
        journal_path=args.journal,
    )
    app = build_app(store)
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_dataset_validate(args) -> int:
    records = parse_clicks_csv(args.clicks)
    print(f"rows: {len(records)}")
    counts: dict[str, int] = {}
    for r in records:
        counts[r.dataset] = counts.get(r.dataset, 0) + 1
    for name in sorted(counts):
        print(f"dataset {name}: {counts[name]}")
    if args.manifest:
        entries = load_manifest(args.manifest)
        lookup = _click_lookup(clicks_by_instance(records))
        valid = invalid = 0
        unmatched = 0
        matched_stems = set()
        for entry in entries:
            rows = lookup.get(entry.id, [])
            if not rows:
                continue
            matched_stems.update(r.full_stem for r in rows)
            mask = load_mask(entry.gt_mask)
            h, w = mask.shape
            dist = mask_distance_field(mask)
            for r in rows:
                x, y = rescale_point(r.x, r.y, (r.w, r.h), (w, h))
                if validate_click((x, y), mask, dist_field=dist):
                    valid += 1
                else:
                    invalid += 1
        unmatched = sum(1 for r in records if r.full_stem not in matched_stems)
        print(f"valid: {valid}")
        print(f"invalid: {invalid}")
        print(f"unmatched rows: {unmatched}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (
        ClicksFormatError,
        ManifestError,
        MapFormatError,
        DegenerateMapError,
        ConfigError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except AdapterError as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
