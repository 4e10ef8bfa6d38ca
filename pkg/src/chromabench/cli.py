"""Batch command-line front end.

Subcommands cover the full benchmark workflow:

    synth       render a synthetic chart scene from a JSON spec
    extract-gt  compute per-image ground-truth illuminants from chart scenes
    estimate    run statistical estimators over an image directory
    evaluate    score estimates against a ground truth (recovery/reproduction)
    rank        rank algorithms by a summary statistic; compare across GTs
    diff-gt     compare two ground-truth sets, with offset-hypothesis tools

Exit codes: 0 success, 1 usage/config error, 2 partial data failure (some
images failed; successes were still written).  Output files are written
atomically and are byte-stable for fixed inputs regardless of --jobs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import audit, chartgeom, estimators, groundtruth, imagecore, metrics, synth
from ._util import atomic_write_text, fmt9

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARTIAL = 2

JOBS_ENV_VAR = "CHROMABENCH_JOBS"


class CliError(Exception):
    """Configuration or input error that should terminate with exit code 1."""


def _resolve_jobs(arg_jobs: int | None) -> int:
    if arg_jobs is not None:
        jobs = arg_jobs
    elif os.environ.get(JOBS_ENV_VAR):
        try:
            jobs = int(os.environ[JOBS_ENV_VAR])
        except ValueError as exc:
            raise CliError(f"bad {JOBS_ENV_VAR} value: {os.environ[JOBS_ENV_VAR]!r}") from exc
    else:
        jobs = os.cpu_count() or 1
    if jobs < 1:
        raise CliError("--jobs must be >= 1")
    return jobs


def _map_tasks(fn, tasks: list, jobs: int) -> list:
    if jobs == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


def _discover_images(images_dir: str) -> list[tuple[str, Path]]:
    root = Path(images_dir)
    if not root.is_dir():
        raise CliError(f"not a directory: {images_dir}")
    found = sorted(root.glob("*.ppm"))
    if not found:
        raise CliError(f"no .ppm images in {images_dir}")
    return [(p.stem, p) for p in found]


def _log_error(image_id: str, message: str) -> None:
    print(f"error: {image_id}: {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# extract-gt


def _extract_one(task):
    image_id, image_path, chart_path, subtract_black = task
    try:
        img = imagecore.load_image(image_path)
        layout = chartgeom.read_chart_file(chart_path)
        camera = img.camera or imagecore.CameraProfile("unknown")
        record = groundtruth.compute_ground_truth(
            img, layout, camera, image_id=image_id, subtract_black=subtract_black
        )
        return image_id, record, None
    except Exception as exc:  # noqa: BLE001 - per-image failures must not kill the run
        return image_id, None, str(exc)


def cmd_extract_gt(args) -> int:
    jobs = _resolve_jobs(args.jobs)
    images = _discover_images(args.images)
    charts_dir = Path(args.charts)
    tasks = [
        (image_id, str(path), str(charts_dir / f"{image_id}.chart"), not args.no_black_subtract)
        for image_id, path in images
    ]
    results = _map_tasks(_extract_one, tasks, jobs)
    records = []
    failures = 0
    for image_id, record, error in results:
        if error is not None:
            failures += 1
            _log_error(image_id, error)
        else:
            records.append(record)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    groundtruth.write_gt(records, args.out)
    print(f"wrote {len(records)} ground-truth records to {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# estimate


def _estimate_one(task):
    image_id, image_path, chart_path, specs, mask_chart, sat_mask = task
    rows = []
    errors = []
    try:
        img = imagecore.load_image(image_path)
        camera = img.camera or imagecore.CameraProfile("unknown")
        mask = np.ones((img.height, img.width), dtype=bool)
        if sat_mask:
            # Clipping is judged on raw counts, before the dark offset is removed.
            mask &= estimators.saturation_mask(img, camera.saturation_level)
        if mask_chart:
            layout = chartgeom.read_chart_file(chart_path)
            mask &= estimators.chart_region_mask(
                img.height, img.width, layout.corners, dilate_px=5
            )
        linear = imagecore.subtract_black_level(img, camera.black_level)
    except Exception as exc:  # noqa: BLE001
        return image_id, [], [f"{exc}"]
    for spec in specs:
        try:
            est = estimators.estimate(linear, spec, mask, image_id=image_id)
            rows.append((est, spec))
        except Exception as exc:  # noqa: BLE001
            errors.append(f"{spec.name}: {exc}")
    return image_id, rows, errors


def cmd_estimate(args) -> int:
    jobs = _resolve_jobs(args.jobs)
    try:
        specs = [estimators.spec_from_string(text) for text in args.algo]
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    images = _discover_images(args.images)
    charts_dir = Path(args.charts) if args.charts else Path(args.images)
    tasks = [
        (
            image_id,
            str(path),
            str(charts_dir / f"{image_id}.chart"),
            specs,
            args.mask_chart,
            not args.no_sat_mask,
        )
        for image_id, path in images
    ]
    results = _map_tasks(_estimate_one, tasks, jobs)
    rows = []
    failures = 0
    for image_id, image_rows, errors in results:
        rows.extend(image_rows)
        for message in errors:
            failures += 1
            _log_error(image_id, message)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    estimators.write_estimates(rows, args.out)
    print(f"wrote {len(rows)} estimates to {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args) -> int:
    gt_map = groundtruth.records_by_id(groundtruth.read_gt(args.gt))
    ests = estimators.read_estimates(args.est)
    if not ests:
        raise CliError(f"no estimates in {args.est}")
    error_fn = (
        metrics.recovery_error if args.metric == "recovery" else metrics.reproduction_error
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "algorithm", "metric", "degrees"])
    written = 0
    failures = 0
    for est in ests:
        record = gt_map.get(est.image_id)
        if record is None:
            failures += 1
            _log_error(est.image_id, "missing from ground truth; skipped")
            continue
        try:
            degrees = error_fn(est.rgb, record.illuminant)
        except ValueError as exc:
            failures += 1
            _log_error(est.image_id, f"{est.algorithm}: {exc}")
            continue
        writer.writerow([est.image_id, est.algorithm, args.metric, fmt9(degrees)])
        written += 1
    if written == 0:
        raise CliError("no estimate could be scored against this ground truth")
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(args.out, buf.getvalue())
    print(f"wrote {written} {args.metric} errors to {args.out}")
    return EXIT_PARTIAL if failures else EXIT_OK


# ---------------------------------------------------------------------------
# rank


def _read_errors_csv(path: str) -> dict[str, list[float]]:
    by_algo: dict[str, list[float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"image_id", "algorithm", "degrees"}
        missing = needed - set(reader.fieldnames or ())
        if missing:
            raise CliError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            by_algo.setdefault(row["algorithm"], []).append(float(row["degrees"]))
    if not by_algo:
        raise CliError(f"{path}: no error rows")
    return by_algo


def _labels_for(paths: list[str]) -> list[str]:
    labels = []
    for path in paths:
        stem = Path(path).stem
        label = stem
        i = 2
        while label in labels:
            label = f"{stem}-{i}"
            i += 1
        labels.append(label)
    return labels


def cmd_rank(args) -> int:
    labels = _labels_for(args.errors)
    per_file: dict[str, dict[str, metrics.ErrorSummary]] = {}
    for label, path in zip(labels, args.errors):
        grouped = _read_errors_csv(path)
        per_file[label] = {
            algo: metrics.summarize(values) for algo, values in grouped.items()
        }

    algo_sets = [set(summaries) for summaries in per_file.values()]
    common = set.intersection(*algo_sets)
    union = set.union(*algo_sets)
    if union - common:
        dropped = ", ".join(sorted(union - common))
        print(
            f"warning: algorithm sets differ across inputs; ranking the "
            f"intersection (dropped: {dropped})",
            file=sys.stderr,
        )
    if not common:
        raise CliError("no algorithm appears in every error file")

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tables: dict[str, metrics.RankingTable] = {}
    for label in labels:
        summaries = {a: s for a, s in per_file[label].items() if a in common}
        tables[label] = metrics.rank(summaries, key=args.stat)

    if len(labels) == 1:
        table = tables[labels[0]]
        metrics.write_ranking_csv(table, out)
        print(metrics.format_ranking_text(table, title=f"[{labels[0]}] by {args.stat}"))
        print(f"wrote ranking to {out}")
        return EXIT_OK

    for label in labels:
        side_path = out.with_name(f"{out.stem}.{label}{out.suffix or '.csv'}")
        metrics.write_ranking_csv(tables[label], side_path)
        print(metrics.format_ranking_text(tables[label], title=f"[{label}] by {args.stat}"))
        print(f"wrote ranking to {side_path}")

    # Side-by-side comparison, ordered by the first input's ranking.
    rank_of = {
        label: {row.algorithm: row for row in tables[label].rows} for label in labels
    }
    ordered_algos = [row.algorithm for row in tables[labels[0]].rows]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["algorithm"]
    for label in labels:
        header += [f"rank_{label}", f"{args.stat}_{label}"]
    writer.writerow(header)
    text_rows = []
    for algo in ordered_algos:
        row_out = [algo]
        for label in labels:
            row = rank_of[label][algo]
            row_out += [str(row.rank), fmt9(metrics.summary_stat(row.summary, args.stat))]
        writer.writerow(row_out)
        text_rows.append(row_out)
    atomic_write_text(out, buf.getvalue())

    widths = [max(len(header[i]), *(len(r[i]) for r in text_rows)) for i in range(len(header))]
    print("rank comparison:")
    print("  ".join(header[i].ljust(widths[i]) for i in range(len(header))))
    for r in text_rows:
        print("  ".join(r[i].ljust(widths[i]) for i in range(len(header))))
    print(f"wrote comparison to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# diff-gt


def cmd_diff_gt(args) -> int:
    set_a = groundtruth.records_by_id(groundtruth.read_gt(args.a))
    set_b = groundtruth.records_by_id(groundtruth.read_gt(args.b))
    try:
        report = audit.diff_ground_truths(set_a, set_b, args.threshold)
    except ValueError as exc:
        raise CliError(str(exc)) from exc

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["image_id", "degrees", "outlier"])
    for image_id in sorted(report.angles_deg):
        angle = report.angles_deg[image_id]
        writer.writerow(
            [image_id, fmt9(angle), "true" if angle > report.threshold_deg else "false"]
        )
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    atomic_write_text(args.out, buf.getvalue())

    print(f"matched images:   {report.matched}")
    print(f"only in A:        {len(report.only_in_a)}")
    print(f"only in B:        {len(report.only_in_b)}")
    print(f"median angle:     {report.median_deg:.6f} deg")
    print(f"max angle:        {report.max_deg:.6f} deg")
    print(
        f"outliers (> {report.threshold_deg:g} deg): {len(report.outliers)}"
        + (f" -> {', '.join(report.outliers)}" if report.outliers else "")
    )
    if args.offset is not None:
        fit = audit.explain_offset(set_a, set_b, args.offset)
        print(
            f"offset {fit.offset:g}: {100.0 * fit.fraction_within:.1f}% within 0.1 deg, "
            f"median residual {fit.median_residual_deg:.6f} deg"
        )
    if args.scan_offset:
        best = audit.scan_offset(set_a, set_b)
        print(
            f"best offset: {best.offset:g} "
            f"(median residual {best.median_residual_deg:.6f} deg, "
            f"{100.0 * best.fraction_within:.1f}% within 0.1 deg)"
        )
    print(f"wrote per-image report to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth


_SCENE_KEYS = {
    "image_id",
    "illuminant",
    "pose",
    "corners",
    "width",
    "height",
    "exposure",
    "reflectance_table",
    "achromatic_reflectances",
    "background",
    "black_level",
    "noise_sigma",
    "bit_depth",
    "clip_level",
    "rng_seed",
    "camera_id",
    "saturation_level",
}


def _scene_from_json(payload: dict) -> tuple[synth.SceneSpec, str]:
    unknown = set(payload) - _SCENE_KEYS
    if unknown:
        raise CliError(f"unknown scene spec fields: {sorted(unknown)}")
    if "pose" in payload and "corners" in payload:
        raise CliError("give either 'pose' or 'corners', not both")
    image_id = str(payload.get("image_id", "scene"))
    kwargs: dict = {}
    if "corners" in payload:
        corners = np.asarray(payload["corners"], dtype=np.float64).reshape(4, 2)
        kwargs["pose"] = synth.pose_from_corners(corners)
    elif "pose" in payload:
        kwargs["pose"] = np.asarray(payload["pose"], dtype=np.float64)
    table = None
    if "reflectance_table" in payload:
        table = np.asarray(payload["reflectance_table"], dtype=np.float64)
    if "achromatic_reflectances" in payload:
        base = table if table is not None else synth.DEFAULT_REFLECTANCES.copy()
        base = np.array(base, dtype=np.float64)
        ramp = np.asarray(payload["achromatic_reflectances"], dtype=np.float64)
        if ramp.shape != (6,):
            raise CliError("achromatic_reflectances must be 6 values")
        base[18:24] = ramp[:, None]
        table = base
    if table is not None:
        kwargs["reflectance_table"] = table
    for key in (
        "illuminant",
        "width",
        "height",
        "exposure",
        "background",
        "black_level",
        "noise_sigma",
        "bit_depth",
        "clip_level",
        "rng_seed",
        "camera_id",
        "saturation_level",
    ):
        if key in payload:
            kwargs[key] = (
                tuple(payload[key]) if key in ("illuminant", "background") else payload[key]
            )
    try:
        spec = synth.SceneSpec(**kwargs)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid scene spec: {exc}") from exc
    return spec, image_id


def cmd_synth(args) -> int:
    try:
        payload = json.loads(Path(args.spec).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read scene spec: {exc}") from exc
    if not isinstance(payload, dict):
        raise CliError("scene spec must be a JSON object")
    spec, image_id = _scene_from_json(payload)
    try:
        scene = synth.render(spec)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    path = synth.write_scene(scene, args.out, image_id)
    illum = scene.true_illuminant
    print(f"true_illuminant: {fmt9(illum[0])} {fmt9(illum[1])} {fmt9(illum[2])}")
    print(f"wrote {path}, sidecar and chart file")
    return EXIT_OK


# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chromabench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract-gt", help="compute ground-truth illuminants")
    p.add_argument("--images", required=True, help="directory of .ppm images")
    p.add_argument("--charts", required=True, help="directory of .chart files")
    p.add_argument("--out", required=True, help="output ground-truth CSV")
    p.add_argument(
        "--no-black-subtract",
        action="store_true",
        help="skip black-level subtraction (legacy-style ground truth)",
    )
    p.add_argument("--jobs", type=int, default=None, help="parallel workers")
    p.set_defaults(func=cmd_extract_gt)

    p = sub.add_parser("estimate", help="run illuminant estimators")
    p.add_argument("--images", required=True, help="directory of .ppm images")
    p.add_argument(
        "--algo",
        action="append",
        required=True,
        help='preset name or "n=...,p=...,sigma=..." (repeatable)',
    )
    p.add_argument("--out", required=True, help="output estimates CSV")
    p.add_argument(
        "--charts", default=None, help=".chart directory (default: --images)"
    )
    p.add_argument(
        "--mask-chart",
        action="store_true",
        help="exclude the chart quadrilateral (dilated 5 px) from pooling",
    )
    p.add_argument(
        "--no-sat-mask",
        action="store_true",
        help="keep saturated pixels instead of masking them out",
    )
    p.add_argument("--jobs", type=int, default=None, help="parallel workers")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="score estimates against a ground truth")
    p.add_argument("--gt", required=True, help="ground-truth CSV")
    p.add_argument("--est", required=True, help="estimates CSV")
    p.add_argument(
        "--metric",
        choices=("recovery", "reproduction"),
        default="recovery",
        help="angular error type",
    )
    p.add_argument("--out", required=True, help="output per-image error CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rank", help="rank algorithms; compare across GT sets")
    p.add_argument(
        "--errors", action="append", required=True, help="error CSV (repeatable)"
    )
    p.add_argument("--stat", choices=metrics.STAT_KEYS, default="median")
    p.add_argument("--out", required=True, help="output ranking/comparison CSV")
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("diff-gt", help="compare two ground-truth sets")
    p.add_argument("--a", required=True, help="first ground-truth CSV")
    p.add_argument("--b", required=True, help="second ground-truth CSV")
    p.add_argument(
        "--threshold",
        type=float,
        default=audit.DEFAULT_OUTLIER_THRESHOLD_DEG,
        help="outlier threshold in degrees",
    )
    p.add_argument(
        "--offset", type=float, default=None, help="test 'b = a + offset' fit"
    )
    p.add_argument(
        "--scan-offset",
        action="store_true",
        help="sweep integer offsets 0..512 and report the best fit",
    )
    p.add_argument("--out", required=True, help="output per-image report CSV")
    p.set_defaults(func=cmd_diff_gt)

    p = sub.add_parser("synth", help="render a synthetic chart scene")
    p.add_argument("--spec", required=True, help="scene spec JSON file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
