"""Command-line pipeline: track, eval, stats, synth, print-config.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 numerical error.
Every subcommand is deterministic given its inputs (and seed).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from . import detstream, metrics, synth, traffic
from .config import RunConfig, default_config_text, parse_config
from .detstream import ClassCatalog
from .errors import NumericalError, ValidationError
from .tracker import Tracker, TrackStatus, format_track_row

TRACKS_HEADER = "frame\tid\tclass\tu\tv\tw\th"


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _open_detections(path: str):
    if path == "-":
        return sys.stdin
    return open(path, "r", encoding="utf-8")


def cmd_track(detections_path: str, config_path: str | None, out_dir: str) -> int:
    cfg = parse_config(_read_text(config_path)) if config_path else RunConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    tracker = Tracker(cfg.tracker)
    all_snaps = []
    last_frame = 0
    src = _open_detections(detections_path)
    try:
        batches = detstream.parse_detections(
            src, min_confidence=cfg.confidence_floor, path=detections_path
        )
        with open(out / cfg.tracks_name, "w", encoding="utf-8") as tf:
            tf.write(TRACKS_HEADER + "\n")
            for frame, batch in detstream.iter_frames(batches):
                snaps = tracker.step(frame, batch)
                for snap in snaps:
                    if snap.status is TrackStatus.CONFIRMED:
                        tf.write(format_track_row(snap) + "\n")
                all_snaps.extend(snaps)
                last_frame = frame
    finally:
        if src is not sys.stdin:
            src.close()

    duration = cfg.duration_s if cfg.duration_s is not None else last_frame / cfg.fps
    trajectories = traffic.assemble_trajectories(all_snaps, cfg.calibration)
    measurements = traffic.measure_intervals(
        trajectories, cfg.loi_world(), cfg.interval_s, cfg.fps, duration
    )
    with open(out / cfg.intervals_name, "w", encoding="utf-8") as f:
        traffic.write_intervals(f, measurements)
    return 0


def _load_catalog(classes_path: str | None) -> ClassCatalog:
    if classes_path is None:
        return ClassCatalog()
    names = [
        line.strip() for line in _read_text(classes_path).splitlines()
        if line.strip() and not line.startswith("#")
    ]
    return ClassCatalog(names=tuple(names))


def cmd_eval(pred_path: str, gt_path: str, iou_threshold: float,
             classes_path: str | None, out_dir: str) -> int:
    catalog = _load_catalog(classes_path)
    with open(pred_path, "r", encoding="utf-8") as f:
        preds = metrics.load_boxes(f, require_confidence=True, path=pred_path)
    with open(gt_path, "r", encoding="utf-8") as f:
        gts = metrics.load_boxes(f, require_confidence=False, path=gt_path)
    report = metrics.evaluate_detections(preds, gts, catalog.count, iou_threshold)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval_report.txt", "w", encoding="utf-8") as f:
        metrics.write_eval_report(f, report, catalog.names)
    with open(out / "confusion_matrix.txt", "w", encoding="utf-8") as f:
        metrics.write_confusion(f, report, catalog.names)
    return 0


STATS_HEADER = "quantity\tclass\tn\trmse\tpearson\tt\tp"


def _interval_series(rows: list[traffic.IntervalRow]):
    """(class -> interval -> flow, class -> interval -> mean speed, grid)."""
    flows: dict[int, dict[int, float]] = {}
    speeds: dict[int, dict[int, float]] = {}
    grid: dict[int, tuple[float, float]] = {}
    for r in rows:
        seen = grid.get(r.interval)
        if seen is not None and (abs(seen[0] - r.start) > 1e-9
                                 or abs(seen[1] - r.end) > 1e-9):
            raise ValidationError(f"inconsistent boundaries for interval {r.interval}")
        grid[r.interval] = (r.start, r.end)
        flows.setdefault(r.class_id, {})[r.interval] = r.flow_vph
        if r.n_speed_tracks > 0 and not math.isnan(r.mean_speed_kmh):
            speeds.setdefault(r.class_id, {})[r.interval] = r.mean_speed_kmh
    return flows, speeds, grid


def _stats_rows(measured: list[traffic.IntervalRow],
                truth: list[traffic.IntervalRow]) -> list[str]:
    m_flows, m_speeds, m_grid = _interval_series(measured)
    t_flows, t_speeds, t_grid = _interval_series(truth)
    for i in set(m_grid) & set(t_grid):
        if abs(m_grid[i][0] - t_grid[i][0]) > 1e-9 \
                or abs(m_grid[i][1] - t_grid[i][1]) > 1e-9:
            raise ValidationError(
                f"interval {i} boundaries differ between measured and truth files"
            )
    intervals = sorted(set(m_grid) | set(t_grid))
    if len(intervals) < 2:
        raise ValidationError("need at least 2 intervals to compute statistics")

    def flow_series(table, class_ids):
        return [sum(table.get(k, {}).get(i, 0.0) for k in class_ids)
                for i in intervals]

    lines = []
    classes = sorted(set(m_flows) | set(t_flows))
    for label, ids in [("all", classes)] + [(str(k), [k]) for k in classes]:
        a = flow_series(m_flows, ids)
        b = flow_series(t_flows, ids)
        lines.append(_stat_line("flow", label, a, b))
    for label, ids in [("all", sorted(set(m_speeds) | set(t_speeds)))] \
            + [(str(k), [k]) for k in sorted(set(m_speeds) | set(t_speeds))]:
        a, b = [], []
        for i in intervals:
            ma = [m_speeds.get(k, {}).get(i) for k in ids]
            mb = [t_speeds.get(k, {}).get(i) for k in ids]
            ma = [v for v in ma if v is not None]
            mb = [v for v in mb if v is not None]
            if ma and mb:
                a.append(sum(ma) / len(ma))
                b.append(sum(mb) / len(mb))
        if len(a) >= 2:
            lines.append(_stat_line("speed", label, a, b))
    return lines


def _stat_line(quantity: str, label: str, a, b) -> str:
    r = metrics.rmse(a, b)
    try:
        corr = f"{metrics.pearson(a, b):.6g}"
    except NumericalError:
        corr = "nan"
    t, p = metrics.paired_t_test(a, b)
    return "\t".join([quantity, label, str(len(a)),
                      f"{r:.6g}", corr, f"{t:.6g}", f"{p:.6g}"])


def cmd_stats(measured_path: str, truth_path: str, out_dir: str) -> int:
    with open(measured_path, "r", encoding="utf-8") as f:
        measured = traffic.parse_intervals(f, path=measured_path)
    with open(truth_path, "r", encoding="utf-8") as f:
        truth = traffic.parse_intervals(f, path=truth_path)
    lines = _stats_rows(measured, truth)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "stats.txt", "w", encoding="utf-8") as f:
        f.write(STATS_HEADER + "\n")
        for line in lines:
            f.write(line + "\n")
    return 0


def cmd_synth(spec_path: str, seed: int | None, out_dir: str) -> int:
    spec, loi_px, direction, interval_s = synth.parse_scenario(_read_text(spec_path))
    if seed is not None:
        spec.seed = seed
    loi = synth.loi_to_world(loi_px, direction, spec.calibration)
    batches, truth = synth.generate(spec, loi, interval_s)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "detections.txt", "w", encoding="utf-8") as f:
        detstream.write_detections(f, batches)
    with open(out / "ground_truth.txt", "w", encoding="utf-8") as f:
        traffic.write_intervals(f, truth.to_measurements())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficstate",
        description="Track road users from detection streams and measure "
                    "classified flow and speed.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run tracking + interval measurement")
    p.add_argument("--detections", required=True,
                   help="detection file, or - for standard input")
    p.add_argument("--config", default=None, help="run config file")
    p.add_argument("--out-dir", default=".", help="output directory")

    p = sub.add_parser("eval", help="evaluate detections against ground truth")
    p.add_argument("--pred", required=True, help="predicted detections file")
    p.add_argument("--gt", required=True, help="ground-truth boxes file")
    p.add_argument("--iou", type=float, default=0.5, help="matching IoU threshold")
    p.add_argument("--classes", default=None, help="file with one class name per line")
    p.add_argument("--out-dir", default=".", help="output directory")

    p = sub.add_parser("stats", help="compare measured intervals against truth")
    p.add_argument("--measured", required=True, help="measured intervals file")
    p.add_argument("--truth", required=True, help="ground-truth intervals file")
    p.add_argument("--out-dir", default=".", help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--spec", required=True, help="scenario description file")
    p.add_argument("--seed", type=int, default=None, help="override scenario seed")
    p.add_argument("--out-dir", default=".", help="output directory")

    sub.add_parser("print-config", help="print the default run config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "track":
            return cmd_track(args.detections, args.config, args.out_dir)
        if args.command == "eval":
            return cmd_eval(args.pred, args.gt, args.iou, args.classes, args.out_dir)
        if args.command == "stats":
            return cmd_stats(args.measured, args.truth, args.out_dir)
        if args.command == "synth":
            return cmd_synth(args.spec, args.seed, args.out_dir)
        if args.command == "print-config":
            sys.stdout.write(default_config_text())
            return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
