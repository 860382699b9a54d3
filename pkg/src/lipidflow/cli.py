"""Command-line interface.

Subcommands cover each pipeline stage (blinks, align, enhance, mask,
features, flow, track, fit) plus the end-to-end ``analyze``, the annotation
comparison ``compare``, the synthetic generator ``synth``, and the cohort
``correlate``.  Stage commands exist so intermediate products can be
inspected and re-fed without rerunning everything.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import struct
import sys

import numpy as np

import lipidflow
from lipidflow.align import PupilCircle, align_interblink, locate_pupil
from lipidflow.annotate import annotation_displacement, load_annotations
from lipidflow.blink import blink_runs, detect_blinks, distance_series, extract_interblinks
from lipidflow.enhance import EnhancementKind, enhance_frames
from lipidflow.features import fast_detect, select_seed_points
from lipidflow.fit import compare_with_annotation, fit_exponential
from lipidflow.flow import FarnebackParams, LKParams, farneback, lk_step
from lipidflow.report import (
    PipelineConfig,
    correlate_cohort,
    emit_scatter_svg,
    load_subject_meta,
    run_pipeline,
    trajectories_csv,
)
from lipidflow.segment import SnakeParams, build_iris_mask
from lipidflow.synth import GroundTruthManifest, SynthConfig, generate
from lipidflow.track import (
    DEFAULT_VARIANT,
    VariantId,
    aggregate_displacement,
    all_variants,
    filter_trajectories,
    track_backwards,
)
from lipidflow.video_io import (
    Frame,
    VideoSequence,
    load_image_sequence,
    load_y4m,
    save_pgm,
    save_y4m,
)


def _load_video(path: str, fps: float) -> VideoSequence:
    if os.path.isdir(path):
        return load_image_sequence(path, fps)
    return load_y4m(path)


def _write_json(data, out: str | None) -> None:
    text = json.dumps(data, sort_keys=True, indent=1)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _interblink(video: VideoSequence, index: int, k: float, min_s: float):
    flags = detect_blinks(distance_series(video), k).blink_flags
    ibs = extract_interblinks(video, flags, min_s)
    if not ibs:
        raise SystemExit("no inter-blink periods found")
    if not 0 <= index < len(ibs):
        raise SystemExit(f"inter-blink index {index} out of range (found {len(ibs)})")
    return ibs[index]


def cmd_blinks(args) -> None:
    video = _load_video(args.input, args.fps)
    flags = detect_blinks(distance_series(video), args.k).blink_flags
    ibs = extract_interblinks(video, flags, args.min_interblink)
    _write_json({
        "blinks": [list(r) for r in blink_runs(flags)],
        "interblinks": [[ib.start, ib.end] for ib in ibs],
    }, args.out)


def cmd_align(args) -> None:
    video = _load_video(args.input, args.fps)
    ib = _interblink(video, args.interblink, args.k, args.min_interblink)
    aligned = align_interblink(video, ib, args.dark_percentile)
    os.makedirs(args.out, exist_ok=True)
    for i, frame in enumerate(aligned.frames):
        save_pgm(frame, os.path.join(args.out, f"{i:05d}.pgm"))
    with open(os.path.join(args.out, "offsets.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "dx", "dy"])
        for i, (dx, dy) in enumerate(aligned.offsets):
            writer.writerow([ib.start + i, dx, dy])
    print(f"wrote {len(aligned.frames)} aligned frames to {args.out}")


def _aligned_and_mask(args):
    video = _load_video(args.input, args.fps)
    ib = _interblink(video, args.interblink, args.k, args.min_interblink)
    aligned = align_interblink(video, ib, args.dark_percentile)
    pup = aligned.pupils[-1]
    off = aligned.offsets[-1]
    mask_pupil = PupilCircle(pup.cx + off[0], pup.cy + off[1], pup.r)
    snake = SnakeParams(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                        step=args.step, iters=args.iters, tol=args.tol)
    mask = build_iris_mask(aligned.frames[-1], mask_pupil, snake)
    return video, ib, aligned, mask


def cmd_enhance(args) -> None:
    video = _load_video(args.input, args.fps)
    ib = _interblink(video, args.interblink, args.k, args.min_interblink)
    aligned = align_interblink(video, ib, args.dark_percentile)
    kind = EnhancementKind.from_name(args.kind)
    frames = enhance_frames(aligned.frames, kind, sigma=args.sigma, amount=args.amount,
                            level=args.level, tile=args.tile, clip=args.clip)
    os.makedirs(args.out, exist_ok=True)
    for i, frame in enumerate(frames):
        save_pgm(frame, os.path.join(args.out, f"{i:05d}.pgm"))
    print(f"wrote {len(frames)} {kind.value} frames to {args.out}")


def cmd_mask(args) -> None:
    _, _, _, mask = _aligned_and_mask(args)
    os.makedirs(args.out, exist_ok=True)
    save_pgm(mask.mask.astype(np.uint8) * 255, os.path.join(args.out, "mask.pgm"))
    with open(os.path.join(args.out, "contour.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for x, y in mask.bottom.points:
            writer.writerow([f"{x:.3f}", f"{y:.3f}"])
    print(f"wrote mask.pgm and contour.csv to {args.out} (eyelash row {mask.eyelash_y})")


def cmd_features(args) -> None:
    video = _load_video(args.input, args.fps)
    if args.seeds:
        _, _, aligned, mask = _aligned_and_mask(args)
        points = select_seed_points(
            fast_detect(aligned.frames[-1], args.threshold, args.arc), mask, args.columns)
    else:
        ib = _interblink(video, args.interblink, args.k, args.min_interblink)
        aligned = align_interblink(video, ib, args.dark_percentile)
        points = fast_detect(aligned.frames[-1], args.threshold, args.arc)
    writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
    writer.writerow(["x", "y", "score"])
    for p in points:
        writer.writerow([f"{p.x:.2f}", f"{p.y:.2f}", f"{p.score:.1f}"])


def _save_flo(field, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(b"FLO1")
        fh.write(struct.pack("<III", field.width, field.height, 0))
        fh.write(field.u.astype("<f4").tobytes())
        fh.write(field.v.astype("<f4").tobytes())


def cmd_flow(args) -> None:
    from lipidflow.video_io import load_pgm

    a = load_pgm(args.src)
    b = load_pgm(args.dst)
    if args.method == "farneback":
        field = farneback(a, b, FarnebackParams(levels=args.levels))
        if args.out and args.out.endswith(".flo"):
            _save_flo(field, args.out)
            print(f"wrote {args.out}")
        else:
            writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
            writer.writerow(["x", "y", "u", "v"])
            for y in range(field.height):
                for x in range(field.width):
                    writer.writerow([x, y, f"{field.u[y, x]:.4f}", f"{field.v[y, x]:.4f}"])
    else:
        if not args.points:
            raise SystemExit("--points CSV (x,y) is required for the lk method")
        with open(args.points, newline="") as fh:
            pts = np.array([[float(r["x"]), float(r["y"])] for r in csv.DictReader(fh)])
        new, statuses = lk_step(a, b, pts, LKParams(levels=args.levels))
        writer = csv.writer(sys.stdout if not args.out else open(args.out, "w", newline=""))
        writer.writerow(["x", "y", "u", "v", "status"])
        for p, q, st in zip(pts, new, statuses):
            writer.writerow([f"{p[0]:.2f}", f"{p[1]:.2f}",
                             f"{q[0] - p[0]:.4f}", f"{q[1] - p[1]:.4f}", st.value])


def cmd_track(args) -> None:
    video, ib, aligned, mask = _aligned_and_mask(args)
    variant = VariantId.parse(args.variant)
    config = PipelineConfig()
    frames = enhance_frames(aligned.frames, variant.enhancement, **config.enhance_params())
    seeds = select_seed_points(fast_detect(frames[-1], args.threshold, args.arc),
                               mask, args.columns)
    trajs = track_backwards(frames, seeds, variant, fb_check=not args.no_fb_check)
    kept = filter_trajectories(trajs, mask, args.bottom_frac, args.top_frac)
    series = aggregate_displacement(kept, video.fps)

    with open(args.trajectories, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["traj_id", "frame", "x", "y", "status"])
        for tid, tr in enumerate(trajs):
            for k in range(tr.positions.shape[0]):
                writer.writerow([tid, ib.start + k, f"{tr.positions[k, 0]:.4f}",
                                 f"{tr.positions[k, 1]:.4f}", tr.status.value])
    with open(args.displacement, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "dx", "dy", "n_points"])
        for i in range(series.t.size):
            writer.writerow([f"{series.t[i]:.6f}", f"{series.dx[i]:.4f}",
                             f"{series.dy[i]:.4f}", series.n_points[i]])
    print(f"tracked {len(trajs)} seeds, kept {len(kept)}; wrote "
          f"{args.trajectories} and {args.displacement}")


def cmd_fit(args) -> None:
    with open(args.series, newline="") as fh:
        rows = list(csv.DictReader(fh))
    t = np.array([float(r["t"]) for r in rows])
    col = "dy" if args.axis == "y" else "dx"
    d = np.array([float(r[col]) for r in rows])
    f = fit_exponential(t, d)
    _write_json({"rho": f.rho, "lambda_s": f.lambda_s, "c": f.c,
                 "rmse": f.rmse, "n": f.n, "degenerate": f.degenerate}, args.out)


def cmd_analyze(args) -> None:
    video = _load_video(args.input, args.fps)
    config = PipelineConfig(blink_k=args.k, min_interblink_s=args.min_interblink,
                            fb_check=not args.no_fb_check, seed=args.seed,
                            subject_id=args.subject_id)
    if args.fast:
        variants = [DEFAULT_VARIANT]
    elif args.variant:
        variants = [VariantId.parse(args.variant)]
    else:
        variants = all_variants()
    report = run_pipeline(video, config, variants,
                          keep_trajectories=bool(args.trajectories_csv))
    report.save(args.out)
    if args.trajectories_csv:
        trajectories_csv(args.trajectories_csv, report)
    n_ok = sum(e.ok for ib in report.interblinks for e in ib.entries)
    n_all = sum(len(ib.entries) for ib in report.interblinks)
    print(f"wrote {args.out}: {len(report.interblinks)} inter-blink(s), "
          f"{n_ok}/{n_all} variant entries ok")


def cmd_compare(args) -> None:
    ann = load_annotations(args.annotations)
    with open(args.report) as fh:
        rep = json.load(fh)
    series = annotation_displacement(ann)
    ann_fit_y = fit_exponential(series.t, series.dy)
    ann_fit_x = fit_exponential(series.t, series.dx)

    variant = args.variant or str(DEFAULT_VARIANT)
    rows = []
    for ib in rep["interblinks"]:
        if ib["index"] != ann.interblink_id:
            continue
        for e in ib["entries"]:
            if e["variant"] != variant or not e["ok"]:
                continue
            for axis, ann_fit in (("y", ann_fit_y), ("x", ann_fit_x)):
                fit = e[f"fit_{axis}"]
                comp = compare_with_annotation(
                    _fit_from_dict(fit), ann_fit)
                rows.append({
                    "interblink": ib["index"], "axis": axis,
                    "lambda_computed": comp.lambda_computed,
                    "lambda_annotation": comp.lambda_annotation,
                    "abs_diff": comp.abs_diff, "rel_diff": comp.rel_diff,
                    "degenerate": comp.degenerate,
                })
    if not rows:
        raise SystemExit(f"report has no ok entry for inter-blink "
                         f"{ann.interblink_id} variant {variant}")
    _write_json({"rows": rows}, args.out)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)


def _fit_from_dict(d: dict):
    from lipidflow.fit import DecayFit
    return DecayFit(d["rho"], d["lambda_s"], d["c"], d["rmse"], d["n"], d["degenerate"])


def cmd_synth(args) -> None:
    config = SynthConfig.from_json(args.config) if args.config else SynthConfig(seed=args.seed)
    video, manifest = generate(config)
    os.makedirs(args.out, exist_ok=True)
    if args.format == "y4m":
        save_y4m(video, os.path.join(args.out, "video.y4m"))
    else:
        for frame in video.frames:
            save_pgm(frame, os.path.join(args.out, f"{frame.index:05d}.pgm"))
    manifest.save(os.path.join(args.out, "manifest.json"))
    print(f"wrote {len(video)} frames and manifest.json to {args.out}")


def cmd_correlate(args) -> None:
    reports = []
    for path in args.reports:
        with open(path) as fh:
            reports.append(json.load(fh))
    meta = load_subject_meta(args.meta)
    corr, points = correlate_cohort(reports, meta, axis=args.axis,
                                    meta_field=args.field,
                                    per_interblink=args.per_interblink)
    _write_json({"r": corr.r, "n": corr.n, "slope": corr.slope,
                 "intercept": corr.intercept,
                 "points": [[x, y] for x, y in points]}, args.out)
    if args.svg:
        labels = {"osdi": "OSDI score", "thinning_time_s": "thinning time (s)"}
        svg = emit_scatter_svg(points, labels.get(args.field, args.field),
                               f"{args.axis}-displacement characteristic time (s)", corr)
        with open(args.svg, "w") as fh:
            fh.write(svg)


def _add_common_video_args(p) -> None:
    p.add_argument("--input", required=True, help="Y4M file or PGM directory")
    p.add_argument("--fps", type=float, default=30.0,
                   help="frame rate for PGM directories (default 30)")
    p.add_argument("--k", type=float, default=3.0, help="blink sensitivity")
    p.add_argument("--min-interblink", type=float, default=0.5)


def _add_stage_args(p) -> None:
    _add_common_video_args(p)
    p.add_argument("--interblink", type=int, default=0)
    p.add_argument("--dark-percentile", type=float, default=0.05)


def _add_snake_args(p) -> None:
    defaults = SnakeParams()
    p.add_argument("--alpha", type=float, default=defaults.alpha)
    p.add_argument("--beta", type=float, default=defaults.beta)
    p.add_argument("--gamma", type=float, default=defaults.gamma)
    p.add_argument("--step", type=float, default=defaults.step)
    p.add_argument("--iters", type=int, default=defaults.iters)
    p.add_argument("--tol", type=float, default=defaults.tol)


def _add_fast_args(p) -> None:
    p.add_argument("--threshold", type=int, default=20)
    p.add_argument("--arc", type=int, default=9)
    p.add_argument("--columns", type=int, default=16)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lipidflow",
        description="Track tear-film lipid layer spread and fit decay characteristic times")
    parser.add_argument("--version", action="version", version=lipidflow.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("blinks", help="detect blinks and inter-blink periods")
    _add_common_video_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_blinks)

    p = sub.add_parser("align", help="pupil-align one inter-blink")
    _add_stage_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("enhance", help="write one enhanced view of an inter-blink")
    _add_stage_args(p)
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in EnhancementKind])
    p.add_argument("--sigma", type=float, default=2.0)
    p.add_argument("--amount", type=float, default=1.5)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--tile", type=int, default=64)
    p.add_argument("--clip", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("mask", help="build the iris tracking mask")
    _add_stage_args(p)
    _add_snake_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("features", help="FAST corners on the last inter-blink frame")
    _add_stage_args(p)
    _add_snake_args(p)
    _add_fast_args(p)
    p.add_argument("--seeds", action="store_true",
                   help="apply the mask and per-band selection")
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("flow", help="optical flow between two PGM frames")
    p.add_argument("--method", choices=["lk", "farneback"], required=True)
    p.add_argument("--from", dest="src", required=True)
    p.add_argument("--to", dest="dst", required=True)
    p.add_argument("--points", help="CSV with x,y columns (lk only)")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--out", help=".flo for binary, otherwise CSV")
    p.set_defaults(func=cmd_flow)

    p = sub.add_parser("track", help="track one variant through an inter-blink")
    _add_stage_args(p)
    _add_snake_args(p)
    _add_fast_args(p)
    p.add_argument("--variant", default=str(DEFAULT_VARIANT),
                   help="flow:enhancement, e.g. farneback:lappyr")
    p.add_argument("--bottom-frac", type=float, default=0.15)
    p.add_argument("--top-frac", type=float, default=0.25)
    p.add_argument("--no-fb-check", action="store_true")
    p.add_argument("--trajectories", default="trajectories.csv")
    p.add_argument("--displacement", default="displacement.csv")
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("fit", help="fit the decay model to a displacement CSV")
    p.add_argument("--series", required=True)
    p.add_argument("--axis", choices=["x", "y"], default="y")
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("analyze", help="full pipeline -> report JSON")
    _add_common_video_args(p)
    p.add_argument("--fast", action="store_true", help="default variant only")
    p.add_argument("--variant", help="run a single flow:enhancement variant")
    p.add_argument("--out", default="report.json")
    p.add_argument("--trajectories-csv")
    p.add_argument("--no-fb-check", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subject-id")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare", help="computed vs annotation characteristic times")
    p.add_argument("--annotations", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--variant")
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth", help="generate a synthetic eye video + manifest")
    p.add_argument("--config", help="SynthConfig JSON")
    p.add_argument("--seed", type=int, default=1234)
    p.add_argument("--format", choices=["pgm", "y4m"], default="pgm")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("correlate", help="cohort metadata vs characteristic time")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--meta", required=True, help="CSV subject_id,osdi,thinning_time_s")
    p.add_argument("--field", choices=["osdi", "thinning_time_s"], default="osdi")
    p.add_argument("--axis", choices=["x", "y"], default="y")
    p.add_argument("--per-interblink", action="store_true")
    p.add_argument("--svg")
    p.add_argument("--out")
    p.set_defaults(func=cmd_correlate)

    return parser


def main(argv=None) -> None:
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
