"""End-to-end pipeline orchestration, cohort statistics, and plot output.

``run_pipeline`` executes blink detection, alignment, enhancement, seeding,
tracking, filtering, and decay fitting for every (inter-blink, variant) pair
and collects the results with a full parameter ledger per entry, so any entry
can be recomputed from the report alone.  Individual variant failures are
recorded, never fatal.  Report JSON is byte-deterministic for fixed inputs.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

import lipidflow
from lipidflow.align import PupilCircle, align_interblink
from lipidflow.blink import blink_runs, detect_blinks, distance_series, extract_interblinks
from lipidflow.enhance import EnhancementKind, enhance_frames
from lipidflow.features import fast_detect, select_seed_points
from lipidflow.fit import CorrelationResult, DecayFit, fit_exponential, pearson
from lipidflow.flow import FarnebackParams, LKParams
from lipidflow.segment import SnakeParams, build_iris_mask
from lipidflow.track import (
    DEFAULT_VARIANT,
    Trajectory,
    VariantId,
    aggregate_displacement,
    all_variants,
    filter_trajectories,
    track_backwards,
)
from lipidflow.video_io import VideoSequence


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the pipeline; serialized verbatim into report entries."""

    blink_k: float = 3.0
    min_interblink_s: float = 0.5
    dark_percentile: float = 0.05
    snake: SnakeParams = field(default_factory=SnakeParams)
    fast_threshold: int = 20
    fast_arc: int = 9
    seed_columns: int = 16
    lk: LKParams = field(default_factory=LKParams)
    fb: FarnebackParams = field(default_factory=FarnebackParams)
    bottom_frac: float = 0.15
    top_frac: float = 0.25
    fb_check: bool = True
    abs_x: bool = False
    unsharp_sigma: float = 2.0
    unsharp_amount: float = 1.5
    laplacian_level: int = 1
    clahe_tile: int = 64
    clahe_clip: float = 2.0
    seed: int = 0
    subject_id: str | None = None

    def ledger(self) -> dict:
        out = asdict(self)
        return out

    def enhance_params(self) -> dict:
        return dict(sigma=self.unsharp_sigma, amount=self.unsharp_amount,
                    level=self.laplacian_level, tile=self.clahe_tile,
                    clip=self.clahe_clip)


def _fit_dict(f: DecayFit) -> dict:
    return {"rho": f.rho, "lambda_s": f.lambda_s, "c": f.c, "rmse": f.rmse,
            "n": f.n, "degenerate": f.degenerate}


@dataclass
class VariantResult:
    variant: VariantId
    ok: bool
    error: str | None = None
    fit_x: DecayFit | None = None
    fit_y: DecayFit | None = None
    n_seeds: int = 0
    n_tracked_ok: int = 0
    n_kept: int = 0
    trajectories: list[Trajectory] | None = None

    def to_json_dict(self, ledger: dict) -> dict:
        return {
            "variant": str(self.variant),
            "ok": self.ok,
            "error": self.error,
            "n_seeds": self.n_seeds,
            "n_tracked_ok": self.n_tracked_ok,
            "n_kept": self.n_kept,
            "fit_x": _fit_dict(self.fit_x) if self.fit_x else None,
            "fit_y": _fit_dict(self.fit_y) if self.fit_y else None,
            "params": ledger,
        }


@dataclass
class InterBlinkResult:
    index: int
    start: int
    end: int
    entries: list[VariantResult]

    @property
    def all_failed(self) -> bool:
        return all(not e.ok for e in self.entries)


@dataclass
class AnalysisReport:
    source_id: str
    fps: float
    config: PipelineConfig
    blinks: list[tuple[int, int]]
    interblinks: list[InterBlinkResult]

    def entry(self, ib_index: int, variant: VariantId) -> VariantResult | None:
        for ib in self.interblinks:
            if ib.index == ib_index:
                for e in ib.entries:
                    if e.variant == variant:
                        return e
        return None

    def to_json_dict(self) -> dict:
        ledger = self.config.ledger()
        return {
            "schema": 1,
            "tool_version": lipidflow.__version__,
            "source_id": self.source_id,
            "subject_id": self.config.subject_id,
            "fps": self.fps,
            "seed": self.config.seed,
            "blinks": [list(r) for r in self.blinks],
            "interblinks": [
                {
                    "index": ib.index,
                    "start": ib.start,
                    "end": ib.end,
                    "all_failed": ib.all_failed,
                    "entries": [e.to_json_dict(ledger) for e in ib.entries],
                }
                for ib in self.interblinks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json())


def run_variant(
    aligned_frames: list[np.ndarray],
    mask,
    variant: VariantId,
    config: PipelineConfig,
    fps: float,
    keep_trajectories: bool = False,
) -> VariantResult:
    """One (enhancement, flow) combination on an aligned inter-blink."""
    result = VariantResult(variant, ok=False)
    try:
        enhanced = enhance_frames(aligned_frames, variant.enhancement,
                                  **config.enhance_params())
        detections = fast_detect(enhanced[-1], config.fast_threshold, config.fast_arc)
        seeds = select_seed_points(detections, mask, config.seed_columns)
        result.n_seeds = len(seeds)
        trajs = track_backwards(enhanced, seeds, variant,
                                lk=config.lk, fb=config.fb, fb_check=config.fb_check)
        result.n_tracked_ok = sum(t.status.is_ok for t in trajs)
        kept = filter_trajectories(trajs, mask, config.bottom_frac, config.top_frac)
        result.n_kept = len(kept)
        series = aggregate_displacement(kept, fps)
        dx = np.abs(series.dx) if config.abs_x else series.dx
        result.fit_x = fit_exponential(series.t, dx)
        result.fit_y = fit_exponential(series.t, series.dy)
        result.ok = True
        if keep_trajectories:
            result.trajectories = kept
    except Exception as exc:  # variant failures degrade gracefully
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def run_pipeline(
    video: VideoSequence,
    config: PipelineConfig | None = None,
    variants: list[VariantId] | None = None,
    keep_trajectories: bool = False,
) -> AnalysisReport:
    """Full analysis of one video over the requested variants (default: all
    ten flow x enhancement combinations)."""
    config = config or PipelineConfig()
    variants = variants if variants is not None else all_variants()

    series = distance_series(video)
    flags = detect_blinks(series, config.blink_k).blink_flags
    interblinks = extract_interblinks(video, flags, config.min_interblink_s)
    if not interblinks:
        raise PipelineError("no inter-blink period found")

    results = []
    for idx, ib in enumerate(interblinks):
        aligned = align_interblink(video, ib, config.dark_percentile)
        # express the last frame's pupil in aligned coordinates
        pup = aligned.pupils[-1]
        off = aligned.offsets[-1]
        mask_pupil = PupilCircle(pup.cx + off[0], pup.cy + off[1], pup.r)
        mask = build_iris_mask(aligned.frames[-1], mask_pupil, config.snake)
        entries = [
            run_variant(aligned.frames, mask, variant, config, video.fps,
                        keep_trajectories=keep_trajectories)
            for variant in variants
        ]
        results.append(InterBlinkResult(idx, ib.start, ib.end, entries))

    return AnalysisReport(video.source_id, video.fps, config,
                          blink_runs(flags), results)


@dataclass(frozen=True)
class SubjectMeta:
    subject_id: str
    osdi: float | None = None
    thinning_time_s: float | None = None

    def __post_init__(self):
        if self.osdi is not None and not 0.0 <= self.osdi <= 100.0:
            raise ValueError("osdi must lie in [0, 100]")


def load_subject_meta(path: str | os.PathLike) -> list[SubjectMeta]:
    """CSV with header subject_id,osdi,thinning_time_s (empty cells allowed)."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(SubjectMeta(
                subject_id=row["subject_id"],
                osdi=float(row["osdi"]) if row.get("osdi") else None,
                thinning_time_s=(float(row["thinning_time_s"])
                                 if row.get("thinning_time_s") else None),
            ))
    return out


def subject_lambda(report_dict: dict, axis: str, variant: VariantId = DEFAULT_VARIANT,
                   per_interblink: bool = False) -> list[float]:
    """Non-degenerate characteristic times of one subject's report for the
    given axis and variant; averaged unless per_interblink."""
    key = f"fit_{axis}"
    lams = []
    for ib in report_dict["interblinks"]:
        for e in ib["entries"]:
            if e["variant"] == str(variant) and e["ok"] and e[key] \
                    and not e[key]["degenerate"]:
                lams.append(e[key]["lambda_s"])
    if not lams:
        return []
    return lams if per_interblink else [float(np.mean(lams))]


def correlate_cohort(
    report_dicts: list[dict],
    meta: list[SubjectMeta],
    axis: str = "y",
    meta_field: str = "osdi",
    variant: VariantId = DEFAULT_VARIANT,
    per_interblink: bool = False,
) -> tuple[CorrelationResult, list[tuple[float, float]]]:
    """Pair each subject's metadata value with its characteristic time and
    correlate; returns the statistics plus the scatter points."""
    if axis not in ("x", "y"):
        raise ValueError("axis must be 'x' or 'y'")
    by_subject = {m.subject_id: m for m in meta}
    points = []
    for rep in report_dicts:
        m = by_subject.get(rep.get("subject_id"))
        if m is None:
            continue
        value = getattr(m, meta_field)
        if value is None:
            continue
        for lam in subject_lambda(rep, axis, variant, per_interblink):
            points.append((float(value), float(lam)))
    if len(points) < 2:
        raise PipelineError("fewer than 2 usable (metadata, lambda) pairs")
    corr = pearson([p[0] for p in points], [p[1] for p in points])
    return corr, points


_SVG_W, _SVG_H = 480, 360
_MARGIN = 56.0
_TICKS = 5


def _svg_float(v: float) -> str:
    return f"{v:.2f}"


def emit_scatter_svg(points: list[tuple[float, float]], xlabel: str, ylabel: str,
                     corr: CorrelationResult | None = None) -> str:
    """Deterministic SVG 1.1 scatter plot: one circle per point, one line
    element for the OLS fit, axes and ticks drawn as paths."""
    if not points:
        raise ValueError("need at least one point")
    xs = np.array([p[0] for p in points], dtype=np.float64)
    ys = np.array([p[1] for p in points], dtype=np.float64)
    x_lo, x_hi = _pad_range(xs.min(), xs.max())
    y_lo, y_hi = _pad_range(ys.min(), ys.max())

    def sx(v):
        return _MARGIN + (v - x_lo) / (x_hi - x_lo) * (_SVG_W - 2 * _MARGIN)

    def sy(v):
        return _SVG_H - _MARGIN - (v - y_lo) / (y_hi - y_lo) * (_SVG_H - 2 * _MARGIN)

    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{_SVG_W}" height="{_SVG_H}" viewBox="0 0 {_SVG_W} {_SVG_H}">',
        f'<rect width="{_SVG_W}" height="{_SVG_H}" fill="white"/>',
        f'<path d="M {_svg_float(_MARGIN)} {_svg_float(_MARGIN)} '
        f'L {_svg_float(_MARGIN)} {_svg_float(_SVG_H - _MARGIN)} '
        f'L {_svg_float(_SVG_W - _MARGIN)} {_svg_float(_SVG_H - _MARGIN)}" '
        'fill="none" stroke="black" stroke-width="1"/>',
    ]
    for i in range(_TICKS):
        fx = x_lo + (x_hi - x_lo) * i / (_TICKS - 1)
        fy = y_lo + (y_hi - y_lo) * i / (_TICKS - 1)
        px, py = sx(fx), sy(fy)
        parts.append(f'<path d="M {_svg_float(px)} {_svg_float(_SVG_H - _MARGIN)} '
                     f'L {_svg_float(px)} {_svg_float(_SVG_H - _MARGIN + 5)}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_svg_float(px)}" y="{_svg_float(_SVG_H - _MARGIN + 18)}" '
                     f'font-size="10" text-anchor="middle">{fx:.2f}</text>')
        parts.append(f'<path d="M {_svg_float(_MARGIN)} {_svg_float(py)} '
                     f'L {_svg_float(_MARGIN - 5)} {_svg_float(py)}" '
                     'stroke="black" stroke-width="1"/>')
        parts.append(f'<text x="{_svg_float(_MARGIN - 8)}" y="{_svg_float(py + 3)}" '
                     f'font-size="10" text-anchor="end">{fy:.2f}</text>')
    parts.append(f'<text x="{_svg_float(_SVG_W / 2)}" y="{_svg_float(_SVG_H - 12)}" '
                 f'font-size="12" text-anchor="middle">{xlabel}</text>')
    parts.append(f'<text x="14" y="{_svg_float(_SVG_H / 2)}" font-size="12" '
                 f'text-anchor="middle" transform="rotate(-90 14 {_svg_float(_SVG_H / 2)})">'
                 f'{ylabel}</text>')

    if corr is not None:
        y0 = corr.intercept + corr.slope * x_lo
        y1 = corr.intercept + corr.slope * x_hi
        parts.append(f'<line x1="{_svg_float(sx(x_lo))}" y1="{_svg_float(sy(y0))}" '
                     f'x2="{_svg_float(sx(x_hi))}" y2="{_svg_float(sy(y1))}" '
                     'stroke="steelblue" stroke-width="1.5"/>')
        parts.append(f'<text x="{_svg_float(_SVG_W - _MARGIN)}" y="{_svg_float(_MARGIN - 8)}" '
                     f'font-size="12" text-anchor="end">r={corr.r:.3f}</text>')
    for px, py in points:
        parts.append(f'<circle cx="{_svg_float(sx(px))}" cy="{_svg_float(sy(py))}" '
                     'r="3" fill="darkorange" stroke="black" stroke-width="0.5"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _pad_range(lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        pad = max(abs(lo) * 0.1, 0.5)
        return lo - pad, lo + pad
    pad = (hi - lo) * 0.08
    return lo - pad, hi + pad


def trajectories_csv(path: str | os.PathLike, report: AnalysisReport) -> None:
    """Write every kept trajectory of every entry that retained them."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["interblink", "variant", "traj_id", "frame", "x", "y", "status"])
        for ib in report.interblinks:
            for e in ib.entries:
                if not e.trajectories:
                    continue
                for tid, tr in enumerate(e.trajectories):
                    for k in range(tr.positions.shape[0]):
                        writer.writerow([
                            ib.index, str(e.variant), tid, ib.start + k,
                            f"{tr.positions[k, 0]:.4f}", f"{tr.positions[k, 1]:.4f}",
                            tr.status.value,
                        ])
