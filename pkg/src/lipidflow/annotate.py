"""Sparse manual annotations and their densification.

Annotations arrive as JSON: ``{"interblink": id, "fps": f, "tracks":
[{"points": [[frame, x, y], ...]}, ...]}`` where each track lists keyframes
at strictly increasing frame indices (roughly every tenth frame in practice).
Intermediate frames are linearly interpolated per coordinate, and the
densified tracks reduce to a displacement series with the same median and
sign conventions as the tracker output.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from lipidflow.track import DisplacementSeries


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationTrack:
    frames: np.ndarray  # strictly increasing keyframe indices
    xs: np.ndarray
    ys: np.ndarray

    def __post_init__(self):
        if self.frames.size < 2:
            raise AnnotationError("a track needs at least 2 keyframes")
        if np.any(np.diff(self.frames) <= 0):
            raise AnnotationError("keyframe indices must be strictly increasing")

    @property
    def span(self) -> tuple[int, int]:
        return int(self.frames[0]), int(self.frames[-1])


@dataclass(frozen=True)
class AnnotationSet:
    tracks: tuple[AnnotationTrack, ...]
    interblink_id: int
    fps: float

    def __post_init__(self):
        if not self.tracks:
            raise AnnotationError("annotation set has no tracks")
        if self.fps <= 0:
            raise AnnotationError("fps must be positive")


def load_annotations(path: str | os.PathLike) -> AnnotationSet:
    with open(path) as fh:
        raw = json.load(fh)
    try:
        tracks_raw = raw["tracks"]
        interblink_id = int(raw["interblink"])
        fps = float(raw["fps"])
    except (KeyError, TypeError, ValueError) as exc:
        raise AnnotationError(f"{path}: malformed annotation file: {exc}") from exc
    if not isinstance(tracks_raw, list) or not tracks_raw:
        raise AnnotationError(f"{path}: 'tracks' must be a non-empty list")

    tracks = []
    for idx, tr in enumerate(tracks_raw):
        pts = tr.get("points") if isinstance(tr, dict) else None
        if not pts:
            raise AnnotationError(f"{path}: track {idx} has no points")
        arr = np.asarray(pts, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise AnnotationError(f"{path}: track {idx} points must be [frame, x, y] triples")
        try:
            tracks.append(AnnotationTrack(arr[:, 0].astype(int), arr[:, 1], arr[:, 2]))
        except AnnotationError as exc:
            raise AnnotationError(f"{path}: track {idx}: {exc}") from exc
    return AnnotationSet(tuple(tracks), interblink_id, fps)


def densify(track: AnnotationTrack, frame_range: tuple[int, int]) -> np.ndarray:
    """Per-frame (x, y) over the inclusive frame range by linear
    interpolation between keyframes; no extrapolation is allowed."""
    lo, hi = frame_range
    if lo > hi:
        raise AnnotationError("empty frame range")
    first, last = track.span
    if lo < first or hi > last:
        raise AnnotationError(
            f"range [{lo}, {hi}] outside annotated span [{first}, {last}]")
    frames = np.arange(lo, hi + 1, dtype=np.float64)
    xs = np.interp(frames, track.frames.astype(np.float64), track.xs)
    ys = np.interp(frames, track.frames.astype(np.float64), track.ys)
    return np.column_stack([xs, ys])


def annotation_displacement(
    ann: AnnotationSet, frame_range: tuple[int, int] | None = None
) -> DisplacementSeries:
    """Median-aggregated displacement of the densified tracks, with the
    tracker's sign conventions (dy upward-positive, dx rightward-positive)."""
    if frame_range is None:
        lo = max(t.span[0] for t in ann.tracks)
        hi = min(t.span[1] for t in ann.tracks)
        frame_range = (lo, hi)
    dense = np.stack([densify(t, frame_range) for t in ann.tracks])  # (n_tr, n_fr, 2)
    dx = np.median(dense[:, :, 0] - dense[:, 0:1, 0], axis=0)
    dy = np.median(dense[:, 0:1, 1] - dense[:, :, 1], axis=0)
    n = dense.shape[1]
    t = np.arange(n, dtype=np.float64) / ann.fps
    return DisplacementSeries(t, dx, dy, np.full(n, dense.shape[0], dtype=int))
