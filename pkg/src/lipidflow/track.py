"""Backward tracking of seed points and displacement aggregation.

Seeds picked on the last frame of an inter-blink are propagated back to the
first frame, per variant (flow method x enhancement).  Trajectories are then
filtered to those that begin near the bottom of the iris and end among the
highest points, and reduced frame-wise to median x/y displacement series
(dy upward-positive, dx rightward-positive).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lipidflow.enhance import EnhancementKind
from lipidflow.features import FeaturePoint
from lipidflow.flow import (
    FarnebackParams,
    FlowField,
    LKParams,
    TrackStatus,
    farneback_from_pyramids,
    lk_step,
    poly_expansion_pyramid,
    sample_flow,
)
from lipidflow.segment import IrisMask

FB_CHECK_MAX_PX = 2.0


class NoTrajectoriesError(RuntimeError):
    pass


@dataclass(frozen=True)
class VariantId:
    flow: str  # "lk" | "farneback"
    enhancement: EnhancementKind

    def __post_init__(self):
        if self.flow not in ("lk", "farneback"):
            raise ValueError(f"unknown flow method {self.flow!r}")

    def __str__(self) -> str:
        return f"{self.flow}:{self.enhancement.value}"

    @classmethod
    def parse(cls, text: str) -> "VariantId":
        flow_name, _, enh = text.partition(":")
        if not enh:
            raise ValueError(f"variant must look like 'farneback:lappyr', got {text!r}")
        return cls(flow_name, EnhancementKind.from_name(enh))


def all_variants() -> list[VariantId]:
    return [VariantId(f, e) for f in ("lk", "farneback") for e in EnhancementKind]


DEFAULT_VARIANT = VariantId("farneback", EnhancementKind.LAPLACIAN_PYRAMID)


@dataclass
class Trajectory:
    """Positions in forward time order, one per inter-blink frame.

    For lost trajectories the frames before ``valid_from`` hold the frozen
    position at which tracking stopped.
    """

    positions: np.ndarray  # (n_frames, 2) of (x, y)
    status: TrackStatus
    seed: FeaturePoint
    valid_from: int = 0

    @property
    def first(self) -> np.ndarray:
        return self.positions[0]

    @property
    def last(self) -> np.ndarray:
        return self.positions[-1]


@dataclass
class DisplacementSeries:
    t: np.ndarray
    dx: np.ndarray
    dy: np.ndarray
    n_points: np.ndarray

    def __post_init__(self):
        if not (self.dx[0] == 0.0 and self.dy[0] == 0.0):
            raise ValueError("displacement must be zero at the first frame")


def track_backwards(
    frames: list[np.ndarray],
    seeds: list[FeaturePoint],
    variant: VariantId,
    lk: LKParams | None = None,
    fb: FarnebackParams | None = None,
    fb_check: bool = True,
) -> list[Trajectory]:
    """Propagate each seed from the last frame down to the first.

    A point that leaves the frame or loses texture is frozen with a lost
    status.  With ``fb_check`` every step is re-tracked one frame forward and
    the trajectory is dropped as unreliable when the round trip misses the
    starting point by more than 2 px.
    """
    if len(frames) < 2:
        raise ValueError("need at least 2 frames to track")
    if not seeds:
        raise ValueError("need at least one seed point")
    lk = lk or LKParams()
    fb = fb or FarnebackParams()
    n_frames = len(frames)
    n_pts = len(seeds)
    h, w = frames[0].shape

    positions = np.zeros((n_frames, n_pts, 2))
    positions[-1] = [[p.x, p.y] for p in seeds]
    status = [TrackStatus.OK] * n_pts
    valid_from = [0] * n_pts

    use_fb = variant.flow == "farneback"
    pyr_cache: dict[int, list[np.ndarray]] = {}

    def fb_pyramid(k: int) -> list[np.ndarray]:
        if k not in pyr_cache:
            for stale in [i for i in pyr_cache if abs(i - k) > 1]:
                del pyr_cache[stale]
            pyr_cache[k] = poly_expansion_pyramid(frames[k], fb)
        return pyr_cache[k]

    for k in range(n_frames - 1, 0, -1):
        live = [i for i in range(n_pts) if status[i].is_ok]
        if not live:
            positions[:k] = positions[k]
            break
        cur = positions[k, live]

        if use_fb:
            back_field = farneback_from_pyramids(fb_pyramid(k), fb_pyramid(k - 1), fb)
            nxt, step_status = _dense_step(back_field, cur, (h, w))
            if fb_check:
                fwd_field = farneback_from_pyramids(fb_pyramid(k - 1), fb_pyramid(k), fb)
                rt_err = _dense_roundtrip(fwd_field, cur, nxt, step_status, (h, w))
        else:
            nxt, step_status = lk_step(frames[k], frames[k - 1], cur, lk)
            if fb_check:
                back, rt_status = lk_step(frames[k - 1], frames[k], nxt, lk)
                rt_err = [
                    math.hypot(back[j, 0] - cur[j, 0], back[j, 1] - cur[j, 1])
                    if rt_status[j].is_ok else math.inf
                    for j in range(len(live))
                ]

        for j, i in enumerate(live):
            if step_status[j].is_ok and fb_check and rt_err[j] > FB_CHECK_MAX_PX:
                step_status[j] = TrackStatus.LOST_FB_CHECK
            if step_status[j].is_ok:
                positions[k - 1, i] = nxt[j]
            else:
                status[i] = step_status[j]
                valid_from[i] = k
                positions[:k, i] = positions[k, i]

    return [
        Trajectory(positions[:, i].copy(), status[i], seeds[i], valid_from[i])
        for i in range(n_pts)
    ]


def _dense_step(field: FlowField, pts: np.ndarray, shape: tuple[int, int]):
    """Advance points through a dense field; leaving the frame loses the point."""
    h, w = shape
    out = pts.copy()
    statuses = []
    for j in range(pts.shape[0]):
        u, v = sample_flow(field, pts[j, 0], pts[j, 1])
        x, y = pts[j, 0] + u, pts[j, 1] + v
        if 0.0 <= x <= w - 1 and 0.0 <= y <= h - 1:
            out[j] = (x, y)
            statuses.append(TrackStatus.OK)
        else:
            statuses.append(TrackStatus.LOST_OUT_OF_BOUNDS)
    return out, statuses


def _dense_roundtrip(fwd_field: FlowField, cur: np.ndarray, nxt: np.ndarray,
                     step_status, shape) -> list[float]:
    """Distance between each starting point and its forward re-track."""
    errs = []
    for j in range(nxt.shape[0]):
        if not step_status[j].is_ok:
            errs.append(math.inf)
            continue
        u, v = sample_flow(fwd_field, nxt[j, 0], nxt[j, 1])
        errs.append(math.hypot(nxt[j, 0] + u - cur[j, 0], nxt[j, 1] + v - cur[j, 1]))
    return errs


def filter_trajectories(
    trajs: list[Trajectory],
    mask: IrisMask,
    bottom_frac: float = 0.15,
    top_frac: float = 0.25,
) -> list[Trajectory]:
    """Keep Ok trajectories starting in the bottom band of the mask column
    they began in, then keep the top ``top_frac`` by final height."""
    h, w = mask.mask.shape
    survivors = []
    for tr in trajs:
        if not tr.status.is_ok:
            continue
        x = float(tr.first[0])
        if not 0 <= x <= w - 1:
            continue
        # the column's extent runs from the eyelash line to the bottom
        # contour; the pupil exclusion does not shrink it
        y_bot = float(mask.bottom.height_at(np.array([x]))[0])
        if np.isnan(y_bot):
            continue
        y_top = float(mask.eyelash_y)
        band_top = y_bot - bottom_frac * (y_bot - y_top)
        if band_top <= tr.first[1] <= y_bot + 0.5:
            survivors.append(tr)
    if not survivors:
        raise NoTrajectoriesError("no trajectory starts near the bottom of the iris")

    keep = max(1, math.ceil(top_frac * len(survivors)))
    ranked = sorted(range(len(survivors)), key=lambda i: (survivors[i].last[1], i))
    chosen = sorted(ranked[:keep])
    return [survivors[i] for i in chosen]


def aggregate_displacement(trajs: list[Trajectory], fps: float) -> DisplacementSeries:
    """Frame-wise median of per-trajectory displacement from the first frame."""
    if not trajs:
        raise ValueError("need at least one trajectory")
    pos = np.stack([tr.positions for tr in trajs])  # (n_traj, n_frames, 2)
    dx = np.median(pos[:, :, 0] - pos[:, 0:1, 0], axis=0)
    dy = np.median(pos[:, 0:1, 1] - pos[:, :, 1], axis=0)
    n = pos.shape[1]
    t = np.arange(n, dtype=np.float64) / fps
    return DisplacementSeries(t, dx, dy, np.full(n, pos.shape[0], dtype=int))
