"""FAST segment-test corners and horizontally spread seed selection.

A pixel is a corner when at least ``arc`` contiguous pixels of the radius-3
Bresenham circle are all brighter than center + threshold or all darker than
center - threshold.  The score is the largest sum of absolute differences
over any qualifying arc-length window, and 3x3 non-maximum suppression keeps
local peaks (ties are kept, so symmetric corners survive).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lipidflow.segment import IrisMask

# radius-3 Bresenham circle, circularly ordered, as (dx, dy)
CIRCLE_OFFSETS = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]
_BORDER = 3


class NoSeedsError(RuntimeError):
    pass


@dataclass(frozen=True)
class FeaturePoint:
    x: float
    y: float
    score: float


def fast_detect(pixels: np.ndarray, threshold: int = 20, arc: int = 9) -> list[FeaturePoint]:
    """Segment-test corners, sorted by (y, x); a 3 px border is excluded."""
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    if not 1 <= arc <= 16:
        raise ValueError("arc must lie in [1, 16]")
    px = np.asarray(pixels, dtype=np.int32)
    h, w = px.shape
    if h <= 2 * _BORDER or w <= 2 * _BORDER:
        return []

    center = px[_BORDER : h - _BORDER, _BORDER : w - _BORDER]
    ring = np.stack([
        px[_BORDER + dy : h - _BORDER + dy, _BORDER + dx : w - _BORDER + dx]
        for dx, dy in CIRCLE_OFFSETS
    ])
    diff = ring - center[None, :, :]
    brighter = diff > threshold
    darker = diff < -threshold

    score = np.zeros(center.shape, dtype=np.int64)
    absdiff = np.abs(diff)
    window_sum = np.zeros_like(score)
    for flags in (brighter, darker):
        run = flags.copy()
        for k in range(1, arc):
            run &= np.roll(flags, -k, axis=0)
        # run[s] == window of length `arc` starting at s fully qualifies
        for s in range(16):
            if not run[s].any():
                continue
            window_sum.fill(0)
            for k in range(arc):
                window_sum += absdiff[(s + k) % 16]
            np.maximum(score, np.where(run[s], window_sum, 0), out=score)

    corner = score > 0
    if not corner.any():
        return []

    # non-strict 3x3 non-maximum suppression
    padded = np.zeros((score.shape[0] + 2, score.shape[1] + 2), dtype=score.dtype)
    padded[1:-1, 1:-1] = score
    neigh_max = np.zeros_like(score)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            np.maximum(neigh_max, padded[1 + dy : 1 + dy + score.shape[0],
                                         1 + dx : 1 + dx + score.shape[1]], out=neigh_max)
    keep = corner & (score >= neigh_max)

    ys, xs = np.nonzero(keep)
    return [
        FeaturePoint(float(x + _BORDER), float(y + _BORDER), float(score[y, x]))
        for y, x in zip(ys, xs)
    ]


def select_seed_points(points: list[FeaturePoint], mask: IrisMask,
                       columns: int = 16) -> list[FeaturePoint]:
    """Keep the strongest in-mask point per equal-width x band of the mask."""
    if columns < 1:
        raise ValueError("columns must be >= 1")
    m = mask.mask
    in_mask = [p for p in points
               if 0 <= int(round(p.y)) < m.shape[0]
               and 0 <= int(round(p.x)) < m.shape[1]
               and m[int(round(p.y)), int(round(p.x))]]
    if not in_mask:
        raise NoSeedsError("no feature points inside the iris mask")

    cols = np.nonzero(m.any(axis=0))[0]
    x_lo, x_hi = float(cols[0]), float(cols[-1]) + 1.0
    band_w = (x_hi - x_lo) / columns
    best: dict[int, FeaturePoint] = {}
    for p in in_mask:
        band = min(int((p.x - x_lo) / band_w), columns - 1) if band_w > 0 else 0
        cur = best.get(band)
        if cur is None or p.score > cur.score:
            best[band] = p
    return [best[b] for b in sorted(best)]
