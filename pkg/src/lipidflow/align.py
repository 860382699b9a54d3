"""Pupil localization and per-inter-blink translational alignment.

The pupil is found as the largest 4-connected dark component after a dark
intensity-quantile threshold; every frame of an inter-blink is then shifted
by an integer offset so its pupil center matches the first frame's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from lipidflow.blink import InterBlink
from lipidflow.imops import gaussian_blur, translate_int
from lipidflow.video_io import VideoSequence

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_MIN_PUPIL_AREA_FRAC = 0.001
# A pupil is a dark minority region; if the dark-quantile mask floods most of
# the frame (flat image) there is nothing selective to localize.
_MAX_MASK_FRAC = 0.5


class PupilNotFoundError(RuntimeError):
    pass


class AlignmentError(RuntimeError):
    pass


@dataclass(frozen=True)
class PupilCircle:
    cx: float
    cy: float
    r: float

    def __post_init__(self):
        if self.r <= 0:
            raise ValueError("pupil radius must be positive")


@dataclass
class AlignedInterBlink:
    frames: list[np.ndarray]  # aligned uint8 rasters
    offsets: list[tuple[int, int]]  # integer (dx, dy) applied per frame
    pupils: list[PupilCircle]  # circles located before alignment
    interblink: InterBlink
    fps: float


def locate_pupil(pixels: np.ndarray, dark_percentile: float = 0.05) -> PupilCircle:
    """Centroid + equivalent radius of the largest dark connected component.

    Pipeline: Gaussian blur (sigma 3), threshold at the dark intensity
    quantile, one 3x3 morphological opening, largest 4-connected component.
    """
    px = np.asarray(pixels, dtype=np.float64)
    if px.shape[0] < 32 or px.shape[1] < 32:
        raise ValueError("frame must be at least 32x32 for pupil localization")
    if not 0.0 < dark_percentile <= 0.25:
        raise ValueError("dark_percentile must lie in (0, 0.25]")

    blurred = gaussian_blur(px, 3.0)
    thresh = np.quantile(blurred, dark_percentile)
    mask = blurred <= thresh
    if mask.mean() > _MAX_MASK_FRAC:
        raise PupilNotFoundError("no selective dark region (image too uniform)")
    mask = ndimage.binary_opening(mask, structure=np.ones((3, 3), dtype=bool), iterations=1)

    labels, n = ndimage.label(mask, structure=_FOUR_CONNECTED)
    if n == 0:
        raise PupilNotFoundError("no dark component found")
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    best = int(np.argmax(areas)) + 1
    area = float(areas[best - 1])
    if area < _MIN_PUPIL_AREA_FRAC * px.size:
        raise PupilNotFoundError(f"largest dark component too small ({area:.0f} px)")

    cy, cx = ndimage.center_of_mass(mask, labels, best)
    return PupilCircle(cx=float(cx), cy=float(cy), r=float(np.sqrt(area / np.pi)))


def align_interblink(
    video: VideoSequence, ib: InterBlink, dark_percentile: float = 0.05
) -> AlignedInterBlink:
    """Translate every frame of the inter-blink so pupil centers coincide
    with the first frame's; exposed borders are edge-replicated."""
    pupils: list[PupilCircle] = []
    for i in range(ib.start, ib.end + 1):
        try:
            pupils.append(locate_pupil(video.frames[i].pixels, dark_percentile))
        except PupilNotFoundError as exc:
            raise AlignmentError(f"pupil not found in frame {i}: {exc}") from exc

    ref = pupils[0]
    frames: list[np.ndarray] = []
    offsets: list[tuple[int, int]] = []
    for k, pupil in enumerate(pupils):
        dx = int(round(ref.cx - pupil.cx))
        dy = int(round(ref.cy - pupil.cy))
        if k == 0:
            dx = dy = 0
        offsets.append((dx, dy))
        src = video.frames[ib.start + k].pixels
        frames.append(src if dx == 0 and dy == 0 else translate_int(src, dx, dy))
    return AlignedInterBlink(frames, offsets, pupils, ib, video.fps)
