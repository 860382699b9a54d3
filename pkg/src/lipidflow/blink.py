"""Blink detection by per-frame deviation from the whole-video mean frame.

Frames whose mean absolute difference to the average frame exceeds a robust
threshold (median + k * MAD) are flagged as blinks; the unflagged runs in
between become inter-blink periods, truncated at 5 seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lipidflow.video_io import VideoSequence

MAX_INTERBLINK_S = 5.0


@dataclass(frozen=True)
class MeanFrame:
    values: np.ndarray  # (h, w) float64 in [0, 255]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DistanceSeries:
    distance: np.ndarray  # per-frame mean absolute deviation
    threshold: float
    blink_flags: np.ndarray  # bool per frame, after gap absorption


@dataclass(frozen=True)
class InterBlink:
    """Inclusive frame range [start, end] free of blink flags, <= 5 s long."""

    start: int
    end: int
    fps: float

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("inter-blink start must not exceed end")
        if self.duration_s > MAX_INTERBLINK_S + 1e-9:
            raise ValueError("inter-blink longer than the 5 s cap")

    @property
    def n_frames(self) -> int:
        return self.end - self.start + 1

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps


def mean_frame(video: VideoSequence) -> MeanFrame:
    if len(video) == 0:
        raise ValueError("cannot average an empty video")
    acc = np.zeros((video.height, video.width), dtype=np.float64)
    for f in video.frames:
        acc += f.pixels
    return MeanFrame(acc / len(video))


def frame_distance(pixels: np.ndarray, mean: MeanFrame) -> float:
    """Mean absolute per-pixel difference, in intensity units."""
    px = np.asarray(pixels, dtype=np.float64)
    if px.shape != mean.values.shape:
        raise ValueError(f"frame shape {px.shape} does not match mean {mean.values.shape}")
    return float(np.mean(np.abs(px - mean.values)))


def distance_series(video: VideoSequence, mean: MeanFrame | None = None) -> np.ndarray:
    mean = mean if mean is not None else mean_frame(video)
    return np.array([frame_distance(f.pixels, mean) for f in video.frames])


def detect_blinks(distances: np.ndarray, k: float = 3.0) -> DistanceSeries:
    """Flag frames whose distance exceeds median + k * MAD.

    Non-blink gaps of <= 2 frames squeezed between blink frames are absorbed
    into the surrounding blink run so one noisy frame cannot split an event.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.size < 3:
        raise ValueError("need at least 3 frames to detect blinks")
    if k <= 0:
        raise ValueError("sensitivity k must be positive")
    med = float(np.median(d))
    mad = float(np.median(np.abs(d - med)))
    threshold = med + k * mad
    flags = d > threshold
    flags = _absorb_gaps(flags, max_gap=2)
    return DistanceSeries(d, threshold, flags)


def _absorb_gaps(flags: np.ndarray, max_gap: int) -> np.ndarray:
    out = flags.copy()
    idx = np.flatnonzero(flags)
    for a, b in zip(idx[:-1], idx[1:]):
        if 1 < b - a <= max_gap + 1:
            out[a:b] = True
    return out


def extract_interblinks(
    video: VideoSequence, flags: np.ndarray, min_s: float = 0.5
) -> list[InterBlink]:
    """Maximal unflagged runs lasting >= min_s, truncated to the first 5 s."""
    if min_s <= 0:
        raise ValueError("min_s must be positive")
    flags = np.asarray(flags, dtype=bool)
    if flags.size != len(video):
        raise ValueError("flag vector length does not match video")
    fps = video.fps
    max_frames = int(np.floor(MAX_INTERBLINK_S * fps + 1e-9))

    out: list[InterBlink] = []
    i = 0
    n = flags.size
    while i < n:
        if flags[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and not flags[j + 1]:
            j += 1
        if (j - i + 1) / fps >= min_s:
            end = min(j, i + max_frames - 1)
            out.append(InterBlink(i, end, fps))
        i = j + 1
    return out


def blink_runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive [start, end] runs of flagged frames, for reporting."""
    flags = np.asarray(flags, dtype=bool)
    runs = []
    i = 0
    while i < flags.size:
        if not flags[i]:
            i += 1
            continue
        j = i
        while j + 1 < flags.size and flags[j + 1]:
            j += 1
        runs.append((i, j))
        i = j + 1
    return runs
