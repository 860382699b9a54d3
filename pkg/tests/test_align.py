import numpy as np
import pytest

from lipidflow.align import (
    AlignmentError,
    PupilCircle,
    PupilNotFoundError,
    align_interblink,
    locate_pupil,
)
from lipidflow.blink import InterBlink
from lipidflow.imops import translate_int
from lipidflow.video_io import sequence_from_arrays


def disk_frame(size=256, cx=128.0, cy=128.0, r=40.0, dark=30, bright=150):
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    return np.where(inside, dark, bright).astype(np.uint8)


def test_locate_pupil_disk_geometry():
    # oracle: analytic geometry of the generated disk
    frame = disk_frame()
    pupil = locate_pupil(frame)
    assert abs(pupil.cx - 128.0) < 0.5
    assert abs(pupil.cy - 128.0) < 0.5
    assert abs(pupil.r - 40.0) < 2.0


def test_locate_pupil_uniform_frame():
    with pytest.raises(PupilNotFoundError):
        locate_pupil(np.full((64, 64), 200, dtype=np.uint8))


def test_locate_pupil_prefers_larger_component():
    frame = np.full((128, 128), 150, dtype=np.uint8)
    ys, xs = np.mgrid[0:128, 0:128].astype(float)
    big = (xs - 40) ** 2 + (ys - 64) ** 2 <= 500 / np.pi
    small = (xs - 100) ** 2 + (ys - 64) ** 2 <= 200 / np.pi
    frame[big] = 20
    frame[small] = 20
    pupil = locate_pupil(frame)
    assert abs(pupil.cx - 40) < 2.0


def test_locate_pupil_small_frame_rejected():
    with pytest.raises(ValueError):
        locate_pupil(np.zeros((16, 16), dtype=np.uint8))


def test_pupil_circle_invariants():
    with pytest.raises(ValueError):
        PupilCircle(10.0, 10.0, 0.0)


def eye_video(shifts, base=None):
    base = disk_frame(128, 64.0, 64.0, 18.0, 25, 160) if base is None else base
    arrays = [translate_int(base, dx, dy) for dx, dy in shifts]
    return sequence_from_arrays(arrays, 30.0)


def test_align_stationary_video():
    video = eye_video([(0, 0)] * 10)
    aligned = align_interblink(video, InterBlink(0, 9, 30.0))
    assert aligned.offsets == [(0, 0)] * 10
    for out, src in zip(aligned.frames, video.frames):
        assert np.array_equal(out, src.pixels)


def test_align_recovers_integer_jitter_exactly():
    shifts = [(0, 0), (3, -2), (-4, 5), (2, 2), (-1, -3), (5, 0)]
    video = eye_video(shifts)
    aligned = align_interblink(video, InterBlink(0, len(shifts) - 1, 30.0))
    # oracle: the constructed per-frame shifts, negated
    assert aligned.offsets == [(-dx, -dy) for dx, dy in shifts]


def test_align_error_names_occluded_frame():
    base = disk_frame(128, 64.0, 64.0, 18.0, 25, 160)
    arrays = [base, base, np.full((128, 128), 220, dtype=np.uint8), base]
    video = sequence_from_arrays(arrays, 30.0)
    with pytest.raises(AlignmentError, match="frame 2"):
        align_interblink(video, InterBlink(0, 3, 30.0))


def test_align_idempotent():
    shifts = [(0, 0), (4, -3), (-2, 6), (1, 1)]
    video = eye_video(shifts)
    ib = InterBlink(0, 3, 30.0)
    once = align_interblink(video, ib)
    again = align_interblink(sequence_from_arrays(once.frames, 30.0), ib)
    assert again.offsets == [(0, 0)] * 4


def test_aligned_pupils_agree_with_first_frame():
    shifts = [(0, 0), (3, -2), (-4, 5), (2, 2)]
    video = eye_video(shifts)
    aligned = align_interblink(video, InterBlink(0, 3, 30.0))
    ref = locate_pupil(aligned.frames[0])
    for frame in aligned.frames[1:]:
        p = locate_pupil(frame)
        assert abs(p.cx - ref.cx) <= 1.0
        assert abs(p.cy - ref.cy) <= 1.0
