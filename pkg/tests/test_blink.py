import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipidflow.blink import (
    InterBlink,
    detect_blinks,
    extract_interblinks,
    frame_distance,
    mean_frame,
)
from lipidflow.video_io import sequence_from_arrays


def video_of(arrays, fps=30.0):
    return sequence_from_arrays([np.asarray(a, dtype=np.uint8) for a in arrays], fps)


def test_mean_frame_two_frames():
    v = video_of([np.zeros((4, 4)), np.full((4, 4), 100)])
    assert np.allclose(mean_frame(v).values, 50.0)


def test_mean_frame_single_and_copies():
    f = np.arange(16).reshape(4, 4)
    assert np.allclose(mean_frame(video_of([f])).values, f)
    assert np.allclose(mean_frame(video_of([f] * 5)).values, f)


def test_mean_frame_empty_video():
    with pytest.raises(ValueError):
        mean_frame(sequence_from_arrays([], 30.0))


def test_frame_distance_examples():
    v = video_of([np.full((2, 2), 10)])
    m = mean_frame(v)
    assert frame_distance(np.full((2, 2), 10), m) == 0.0
    assert frame_distance(np.full((2, 2), 20), m) == 10.0
    # hand sum: |0| + |0| + |10| + |30| = 40; / 4 pixels = 10
    frame = np.array([[10, 10], [20, 40]])
    assert frame_distance(frame, m) == pytest.approx(10.0)


def test_frame_distance_dimension_mismatch():
    m = mean_frame(video_of([np.zeros((4, 4))]))
    with pytest.raises(ValueError):
        frame_distance(np.zeros((2, 2)), m)


def test_detect_blinks_constant_distances():
    series = detect_blinks(np.full(50, 4.2))
    assert series.threshold == pytest.approx(4.2)
    assert not series.blink_flags.any()


def test_detect_blinks_plateau():
    # oracle: direct median/MAD computation on the constructed series
    d = np.concatenate([np.full(95, 1.0), np.full(10, 50.0), np.full(95, 1.0)])
    med = np.median(d)
    mad = np.median(np.abs(d - med))
    expected_flags = d > med + 3.0 * mad
    series = detect_blinks(d, 3.0)
    assert np.array_equal(series.blink_flags, expected_flags)
    assert series.blink_flags[95:105].all()
    assert series.blink_flags.sum() == 10


def test_detect_blinks_gap_absorption():
    d = np.full(30, 1.0)
    d[10:13] = 50.0
    d[14:17] = 50.0  # 1-frame dip at 13
    series = detect_blinks(d, 3.0)
    assert series.blink_flags[10:17].all()
    assert series.blink_flags.sum() == 7


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 1e6), st.integers(0, 2**31 - 1))
def test_detect_blinks_scale_invariance(scale, seed):
    d = np.random.default_rng(seed).uniform(0.5, 2.0, 60)
    d[20:25] = 40.0
    base = detect_blinks(d).blink_flags
    scaled = detect_blinks(d * scale).blink_flags
    assert np.array_equal(base, scaled)


def test_extract_interblinks_truncation_oracle():
    # runs of 0.3 s, 2 s, 7 s at 30 fps, separated by blinks (hand enumeration)
    fps = 30.0
    flags = np.ones(9 + 60 + 210 + 2, dtype=bool)
    flags[1:10] = False  # 9 frames = 0.3 s: too short
    flags[11:71] = False  # 60 frames = 2 s
    flags[72:282] = False  # 210 frames = 7 s
    video = video_of([np.zeros((4, 4))] * flags.size, fps)
    ibs = extract_interblinks(video, flags, 0.5)
    assert [(ib.start, ib.end) for ib in ibs] == [(11, 70), (72, 72 + 149)]
    assert ibs[1].duration_s == pytest.approx(5.0)


def test_extract_interblinks_no_blinks():
    video = video_of([np.zeros((4, 4))] * 120)
    ibs = extract_interblinks(video, np.zeros(120, dtype=bool))
    assert [(ib.start, ib.end) for ib in ibs] == [(0, 119)]


def test_extract_interblinks_all_flagged():
    video = video_of([np.zeros((4, 4))] * 30)
    assert extract_interblinks(video, np.ones(30, dtype=bool)) == []


@settings(max_examples=40, deadline=None)
@given(st.lists(st.booleans(), min_size=3, max_size=400), st.floats(10.0, 60.0))
def test_interblinks_never_exceed_cap(flags, fps):
    video = video_of([np.zeros((2, 2))] * len(flags), fps)
    for ib in extract_interblinks(video, np.array(flags, dtype=bool)):
        assert ib.duration_s <= 5.0 + 1e-9
        assert not any(flags[ib.start : ib.end + 1])


def test_interblink_invariants():
    with pytest.raises(ValueError):
        InterBlink(5, 4, 30.0)
    with pytest.raises(ValueError):
        InterBlink(0, 200, 30.0)  # 201 frames at 30 fps > 5 s


def test_occlusion_insertion_boundaries():
    # stationary textured scene with M occlusion frames inserted; detected
    # blink boundaries must land within +/-1 frame of the inserted interval
    rng = np.random.default_rng(11)
    scene = rng.integers(60, 200, (64, 64)).astype(np.uint8)
    ys = np.arange(64, dtype=float)[:, None]
    eyelid = np.clip(20 + 50 * ys / 54, 0, 255).astype(np.uint8) * np.ones((1, 64), np.uint8)
    eyelid_frame = np.where(ys < 54, eyelid, scene).astype(np.uint8)
    for m in range(3, 16):
        arrays = [scene] * 40 + [eyelid_frame] * m + [scene] * 40
        video = video_of(arrays)
        from lipidflow.blink import blink_runs, distance_series

        flags = detect_blinks(distance_series(video)).blink_flags
        runs = blink_runs(flags)
        assert len(runs) == 1, f"M={m}: runs={runs}"
        start, end = runs[0]
        assert abs(start - 40) <= 1 and abs(end - (40 + m - 1)) <= 1
