import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

from lipidflow.enhance import (
    EnhancementKind,
    enhance_frames,
    laplacian_level,
    local_hist_eq,
    subtract_average,
    unsharp,
)


def test_subtract_average_examples():
    mean = np.full((8, 8), 90.0)
    assert (subtract_average(np.full((8, 8), 90), mean) == 128).all()
    assert (subtract_average(np.full((8, 8), 140), mean) == 178).all()
    # residual -200 clamps to 0 after the +128 bias
    mean_high = np.full((8, 8), 220.0)
    assert (subtract_average(np.full((8, 8), 20), mean_high) == 0).all()


def test_subtract_average_dimension_mismatch():
    with pytest.raises(ValueError):
        subtract_average(np.zeros((4, 4)), np.zeros((8, 8)))


def test_unsharp_constant_and_zero_amount():
    const = np.full((32, 32), 77, dtype=np.uint8)
    assert np.array_equal(unsharp(const), const)
    tex = np.random.default_rng(0).integers(0, 255, (32, 32)).astype(np.uint8)
    assert np.array_equal(unsharp(tex, 2.0, 0.0), tex)


def test_unsharp_step_edge_overshoot():
    # oracle: direct 1-D convolution of the step profile with the same
    # truncated Gaussian, replicate-padded
    step = np.where(np.arange(64) < 32, 50.0, 200.0)
    frame = np.tile(step, (16, 1))
    sigma, amount = 2.0, 1.5
    radius = max(1, round(3 * sigma))
    xs = np.arange(-radius, radius + 1)
    taps = np.exp(-(xs**2) / (2 * sigma**2))
    taps /= taps.sum()
    padded = np.pad(step, radius, mode="edge")
    blurred = np.convolve(padded, taps, mode="valid")
    expected = np.clip(np.rint(step + amount * (step - blurred)), 0, 255)

    out = unsharp(frame, sigma, amount)
    assert np.array_equal(out[8], expected.astype(np.uint8))
    assert out[8, 28:32].min() < 50  # undershoot on the dark side
    assert out[8, 32:36].max() > 200  # overshoot on the bright side


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 255))
def test_laplacian_constant_is_mid_gray(value):
    frame = np.full((32, 32), value, dtype=np.uint8)
    assert (laplacian_level(frame, 1) == 128).all()


def test_laplacian_low_frequency_ramp_near_mid_gray():
    # oracle: independent direct pyramid on the ramp (scipy correlations)
    ramp = np.tile(np.linspace(40, 200, 64), (64, 1))
    k = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0

    def blur(im):
        return ndimage.correlate1d(
            ndimage.correlate1d(im, k, axis=0, mode="nearest"), k, axis=1, mode="nearest")

    g0 = ramp
    g1 = blur(g0)[::2, ::2]
    g2 = blur(g1)[::2, ::2]

    def up(im, shape):
        out = np.zeros((2 * im.shape[0], 2 * im.shape[1]))
        out[::2, ::2] = im
        return (4.0 * blur(out))[: shape[0], : shape[1]]

    band = g1 - up(g2, g1.shape)
    expected = np.clip(np.rint(up(band, (64, 64)) + 128), 0, 255)
    out = laplacian_level(ramp, 1)
    assert np.array_equal(out, expected.astype(np.uint8))
    assert np.abs(out.astype(int) - 128).max() <= 3


def test_laplacian_too_small():
    with pytest.raises(ValueError):
        laplacian_level(np.zeros((64, 64), dtype=np.uint8), 5)


def test_clahe_constant_stays_constant():
    out = local_hist_eq(np.full((64, 64), 93, dtype=np.uint8))
    assert np.unique(out).size == 1


def test_clahe_expands_low_contrast_region():
    rng = np.random.default_rng(5)
    frame = np.empty((64, 128), dtype=np.uint8)
    frame[:, :64] = rng.integers(100, 111, (64, 64))
    frame[:, 64:] = rng.integers(100, 201, (64, 64))
    out = local_hist_eq(frame, tile=64, clip=4.0)
    left_in = np.ptp(frame[:, :48])
    left_out = np.ptp(out[:, :48])
    assert left_out > left_in


def test_clahe_uniform_full_range_near_identity():
    # per-tile uniform histogram -> linear CDF -> mapping close to identity
    rng = np.random.default_rng(7)
    frame = rng.integers(0, 256, (64, 64)).astype(np.uint8)
    out = local_hist_eq(frame, tile=64, clip=256.0)
    assert np.abs(out.astype(int) - frame.astype(int)).max() <= 2


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_all_kinds_shape_preserving_and_pure(seed):
    rng = np.random.default_rng(seed)
    frames = [rng.integers(0, 256, (32, 32)).astype(np.uint8) for _ in range(3)]
    for kind in EnhancementKind:
        out1 = enhance_frames(frames, kind, tile=16)
        out2 = enhance_frames(frames, kind, tile=16)
        assert len(out1) == 3
        for a, b, src in zip(out1, out2, frames):
            assert a.shape == src.shape
            assert a.dtype == np.uint8
            assert np.array_equal(a, b)


def test_enhance_original_is_identity():
    frames = [np.full((16, 16), 9, dtype=np.uint8)]
    out = enhance_frames(frames, EnhancementKind.ORIGINAL)
    assert np.array_equal(out[0], frames[0])


def test_avgsub_static_sequence_maps_to_mid_gray():
    frame = np.random.default_rng(1).integers(0, 256, (16, 16)).astype(np.uint8)
    out = enhance_frames([frame] * 4, EnhancementKind.AVG_SUBTRACT)
    for o in out:
        assert np.abs(o.astype(int) - 128).max() <= 1


def test_avgsub_mean_property():
    rng = np.random.default_rng(2)
    frames = [rng.integers(0, 256, (24, 24)).astype(np.uint8) for _ in range(6)]
    out = enhance_frames(frames, EnhancementKind.AVG_SUBTRACT)
    for o in out:
        assert abs(float(np.mean(o)) - 128.0) <= 1.5


def test_kind_from_name():
    assert EnhancementKind.from_name("lappyr") is EnhancementKind.LAPLACIAN_PYRAMID
    with pytest.raises(ValueError):
        EnhancementKind.from_name("nonsense")
