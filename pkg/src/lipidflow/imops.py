"""Shared raster primitives: blurs, pyramids, bilinear sampling.

Every pyramid in the package (enhancement band-pass, optical-flow
coarse-to-fine) uses the same separable 5-tap binomial kernel so that all
stages see identical band splits.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

PYR_KERNEL = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


def as_float(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64)


def clamp_u8(img: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized Gaussian taps truncated at +/-3 sigma (radius >= 1)."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    radius = max(1, int(round(3.0 * sigma)))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    return taps / taps.sum()


def correlate1d(img: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    # mode="nearest" replicates the edge sample, the border policy used
    # throughout the package.
    return ndimage.correlate1d(as_float(img), taps, axis=axis, mode="nearest")


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    taps = gaussian_kernel1d(sigma)
    return correlate1d(correlate1d(img, taps, axis=0), taps, axis=1)


def _box_blur1d(img: np.ndarray, size: int, axis: int) -> np.ndarray:
    r = size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, size - 1 - r)
    padded = np.pad(img, pad, mode="edge")
    csum = np.cumsum(padded, axis=axis)
    zeros_shape = list(csum.shape)
    zeros_shape[axis] = 1
    csum = np.concatenate([np.zeros(zeros_shape), csum], axis=axis)
    n = img.shape[axis]
    hi = np.take(csum, np.arange(size, size + n), axis=axis)
    lo = np.take(csum, np.arange(0, n), axis=axis)
    return (hi - lo) / size


def box_blur(img: np.ndarray, size: int) -> np.ndarray:
    """Separable moving average with edge replication (running-sum based)."""
    if size < 1:
        raise ValueError("size must be >= 1")
    if size == 1:
        return as_float(img)
    return _box_blur1d(_box_blur1d(as_float(img), size, 0), size, 1)


def pyr_down(img: np.ndarray) -> np.ndarray:
    """Binomial blur then factor-2 decimation (keeps even-index samples)."""
    smooth = correlate1d(correlate1d(img, PYR_KERNEL, axis=0), PYR_KERNEL, axis=1)
    return smooth[::2, ::2]


def pyr_up(img: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Zero-insertion x2 upsample followed by the binomial kernel, gain 4.

    The gain restores unit DC response after zero insertion (x2 per axis).
    Output is cropped to ``out_shape`` so odd parents round-trip.
    """
    h, w = img.shape
    up = np.zeros((2 * h, 2 * w), dtype=np.float64)
    up[::2, ::2] = img
    up = correlate1d(correlate1d(up, PYR_KERNEL, axis=0), PYR_KERNEL, axis=1) * 4.0
    return up[: out_shape[0], : out_shape[1]]


def gaussian_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [as_float(img)]
    for _ in range(levels - 1):
        pyr.append(pyr_down(pyr[-1]))
    return pyr


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample img at subpixel (x, y) positions; coordinates are clamped to
    the valid rectangle (edge replication outside)."""
    img = as_float(img)
    h, w = img.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.minimum(x0, w - 2) if w > 1 else np.zeros_like(x0)
    y0 = np.minimum(y0, h - 2) if h > 1 else np.zeros_like(y0)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    return top * (1.0 - fy) + bot * fy


def bilinear_sample_stack(stack: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Like :func:`bilinear_sample` for a (c, h, w) stack: the sample indices
    and weights are computed once and reused across channels."""
    _, h, w = stack.shape
    xs = np.clip(np.asarray(xs, dtype=np.float64), 0.0, w - 1.0)
    ys = np.clip(np.asarray(ys, dtype=np.float64), 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), w - 2) if w > 1 else np.zeros(xs.shape, np.intp)
    y0 = np.minimum(np.floor(ys).astype(np.intp), h - 2) if h > 1 else np.zeros(ys.shape, np.intp)
    fx = xs - x0
    fy = ys - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    return (stack[:, y0, x0] * w00 + stack[:, y0, x1] * w01
            + stack[:, y1, x0] * w10 + stack[:, y1, x1] * w11)


def bilinear_resize(img: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Resize by bilinear sampling on the corner-aligned grid."""
    h, w = img.shape
    oh, ow = out_shape
    ys = np.linspace(0.0, h - 1.0, oh) if oh > 1 else np.array([0.0])
    xs = np.linspace(0.0, w - 1.0, ow) if ow > 1 else np.array([0.0])
    grid_x, grid_y = np.meshgrid(xs, ys)
    return bilinear_sample(img, grid_x, grid_y)


def translate_int(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """Integer translation with edge replication: output(x, y) = input(x - dx, y - dy)."""
    h, w = img.shape
    ys = np.clip(np.arange(h) - dy, 0, h - 1)
    xs = np.clip(np.arange(w) - dx, 0, w - 1)
    return img[np.ix_(ys, xs)]


def warp_translate(img: np.ndarray, dx: float, dy: float) -> np.ndarray:
    """Subpixel translation by bilinear sampling: output(x, y) = input(x - dx, y - dy)."""
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_sample(img, xs - dx, ys - dy)
