"""Frame-to-frame motion estimation, implemented from scratch.

Two estimators share the binomial image pyramid from :mod:`lipidflow.imops`:

* pyramidal iterative Lucas-Kanade for a sparse point set: per level, the
  2x2 normal equations over a square window are solved repeatedly with
  bilinearly sampled image values and central-difference gradients of the
  source frame;
* Farneback dense flow: each frame is approximated per pixel by a quadratic
  polynomial (weighted least squares under a Gaussian applicability), and the
  displacement that maps one expansion onto the other is solved from
  box-filtered normal equations, iterated coarse-to-fine.

Flow convention: u is rightward, v is downward; ``field.u[y, x]`` moves
pixel (x, y) of the source frame onto (x + u, y + v) of the target frame.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from lipidflow.imops import (
    as_float,
    bilinear_resize,
    bilinear_sample,
    bilinear_sample_stack,
    box_blur,
    gaussian_pyramid,
)


class TrackStatus(enum.Enum):
    OK = "ok"
    LOST_OUT_OF_BOUNDS = "out-of-bounds"
    LOST_LOW_TEXTURE = "low-texture"
    LOST_DIVERGED = "diverged"
    LOST_FB_CHECK = "fb-check-failed"

    @property
    def is_ok(self) -> bool:
        return self is TrackStatus.OK


@dataclass(frozen=True)
class LKParams:
    window: int = 21
    levels: int = 3
    iters: int = 30
    eps: float = 0.01
    min_eig: float = 1e-4  # of the window-normalized normal matrix

    def __post_init__(self):
        if self.window < 5 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 5")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")


@dataclass(frozen=True)
class FarnebackParams:
    levels: int = 3
    poly_n: int = 7
    poly_sigma: float = 1.5
    iters: int = 3
    blur: int = 15  # box window averaging the matching equations

    def __post_init__(self):
        if self.poly_n < 5 or self.poly_n % 2 == 0:
            raise ValueError("poly_n must be odd and >= 5")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")


@dataclass
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if self.u.shape != self.v.shape:
            raise ValueError("u and v shapes differ")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ValueError("flow field contains non-finite values")

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]


def sample_flow(field: FlowField, x: float | np.ndarray, y: float | np.ndarray):
    """Bilinear (u, v) at subpixel positions; raises when out of bounds."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if np.any(xa < 0) or np.any(xa > field.width - 1) or \
       np.any(ya < 0) or np.any(ya > field.height - 1):
        raise ValueError("sample position outside flow field")
    u = bilinear_sample(field.u, xa, ya)
    v = bilinear_sample(field.v, xa, ya)
    if np.isscalar(x) or xa.ndim == 0:
        return float(u), float(v)
    return u, v


# ---------------------------------------------------------------------------
# Lucas-Kanade


def lk_step(
    from_px: np.ndarray,
    to_px: np.ndarray,
    points: np.ndarray,
    params: LKParams | None = None,
) -> tuple[np.ndarray, list[TrackStatus]]:
    """Track (n, 2) points from ``from_px`` into ``to_px``.

    Lost points keep their input position.  Low texture is decided by the
    smallest eigenvalue of the window-normalized normal matrix at the finest
    level; divergence by failing to converge while drifting past the window.
    """
    params = params or LKParams()
    a = as_float(from_px)
    b = as_float(to_px)
    if a.shape != b.shape:
        raise ValueError("frames must share dimensions")
    h, w = a.shape
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = pts.shape[0]
    if n == 0:
        return pts.copy(), []

    levels = params.levels
    while min(h, w) // 2 ** (levels - 1) < params.window and levels > 1:
        levels -= 1  # never shrink below the matching window
    pyr_a = gaussian_pyramid(a, levels)
    pyr_b = gaussian_pyramid(b, levels)

    r = params.window // 2
    offs = np.arange(-r, r + 1, dtype=np.float64)
    off_x, off_y = np.meshgrid(offs, offs)
    off_x = off_x.ravel()[None, :]  # (1, k*k)
    off_y = off_y.ravel()[None, :]
    area = float(params.window * params.window)

    d = np.zeros((n, 2))
    status = [TrackStatus.OK] * n
    converged = np.zeros(n, dtype=bool)
    low_texture = np.zeros(n, dtype=bool)

    for level in range(levels - 1, -1, -1):
        scale = 2.0**level
        img_a = pyr_a[level]
        img_b = pyr_b[level]
        gy, gx = np.gradient(img_a)
        base = pts / scale
        wx = base[:, 0:1] + off_x
        wy = base[:, 1:2] + off_y
        patch_a = bilinear_sample(img_a, wx, wy)
        grad_x = bilinear_sample(gx, wx, wy)
        grad_y = bilinear_sample(gy, wx, wy)
        gxx = np.sum(grad_x * grad_x, axis=1)
        gxy = np.sum(grad_x * grad_y, axis=1)
        gyy = np.sum(grad_y * grad_y, axis=1)
        trace_half = (gxx + gyy) / 2.0
        disc = np.sqrt(np.maximum(trace_half**2 - (gxx * gyy - gxy * gxy), 0.0))
        min_eig = (trace_half - disc) / area
        det = gxx * gyy - gxy * gxy
        solvable = det > 1e-12

        if level == 0:
            low_texture = min_eig < params.min_eig

        d_level = d / scale
        converged[:] = False
        active = solvable.copy()
        for _ in range(params.iters):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            patch_b = bilinear_sample(
                img_b, wx[idx] + d_level[idx, 0:1], wy[idx] + d_level[idx, 1:2]
            )
            diff = patch_a[idx] - patch_b
            bx = np.sum(diff * grad_x[idx], axis=1)
            by = np.sum(diff * grad_y[idx], axis=1)
            inv_det = 1.0 / det[idx]
            step_x = (gyy[idx] * bx - gxy[idx] * by) * inv_det
            step_y = (gxx[idx] * by - gxy[idx] * bx) * inv_det
            d_level[idx, 0] += step_x
            d_level[idx, 1] += step_y
            done = np.hypot(step_x, step_y) < params.eps
            converged[idx[done]] = True
            active[idx[done]] = False
        d = d_level * scale

    new_pts = pts + d
    for i in range(n):
        if low_texture[i]:
            status[i] = TrackStatus.LOST_LOW_TEXTURE
        elif not (0.0 <= new_pts[i, 0] <= w - 1 and 0.0 <= new_pts[i, 1] <= h - 1):
            status[i] = TrackStatus.LOST_OUT_OF_BOUNDS
        elif not converged[i] and np.hypot(d[i, 0], d[i, 1]) > params.window:
            status[i] = TrackStatus.LOST_DIVERGED
        if not status[i].is_ok:
            new_pts[i] = pts[i]
    return new_pts, status


# ---------------------------------------------------------------------------
# Farneback

_BASIS = 6  # 1, x, y, x^2, y^2, xy


def _poly_inverse_metric(n: int, sigma: float) -> np.ndarray:
    xs = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-(xs * xs) / (2.0 * sigma * sigma))
    g /= g.sum()
    m2 = float(np.sum(xs * xs * g))
    m4 = float(np.sum(xs**4 * g))
    big_g = np.zeros((_BASIS, _BASIS))
    big_g[0, 0] = 1.0
    big_g[1, 1] = big_g[2, 2] = m2
    big_g[0, 3] = big_g[3, 0] = big_g[0, 4] = big_g[4, 0] = m2
    big_g[3, 3] = big_g[4, 4] = m4
    big_g[3, 4] = big_g[4, 3] = big_g[5, 5] = m2 * m2
    return np.linalg.inv(big_g)


def poly_expansion(img: np.ndarray, params: FarnebackParams) -> np.ndarray:
    """Per-pixel quadratic expansion coefficients, stacked as the 5 planes
    [b_y, b_x, a_yy, a_xx, a_xy] (the constant term is not needed for
    displacement matching)."""
    n = params.poly_n // 2
    xs = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-(xs * xs) / (2.0 * params.poly_sigma**2))
    g /= g.sum()
    xg = xs * g
    xxg = xs * xs * g

    f = as_float(img)

    def corr(data, taps, axis):
        return ndimage.correlate1d(data, taps, axis=axis, mode="nearest")

    t0 = corr(f, g, 0)   # plain vertical weight
    t1 = corr(f, xg, 0)  # y moment
    t2 = corr(f, xxg, 0)  # y^2 moment
    s00 = corr(t0, g, 1)
    s10 = corr(t0, xg, 1)
    s20 = corr(t0, xxg, 1)
    s01 = corr(t1, g, 1)
    s02 = corr(t2, g, 1)
    s11 = corr(t1, xg, 1)

    ig = _poly_inverse_metric(n, params.poly_sigma)
    moments = (s00, s10, s01, s20, s02, s11)  # basis order 1, x, y, x^2, y^2, xy

    def solve(row: int) -> np.ndarray:
        out = np.zeros_like(f)
        for j, m in enumerate(moments):
            if ig[row, j] != 0.0:
                out += ig[row, j] * m
        return out

    b_x = solve(1)
    b_y = solve(2)
    a_xx = solve(3)
    a_yy = solve(4)
    a_xy = solve(5)
    return np.stack([b_y, b_x, a_yy, a_xx, a_xy])


def poly_expansion_pyramid(img: np.ndarray, params: FarnebackParams) -> list[np.ndarray]:
    """Expansion coefficients for every pyramid level of one frame; lets
    callers tracking many frame pairs reuse per-frame work."""
    _check_farneback_size(img.shape, params)
    return [poly_expansion(level, params) for level in gaussian_pyramid(as_float(img), params.levels)]


def _check_farneback_size(shape: tuple[int, int], params: FarnebackParams) -> None:
    need = 2**params.levels * params.poly_n
    if shape[0] < need or shape[1] < need:
        raise ValueError(
            f"frame {shape[1]}x{shape[0]} too small for {params.levels} levels "
            f"with poly_n={params.poly_n} (needs >= {need} per dimension)")


_GRID_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _grid(shape: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    if shape not in _GRID_CACHE:
        if len(_GRID_CACHE) > 12:
            _GRID_CACHE.clear()
        _GRID_CACHE[shape] = tuple(np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64))
    return _GRID_CACHE[shape]


def _update_matrices(r0: np.ndarray, r1: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    ys, xs = _grid(u.shape)
    warped = bilinear_sample_stack(r1, xs + u, ys + v)

    db_y = (r0[0] - warped[0]) * 0.5
    db_x = (r0[1] - warped[1]) * 0.5
    a_yy = (r0[2] + warped[2]) * 0.5
    a_xx = (r0[3] + warped[3]) * 0.5
    a_xy = (r0[4] + warped[4]) * 0.25  # averaged and halved: off-diagonal of A

    # fold the prior displacement into the matching residual: h = A d + db
    h_y = db_y + a_yy * v + a_xy * u
    h_x = db_x + a_xy * v + a_xx * u

    g11 = a_yy * a_yy + a_xy * a_xy
    g12 = (a_yy + a_xx) * a_xy
    g22 = a_xx * a_xx + a_xy * a_xy
    m1 = a_yy * h_y + a_xy * h_x
    m2 = a_xy * h_y + a_xx * h_x
    return np.stack([g11, g12, g22, m1, m2])


_SINGULAR_DET = 1e-9


def _solve_flow(m: np.ndarray, prior_u: np.ndarray, prior_v: np.ndarray):
    g11, g12, g22, h1, h2 = m
    det = g11 * g22 - g12 * g12
    scale = np.maximum(((g11 + g22) * 0.5) ** 2, 1e-300)
    ok = det / scale > _SINGULAR_DET
    safe_det = np.where(ok, det, 1.0)
    v = np.where(ok, (g22 * h1 - g12 * h2) / safe_det, prior_v)
    u = np.where(ok, (g11 * h2 - g12 * h1) / safe_det, prior_u)
    return u, v


def farneback_from_pyramids(
    pyr_from: list[np.ndarray], pyr_to: list[np.ndarray], params: FarnebackParams | None = None
) -> FlowField:
    params = params or FarnebackParams()
    levels = len(pyr_from)
    u = np.zeros(pyr_from[-1].shape[1:])
    v = np.zeros_like(u)
    for level in range(levels - 1, -1, -1):
        shape = pyr_from[level].shape[1:]
        if u.shape != shape:
            u = bilinear_resize(u, shape) * 2.0
            v = bilinear_resize(v, shape) * 2.0
        for _ in range(params.iters):
            m = _update_matrices(pyr_from[level], pyr_to[level], u, v)
            m = np.stack([box_blur(m[c], params.blur) for c in range(5)])
            u, v = _solve_flow(m, u, v)
    return FlowField(u, v)


def farneback(
    from_px: np.ndarray, to_px: np.ndarray, params: FarnebackParams | None = None
) -> FlowField:
    """Dense flow from ``from_px`` to ``to_px``; pixels whose matching system
    is near-singular keep the coarse-to-fine prior (zero on flat frames)."""
    params = params or FarnebackParams()
    a = as_float(from_px)
    b = as_float(to_px)
    if a.shape != b.shape:
        raise ValueError("frames must share dimensions")
    _check_farneback_size(a.shape, params)
    return farneback_from_pyramids(
        poly_expansion_pyramid(a, params), poly_expansion_pyramid(b, params), params
    )
