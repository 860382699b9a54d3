"""Iris region-of-interest segmentation.

The tracking mask keeps pixels below the eyelash line (top of the pupil),
above the bottom iris edge found by an open active contour, and outside a
dilated pupil disk.  The contour is a function-of-x polyline with x-pinned
endpoints evolved by semi-implicit Euler steps against an edge-energy raster.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lipidflow.align import PupilCircle
from lipidflow.imops import bilinear_sample, gaussian_blur


class SegmentationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SnakeParams:
    alpha: float = 0.1  # elasticity weight
    beta: float = 0.05  # rigidity weight
    gamma: float = 2.0  # image-energy weight
    step: float = 1.0
    iters: int = 200
    tol: float = 0.1  # max point movement (px) for convergence

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("snake weights must be non-negative")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")


@dataclass(frozen=True)
class SnakeContour:
    """Open polyline (n, 2) of (x, y) with strictly increasing x."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
            raise ValueError("contour needs >= 3 (x, y) points")
        if not np.all(np.diff(pts[:, 0]) > 0):
            raise ValueError("contour x coordinates must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]

    def height_at(self, x: np.ndarray) -> np.ndarray:
        """Linearly interpolated y; NaN outside the x extent."""
        x = np.asarray(x, dtype=np.float64)
        y = np.interp(x, self.xs, self.ys)
        return np.where((x < self.xs[0]) | (x > self.xs[-1]), np.nan, y)


@dataclass
class IrisMask:
    mask: np.ndarray  # bool raster
    pupil: PupilCircle
    eyelash_y: int
    bottom: SnakeContour

    @property
    def shape(self) -> tuple[int, int]:
        return self.mask.shape


def gradient_magnitude(pixels: np.ndarray) -> np.ndarray:
    """sqrt(gx^2 + gy^2) of the sigma-2 blurred image; central differences
    inside, one-sided at the borders."""
    blurred = gaussian_blur(np.asarray(pixels, dtype=np.float64), 2.0)
    gy, gx = np.gradient(blurred)
    return np.sqrt(gx * gx + gy * gy)


def snake_energy(contour: np.ndarray, energy: np.ndarray, params: SnakeParams) -> float:
    """Discretized objective: alpha|v'|^2 + beta|v''|^2 - gamma * R(v)."""
    pts = np.asarray(contour, dtype=np.float64)
    d1 = np.diff(pts, axis=0)
    d2 = np.diff(pts, 2, axis=0)
    ext = bilinear_sample(energy, pts[:, 0], pts[:, 1])
    return float(params.alpha * np.sum(d1 * d1) + params.beta * np.sum(d2 * d2)
                 - params.gamma * np.sum(ext))


def _difference_operator(n: int, order: int) -> np.ndarray:
    d = np.diff(np.eye(n), n=order, axis=0)
    return d


def _implicit_solvers(n: int, params: SnakeParams) -> tuple[np.ndarray, np.ndarray]:
    """Inverses of (I + step*A) for the y system and the x system with
    pinned first/last rows."""
    d1 = _difference_operator(n, 1)
    d2 = _difference_operator(n, 2)
    a = params.alpha * (d1.T @ d1) + params.beta * (d2.T @ d2)
    m = np.eye(n) + params.step * a
    m_pinned = m.copy()
    m_pinned[0, :] = 0.0
    m_pinned[-1, :] = 0.0
    m_pinned[0, 0] = 1.0
    m_pinned[-1, -1] = 1.0
    try:
        return np.linalg.inv(m), np.linalg.inv(m_pinned)
    except np.linalg.LinAlgError as exc:
        raise SegmentationError(f"singular snake system: {exc}") from exc


def evolve_snake(init: SnakeContour, energy: np.ndarray, params: SnakeParams) -> SnakeContour:
    """Semi-implicit gradient descent on the snake objective.

    Internal forces are handled implicitly through (I + step*A); the external
    force gamma * grad(R) is sampled bilinearly at the current points.  The
    first and last points keep their x coordinate; all y coordinates are free.
    Stops when the largest point movement drops below ``tol``.
    """
    pts = init.points.copy()
    h, w = energy.shape
    if np.any(pts[:, 0] < 0) or np.any(pts[:, 0] > w - 1) or \
       np.any(pts[:, 1] < 0) or np.any(pts[:, 1] > h - 1):
        raise ValueError("initial contour leaves the energy raster")

    inv_free, inv_pinned = _implicit_solvers(pts.shape[0], params)
    gy, gx = np.gradient(np.asarray(energy, dtype=np.float64))

    for _ in range(params.iters):
        fx = params.gamma * bilinear_sample(gx, pts[:, 0], pts[:, 1])
        fy = params.gamma * bilinear_sample(gy, pts[:, 0], pts[:, 1])
        rhs_x = pts[:, 0] + params.step * fx
        rhs_x[0] = pts[0, 0]
        rhs_x[-1] = pts[-1, 0]
        new_x = inv_pinned @ rhs_x
        new_y = inv_free @ (pts[:, 1] + params.step * fy)
        new_x = np.clip(new_x, 0.0, w - 1.0)
        new_y = np.clip(new_y, 0.0, h - 1.0)
        movement = np.max(np.hypot(new_x - pts[:, 0], new_y - pts[:, 1]))
        pts[:, 0] = new_x
        pts[:, 1] = new_y
        if movement < params.tol:
            break

    order = np.argsort(pts[:, 0], kind="stable")
    pts = pts[order]
    for i in range(1, pts.shape[0]):  # break exact ties left by the sort
        if pts[i, 0] <= pts[i - 1, 0]:
            pts[i, 0] = pts[i - 1, 0] + 1e-6
    return SnakeContour(pts)


def edge_energy(pixels: np.ndarray, smooth_sigma: float = 0.0) -> np.ndarray:
    """Squared gradient magnitude, optionally blurred, normalized to peak 1.

    Normalization keeps the external-force scale comparable across images so
    the default snake weights behave consistently.
    """
    mag2 = gradient_magnitude(pixels) ** 2
    if smooth_sigma > 0:
        mag2 = gaussian_blur(mag2, smooth_sigma)
    peak = mag2.max()
    return mag2 / peak if peak > 0 else mag2


_ARC_RADIUS_FACTOR = 2.2
_PUPIL_DILATION = 1.1
_SNAKE_POINTS = 100
_MIN_MASK_FRAC = 0.01
# coarse blurs widen the attraction basin, the fine pass re-localizes
_ENERGY_SIGMAS = (16.0, 8.0, 2.0)


def initial_arc(pupil: PupilCircle, shape: tuple[int, int]) -> SnakeContour:
    """Lower-half circular arc of radius 2.2*r, resampled over x."""
    h, w = shape
    radius = _ARC_RADIUS_FACTOR * pupil.r
    xs = np.linspace(pupil.cx - radius, pupil.cx + radius, _SNAKE_POINTS)
    ys = pupil.cy + np.sqrt(np.maximum(radius**2 - (xs - pupil.cx) ** 2, 0.0))
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    for i in range(1, xs.size):  # clipping can collapse x at the frame edge
        if xs[i] <= xs[i - 1]:
            xs[i] = xs[i - 1] + 1e-6
    return SnakeContour(np.column_stack([xs, ys]))


def build_iris_mask(pixels: np.ndarray, pupil: PupilCircle,
                    params: SnakeParams | None = None) -> IrisMask:
    """Assemble the tracking mask from the eyelash line, the evolved bottom
    contour, and the dilated pupil disk."""
    params = params or SnakeParams()
    px = np.asarray(pixels, dtype=np.float64)
    h, w = px.shape

    eyelash_y = int(round(pupil.cy - pupil.r))
    contour = initial_arc(pupil, (h, w))
    for sigma in _ENERGY_SIGMAS:
        contour = evolve_snake(contour, edge_energy(px, sigma), params)

    ys, xs = np.mgrid[0:h, 0:w]
    bottom = contour.height_at(xs[0].astype(np.float64))
    below_lash = ys > eyelash_y
    outside_pupil = (xs - pupil.cx) ** 2 + (ys - pupil.cy) ** 2 > (_PUPIL_DILATION * pupil.r) ** 2
    above_bottom = np.where(np.isnan(bottom)[None, :], False, ys < bottom[None, :])
    mask = below_lash & outside_pupil & above_bottom

    if mask.sum() < _MIN_MASK_FRAC * mask.size:
        raise SegmentationError(
            f"iris mask covers only {mask.sum()} px (< {_MIN_MASK_FRAC:.0%} of frame)")
    return IrisMask(mask, pupil, eyelash_y, contour)
