"""Lipid-layer visibility enhancements.

Five image sources feed the tracker: the untouched input plus four per-frame
transforms (inter-blink mean subtraction, unsharp masking, one band of a
Laplacian pyramid, and contrast-limited local histogram equalization).
Signed residual/band-pass outputs are stored biased by +128 so they fit the
8-bit pipeline currency.
"""

from __future__ import annotations

import enum

import numpy as np

from lipidflow.align import AlignedInterBlink
from lipidflow.imops import as_float, clamp_u8, gaussian_blur, pyr_down, pyr_up


class EnhancementKind(enum.Enum):
    ORIGINAL = "original"
    AVG_SUBTRACT = "avgsub"
    UNSHARP = "unsharp"
    LAPLACIAN_PYRAMID = "lappyr"
    LOCAL_HIST_EQ = "clahe"

    @classmethod
    def from_name(cls, name: str) -> "EnhancementKind":
        for kind in cls:
            if kind.value == name:
                return kind
        raise ValueError(f"unknown enhancement {name!r} (expected one of "
                         f"{[k.value for k in cls]})")


def subtract_average(pixels: np.ndarray, ib_mean: np.ndarray) -> np.ndarray:
    """clamp(frame - mean + 128): static content maps to mid-gray."""
    px = as_float(pixels)
    mean = as_float(ib_mean)
    if px.shape != mean.shape:
        raise ValueError("frame and mean dimensions differ")
    return clamp_u8(px - mean + 128.0)


def unsharp(pixels: np.ndarray, sigma: float = 2.0, amount: float = 1.5) -> np.ndarray:
    """clamp(frame + amount * (frame - gaussian_blur(frame, sigma)))."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if amount < 0:
        raise ValueError("amount must be non-negative")
    px = as_float(pixels)
    return clamp_u8(px + amount * (px - gaussian_blur(px, sigma)))


def laplacian_level(pixels: np.ndarray, level: int = 1) -> np.ndarray:
    """One band of the binomial Laplacian pyramid, +128 biased, upsampled
    back to the input resolution so all variants share one coordinate frame."""
    px = as_float(pixels)
    h, w = px.shape
    min_dim = 2 ** (level + 2)
    if h < min_dim or w < min_dim:
        raise ValueError(f"frame {w}x{h} too small for pyramid level {level}")

    gauss = [px]
    for _ in range(level + 1):
        gauss.append(pyr_down(gauss[-1]))
    band = gauss[level] - pyr_up(gauss[level + 1], gauss[level].shape)
    for k in range(level, 0, -1):
        band = pyr_up(band, gauss[k - 1].shape)
    return clamp_u8(band + 128.0)


def local_hist_eq(pixels: np.ndarray, tile: int = 64, clip: float = 2.0) -> np.ndarray:
    """Contrast-limited adaptive equalization.

    Per-tile 256-bin histograms are clipped at ``clip`` times the uniform bin
    height with the excess redistributed uniformly; pixel mappings are
    bilinearly interpolated between tile centers.
    """
    if tile < 16:
        raise ValueError("tile must be at least 16 px")
    if clip < 1:
        raise ValueError("clip must be >= 1")
    px = np.asarray(pixels, dtype=np.uint8)
    h, w = px.shape
    ty = max(1, (h + tile - 1) // tile)
    tx = max(1, (w + tile - 1) // tile)
    y_edges = np.linspace(0, h, ty + 1).astype(int)
    x_edges = np.linspace(0, w, tx + 1).astype(int)

    luts = np.empty((ty, tx, 256), dtype=np.float64)
    centers_y = np.empty(ty)
    centers_x = np.empty(tx)
    for i in range(ty):
        for j in range(tx):
            block = px[y_edges[i]:y_edges[i + 1], x_edges[j]:x_edges[j + 1]]
            luts[i, j] = _tile_lut(block, clip)
            centers_y[i] = (y_edges[i] + y_edges[i + 1] - 1) / 2.0
            centers_x[j] = (x_edges[j] + x_edges[j + 1] - 1) / 2.0

    ys = np.arange(h, dtype=np.float64)
    xs = np.arange(w, dtype=np.float64)
    i0, wy = _tile_coords(ys, centers_y)
    j0, wx = _tile_coords(xs, centers_x)
    i1 = np.minimum(i0 + 1, ty - 1)
    j1 = np.minimum(j0 + 1, tx - 1)

    vals = px.astype(np.intp)
    i0g, j0g = i0[:, None], j0[None, :]
    i1g, j1g = i1[:, None], j1[None, :]
    wyg, wxg = wy[:, None], wx[None, :]
    out = (
        luts[i0g, j0g, vals] * (1 - wyg) * (1 - wxg)
        + luts[i0g, j1g, vals] * (1 - wyg) * wxg
        + luts[i1g, j0g, vals] * wyg * (1 - wxg)
        + luts[i1g, j1g, vals] * wyg * wxg
    )
    return clamp_u8(out)


def _tile_lut(block: np.ndarray, clip: float) -> np.ndarray:
    area = block.size
    hist = np.bincount(block.ravel(), minlength=256).astype(np.float64)
    limit = clip * area / 256.0
    excess = np.sum(np.maximum(hist - limit, 0.0))
    hist = np.minimum(hist, limit) + excess / 256.0
    cdf = np.cumsum(hist)
    return cdf / cdf[-1] * 255.0


def _tile_coords(coords: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Lower tile index and interpolation weight for each pixel coordinate;
    clamped flat beyond the first/last tile center."""
    if centers.size == 1:
        return np.zeros(coords.size, dtype=np.intp), np.zeros(coords.size)
    idx = np.clip(np.searchsorted(centers, coords, side="right") - 1, 0, centers.size - 2)
    span = centers[idx + 1] - centers[idx]
    weight = np.clip((coords - centers[idx]) / span, 0.0, 1.0)
    return idx.astype(np.intp), weight


def enhance_frames(frames: list[np.ndarray], kind: EnhancementKind, *,
                   sigma: float = 2.0, amount: float = 1.5, level: int = 1,
                   tile: int = 64, clip: float = 2.0) -> list[np.ndarray]:
    """Apply one enhancement to a list of aligned rasters."""
    if kind is EnhancementKind.ORIGINAL:
        return [np.asarray(f, dtype=np.uint8) for f in frames]
    if kind is EnhancementKind.AVG_SUBTRACT:
        mean = np.mean([as_float(f) for f in frames], axis=0)
        return [subtract_average(f, mean) for f in frames]
    if kind is EnhancementKind.UNSHARP:
        return [unsharp(f, sigma, amount) for f in frames]
    if kind is EnhancementKind.LAPLACIAN_PYRAMID:
        return [laplacian_level(f, level) for f in frames]
    if kind is EnhancementKind.LOCAL_HIST_EQ:
        return [local_hist_eq(f, tile, clip) for f in frames]
    raise ValueError(f"unhandled enhancement kind {kind}")


def enhance_interblink(ib: AlignedInterBlink, kind: EnhancementKind, **params) -> list[np.ndarray]:
    return enhance_frames(ib.frames, kind, **params)
