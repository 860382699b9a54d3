"""Synthetic eye-video generator with exactly known ground truth.

Renders a stylized interferometric eye view: bright sclera, a softly ringed
iris annulus, a dark pupil, and a band-limited fringe texture over the lower
iris whose content rises along the closed-form curve
``dy(t) = rho_y * (1 - exp(-t / lambda_y))`` (and drifts laterally the same
way in x).  The whole frame follows a smooth sinusoidal jitter, blinks are
drawn as a top-down dark eyelid gradient, and Gaussian pixel noise is added
last.  Everything derives deterministically from the config seed through the
splitmix64 streams in :mod:`lipidflow.rng`.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from lipidflow.imops import bilinear_resize, bilinear_sample, clamp_u8
from lipidflow.rng import Stream
from lipidflow.video_io import VideoSequence, sequence_from_arrays

_SCLERA = 228.0
_IRIS_BASE = 118.0
_PUPIL_VALUE = 28.0
_RING_AMPLITUDE = 6.0
_RING_WAVELENGTH = 17.0
_FRINGE_AMPLITUDE = 78.0
_FRINGE_CELL = 6  # value-noise lattice pitch, px
# oriented sinusoid frequencies (cycles/px); wavelengths 10..17 px sit at the
# peak transfer of the level-1 pyramid band (decimation plus the two binomial
# upsamples pass ~0.4 there), so band-pass frames keep segment-test contrast
_FRINGE_WAVES = ((1 / 13.0, 1 / 16.0), (1 / 11.0, -1 / 15.0),
                 (-1 / 16.0, 1 / 12.0), (1 / 19.0, 1 / 13.0),
                 (1 / 14.0, 1 / 10.5), (-1 / 12.5, 1 / 17.0))
_FRONT_CENTER_FRAC = 0.99  # lipid front center, in iris radii below cy
_FRONT_SIGMA = 16.0
_EYELID_COVER_FRAC = 0.85
_EYELID_TOP = 18.0
_EYELID_BOTTOM = 64.0
_JITTER_PERIODS_S = (2.1, 2.9)


@dataclass(frozen=True)
class SynthConfig:
    width: int = 256
    height: int = 256
    fps: float = 30.0
    duration_s: float = 5.5
    pupil_cx: float = 128.0
    pupil_cy: float = 128.0
    pupil_r: float = 26.0
    iris_r: float = 70.0
    lambda_y: float = 0.8
    rho_y: float = 25.0
    lambda_x: float = 2.0
    rho_x: float = 6.0
    blink_intervals: tuple[tuple[float, float], ...] = ((0.0, 0.4),)
    jitter_amp: float = 2.0
    noise_sigma: float = 3.0
    seed: int = 1234

    def __post_init__(self):
        if min(self.width, self.height) < 64:
            raise ValueError("frame must be at least 64x64")
        if self.fps <= 0 or self.duration_s <= 0:
            raise ValueError("fps and duration must be positive")
        if self.pupil_r <= 0 or self.iris_r <= self.pupil_r:
            raise ValueError("need iris_r > pupil_r > 0")
        if not (0 < self.pupil_cx < self.width - 1 and 0 < self.pupil_cy < self.height - 1):
            raise ValueError("pupil center must lie inside the frame")
        if self.lambda_y <= 0 or self.lambda_x <= 0:
            raise ValueError("characteristic times must be positive")
        if self.jitter_amp < 0 or self.noise_sigma < 0:
            raise ValueError("jitter_amp and noise_sigma must be non-negative")
        object.__setattr__(
            self, "blink_intervals",
            tuple((float(s), float(l)) for s, l in self.blink_intervals))

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "SynthConfig":
        with open(path) as fh:
            raw = json.load(fh)
        raw["blink_intervals"] = tuple(tuple(iv) for iv in raw.get("blink_intervals", ()))
        return cls(**raw)


@dataclass
class GroundTruthManifest:
    dx: np.ndarray  # rightward lipid-texture displacement per frame, px
    dy: np.ndarray  # upward lipid-texture displacement per frame, px
    jx: np.ndarray  # whole-frame jitter per frame, px
    jy: np.ndarray
    blink_frames: list[int]
    config: SynthConfig

    @property
    def n_frames(self) -> int:
        return self.dx.size

    def to_json_dict(self) -> dict:
        cfg = asdict(self.config)
        cfg["blink_intervals"] = [list(iv) for iv in self.config.blink_intervals]
        return {
            "config": cfg,
            "dx": self.dx.tolist(),
            "dy": self.dy.tolist(),
            "jx": self.jx.tolist(),
            "jy": self.jy.tolist(),
            "blink_frames": self.blink_frames,
        }

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json_dict(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "GroundTruthManifest":
        with open(path) as fh:
            raw = json.load(fh)
        raw["config"]["blink_intervals"] = tuple(
            tuple(iv) for iv in raw["config"]["blink_intervals"])
        return cls(
            dx=np.array(raw["dx"]),
            dy=np.array(raw["dy"]),
            jx=np.array(raw["jx"]),
            jy=np.array(raw["jy"]),
            blink_frames=list(raw["blink_frames"]),
            config=SynthConfig(**raw["config"]),
        )


def _smoothstep(edge0: float, edge1: float, x: np.ndarray) -> np.ndarray:
    t = np.clip((x - edge0) / (edge1 - edge0), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _padding(config: SynthConfig) -> int:
    return int(math.ceil(abs(config.rho_x) + abs(config.rho_y) + config.jitter_amp)) + 8


def _base_and_window(config: SynthConfig, pad: int) -> tuple[np.ndarray, np.ndarray]:
    """Static scene canvas and the fringe-visibility window, both padded."""
    h, w = config.height + 2 * pad, config.width + 2 * pad
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ys -= pad
    xs -= pad
    dist = np.hypot(xs - config.pupil_cx, ys - config.pupil_cy)

    base = np.full((h, w), _SCLERA)
    iris = _IRIS_BASE + _RING_AMPLITUDE * np.sin(2.0 * np.pi * dist / _RING_WAVELENGTH)
    in_iris = 1.0 - _smoothstep(config.iris_r - 1.5, config.iris_r + 1.5, dist)
    base = base * (1.0 - in_iris) + iris * in_iris
    in_pupil = 1.0 - _smoothstep(config.pupil_r - 1.0, config.pupil_r + 1.0, dist)
    base = base * (1.0 - in_pupil) + _PUPIL_VALUE * in_pupil

    # the radial fade is narrow: fringe keeps full contrast to within ~6 px
    # of the limbus so tracked points near the mask bottom see unattenuated
    # motion (a wide taper would modulate the sliding texture's amplitude and
    # bias apparent motion low)
    window = (
        (1.0 - _smoothstep(config.iris_r - 6.0, config.iris_r - 2.0, dist))
        * _smoothstep(1.15 * config.pupil_r, 1.15 * config.pupil_r + 6.0, dist)
        * _smoothstep(config.pupil_cy + 0.08 * config.iris_r,
                      config.pupil_cy + 0.24 * config.iris_r, ys)
        * (1.0 - _smoothstep(0.45 * config.iris_r, 0.62 * config.iris_r,
                             np.abs(xs - config.pupil_cx)))
    )
    return base, window


def _fringe_canvas(config: SynthConfig, pad: int) -> np.ndarray:
    """Band-limited zero-mean texture in content coordinates, with a
    Gaussian amplitude front near the iris bottom (the rising lipid edge)."""
    h, w = config.height + 2 * pad, config.width + 2 * pad
    stream = Stream(config.seed, "fringe")
    phases = stream.uniform(len(_FRINGE_WAVES)) * 2.0 * np.pi

    cells_y = h // _FRINGE_CELL + 2
    cells_x = w // _FRINGE_CELL + 2
    lattice = stream.uniform(cells_y * cells_x).reshape(cells_y, cells_x) - 0.5
    noise = bilinear_resize(lattice, (h, w))

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    ys -= pad
    xs -= pad
    tex = 2.2 * noise
    for (fx, fy), phase in zip(_FRINGE_WAVES, phases):
        tex += 0.30 * np.sin(2.0 * np.pi * (fx * xs + fy * ys) + phase)
    # normalize by a high quantile, then clip: typical contrast stays high
    # while the amplitude bound remains exact
    tex = np.clip(tex / np.quantile(np.abs(tex), 0.98), -1.0, 1.0)

    front_y = config.pupil_cy + _FRONT_CENTER_FRAC * config.iris_r
    envelope = np.exp(-((ys - front_y) ** 2) / (2.0 * _FRONT_SIGMA**2))
    return _FRINGE_AMPLITUDE * tex * envelope


def kinematics(config: SynthConfig, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form lipid displacement (dx rightward, dy upward) at times t."""
    t = np.asarray(t, dtype=np.float64)
    dy = config.rho_y * (1.0 - np.exp(-t / config.lambda_y))
    dx = config.rho_x * (1.0 - np.exp(-t / config.lambda_x))
    return dx, dy


def generate(config: SynthConfig) -> tuple[VideoSequence, GroundTruthManifest]:
    n_frames = int(round(config.duration_s * config.fps))
    t = np.arange(n_frames, dtype=np.float64) / config.fps
    dx, dy = kinematics(config, t)

    jitter_stream = Stream(config.seed, "jitter")
    jitter_phases = jitter_stream.uniform(2) * 2.0 * np.pi
    jx = config.jitter_amp * np.sin(2.0 * np.pi * t / _JITTER_PERIODS_S[0] + jitter_phases[0])
    jy = config.jitter_amp * np.sin(2.0 * np.pi * t / _JITTER_PERIODS_S[1] + jitter_phases[1])

    blink_frames = sorted({
        k for start_s, len_s in config.blink_intervals
        for k in range(int(math.floor(start_s * config.fps + 1e-9)),
                       min(int(math.ceil((start_s + len_s) * config.fps - 1e-9)), n_frames))
        if k >= 0
    })
    blink_set = set(blink_frames)

    pad = _padding(config)
    base, window = _base_and_window(config, pad)
    fringe = _fringe_canvas(config, pad)
    noise_stream = Stream(config.seed, "pixel-noise")

    ys, xs = np.mgrid[0:config.height, 0:config.width].astype(np.float64)
    cover_rows = config.height * _EYELID_COVER_FRAC
    eyelid = _EYELID_TOP + (_EYELID_BOTTOM - _EYELID_TOP) * (ys / max(cover_rows, 1.0))

    frames = []
    for k in range(n_frames):
        # eye coordinates after undoing the frame jitter, in canvas indices
        ex = xs - jx[k] + pad
        ey = ys - jy[k] + pad
        scene = bilinear_sample(base, ex, ey)
        scene += bilinear_sample(window, ex, ey) * bilinear_sample(fringe, ex - dx[k], ey + dy[k])
        if k in blink_set:
            covered = ys < cover_rows
            scene = np.where(covered, eyelid, scene)
        if config.noise_sigma > 0:
            scene = scene + config.noise_sigma * noise_stream.normal(scene.size).reshape(scene.shape)
        frames.append(clamp_u8(scene))

    video = sequence_from_arrays(frames, config.fps, source_id=f"synth-{config.seed}")
    manifest = GroundTruthManifest(dx, dy, jx, jy, blink_frames, config)
    return video, manifest
