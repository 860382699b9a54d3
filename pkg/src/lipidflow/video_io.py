"""Grayscale video I/O over codec-free containers (YUV4MPEG2, PGM sequences).

Only the luma plane of Y4M input is kept; chroma (4:2:0) is skipped.  All
frames are 8-bit grayscale numpy arrays of shape (height, width).
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np


class VideoFormatError(ValueError):
    """Malformed or unsupported video/image payload."""


@dataclass(frozen=True)
class Frame:
    """One grayscale frame: pixels is a (height, width) uint8 array."""

    pixels: np.ndarray
    index: int
    timestamp_s: float

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 2:
            raise VideoFormatError("frame pixels must be a 2-D array")
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass
class VideoSequence:
    """Ordered frames at a fixed rate; immutable once constructed."""

    frames: list[Frame]
    fps: float
    source_id: str = ""

    def __post_init__(self):
        if self.fps <= 0:
            raise VideoFormatError("fps must be positive")
        shapes = {f.pixels.shape for f in self.frames}
        if len(shapes) > 1:
            raise VideoFormatError(f"frames disagree on dimensions: {sorted(shapes)}")
        for i, f in enumerate(self.frames):
            if f.index != i:
                raise VideoFormatError(f"frame {i} carries index {f.index}")
            if abs(f.timestamp_s - i / self.fps) > 1e-9:
                raise VideoFormatError(f"frame {i} timestamp inconsistent with fps")

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    def pixel_stack(self) -> np.ndarray:
        """(n, h, w) uint8 view of all frames."""
        return np.stack([f.pixels for f in self.frames])


def sequence_from_arrays(arrays, fps: float, source_id: str = "") -> VideoSequence:
    frames = [Frame(a, i, i / fps) for i, a in enumerate(arrays)]
    return VideoSequence(frames, fps, source_id)


_Y4M_MAGIC = b"YUV4MPEG2"

# chroma tags accepted as 4:2:0 (both planes subsampled by 2)
_C420_TAGS = {"420", "420jpeg", "420mpeg2", "420paldv"}


def load_y4m(path: str | os.PathLike) -> VideoSequence:
    """Decode a YUV4MPEG2 file, keeping the luma plane only.

    Accepts mono and 4:2:0 chroma; anything else is rejected.  Parse errors
    report the byte offset at which decoding failed.
    """
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()

    if not data.startswith(_Y4M_MAGIC + b" "):
        raise VideoFormatError(f"{path}: not a YUV4MPEG2 stream (byte offset 0)")
    nl = data.find(b"\n")
    if nl < 0:
        raise VideoFormatError(f"{path}: unterminated stream header (byte offset {len(data)})")

    width = height = None
    fps = None
    chroma = "420"  # Y4M default when no C tag is present
    for tok in data[len(_Y4M_MAGIC) + 1 : nl].split(b" "):
        if not tok:
            continue
        tag, val = chr(tok[0]), tok[1:].decode("ascii", "replace")
        if tag == "W":
            width = int(val)
        elif tag == "H":
            height = int(val)
        elif tag == "F":
            m = re.fullmatch(r"(\d+):(\d+)", val)
            if not m:
                raise VideoFormatError(f"{path}: bad frame-rate tag F{val} (byte offset {len(_Y4M_MAGIC) + 1})")
            num, den = int(m.group(1)), int(m.group(2))
            if num <= 0 or den <= 0:
                raise VideoFormatError(f"{path}: non-positive frame rate F{val} (byte offset {len(_Y4M_MAGIC) + 1})")
            fps = num / den
        elif tag == "C":
            chroma = val
    if width is None or height is None or fps is None:
        raise VideoFormatError(f"{path}: header missing W/H/F tags (byte offset 0)")
    if width <= 0 or height <= 0:
        raise VideoFormatError(f"{path}: non-positive frame dimensions (byte offset 0)")

    if chroma == "mono":
        chroma_bytes = 0
    elif chroma in _C420_TAGS:
        if width % 2 or height % 2:
            raise VideoFormatError(f"{path}: 4:2:0 chroma requires even dimensions (byte offset 0)")
        chroma_bytes = 2 * (width // 2) * (height // 2)
    else:
        raise VideoFormatError(f"{path}: unsupported chroma C{chroma} (byte offset 0)")

    luma_bytes = width * height
    pos = nl + 1
    arrays = []
    index = 0
    while pos < len(data):
        frame_nl = data.find(b"\n", pos)
        if frame_nl < 0 or not data[pos:frame_nl].startswith(b"FRAME"):
            raise VideoFormatError(f"{path}: expected FRAME marker (byte offset {pos})")
        pos = frame_nl + 1
        end = pos + luma_bytes
        if end > len(data):
            raise VideoFormatError(f"{path}: truncated payload in frame {index}")
        arrays.append(np.frombuffer(data[pos:end], dtype=np.uint8).reshape(height, width).copy())
        pos = end + chroma_bytes
        if pos > len(data):
            raise VideoFormatError(f"{path}: truncated chroma in frame {index}")
        index += 1

    return sequence_from_arrays(arrays, fps, source_id=os.path.basename(path))


def save_y4m(video: VideoSequence, path: str | os.PathLike) -> None:
    """Write a mono (luma-only) YUV4MPEG2 file with an integer-rational rate."""
    num, den = _fps_rational(video.fps)
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{video.width} H{video.height} F{num}:{den} Ip A1:1 Cmono\n".encode())
        for f in video.frames:
            fh.write(b"FRAME\n")
            fh.write(f.pixels.tobytes())


def _fps_rational(fps: float) -> tuple[int, int]:
    if abs(fps - round(fps)) < 1e-9:
        return int(round(fps)), 1
    # fall back to a fixed denominator good enough for NTSC-style rates
    return int(round(fps * 1001)), 1001


def _read_pgm_tokens(data: bytes, count: int, path: str) -> tuple[list[int], int]:
    """Read `count` whitespace-separated numeric header tokens, honoring
    '#' comments; returns the tokens and the offset one byte past the last
    whitespace terminator."""
    tokens: list[int] = []
    pos = 0
    while len(tokens) < count:
        if pos >= len(data):
            raise VideoFormatError(f"{path}: truncated PGM header")
        c = data[pos : pos + 1]
        if c == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif c.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end : end + 1].isspace():
                end += 1
            tok = data[pos:end]
            if not tok.isdigit():
                raise VideoFormatError(f"{path}: bad PGM header token {tok!r}")
            tokens.append(int(tok))
            pos = end
    return tokens, pos + 1  # skip single whitespace after maxval


def load_pgm(path: str | os.PathLike) -> np.ndarray:
    path = os.fspath(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise VideoFormatError(f"{path}: not a binary (P5) PGM file")
    (width, height, maxval), pos = _read_pgm_tokens(data[2:], 3, path)
    pos += 2
    if maxval != 255:
        raise VideoFormatError(f"{path}: unsupported maxval {maxval} (must be 255)")
    need = width * height
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise VideoFormatError(f"{path}: truncated PGM payload ({len(raw)} of {need} bytes)")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def save_pgm(frame: Frame | np.ndarray, path: str | os.PathLike) -> None:
    px = frame.pixels if isinstance(frame, Frame) else np.asarray(frame, dtype=np.uint8)
    if px.ndim != 2:
        raise VideoFormatError("save_pgm expects a 2-D grayscale array")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{px.shape[1]} {px.shape[0]}\n255\n".encode())
        fh.write(px.tobytes())


def load_image_sequence(directory: str | os.PathLike, fps: float) -> VideoSequence:
    """Load all *.pgm files in lexicographic order as one sequence."""
    directory = os.fspath(directory)
    if fps <= 0:
        raise VideoFormatError("fps must be positive")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(".pgm"))
    if not names:
        raise VideoFormatError(f"{directory}: no PGM files found")
    arrays = []
    shape = None
    for name in names:
        px = load_pgm(os.path.join(directory, name))
        if shape is None:
            shape = px.shape
        elif px.shape != shape:
            raise VideoFormatError(
                f"{name}: dimensions {px.shape[::-1]} do not match first frame {shape[::-1]}"
            )
        arrays.append(px)
    return sequence_from_arrays(arrays, fps, source_id=os.path.basename(directory.rstrip("/")))
