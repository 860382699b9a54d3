import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipidflow.video_io import (
    Frame,
    VideoFormatError,
    VideoSequence,
    load_image_sequence,
    load_pgm,
    load_y4m,
    save_pgm,
    save_y4m,
    sequence_from_arrays,
)


def make_y4m(path, width, height, fps_tag, frames, chroma=None):
    header = f"YUV4MPEG2 W{width} H{height} F{fps_tag}"
    if chroma:
        header += f" C{chroma}"
    blob = header.encode() + b"\n"
    for luma, extra in frames:
        blob += b"FRAME\n" + luma + extra
    path.write_bytes(blob)
    return path


def test_load_y4m_mono_two_frames(tmp_path):
    f0 = bytes(range(8))
    f1 = bytes(range(8, 16))
    p = make_y4m(tmp_path / "v.y4m", 4, 2, "30:1", [(f0, b""), (f1, b"")], chroma="mono")
    video = load_y4m(p)
    assert len(video) == 2
    assert video.fps == 30.0
    assert video.frames[0].timestamp_s == 0.0
    assert abs(video.frames[1].timestamp_s - 1 / 30) < 1e-9
    assert video.frames[0].pixels.tolist() == [[0, 1, 2, 3], [4, 5, 6, 7]]
    assert video.frames[1].pixels.tolist() == [[8, 9, 10, 11], [12, 13, 14, 15]]


def test_load_y4m_420_chroma_skipped(tmp_path):
    luma = bytes(range(8))
    chroma = b"\xAA" * 4  # 2x(2x1) planes
    p = make_y4m(tmp_path / "v.y4m", 4, 2, "25:1", [(luma, chroma)], chroma="420")
    video = load_y4m(p)
    assert len(video) == 1
    assert video.frames[0].pixels.tobytes() == luma


def test_load_y4m_default_chroma_is_420(tmp_path):
    luma = bytes(8)
    p = make_y4m(tmp_path / "v.y4m", 4, 2, "25:1", [(luma, b"\x00" * 4)])
    assert len(load_y4m(p)) == 1


def test_load_y4m_zero_fps_rejected(tmp_path):
    p = make_y4m(tmp_path / "v.y4m", 4, 2, "0:1", [], chroma="mono")
    with pytest.raises(VideoFormatError):
        load_y4m(p)


def test_load_y4m_bad_magic_names_offset(tmp_path):
    p = tmp_path / "bad.y4m"
    p.write_bytes(b"NOTY4M W4 H2 F30:1\n")
    with pytest.raises(VideoFormatError, match="byte offset 0"):
        load_y4m(p)


def test_load_y4m_truncated_frame_names_index(tmp_path):
    p = make_y4m(tmp_path / "v.y4m", 4, 2, "30:1",
                 [(bytes(8), b""), (bytes(4), b"")], chroma="mono")
    with pytest.raises(VideoFormatError, match="frame 1"):
        load_y4m(p)


def test_save_y4m_roundtrip(tmp_path):
    arrays = [np.arange(64, dtype=np.uint8).reshape(8, 8),
              np.full((8, 8), 200, dtype=np.uint8)]
    video = sequence_from_arrays(arrays, 30.0, "t")
    p = tmp_path / "o.y4m"
    save_y4m(video, p)
    again = load_y4m(p)
    assert again.fps == 30.0
    for a, b in zip(video.frames, again.frames):
        assert np.array_equal(a.pixels, b.pixels)


def test_save_pgm_roundtrip_gradient(tmp_path):
    px = np.arange(64, dtype=np.uint8).reshape(8, 8)
    p = tmp_path / "f.pgm"
    save_pgm(Frame(px, 0, 0.0), p)
    assert np.array_equal(load_pgm(p), px)


def test_save_pgm_all_zero_payload(tmp_path):
    p = tmp_path / "z.pgm"
    save_pgm(np.zeros((8, 8), dtype=np.uint8), p)
    data = p.read_bytes()
    assert data.startswith(b"P5\n8 8\n255\n")
    assert data[len(b"P5\n8 8\n255\n"):] == bytes(64)


def test_save_pgm_unwritable_path():
    with pytest.raises(OSError):
        save_pgm(np.zeros((4, 4), dtype=np.uint8), "/nonexistent-dir/f.pgm")


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_pgm_roundtrip_property(w, h, seed):
    px = np.random.default_rng(seed).integers(0, 256, (h, w), dtype=np.uint8)
    import tempfile, os
    fd, path = tempfile.mkstemp(suffix=".pgm")
    os.close(fd)
    try:
        save_pgm(px, path)
        assert np.array_equal(load_pgm(path), px)
    finally:
        os.unlink(path)


def test_load_image_sequence_order_and_fps(tmp_path):
    a = np.zeros((8, 8), dtype=np.uint8)
    b = np.full((8, 8), 9, dtype=np.uint8)
    save_pgm(a, tmp_path / "000.pgm")
    save_pgm(b, tmp_path / "001.pgm")
    video = load_image_sequence(tmp_path, 30.0)
    assert len(video) == 2
    assert np.array_equal(video.frames[0].pixels, a)
    assert np.array_equal(video.frames[1].pixels, b)


def test_load_image_sequence_dimension_mismatch_names_file(tmp_path):
    save_pgm(np.zeros((8, 8), dtype=np.uint8), tmp_path / "000.pgm")
    save_pgm(np.zeros((4, 4), dtype=np.uint8), tmp_path / "001.pgm")
    with pytest.raises(VideoFormatError, match="001.pgm"):
        load_image_sequence(tmp_path, 30.0)


def test_load_image_sequence_empty_dir(tmp_path):
    with pytest.raises(VideoFormatError, match="no PGM"):
        load_image_sequence(tmp_path, 30.0)


def test_sequence_rejects_mixed_dimensions():
    with pytest.raises(VideoFormatError):
        VideoSequence([Frame(np.zeros((4, 4), np.uint8), 0, 0.0),
                       Frame(np.zeros((8, 8), np.uint8), 1, 1 / 30)], 30.0)


def test_sequence_rejects_bad_timestamp():
    with pytest.raises(VideoFormatError):
        VideoSequence([Frame(np.zeros((4, 4), np.uint8), 0, 0.5)], 30.0)
