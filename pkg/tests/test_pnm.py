"""PNM 코덱 / 산출물 기록 테스트"""
import importlib.util

import numpy as np
import pytest

from divetrack.core.errors import ArtifactMissingError, FrameFormatError
from divetrack.utils.artifacts import draw_square, dumps_json, require_artifact, write_bytes_atomic
from divetrack.utils.pnm import decode_image, pnm_decoder, pnm_encoder, read_pgm


def test_ppm_header_layout():
    data = pnm_encoder.encode_ppm(np.zeros((2, 3, 3), dtype=np.uint8))
    assert data.startswith(b"P6\n3 2\n255\n")
    assert len(data) == len(b"P6\n3 2\n255\n") + 18


def test_ppm_decode_accepts_comments():
    raster = bytes(range(12))
    data = b"P6\n# made by hand\n2 2 # size\n255\n" + raster
    decoded = pnm_decoder.decode_ppm(data)
    assert decoded.shape == (2, 2, 3)
    assert decoded.tobytes() == raster


def test_ppm_truncated_raster():
    data = pnm_encoder.encode_ppm(np.zeros((4, 4, 3), dtype=np.uint8))[:-5]
    with pytest.raises(FrameFormatError):
        pnm_decoder.decode_ppm(data)


def test_ppm_rejects_16bit():
    with pytest.raises(FrameFormatError):
        pnm_decoder.decode_ppm(b"P6\n1 1\n65535\n" + b"\x00" * 6)


def test_bad_magic():
    with pytest.raises(FrameFormatError):
        pnm_decoder.decode_pgm(b"P3\n1 1\n255\n0 0 0")


def test_pgm_switches_to_16bit():
    values = np.array([[0, 300], [65535, 7]])
    data = pnm_encoder.encode_pgm(values)
    assert b"\n65535\n" in data[:20]
    np.testing.assert_array_equal(pnm_decoder.decode_pgm(data), values)


def test_pgm_bool_mask(tmp_path):
    mask = np.array([[True, False], [False, True]])
    path = write_bytes_atomic(tmp_path / "m.pgm", pnm_encoder.encode_pgm(mask))
    np.testing.assert_array_equal(read_pgm(path), [[255, 0], [0, 255]])


def test_decode_image_dispatch(tmp_path, rng):
    pixels = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    path = write_bytes_atomic(tmp_path / "a.ppm", pnm_encoder.encode_ppm(pixels))
    np.testing.assert_array_equal(decode_image(path), pixels)


@pytest.mark.skipif(importlib.util.find_spec("PIL") is None, reason="Pillow 미설치")
def test_decode_png(tmp_path, rng):
    from PIL import Image

    pixels = rng.integers(0, 256, size=(6, 4, 3), dtype=np.uint8)
    Image.fromarray(pixels).save(tmp_path / "a.png")
    np.testing.assert_array_equal(decode_image(tmp_path / "a.png"), pixels)


def test_atomic_write_leaves_no_temp_files(tmp_path):
    write_bytes_atomic(tmp_path / "out" / "x.json", dumps_json({"a": 1}))
    assert sorted(p.name for p in (tmp_path / "out").iterdir()) == ["x.json"]
    assert (tmp_path / "out" / "x.json").read_bytes() == b'{\n  "a": 1\n}\n'


def test_require_artifact_names_file(tmp_path):
    with pytest.raises(ArtifactMissingError) as exc:
        require_artifact(tmp_path / "transforms.json", stage="track")
    assert "transforms.json" in exc.value.message
    assert exc.value.stage == "track"
    assert exc.value.exit_code == 3


def test_draw_square_clips_at_border():
    raster = np.zeros((5, 5, 3), dtype=np.uint8)
    out = draw_square(raster, 0, 0, 1)
    assert out[:2, :2, 0].tolist() == [[255, 255], [255, 255]]
    assert int(out[2, 2, 0]) == 0
    assert int(raster[0, 0, 0]) == 0
