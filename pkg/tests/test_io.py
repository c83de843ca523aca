import numpy as np
import pytest
from PIL import Image

from tactile_strain import io
from tactile_strain.errors import ImageIOError, InvalidInputError


def test_png_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    rgb = rng.integers(0, 256, (7, 9, 3), dtype=np.uint8)
    gray = rng.integers(0, 256, (7, 9), dtype=np.uint8)
    io.write_image(tmp_path / "c.png", rgb)
    io.write_image(tmp_path / "g.png", gray)
    np.testing.assert_array_equal(io.read_image(tmp_path / "c.png"), rgb)
    np.testing.assert_array_equal(io.read_image(tmp_path / "g.png"), gray)


def test_pgm_and_bool(tmp_path):
    mask = np.zeros((4, 5), bool)
    mask[1, 2] = True
    io.write_image(tmp_path / "m.pgm", mask)
    back = io.read_image(tmp_path / "m.pgm")
    assert back.dtype == np.uint8 and back[1, 2] == 255 and back.sum() == 255


def test_rgba_flattened(tmp_path):
    Image.new("RGBA", (3, 2), (10, 20, 30, 255)).save(tmp_path / "a.png")
    img = io.read_image(tmp_path / "a.png")
    assert img.shape == (2, 3, 3) and tuple(img[0, 0]) == (10, 20, 30)


def test_read_errors(tmp_path):
    (tmp_path / "bad.png").write_bytes(b"\x89PNG\r\n\x1a\n garbage")
    with pytest.raises(ImageIOError):
        io.read_image(tmp_path / "bad.png")
    with pytest.raises(ImageIOError):
        io.read_image(tmp_path / "missing.png")
    Image.fromarray(np.zeros((2, 2), np.uint16)).save(tmp_path / "deep.png")
    with pytest.raises(ImageIOError):
        io.read_image(tmp_path / "deep.png")
    with pytest.raises(InvalidInputError):
        io.write_image(tmp_path / "f.png", np.zeros((2, 2), np.float32))


def test_json_stable(tmp_path):
    payload = {"b": 1, "a": [1.5, None]}
    io.write_json(tmp_path / "x.json", payload)
    text = (tmp_path / "x.json").read_text()
    assert text == io.dumps(payload) and text.endswith("\n")
    assert text.index('"a"') < text.index('"b"')
    assert io.read_json(tmp_path / "x.json") == payload
    with pytest.raises(ValueError):
        io.dumps({"x": float("nan")})
    with pytest.raises(ImageIOError):
        io.read_json(tmp_path / "none.json")
