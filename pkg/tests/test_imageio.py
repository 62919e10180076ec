import numpy as np
import pytest

from ts2img.errors import DataError
from ts2img.imageio import read_image, read_pgm, write_image, write_pgm


@pytest.mark.parametrize("ext", ["pgm", "png"])
def test_round_trip(tmp_path, ext):
    px = np.random.default_rng(0).integers(0, 256, (12, 7)).astype(np.uint8)
    path = str(tmp_path / f"img.{ext}")
    write_image(path, px)
    np.testing.assert_array_equal(read_image(path), px)


def test_pgm_layout(tmp_path):
    px = np.arange(6, dtype=np.uint8).reshape(2, 3)
    path = tmp_path / "a.pgm"
    write_pgm(path, px)
    assert path.read_bytes() == b"P5\n3 2\n255\n" + bytes(range(6))


def test_pgm_header_comments(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n# another\n255\n\x07\x09")
    assert read_pgm(path).tolist() == [[7, 9]]


@pytest.mark.parametrize("payload", [b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00", b"P5\n1 1\n65535\n\x00\x00"])
def test_pgm_rejects_bad_files(tmp_path, payload):
    path = tmp_path / "bad.pgm"
    path.write_bytes(payload)
    with pytest.raises(DataError):
        read_pgm(path)
