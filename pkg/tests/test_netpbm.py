import numpy as np
import pytest

from glyphocr.errors import DataError
from glyphocr.netpbm import read_image, read_pbm, read_pgm, write_pbm, write_pgm


@pytest.fixture
def img():
    rng = np.random.default_rng(7)
    return (rng.random((33, 41)) < 0.3).astype(np.uint8)  # width not byte-aligned


def test_p4_roundtrip_bit_exact(tmp_path, img):
    p = tmp_path / "a.pbm"
    write_pbm(p, img)
    assert np.array_equal(read_pbm(p), img)
    # and byte-exact on rewrite
    q = tmp_path / "b.pbm"
    write_pbm(q, read_pbm(p))
    assert p.read_bytes() == q.read_bytes()


def test_p1_roundtrip(tmp_path, img):
    p = tmp_path / "a.pbm"
    write_pbm(p, img, plain=True)
    assert p.read_bytes().startswith(b"P1")
    assert np.array_equal(read_pbm(p), img)


def test_pgm_roundtrips(tmp_path):
    gray = np.arange(0, 253, dtype=np.uint8).reshape(11, 23)
    p5 = tmp_path / "a.pgm"
    write_pgm(p5, gray)
    assert np.array_equal(read_pgm(p5), gray)
    p2 = tmp_path / "b.pgm"
    write_pgm(p2, gray, plain=True)
    assert np.array_equal(read_pgm(p2), gray)


def test_comments_and_whitespace_in_header(tmp_path):
    p = tmp_path / "c.pbm"
    p.write_bytes(b"P1\n# a comment\n 3 # another\n2\n1 0 1\n0 1 0\n")
    img = read_pbm(p)
    assert img.tolist() == [[1, 0, 1], [0, 1, 0]]


def test_read_image_dispatch(tmp_path, img):
    p = tmp_path / "a.pbm"
    write_pbm(p, img)
    assert np.array_equal(read_image(p), img)


def test_bad_magic_rejected(tmp_path):
    p = tmp_path / "bad.pbm"
    p.write_bytes(b"P7\n1 1\n0")
    with pytest.raises(DataError):
        read_image(p)
    with pytest.raises(DataError):
        read_pbm(p)


def test_truncated_raster_rejected(tmp_path):
    p = tmp_path / "t.pbm"
    p.write_bytes(b"P4\n16 4\n\x00\x00")  # needs 8 data bytes
    with pytest.raises(DataError):
        read_pbm(p)
