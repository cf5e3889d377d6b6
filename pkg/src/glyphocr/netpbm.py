"""Reading and writing Netpbm images.

PBM (P1 plain / P4 raw) carries binary page and glyph images; in PBM a 1 is
black, which matches the ink-is-one convention used everywhere else in this
package. PGM (P2 plain / P5 raw) is used for 8-bit debug renders. P4 output
round-trips bit-exactly.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .raster import as_binary_image

__all__ = ["read_pbm", "read_pgm", "read_image", "write_pbm", "write_pgm"]


class _Tokenizer:
    """Pulls whitespace/comment-delimited header tokens off a byte buffer."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def next_token(self) -> bytes:
        d, i = self.data, self.pos
        while i < len(d):
            ch = d[i:i + 1]
            if ch == b"#":
                while i < len(d) and d[i:i + 1] not in (b"\n", b"\r"):
                    i += 1
            elif ch.isspace():
                i += 1
            else:
                break
        start = i
        while i < len(d) and not d[i:i + 1].isspace():
            i += 1
        if start == i:
            raise DataError("truncated netpbm header")
        self.pos = i
        return d[start:i]

    def next_int(self) -> int:
        tok = self.next_token()
        try:
            return int(tok)
        except ValueError:
            raise DataError(f"bad netpbm header token {tok!r}") from None

    def skip_single_whitespace(self):
        self.pos += 1  # exactly one whitespace byte separates header from raster


def _read_bytes(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def read_image(path) -> np.ndarray:
    """Read any supported Netpbm file; binary {0,1} for PBM, uint8 for PGM."""
    data = _read_bytes(path)
    magic = data[:2]
    if magic in (b"P1", b"P4"):
        return _parse_pbm(data)
    if magic in (b"P2", b"P5"):
        return _parse_pgm(data)
    raise DataError(f"unsupported netpbm magic {magic!r} in {path}")


def read_pbm(path) -> np.ndarray:
    data = _read_bytes(path)
    if data[:2] not in (b"P1", b"P4"):
        raise DataError(f"not a PBM file: {path}")
    return _parse_pbm(data)


def read_pgm(path) -> np.ndarray:
    data = _read_bytes(path)
    if data[:2] not in (b"P2", b"P5"):
        raise DataError(f"not a PGM file: {path}")
    return _parse_pgm(data)


def _parse_pbm(data: bytes) -> np.ndarray:
    tok = _Tokenizer(data)
    magic = tok.next_token()
    width = tok.next_int()
    height = tok.next_int()
    if width <= 0 or height <= 0:
        raise DataError("bad PBM dimensions")
    if magic == b"P1":
        rest = data[tok.pos:]
        bits = np.frombuffer(rest, dtype=np.uint8)
        bits = bits[(bits == ord("0")) | (bits == ord("1"))] - ord("0")
        if bits.size < width * height:
            raise DataError("truncated P1 data")
        return bits[: width * height].reshape(height, width).astype(np.uint8)
    tok.skip_single_whitespace()
    row_bytes = (width + 7) // 8
    raw = data[tok.pos: tok.pos + row_bytes * height]
    if len(raw) < row_bytes * height:
        raise DataError("truncated P4 data")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(height, row_bytes)
    bits = np.unpackbits(packed, axis=1)[:, :width]
    return bits.astype(np.uint8)


def _parse_pgm(data: bytes) -> np.ndarray:
    tok = _Tokenizer(data)
    magic = tok.next_token()
    width = tok.next_int()
    height = tok.next_int()
    maxval = tok.next_int()
    if width <= 0 or height <= 0 or not (0 < maxval < 256):
        raise DataError("bad PGM header")
    if magic == b"P2":
        rest = data[tok.pos:].split()
        if len(rest) < width * height:
            raise DataError("truncated P2 data")
        vals = np.array([int(v) for v in rest[: width * height]], dtype=np.uint8)
        return vals.reshape(height, width)
    tok.skip_single_whitespace()
    raw = data[tok.pos: tok.pos + width * height]
    if len(raw) < width * height:
        raise DataError("truncated P5 data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def write_pbm(path, img, plain: bool = False):
    img = as_binary_image(img)
    height, width = img.shape
    with open(path, "wb") as fh:
        if plain:
            fh.write(b"P1\n%d %d\n" % (width, height))
            for row in img:
                fh.write(" ".join("1" if v else "0" for v in row).encode() + b"\n")
        else:
            fh.write(b"P4\n%d %d\n" % (width, height))
            fh.write(np.packbits(img, axis=1).tobytes())


def write_pgm(path, img, plain: bool = False):
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("PGM writer expects a 2D uint8 array")
    height, width = img.shape
    with open(path, "wb") as fh:
        if plain:
            fh.write(b"P2\n%d %d\n255\n" % (width, height))
            for row in img:
                fh.write(" ".join(str(int(v)) for v in row).encode() + b"\n")
        else:
            fh.write(b"P5\n%d %d\n255\n" % (width, height))
            fh.write(img.tobytes())
