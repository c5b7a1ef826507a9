"""Plain (P2) and binary (P5) PGM reading and writing.

Pixel values are read as-is, so a 16-bit file keeps its levels in
``[0, 65535]``.  The format and maxval go into ``BeamImage.meta`` and are
reused on write, which makes ``write_pgm(read_pgm(f))`` byte-identical for
canonical files: magic, ``width height`` and maxval on separate lines, no
comments, P2 rasters one image row per line, P5 rasters big-endian.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .images import DMD_PITCH_UM, BeamImage

_WS = b" \t\n\r\v\f"


class PGMError(ValueError):
    """Malformed PGM data; ``offset`` is the byte position of the problem."""

    def __init__(self, msg, offset=None, path=None):
        where = f" at byte {offset}" if offset is not None else ""
        prefix = f"{path}: " if path else ""
        super().__init__(f"{prefix}{msg}{where}")
        self.offset = offset


class _Tokens:
    def __init__(self, data: bytes, pos: int, path):
        self.data = data
        self.pos = pos
        self.path = path

    def skip(self):
        d = self.data
        while self.pos < len(d):
            c = d[self.pos:self.pos + 1]
            if c in _WS and c:
                self.pos += 1
            elif c == b"#":
                nl = d.find(b"\n", self.pos)
                self.pos = len(d) if nl < 0 else nl + 1
            else:
                break

    def next_int(self, what):
        self.skip()
        start = self.pos
        d = self.data
        while self.pos < len(d) and d[self.pos:self.pos + 1] not in _WS and d[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        tok = d[start:self.pos]
        if not tok:
            raise PGMError(f"expected {what}, found end of file", start, self.path)
        if not tok.isdigit():
            raise PGMError(f"expected {what}, found {tok[:16]!r}", start, self.path)
        return int(tok)


def parse_pgm(data: bytes, pitch: float = DMD_PITCH_UM, path=None) -> BeamImage:
    if data[:2] not in (b"P2", b"P5"):
        raise PGMError(f"bad magic number {data[:2]!r}, expected b'P2' or b'P5'", 0, path)
    fmt = data[:2].decode()
    tok = _Tokens(data, 2, path)
    if tok.pos < len(data) and data[tok.pos:tok.pos + 1] not in _WS + b"#":
        raise PGMError("missing whitespace after magic number", tok.pos, path)
    tok.skip()
    size_at = tok.pos
    w = tok.next_int("width")
    h = tok.next_int("height")
    tok.skip()
    maxval_at = tok.pos
    maxval = tok.next_int("maxval")
    if w < 1 or h < 1:
        raise PGMError(f"image size {w}x{h} must be positive", size_at, path)
    if not 1 <= maxval <= 65535:
        raise PGMError(f"maxval {maxval} outside 1..65535", maxval_at, path)
    n = w * h
    if fmt == "P5":
        if tok.pos >= len(data) or data[tok.pos:tok.pos + 1] not in _WS:
            raise PGMError("missing whitespace before raster", tok.pos, path)
        start = tok.pos + 1
        depth = 1 if maxval < 256 else 2
        expected = n * depth
        payload = data[start:]
        if len(payload) < expected:
            raise PGMError(f"truncated payload: expected {expected} bytes, got {len(payload)}",
                           start, path)
        if len(payload) > expected:
            raise PGMError(f"{len(payload) - expected} unexpected bytes after raster",
                           start + expected, path)
        values = np.frombuffer(payload, dtype=">u2" if depth == 2 else "u1").astype(np.int64)
    else:
        values = np.empty(n, dtype=np.int64)
        for i in range(n):
            values[i] = tok.next_int(f"pixel {i} of {n}")
        tok.skip()
        if tok.pos < len(data):
            raise PGMError("unexpected data after raster", tok.pos, path)
    if values.max(initial=0) > maxval:
        raise PGMError(f"pixel value {int(values.max())} exceeds maxval {maxval}", None, path)
    img = BeamImage(values.reshape(h, w).astype(float), pitch)
    img.meta.update(format=fmt, maxval=maxval)
    return img


def read_pgm(path, pitch: float = DMD_PITCH_UM) -> BeamImage:
    """Read a P2 or P5 file; intensities are the stored levels."""
    return parse_pgm(Path(path).read_bytes(), pitch, path)


def quantize(values, maxval: int) -> np.ndarray:
    """Map nonnegative values to integer levels; integral data within range is kept."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, None)
    if np.all(v == np.round(v)) and v.max(initial=0) <= maxval:
        return v.astype(np.int64)
    peak = v.max(initial=0)
    if peak == 0:
        return np.zeros(v.shape, dtype=np.int64)
    return np.round(v / peak * maxval).astype(np.int64)


def format_pgm(image: BeamImage, fmt: str | None = None, maxval: int | None = None) -> bytes:
    fmt = fmt or image.meta.get("format", "P5")
    maxval = maxval or image.meta.get("maxval", 65535)
    if fmt not in ("P2", "P5"):
        raise ValueError(f"format must be P2 or P5, got {fmt!r}")
    if not 1 <= maxval <= 65535:
        raise ValueError(f"maxval {maxval} outside 1..65535")
    levels = quantize(image.intensity, maxval)
    h, w = levels.shape
    head = f"{fmt}\n{w} {h}\n{maxval}\n".encode("ascii")
    if fmt == "P5":
        dtype = ">u2" if maxval > 255 else "u1"
        return head + levels.astype(dtype).tobytes()
    rows = "\n".join(" ".join(str(v) for v in row) for row in levels)
    return head + rows.encode("ascii") + b"\n"


def write_pgm(image: BeamImage, path, fmt: str | None = None, maxval: int | None = None) -> None:
    """Write ``image``; format and maxval default to its metadata, then P5/65535.

    Non-integral or out-of-range intensities are rescaled so the peak maps
    to ``maxval``.
    """
    Path(path).write_bytes(format_pgm(image, fmt, maxval))
