"""PFM / PGM readers and writers for grids and masks."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ParseError
from .grids import ScalarGrid, ValidityMask


def read_pfm(path, unit: str = "disparity") -> ScalarGrid:
    """Read a single-channel PFM file. Rows are stored bottom-to-top."""
    with open(path, "rb") as fh:
        header = fh.readline().rstrip()
        if header == b"PF":
            channels = 3
        elif header == b"Pf":
            channels = 1
        else:
            raise ParseError(f"{path}: not a PFM file (header {header!r})")
        dims = fh.readline().decode("ascii", "replace")
        match = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not match:
            raise ParseError(f"{path}: malformed PFM dimensions {dims!r}")
        width, height = map(int, match.groups())
        try:
            scale = float(fh.readline().decode("ascii").strip())
        except ValueError as exc:
            raise ParseError(f"{path}: malformed PFM scale") from exc
        endian = "<" if scale < 0 else ">"
        data = np.frombuffer(fh.read(), dtype=endian + "f4")

    expected = width * height * channels
    if data.size != expected:
        raise ParseError(f"{path}: expected {expected} floats, found {data.size}")
    if channels == 3:
        raise ParseError(f"{path}: color PFM files are not supported")
    data = np.flipud(data.reshape(height, width))
    return ScalarGrid(data.astype(np.float64), unit)


def write_pfm(path, grid: ScalarGrid) -> None:
    """Write ``grid`` as a little-endian single-channel PFM (scale -1.0)."""
    data = np.flipud(np.asarray(grid.values, dtype="<f4"))
    with open(path, "wb") as fh:
        fh.write(b"Pf\n")
        fh.write(b"%d %d\n" % (grid.cols, grid.rows))
        fh.write(b"-1.0\n")
        fh.write(np.ascontiguousarray(data).tobytes())


def _pnm_tokens(buf: bytes, count: int):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError("truncated PGM header")
        tokens.append(buf[start:pos])
    return tokens, pos


def read_pgm_mask(path) -> ValidityMask:
    """Read an 8-bit PGM (P5 binary or P2 ascii); nonzero samples are valid."""
    buf = Path(path).read_bytes()
    try:
        (magic, w, h, maxval), pos = _pnm_tokens(buf, 4)
        width, height, maxval = int(w), int(h), int(maxval)
    except (ValueError, ParseError) as exc:
        raise ParseError(f"{path}: malformed PGM header") from exc
    if maxval > 255:
        raise ParseError(f"{path}: only 8-bit PGM masks are supported")
    if magic == b"P5":
        data = np.frombuffer(buf[pos + 1:pos + 1 + width * height], dtype=np.uint8)
    elif magic == b"P2":
        data = np.array(buf[pos:].split(), dtype=np.int64)[: width * height]
    else:
        raise ParseError(f"{path}: not a PGM file (magic {magic!r})")
    if data.size != width * height:
        raise ParseError(f"{path}: expected {width * height} samples, found {data.size}")
    return ValidityMask(data.reshape(height, width) != 0)


def write_pgm_mask(path, mask: ValidityMask) -> None:
    data = np.where(mask.flags, 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(b"P5\n%d %d\n255\n" % (mask.cols, mask.rows))
        fh.write(data.tobytes())
