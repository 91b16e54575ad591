"""Minimal PGM (P2 ASCII / P5 binary) reader and writer, and obstacle masks from pixmaps."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from shepard_dp.geometry import ObstacleMask

# luminance at or above this (on a 0..255 scale) marks an admissible pixel
SEA_THRESHOLD = 128


class PGMParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


def _skip_space(buf: bytes, pos: int) -> int:
    while pos < len(buf):
        ch = buf[pos : pos + 1]
        if ch == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            break
    return pos


def _read_int(buf: bytes, pos: int, what: str) -> tuple[int, int]:
    pos = _skip_space(buf, pos)
    start = pos
    while pos < len(buf) and buf[pos : pos + 1].isdigit():
        pos += 1
    if pos == start:
        if start >= len(buf):
            raise PGMParseError(f"unexpected end of file while reading {what}", start)
        raise PGMParseError(f"expected decimal {what}, found {buf[start:start + 1]!r}", start)
    return int(buf[start:pos]), pos


def parse_pgm(buf: bytes) -> tuple[np.ndarray, int]:
    """Return ``(pixels, maxval)``; pixels is (height, width), row 0 at the top."""
    magic = buf[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMParseError(f"unsupported magic number {magic!r} (expected P2 or P5)", 0)
    pos = 2
    if pos < len(buf) and not (buf[pos : pos + 1].isspace() or buf[pos : pos + 1] == b"#"):
        raise PGMParseError("missing whitespace after magic number", pos)
    width, pos = _read_int(buf, pos, "width")
    height, pos = _read_int(buf, pos, "height")
    field_pos = _skip_space(buf, pos)
    maxval, pos = _read_int(buf, pos, "maxval")
    if width < 1 or height < 1:
        raise PGMParseError(f"image dimensions must be positive, got {width}x{height}", field_pos)
    if not 0 < maxval < 65536:
        raise PGMParseError(f"maxval {maxval} outside 1..65535", field_pos)
    count = width * height
    if magic == b"P5":
        if pos >= len(buf) or not buf[pos : pos + 1].isspace():
            raise PGMParseError("expected a single whitespace byte before the raster", pos)
        pos += 1
        itemsize = 1 if maxval < 256 else 2
        need = count * itemsize
        if len(buf) - pos < need:
            raise PGMParseError(f"truncated raster: need {need} bytes, found {len(buf) - pos}", len(buf))
        dtype = np.uint8 if itemsize == 1 else np.dtype(">u2")
        pixels = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).astype(np.int64)
        if pixels.max(initial=0) > maxval:
            bad = int(np.argmax(pixels > maxval))
            raise PGMParseError(f"sample {pixels[bad]} exceeds maxval {maxval}", pos + bad * itemsize)
    else:
        pixels = np.empty(count, dtype=np.int64)
        for idx in range(count):
            start = _skip_space(buf, pos)
            value, pos = _read_int(buf, pos, f"sample {idx}")
            if value > maxval:
                raise PGMParseError(f"sample {value} exceeds maxval {maxval}", start)
            pixels[idx] = value
    return pixels.reshape(height, width), maxval


def read_pgm(path) -> tuple[np.ndarray, int]:
    return parse_pgm(Path(path).read_bytes())


def write_pgm(path, pixels, maxval: int = 255, binary: bool = True) -> None:
    pixels = np.asarray(pixels)
    height, width = pixels.shape
    header = f"{'P5' if binary else 'P2'}\n{width} {height}\n{maxval}\n".encode()
    if binary:
        dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
        body = pixels.astype(dtype).tobytes()
    else:
        body = "\n".join(" ".join(str(int(v)) for v in row) for row in pixels).encode() + b"\n"
    Path(path).write_bytes(header + body)


def admissible_from_luminance(pixels: np.ndarray, maxval: int) -> np.ndarray:
    # compare on the 0..255 scale without rounding
    return np.asarray(pixels, dtype=np.int64) * 255 >= SEA_THRESHOLD * maxval


def load_obstacle_map(path, origin=(0.0, 0.0), pixel_size=(1.0, 1.0)) -> ObstacleMask:
    """Obstacle mask from a PGM: bright pixels (>= 128 of 255) are admissible."""
    pixels, maxval = read_pgm(path)
    return ObstacleMask(
        admissible_from_luminance(pixels, maxval),
        origin=tuple(float(v) for v in origin),
        pixel_size=tuple(float(v) for v in pixel_size),
        luminance=pixels,
    )
