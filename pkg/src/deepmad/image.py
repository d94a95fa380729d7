"""Luminance images: loading, PGM writing and bilinear resizing.

Pixels are float64 in [0, 1], stored as a read-only ``(height, width)`` array.
PNG goes through Pillow; binary PPM/PGM (P6/P5) is parsed here so tests and
fixtures need nothing beyond numpy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from deepmad.errors import CorruptImage, UnsupportedFormat

PathLike = Union[str, Path]

# BT.601 luma, in thousandths so equal channels map back exactly
LUMA_MILLI = (299, 587, 114)

CANONICAL_SIZE = 256


@dataclass(frozen=True, eq=False)
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        pix = np.array(self.pixels, dtype=np.float64)
        if pix.ndim != 2 or pix.size == 0:
            raise ValueError(f"expected a non-empty 2-D pixel array, got shape {pix.shape}")
        if not np.all(np.isfinite(pix)) or pix.min() < 0.0 or pix.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        pix.setflags(write=False)
        object.__setattr__(self, "pixels", pix)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @classmethod
    def from_flat(cls, width: int, height: int, values) -> "GrayImage":
        values = np.asarray(values, dtype=np.float64)
        if values.size != width * height:
            raise ValueError(f"{values.size} values for a {width}x{height} image")
        return cls(values.reshape(height, width))

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.all(self.pixels == other.pixels))

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


def _luma(rgb: np.ndarray, maxval: float) -> np.ndarray:
    """BT.601 luma of raw channel values, scaled to [0, 1]."""
    rgb = rgb.astype(np.float64)
    r, g, b = (rgb[..., i] for i in range(3))
    y = (LUMA_MILLI[0] * r + LUMA_MILLI[1] * g + LUMA_MILLI[2] * b) / (1000.0 * maxval)
    return np.clip(y, 0.0, 1.0)


def _read_netpbm(data: bytes) -> GrayImage:
    magic = data[:2]
    if magic not in (b"P5", b"P6"):
        raise UnsupportedFormat(f"unsupported netpbm variant {magic!r}")

    # header: magic, width, height, maxval separated by whitespace; '#' comments
    fields = []
    pos = 2
    while len(fields) < 3:
        if pos >= len(data):
            raise CorruptImage("truncated netpbm header")
        c = data[pos:pos + 1]
        if c.isspace():
            pos += 1
        elif c == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace():
                pos += 1
            tok = data[start:pos]
            if not tok.isdigit():
                raise CorruptImage(f"bad netpbm header token {tok!r}")
            fields.append(int(tok))
    pos += 1  # exactly one whitespace byte before the raster

    width, height, maxval = fields
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise CorruptImage(f"invalid netpbm dimensions/maxval {fields}")
    channels = 1 if magic == b"P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    n = width * height * channels
    raster = data[pos:pos + n * dtype.itemsize]
    if len(raster) < n * dtype.itemsize:
        raise CorruptImage("truncated netpbm raster")
    arr = np.frombuffer(raster, dtype=dtype)
    if arr.max(initial=0) > maxval:
        raise CorruptImage("sample exceeds maxval")
    if channels == 1:
        return GrayImage(arr.reshape(height, width) / float(maxval))
    return GrayImage(_luma(arr.reshape(height, width, 3), maxval))


def _read_png(path: Path) -> GrayImage:
    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("L", "P", "LA", "1"):
                if mode == "P":
                    return GrayImage(_luma(np.asarray(im.convert("RGB")), 255))
                arr = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
                return GrayImage(arr)
            if mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=np.float64)
                return GrayImage(np.clip(arr / 65535.0, 0.0, 1.0))
            return GrayImage(_luma(np.asarray(im.convert("RGB")), 255))
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise CorruptImage(f"{path}: {exc}") from exc


def load_image(path: PathLike) -> GrayImage:
    """Load a PNG or binary PPM/PGM file as a luminance image in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"\x89PNG\r\n\x1a\n"):
        return _read_png(path)
    if head[:2] in (b"P5", b"P6"):
        return _read_netpbm(path.read_bytes())
    raise UnsupportedFormat(f"{path}: not a PNG or binary PPM/PGM file")


def save_pgm(img: GrayImage, path: PathLike) -> None:
    """Write an 8-bit binary PGM (P5)."""
    raster = np.rint(img.pixels * 255.0).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(raster.tobytes())


def _source_coords(n_out: int, n_in: int) -> np.ndarray:
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    return np.arange(n_out) * ((n_in - 1) / (n_out - 1)) if n_in > 1 else np.zeros(n_out)


def resize_bilinear(img: GrayImage, w: int, h: int) -> GrayImage:
    """Bilinear resize with corner-aligned sampling.

    Output pixel ``(x, y)`` samples source position
    ``(x * (W-1)/(w-1), y * (H-1)/(h-1))``, so corners map onto corners.
    A single output column/row samples the source centre.
    """
    if w < 1 or h < 1:
        raise ValueError(f"target size must be positive, got {w}x{h}")
    if (w, h) == (img.width, img.height):
        return img

    src = img.pixels
    xs = _source_coords(w, img.width)
    ys = _source_coords(h, img.height)
    x0 = np.clip(np.floor(xs).astype(int), 0, img.width - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, img.height - 1)
    x1 = np.minimum(x0 + 1, img.width - 1)
    y1 = np.minimum(y0 + 1, img.height - 1)
    fx = (xs - x0)[None, :]
    fy = (ys - y0)[:, None]

    # lerp form a + f*(b-a) keeps constant regions exactly constant
    a, b = src[y0][:, x0], src[y0][:, x1]
    top = a + fx * (b - a)
    a, b = src[y1][:, x0], src[y1][:, x1]
    bottom = a + fx * (b - a)
    out = top + fy * (bottom - top)
    return GrayImage(np.clip(out, 0.0, 1.0))


def to_canonical(img: GrayImage, size: int = CANONICAL_SIZE) -> GrayImage:
    return resize_bilinear(img, size, size)
