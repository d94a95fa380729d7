"""Local Binary Pattern histograms over the twelve neighbourhood variants.

Conventions, fixed because codes depend on them:

* neighbour ``k`` sits at angle ``2*pi*k/P`` measured counter-clockwise from
  the pixel to the right of the centre (image rows grow downwards, so "up" is
  a negative row offset);
* bit ``k`` of the code is set iff ``neighbour[k] >= centre``; bit 0 is the
  least significant;
* pixels closer than ``R`` to the border are skipped, never padded.

Square shapes snap each angle onto the Chebyshev ring of radius ``R``
(axis points, corners and edge midpoints); circular shapes sample the
Euclidean circle with bilinear interpolation.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from deepmad.errors import ImageTooSmall, OutOfBounds
from deepmad.image import GrayImage

NEIGHBORHOODS = ((4, 1), (8, 1), (8, 2))
SHAPES = ("circular", "square")
REGROUPS = ("none", "riu2")

_SNAP_EPS = 1e-9


@dataclass(frozen=True)
class LbpConfig:
    neighbors: int
    radius: int
    shape: str = "circular"
    regroup: str = "none"

    def __post_init__(self):
        if (self.neighbors, self.radius) not in NEIGHBORHOODS:
            raise ValueError(f"unsupported neighbourhood (P,R)=({self.neighbors},{self.radius})")
        if self.shape not in SHAPES:
            raise ValueError(f"shape must be one of {SHAPES}, got {self.shape!r}")
        if self.regroup not in REGROUPS:
            raise ValueError(f"regroup must be one of {REGROUPS}, got {self.regroup!r}")

    @property
    def n_bins(self) -> int:
        return self.neighbors + 2 if self.regroup == "riu2" else 2 ** self.neighbors

    @property
    def name(self) -> str:
        return f"lbp-{self.neighbors}-{self.radius}-{self.shape[0]}-{self.regroup}"

    @property
    def label(self) -> str:
        """Table rendering, e.g. ``RIU2 (8,1) □``."""
        glyph = "○" if self.shape == "circular" else "□"
        prefix = "RIU2 " if self.regroup == "riu2" else ""
        return f"{prefix}({self.neighbors},{self.radius}) {glyph}"

    @classmethod
    def parse(cls, text: str) -> "LbpConfig":
        m = re.fullmatch(r"lbp-(\d+)-(\d+)-([cs])-(none|riu2)", text.strip())
        if m is None:
            raise ValueError(f"bad LBP config string {text!r} (expected lbp-<P>-<R>-<c|s>-<none|riu2>)")
        shape = "circular" if m.group(3) == "c" else "square"
        return cls(int(m.group(1)), int(m.group(2)), shape, m.group(4))

    def __str__(self):
        return self.name


def enumerate_configs() -> List[LbpConfig]:
    """All 12 configurations, neighbourhood-major, then shape, then regrouping."""
    return [
        LbpConfig(p, r, shape, regroup)
        for p, r in NEIGHBORHOODS
        for shape in SHAPES
        for regroup in REGROUPS
    ]


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < _SNAP_EPS else v


@lru_cache(maxsize=None)
def neighbor_offsets(neighbors: int, radius: int, shape: str) -> Tuple[Tuple[float, float], ...]:
    """(column, row) offsets of the P sampling points, in bit order."""
    out = []
    for k in range(neighbors):
        theta = 2.0 * math.pi * k / neighbors
        c, s = math.cos(theta), math.sin(theta)
        if shape == "square":
            dx, dy = radius * round(c), -radius * round(s)
        else:
            dx, dy = radius * c, -radius * s
        out.append((_snap(dx) + 0.0, _snap(dy) + 0.0))
    return tuple(out)


def _bilinear_at(pix: np.ndarray, x: float, y: float) -> float:
    x0, y0 = math.floor(x), math.floor(y)
    fx, fy = x - x0, y - y0
    if fx == 0.0 and fy == 0.0:
        return float(pix[y0, x0])
    x1 = min(x0 + 1, pix.shape[1] - 1)
    y1 = min(y0 + 1, pix.shape[0] - 1)
    top = pix[y0, x0] + fx * (pix[y0, x1] - pix[y0, x0])
    bottom = pix[y1, x0] + fx * (pix[y1, x1] - pix[y1, x0])
    return float(top + fy * (bottom - top))


def sample_neighbors(img: GrayImage, cx: int, cy: int, cfg: LbpConfig) -> List[float]:
    """Values of the ``P`` neighbours of pixel (column ``cx``, row ``cy``)."""
    r = cfg.radius
    if not (r <= cx < img.width - r and r <= cy < img.height - r):
        raise OutOfBounds(f"pixel ({cx},{cy}) closer than R={r} to the border of a {img.width}x{img.height} image")
    pix = img.pixels
    return [_bilinear_at(pix, cx + dx, cy + dy) for dx, dy in neighbor_offsets(cfg.neighbors, r, cfg.shape)]


def lbp_code(center: float, neighbors: Sequence[float]) -> int:
    code = 0
    for k, v in enumerate(neighbors):
        if v >= center:
            code |= 1 << k
    return code


def _transitions(code: int, p: int) -> int:
    rotated = ((code >> 1) | ((code & 1) << (p - 1)))
    return bin(code ^ rotated).count("1")


def riu2_map(code: int, p: int) -> int:
    """Rotation-invariant uniform bin: popcount if <=2 circular transitions, else P+1."""
    if not 0 <= code < 2 ** p:
        raise ValueError(f"code {code} out of range for P={p}")
    if _transitions(code, p) <= 2:
        return bin(code).count("1")
    return p + 1


@lru_cache(maxsize=None)
def riu2_table(p: int) -> np.ndarray:
    table = np.array([riu2_map(c, p) for c in range(2 ** p)], dtype=np.intp)
    table.setflags(write=False)
    return table


def _shifted(pix: np.ndarray, r: int, dx: float, dy: float) -> np.ndarray:
    """Plane of neighbour values at offset (dx, dy) for every interior centre."""
    h, w = pix.shape
    x0, y0 = math.floor(dx), math.floor(dy)
    fx, fy = dx - x0, dy - y0

    def window(ox: int, oy: int) -> np.ndarray:
        return pix[r + oy:h - r + oy, r + ox:w - r + ox]

    if fx == 0.0 and fy == 0.0:
        return window(x0, y0)
    # a zero-weight tap may sit outside the image, so it is never read
    xb = x0 + 1 if fx else x0
    yb = y0 + 1 if fy else y0
    a, b = window(x0, y0), window(xb, y0)
    c, d = window(x0, yb), window(xb, yb)
    top = a + fx * (b - a)
    bottom = c + fx * (d - c)
    return top + fy * (bottom - top)


def lbp_codes(img: GrayImage, cfg: LbpConfig) -> np.ndarray:
    """Raw (un-regrouped) codes for every interior pixel, shape (H-2R, W-2R)."""
    r = cfg.radius
    if img.width <= 2 * r or img.height <= 2 * r:
        raise ImageTooSmall(f"{img.width}x{img.height} image has no pixel at distance >= {r} from the border")
    pix = img.pixels
    h, w = pix.shape
    center = pix[r:h - r, r:w - r]
    codes = np.zeros(center.shape, dtype=np.intp)
    for k, (dx, dy) in enumerate(neighbor_offsets(cfg.neighbors, r, cfg.shape)):
        codes |= (_shifted(pix, r, dx, dy) >= center).astype(np.intp) << k
    return codes


def histogram_from_codes(codes: np.ndarray, cfg: LbpConfig) -> np.ndarray:
    counts = np.bincount(codes.ravel(), minlength=2 ** cfg.neighbors).astype(np.float64)
    if cfg.regroup == "riu2":
        counts = regroup_histogram(counts, cfg.neighbors)
    return counts / counts.sum()


def regroup_histogram(hist: np.ndarray, p: int) -> np.ndarray:
    """Fold a 2^P-bin histogram into its P+2 riu2 bins."""
    return np.bincount(riu2_table(p), weights=hist, minlength=p + 2)


def lbp_histogram(img: GrayImage, cfg: LbpConfig) -> np.ndarray:
    """L1-normalised histogram of LBP codes over all interior pixels."""
    return histogram_from_codes(lbp_codes(img, cfg), cfg)


def lbp_histograms(img: GrayImage, configs: Iterable[LbpConfig]) -> dict:
    """Histograms for several configs, computing each neighbourhood's codes once."""
    configs = list(configs)
    codes_cache = {}
    out = {}
    for cfg in configs:
        key = (cfg.neighbors, cfg.radius, cfg.shape)
        if key not in codes_cache:
            codes_cache[key] = lbp_codes(img, cfg)
        out[cfg] = histogram_from_codes(codes_cache[key], cfg)
    return out
