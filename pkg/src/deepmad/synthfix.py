"""Deterministic synthetic fixtures: textured "bona fide" vs blurred "morph" images.

A textured image is a smooth random base pattern (a sum of low-frequency
plane waves) plus per-pixel Gaussian noise; the smoothed kind runs the
identical construction through a Gaussian blur. Three families with
different base-pattern statistics stand in for three morph datasets in
cross-dataset grids.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from scipy.ndimage import gaussian_filter

from deepmad.image import GrayImage, save_pgm
from deepmad.metrics import BONAFIDE, MORPH
from deepmad.protocol import DatasetManifest, Sample, write_manifest

KINDS = ("textured", "smoothed")
DEFAULT_RADIUS = 2.0
DEFAULT_SIZE = 256


@dataclass(frozen=True)
class Family:
    waves: int          # plane waves in the base pattern
    max_cycles: float   # highest base-pattern frequency, cycles per image
    contrast: float     # base-pattern standard deviation
    noise: Tuple[float, float]  # per-image noise std range


FAMILIES: Dict[str, Family] = {
    "a": Family(waves=6, max_cycles=4.0, contrast=0.12, noise=(0.02, 0.06)),
    "b": Family(waves=12, max_cycles=8.0, contrast=0.08, noise=(0.03, 0.08)),
    "c": Family(waves=3, max_cycles=3.0, contrast=0.15, noise=(0.015, 0.045)),
}


@dataclass(frozen=True)
class FixtureSpec:
    seed: int
    count: int
    kind: str = "textured"
    smoothing_radius: float = DEFAULT_RADIUS
    size: int = DEFAULT_SIZE
    family: str = "a"
    pool: int = 0  # identity pool for smoothed-kind pairs; 0 means ``count``

    def __post_init__(self):
        if self.count < 1 or self.size < 1:
            raise ValueError("count and size must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind == "smoothed" and not self.smoothing_radius > 0:
            raise ValueError("smoothing_radius must be > 0 for smoothed fixtures")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; choose from {sorted(FAMILIES)}")
        if self.kind == "smoothed" and (self.pool or self.count) < 2:
            raise ValueError("smoothed fixtures need an identity pool of at least 2")


def identity_id(index: int) -> str:
    return f"id{index:04d}"


def _base_image(rng: np.random.Generator, size: int, fam: Family) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] / size
    base = np.zeros((size, size))
    for _ in range(fam.waves):
        fx, fy = rng.uniform(-fam.max_cycles, fam.max_cycles, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        base += rng.normal() * np.cos(2 * np.pi * (fx * xx + fy * yy) + phase)
    base *= fam.contrast / (base.std() or 1.0)
    noise = rng.uniform(*fam.noise)
    return 0.5 + base + rng.normal(0.0, noise, size=(size, size))


def render(spec: FixtureSpec, index: int) -> GrayImage:
    """Image ``index`` of a spec, quantised to 8 bits so it survives a PGM round trip."""
    rng = np.random.default_rng([spec.seed, index])
    pix = _base_image(rng, spec.size, FAMILIES[spec.family])
    if spec.kind == "smoothed":
        pix = gaussian_filter(pix, sigma=spec.smoothing_radius, mode="reflect")
    return GrayImage(np.rint(np.clip(pix, 0.0, 1.0) * 255.0) / 255.0)


def _pairs(spec: FixtureSpec) -> List[Tuple[str, str]]:
    pool = spec.pool or spec.count
    rng = np.random.default_rng([spec.seed, 0x5EED])
    out = []
    for _ in range(spec.count):
        a, b = rng.choice(pool, size=2, replace=False)
        out.append((identity_id(int(a)), identity_id(int(b))))
    return out


def generate(spec: FixtureSpec, name: str = "synth") -> Tuple[List[GrayImage], DatasetManifest]:
    """Images plus a manifest with file names ``<kind>_<index>.pgm``.

    Textured images are bona fide samples with identities ``id0000..``;
    smoothed images are morphs whose two identities are drawn from that pool.
    """
    images = [render(spec, i) for i in range(spec.count)]
    if spec.kind == "textured":
        samples = [Sample(f"textured_{i:04d}.pgm", BONAFIDE, (identity_id(i),)) for i in range(spec.count)]
    else:
        samples = [Sample(f"smoothed_{i:04d}.pgm", MORPH, pair) for i, pair in enumerate(_pairs(spec))]
    return images, DatasetManifest(name, tuple(samples))


def generate_dataset(name: str, n_bonafide: int, n_morph: int, seed: int = 42, family: str = "a",
                     size: int = DEFAULT_SIZE, smoothing_radius: float = DEFAULT_RADIUS,
                     ) -> Tuple[List[GrayImage], DatasetManifest]:
    """Bona fide (textured) and morph (smoothed) samples of one fixture family."""
    bona = FixtureSpec(2 * seed, n_bonafide, "textured", smoothing_radius, size, family)
    morph = FixtureSpec(2 * seed + 1, n_morph, "smoothed", smoothing_radius, size, family, pool=n_bonafide)
    imgs_b, man_b = generate(bona, name)
    imgs_m, man_m = generate(morph, name)
    return imgs_b + imgs_m, DatasetManifest(name, man_b.samples + man_m.samples)


def write_dataset(out_dir, name: str, n_bonafide: int, n_morph: int, seed: int = 42, family: str = "a",
                  size: int = DEFAULT_SIZE, smoothing_radius: float = DEFAULT_RADIUS) -> Path:
    """Write PGM images and ``manifest.tsv`` under ``out_dir``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, manifest = generate_dataset(name, n_bonafide, n_morph, seed, family, size, smoothing_radius)
    for img, sample in zip(images, manifest.samples):
        save_pgm(img, out_dir / sample.path)
    path = out_dir / "manifest.tsv"
    write_manifest(manifest, path)
    return path
