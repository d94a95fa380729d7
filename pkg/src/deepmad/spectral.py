"""Radially averaged Fourier magnitude spectra."""

from __future__ import annotations

import numpy as np

from deepmad.errors import BandCountTooLarge
from deepmad.image import GrayImage


def magnitude_spectrum(img: GrayImage) -> np.ndarray:
    """Centred |DFT| of the mean-subtracted image.

    The zero frequency lands at ``(H // 2, W // 2)``.
    """
    pix = img.pixels
    if pix.min() == pix.max():
        # exact zeros: rounding in the mean would otherwise leave ~1e-16 residue
        return np.zeros(pix.shape)
    return np.abs(np.fft.fftshift(np.fft.fft2(pix - pix.mean())))


def _radius_index(shape) -> np.ndarray:
    h, w = shape
    yy, xx = np.indices((h, w))
    return np.rint(np.hypot(yy - h // 2, xx - w // 2)).astype(np.intp)


def radial_profile(spectrum: np.ndarray, bands: int) -> np.ndarray:
    """Azimuthal mean of a centred spectrum over integer-rounded radii 0..bands-1."""
    spectrum = np.asarray(spectrum, dtype=np.float64)
    limit = min(spectrum.shape) // 2
    if bands < 1 or bands > limit:
        raise BandCountTooLarge(f"{bands} bands requested, spectrum of shape {spectrum.shape} supports 1..{limit}")
    radius = _radius_index(spectrum.shape).ravel()
    keep = radius < bands
    sums = np.bincount(radius[keep], weights=spectrum.ravel()[keep], minlength=bands)
    counts = np.bincount(radius[keep], minlength=bands)
    return sums / counts


def fourier_features(img: GrayImage) -> np.ndarray:
    """Max-normalised radial profile; ``min(W, H) // 2`` bands (128 at 256x256)."""
    profile = radial_profile(magnitude_spectrum(img), min(img.width, img.height) // 2)
    peak = profile.max()
    if peak <= 0.0:
        return np.zeros_like(profile)
    return profile / peak


def band_energy(features: np.ndarray, lo: int, hi: int) -> float:
    """Mean of a profile over bands ``lo..hi`` inclusive."""
    return float(np.mean(features[lo:hi + 1]))
