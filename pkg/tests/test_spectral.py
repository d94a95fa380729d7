import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.ndimage import gaussian_filter

from deepmad.errors import BandCountTooLarge
from deepmad.image import GrayImage
from deepmad.spectral import band_energy, fourier_features, magnitude_spectrum, radial_profile
from oracles import centred, naive_dft


def _cosine(size, cycles, axis=1):
    t = np.arange(size) / size
    wave = 0.5 + 0.4 * np.cos(2 * np.pi * cycles * t)
    return np.tile(wave, (size, 1)) if axis == 1 else np.tile(wave[:, None], (1, size))


def test_constant_spectrum_is_zero():
    assert np.all(magnitude_spectrum(GrayImage(np.full((8, 8), 0.7))) == 0)


def test_impulse_spectrum_is_flat():
    pix = np.zeros((16, 16))
    pix[8, 8] = 1.0
    mag = magnitude_spectrum(GrayImage(pix))
    # mean-subtracted impulse: flat 1 everywhere except the removed DC
    expected = np.ones((16, 16))
    expected[8, 8] = 0.0
    np.testing.assert_allclose(mag, expected, atol=1e-12)


def test_cosine_peaks_match_naive_dft():
    pix = _cosine(64, 8)
    mag = magnitude_spectrum(GrayImage(pix))
    peaks = np.argwhere(mag > 1e-6 * mag.max())
    assert sorted(map(tuple, peaks)) == [(32, 24), (32, 40)]
    # full check against the direct sum on a smaller instance
    small = _cosine(12, 3)
    ref = np.abs(centred(naive_dft(small - small.mean())))
    np.testing.assert_allclose(magnitude_spectrum(GrayImage(small)), ref, atol=1e-9)


def test_random_matches_naive_dft(rng):
    pix = rng.random((10, 8))
    ref = np.abs(centred(naive_dft(pix - pix.mean())))
    got = magnitude_spectrum(GrayImage(pix))
    np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-9)


def test_radial_profile_basics():
    assert np.all(radial_profile(np.zeros((16, 16)), 8) == 0)
    spec = np.zeros((16, 16))
    spec[8, 13] = 2.0  # distance 5 from the centre
    prof = radial_profile(spec, 8)
    assert np.flatnonzero(prof).tolist() == [5]
    with pytest.raises(BandCountTooLarge):
        radial_profile(spec, 9)


def test_radial_profile_is_a_mean():
    spec = np.ones((32, 32)) * 3.0
    np.testing.assert_allclose(radial_profile(spec, 16), 3.0)


def test_white_noise_profile_is_flat():
    profiles = [
        radial_profile(magnitude_spectrum(GrayImage(np.random.default_rng(s).random((64, 64)))), 32)
        for s in range(100)
    ]
    mean = np.mean(profiles, axis=0)[5:28]
    assert np.max(np.abs(mean / mean.mean() - 1)) < 0.10


def test_fourier_features_constant_and_length():
    f = fourier_features(GrayImage(np.full((256, 256), 0.5)))
    assert f.shape == (128,) and np.all(f == 0)


@pytest.mark.parametrize("cycles", [7, 20, 45])
def test_fourier_features_localise_cosine(cycles):
    f = fourier_features(GrayImage(_cosine(256, cycles)))
    assert int(np.argmax(f)) == cycles
    assert f.max() == 1.0


def test_lowpass_reduces_high_band_energy(rng):
    noise = rng.random((256, 256))
    smooth = np.clip(gaussian_filter(noise, 1.5), 0, 1)
    raw_e = band_energy(fourier_features(GrayImage(noise)), 64, 127)
    smooth_e = band_energy(fourier_features(GrayImage(smooth)), 64, 127)
    assert smooth_e < raw_e


seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=25, deadline=None)
@given(seeds, st.integers(4, 24), st.integers(4, 24))
def test_parseval(seed, h, w):
    pix = np.random.default_rng(seed).random((h, w))
    mag = magnitude_spectrum(GrayImage(pix))
    centred_pix = pix - pix.mean()
    assert np.sum(mag ** 2) == pytest.approx(h * w * np.sum(centred_pix ** 2), rel=1e-6)


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from([8, 15, 16, 33]))
def test_profile_transpose_invariant(seed, n):
    spec = np.random.default_rng(seed).random((n, n))
    np.testing.assert_allclose(radial_profile(spec, n // 2), radial_profile(spec.T, n // 2), rtol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.05, 1.0))
def test_contrast_invariance(seed, c):
    pix = np.random.default_rng(seed).random((32, 32))
    a = fourier_features(GrayImage(pix))
    b = fourier_features(GrayImage(pix * c))
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)
