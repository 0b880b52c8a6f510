import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from ubama.metrics import gaussian_window, relative_error, snr, ssim
from ubama.rng import seeded_rng


def test_snr_examples():
    assert snr([3.0, 4.0], [3.0, 4.5]) == pytest.approx(20.0)
    x = np.array([1.0, 0.0])
    assert snr(x, np.array([1.0, 1.0])) == pytest.approx(0.0)
    assert snr(x, np.array([1.1, 0.0])) == pytest.approx(20.0)
    assert snr(x, x) == math.inf


def test_snr_errors():
    with pytest.raises(ValueError):
        snr(np.zeros(3), np.ones(3))
    with pytest.raises(ValueError):
        snr(np.ones(3), np.ones(4))


def test_relative_error():
    assert relative_error([2.0, 0.0], [1.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        relative_error([1.0], [0.0])


def test_ssim_identity_and_range(rng):
    x = rng.random((32, 32))
    assert ssim(x, x) == pytest.approx(1.0)
    assert -1 <= ssim(x, rng.random((32, 32))) <= 1


def test_ssim_can_be_negative():
    i, j = np.mgrid[0:32, 0:32]
    x = 0.5 + 0.4 * np.sign(np.sin(i / 2.0) * np.sin(j / 2.0))
    assert ssim(x, 1.0 - x) < 0


def test_ssim_matches_scikit_image(rng):
    for _ in range(5):
        x = rng.random((40, 36))
        y = np.clip(x + 0.2 * rng.standard_normal(x.shape), 0, 1)
        ref = structural_similarity(x, y, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False)
        assert ssim(x, y) == pytest.approx(ref, abs=1e-6)


def test_ssim_window():
    w = gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        ssim(np.ones((8, 8)), np.ones((8, 8)))


def test_rng_reproducible():
    a = seeded_rng(12345).random(1000)
    b = seeded_rng(12345).random(1000)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, seeded_rng(12346).random(1000))


def test_rng_moments():
    u = seeded_rng(7).random(100_000)
    g = seeded_rng(7).standard_normal(100_000)
    assert abs(u.mean() - 0.5) <= 0.02
    assert abs(g.mean()) <= 0.02
    assert abs(g.std() - 1) <= 0.02


def test_rng_accepts_full_64_bit_range():
    seeded_rng(2 ** 64 - 1)
    for bad in (-1, 2 ** 64, 1.5, "3"):
        with pytest.raises(ValueError):
            seeded_rng(bad)
