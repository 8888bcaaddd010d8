import json

import numpy as np
import pytest

from atmodist.errors import InputError
from atmodist.eval_stats import (
    compare_report,
    energy_spectrum,
    isotropic_offsets,
    semivariogram,
)


@pytest.fixture(scope="module")
def random_patches():
    rng = np.random.default_rng(0)
    return rng.normal(size=(12, 32, 32, 2))


def test_spectrum_constant_field():
    patches = np.full((3, 16, 16, 1), 7.0)
    curve = energy_spectrum(patches)
    # all power sits at k=0
    assert curve.energy[0] == pytest.approx(49.0)
    np.testing.assert_allclose(curve.energy[1:], 0.0, atol=1e-20)


def test_spectrum_pure_mode_isolated():
    """cos(2*pi*k0*x/n) puts all its power in the k0 bin."""
    n, k0 = 32, 5
    x = np.arange(n)
    patch = np.cos(2 * np.pi * k0 * x[None, :] / n) * np.ones((n, 1))
    curve = energy_spectrum(patch[None, :, :, None])
    others = np.delete(curve.energy, [k0])
    assert curve.energy[k0] > 0
    np.testing.assert_allclose(others, 0.0, atol=1e-20)
    # a unit-amplitude cosine has variance 1/2, split across the bin's cells
    total_k0 = curve.energy[k0] * curve.bin_count[k0]
    assert total_k0 == pytest.approx(0.5, rel=1e-12)


def test_spectrum_parseval(random_patches):
    curve = energy_spectrum(random_patches)
    total = float(np.sum(curve.energy[1:] * curve.bin_count[1:]))
    per_patch_var = float(
        np.mean([random_patches[i, :, :, c].var() for i in range(12) for c in range(2)])
    )
    assert total == pytest.approx(per_patch_var, rel=1e-9)


def test_spectrum_requires_square():
    with pytest.raises(InputError):
        energy_spectrum(np.zeros((2, 8, 16, 1)))


def test_isotropic_offsets():
    offs = isotropic_offsets(3)
    assert (0, 1) in offs and (1, 0) in offs and (0, 3) in offs
    assert (1, 1) in offs and (1, -1) in offs and (2, 2) in offs
    assert (3, 3) not in offs  # 3*sqrt(2) > 3
    assert all(np.hypot(*o) <= 3 for o in offs)


def test_variogram_uncorrelated_noise_sill():
    """For iid noise, gamma(h) equals the variance for every h > 0 (sill = 1)."""
    rng = np.random.default_rng(1)
    patches = rng.normal(size=(40, 32, 32, 1))
    curve = semivariogram(patches, max_lag=6, n_bins=6)
    assert curve.gamma[0] == 0.0
    finite = curve.gamma[1:][curve.n_pairs[1:] > 0]
    np.testing.assert_allclose(finite, 1.0, atol=0.02)


def test_variogram_matches_bruteforce():
    rng = np.random.default_rng(2)
    patches = rng.normal(size=(3, 10, 10, 1))
    offsets = [(0, 1), (1, 0), (1, 1), (0, 3)]
    curve = semivariogram(patches, max_lag=3, n_bins=4, offsets=offsets, normalization=1.0)

    edges = np.linspace(0.0, 3.0, 5)
    sq = np.zeros(4)
    n = np.zeros(4)
    for dr, dc in offsets:
        b = min(int(np.searchsorted(edges, np.hypot(dr, dc), side="left") - 1), 3)
        for p in range(3):
            for r in range(10 - dr):
                for c in range(10 - max(dc, 0)):
                    cc = c + max(-dc, 0)
                    d = patches[p, r, cc, 0] - patches[p, r + dr, cc + dc, 0]
                    sq[b] += d * d
                    n[b] += 1
    expected = np.where(n > 0, sq / (2 * np.maximum(n, 1)), np.nan)
    np.testing.assert_allclose(curve.gamma[1:], expected, rtol=1e-10, equal_nan=True)
    np.testing.assert_array_equal(curve.n_pairs[1:], n)


def test_variogram_linear_ramp():
    """gamma for the ramp f(r,c)=c at offset (0,d) is d^2/2 exactly."""
    patch = np.tile(np.arange(8.0), (8, 1))[None, :, :, None]
    curve = semivariogram(patch, max_lag=3, n_bins=3, offsets=[(0, 1), (0, 2), (0, 3)],
                          normalization=1.0)
    np.testing.assert_allclose(curve.gamma[1:], [0.5, 2.0, 4.5], rtol=1e-12)


def test_variogram_max_lag_too_large():
    with pytest.raises(InputError):
        semivariogram(np.zeros((1, 8, 8, 1)), max_lag=8, n_bins=4)


def test_compare_report_self_is_zero(random_patches, tmp_path):
    report = compare_report(random_patches, {"same": random_patches}, out_dir=tmp_path)
    s = report["summary"]["same"]
    assert s["log_spectrum_gap"] == pytest.approx(0.0, abs=1e-12)
    assert s["log_spectrum_gap_upper_half"] == pytest.approx(0.0, abs=1e-12)
    assert s["variogram_gap"] == pytest.approx(0.0, abs=1e-12)

    written = json.loads((tmp_path / "summary.json").read_text())
    assert written["same"]["log_spectrum_gap"] == s["log_spectrum_gap"]
    spectrum_csv = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert spectrum_csv[0] == "set,wavenumber,energy,bin_count"
    assert any(line.startswith("ground_truth,") for line in spectrum_csv[1:])
    assert (tmp_path / "variogram.csv").exists()


def test_compare_report_orders_predictions(random_patches):
    rng = np.random.default_rng(3)
    slight = random_patches + 0.05 * rng.normal(size=random_patches.shape)
    heavy = rng.normal(size=random_patches.shape) * 3.0
    report = compare_report(random_patches, {"slight": slight, "heavy": heavy})
    s = report["summary"]
    assert s["slight"]["log_spectrum_gap"] < s["heavy"]["log_spectrum_gap"]
    assert s["slight"]["variogram_gap"] < s["heavy"]["variogram_gap"]


def test_compare_report_shape_mismatch(random_patches):
    with pytest.raises(InputError):
        compare_report(random_patches, {"bad": np.zeros((2, 16, 16, 2))})
