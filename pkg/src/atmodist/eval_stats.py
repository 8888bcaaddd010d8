"""Geostatistical evaluation: radially averaged power spectra and semivariograms.

The "energy spectrum" of a patch set is the per-channel 2-D Fourier power,
binned by integer radial wavenumber and averaged over patches and channels;
with this normalization the power summed over all nonzero bins equals the
mean per-patch variance (Parseval). The semivariogram is the empirical
Matheron estimator over axis-aligned and diagonal pixel offsets, binned by
Euclidean distance and normalized by the evaluation-set variance.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InputError


@dataclass(frozen=True)
class SpectrumCurve:
    wavenumbers: np.ndarray   # integer radial bins, 0..k_max
    energy: np.ndarray        # mean power per Fourier cell in each bin
    bin_count: np.ndarray     # Fourier cells per bin

    def to_rows(self):
        return zip(self.wavenumbers.tolist(), self.energy.tolist(), self.bin_count.tolist())


@dataclass(frozen=True)
class VariogramCurve:
    distances: np.ndarray     # bin-center pixel distances, starting at 0
    gamma: np.ndarray         # semivariance per bin (normalized)
    n_pairs: np.ndarray       # pair count per bin; bins with n=0 carry gamma=nan
    normalization: float      # evaluation-set variance used for scaling

    def to_rows(self):
        return zip(self.distances.tolist(), self.gamma.tolist(), self.n_pairs.tolist())


def _as_patch_array(patches) -> np.ndarray:
    arr = np.asarray(patches, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise InputError(f"expected patches [n, h, w, c], got shape {arr.shape}")
    return arr


def energy_spectrum(patches) -> SpectrumCurve:
    """Radially averaged 2-D power spectrum over a set of square patches."""
    arr = _as_patch_array(patches)
    n, h, w, c = arr.shape
    if h != w:
        raise InputError(f"patches must be square, got {h}x{w}")

    freq = np.fft.fftfreq(h) * h
    kx, ky = np.meshgrid(freq, freq, indexing="ij")
    k_bin = np.rint(np.sqrt(kx**2 + ky**2)).astype(int)
    k_max = k_bin.max()
    counts = np.bincount(k_bin.ravel(), minlength=k_max + 1)

    power_sum = np.zeros(k_max + 1)
    for i in range(n):
        for ch in range(c):
            spec = np.fft.fft2(arr[i, :, :, ch])
            power = (spec.real**2 + spec.imag**2) / (h * w) ** 2
            power_sum += np.bincount(k_bin.ravel(), weights=power.ravel(), minlength=k_max + 1)
    energy = power_sum / (n * c * counts)
    return SpectrumCurve(wavenumbers=np.arange(k_max + 1), energy=energy, bin_count=counts)


def isotropic_offsets(max_lag: int) -> list[tuple[int, int]]:
    """Axis-aligned and diagonal pixel offsets with Euclidean length <= max_lag."""
    offsets = []
    for d in range(1, max_lag + 1):
        offsets += [(0, d), (d, 0)]
    d = 1
    while d * np.sqrt(2.0) <= max_lag:
        offsets += [(d, d), (d, -d)]
        d += 1
    return offsets


def semivariogram(
    patches,
    max_lag: int,
    n_bins: int,
    offsets: list[tuple[int, int]] | None = None,
    normalization: float | None = None,
) -> VariogramCurve:
    """Empirical Matheron semivariogram binned by Euclidean pixel distance.

    gamma(h) = sum of squared increments / (2 * pair count), aggregated over
    all patches and all offsets falling in each distance bin, then divided by
    the evaluation-set variance (or the given normalization)."""
    arr = _as_patch_array(patches)
    _, h, w, _ = arr.shape
    if max_lag >= min(h, w):
        raise InputError(f"max_lag {max_lag} must be smaller than patch size {min(h, w)}")
    if offsets is None:
        offsets = isotropic_offsets(max_lag)

    max_dist = max(np.hypot(dr, dc) for dr, dc in offsets)
    edges = np.linspace(0.0, max_dist, n_bins + 1)
    sq_sum = np.zeros(n_bins)
    n_pairs = np.zeros(n_bins, dtype=np.int64)

    for dr, dc in offsets:
        if dr < 0:
            dr, dc = -dr, -dc  # same pair set, canonical orientation
        dist = float(np.hypot(dr, dc))
        b = min(int(np.searchsorted(edges, dist, side="left") - 1), n_bins - 1)
        if dc >= 0:
            a = arr[:, : h - dr, : w - dc]
            bshift = arr[:, dr:, dc:]
        else:
            a = arr[:, : h - dr, -dc:]
            bshift = arr[:, dr:, : w + dc]
        diff = a - bshift
        sq_sum[b] += float(np.sum(diff**2))
        n_pairs[b] += diff.size

    if normalization is None:
        normalization = float(arr.var())
    scale = normalization if normalization > 0 else 1.0

    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.where(n_pairs > 0, sq_sum / (2.0 * np.maximum(n_pairs, 1)) / scale, np.nan)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return VariogramCurve(
        distances=np.concatenate([[0.0], centers]),
        gamma=np.concatenate([[0.0], gamma]),
        n_pairs=np.concatenate([[0], n_pairs]),
        normalization=float(normalization),
    )


def _log_spectrum_gap(truth: SpectrumCurve, pred: SpectrumCurve, k_range=None) -> float:
    """l2 gap between log power curves over nonzero wavenumbers."""
    k_max = min(truth.wavenumbers[-1], pred.wavenumbers[-1])
    lo, hi = (1, k_max) if k_range is None else k_range
    eps = 1e-30
    t = np.log(truth.energy[lo : hi + 1] + eps)
    p = np.log(pred.energy[lo : hi + 1] + eps)
    return float(np.linalg.norm(t - p))


def _variogram_gap(truth: VariogramCurve, pred: VariogramCurve) -> float:
    ok = (truth.n_pairs > 0) & (pred.n_pairs > 0)
    ok[0] = True  # the h=0 anchor contributes zero either way
    return float(np.linalg.norm(truth.gamma[ok] - pred.gamma[ok]))


def compare_report(
    ground_truth,
    predictions: dict[str, np.ndarray],
    max_lag: int | None = None,
    n_bins: int = 12,
    out_dir: str | Path | None = None,
) -> dict:
    """Spectrum/variogram curves for truth and predictions plus summary gaps.

    predictions maps a label (e.g. "sr_mse", "sr_rep") to a patch set of the
    same geometry as ground_truth. Gaps reported per label: l2 distance of log
    spectra to the truth (full range and upper half of wavenumbers) and l2
    distance of normalized variograms."""
    truth = _as_patch_array(ground_truth)
    preds = {name: _as_patch_array(p) for name, p in predictions.items()}
    for name, p in preds.items():
        if p.shape[1:] != truth.shape[1:]:
            raise InputError(f"{name} patches {p.shape[1:]} do not match truth {truth.shape[1:]}")
    if max_lag is None:
        max_lag = truth.shape[1] // 2

    truth_var = float(truth.var())
    spectra = {"ground_truth": energy_spectrum(truth)}
    variograms = {"ground_truth": semivariogram(truth, max_lag, n_bins, normalization=truth_var)}
    for name, p in preds.items():
        spectra[name] = energy_spectrum(p)
        variograms[name] = semivariogram(p, max_lag, n_bins, normalization=truth_var)

    k_max = int(spectra["ground_truth"].wavenumbers[-1])
    upper = (k_max // 2 + 1, k_max)
    summary = {}
    for name in preds:
        summary[name] = {
            "log_spectrum_gap": _log_spectrum_gap(spectra["ground_truth"], spectra[name]),
            "log_spectrum_gap_upper_half": _log_spectrum_gap(
                spectra["ground_truth"], spectra[name], k_range=upper
            ),
            "variogram_gap": _variogram_gap(variograms["ground_truth"], variograms[name]),
        }
    report = {"spectra": spectra, "variograms": variograms, "summary": summary}

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "spectrum.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["set", "wavenumber", "energy", "bin_count"])
            for name, curve in spectra.items():
                for k, e, c in curve.to_rows():
                    w.writerow([name, int(k), repr(e), int(c)])
        with open(out_dir / "variogram.csv", "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["set", "distance", "gamma", "n_pairs"])
            for name, curve in variograms.items():
                for d, g, np_ in curve.to_rows():
                    w.writerow([name, repr(d), repr(g), int(np_)])
        (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return report
