"""Signed-log normalization of heavy-tailed fields and its exact inverse.

The forward map is a three-stage, element-wise, per-channel transform:

    z = (x - mu1) / sigma1
    w = sign(z) * log(1 + alpha * |z|)
    y = (w - mu2) / sigma2

mu1/sigma1 are moments of the raw channel, mu2/sigma2 moments of w, all
computed over the fitting series. The log stage compresses the tails while
staying near-linear around zero; alpha controls the compression strength.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DegenerateDataError
from .field_data import FieldSeries

DEFAULT_ALPHA = 0.2


@dataclass(frozen=True)
class TransformSpec:
    """Per-channel normalization moments plus compression strength alpha."""

    channels: tuple[str, ...]
    mu1: np.ndarray      # raw-field mean, per channel
    sigma1: np.ndarray   # raw-field std
    mu2: np.ndarray      # mean of w
    sigma2: np.ndarray   # std of w
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be positive, got {self.alpha}")
        if np.any(self.sigma1 <= 0) or np.any(self.sigma2 <= 0):
            raise ConfigurationError("sigma1 and sigma2 must be positive")

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "mu1": self.mu1.tolist(),
            "sigma1": self.sigma1.tolist(),
            "mu2": self.mu2.tolist(),
            "sigma2": self.sigma2.tolist(),
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TransformSpec":
        return cls(
            channels=tuple(d["channels"]),
            mu1=np.asarray(d["mu1"], dtype=np.float64),
            sigma1=np.asarray(d["sigma1"], dtype=np.float64),
            mu2=np.asarray(d["mu2"], dtype=np.float64),
            sigma2=np.asarray(d["sigma2"], dtype=np.float64),
            alpha=float(d["alpha"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "TransformSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


class _Welford:
    """Streaming per-channel mean/variance in double precision."""

    def __init__(self, n_channels: int):
        self.n = 0
        self.mean = np.zeros(n_channels)
        self.m2 = np.zeros(n_channels)

    def update(self, chunk: np.ndarray) -> None:
        # chunk: [..., channel], flattened per channel
        flat = chunk.reshape(-1, chunk.shape[-1]).astype(np.float64)
        k = flat.shape[0]
        if k == 0:
            return
        chunk_mean = flat.mean(axis=0)
        chunk_m2 = ((flat - chunk_mean) ** 2).sum(axis=0)
        delta = chunk_mean - self.mean
        total = self.n + k
        self.mean += delta * (k / total)
        self.m2 += chunk_m2 + delta**2 * (self.n * k / total)
        self.n = total

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.m2 / max(self.n, 1))


def _signed_log(z: np.ndarray, alpha: float) -> np.ndarray:
    return np.sign(z) * np.log1p(alpha * np.abs(z))


def fit(series: FieldSeries, alpha: float = DEFAULT_ALPHA) -> TransformSpec:
    """Fit per-channel moments over the full series, one time slice at a time."""
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be positive, got {alpha}")
    n_ch = series.n_channels

    raw = _Welford(n_ch)
    for t in range(series.n_times):
        raw.update(series.values[t])
    mu1, sigma1 = raw.mean, raw.std
    bad = np.flatnonzero(sigma1 <= 0)
    if bad.size:
        names = [series.channels[i] for i in bad]
        raise DegenerateDataError(f"zero-variance channel(s): {names}")

    logged = _Welford(n_ch)
    for t in range(series.n_times):
        z = (series.values[t].astype(np.float64) - mu1) / sigma1
        logged.update(_signed_log(z, alpha))
    mu2, sigma2 = logged.mean, logged.std
    if np.any(sigma2 <= 0):
        raise DegenerateDataError("transformed field has zero variance")

    return TransformSpec(
        channels=series.channels, mu1=mu1, sigma1=sigma1, mu2=mu2, sigma2=sigma2, alpha=alpha
    )


def forward(x: np.ndarray, spec: TransformSpec) -> np.ndarray:
    """Apply the signed-log normalization element-wise; last axis is channel."""
    z = (np.asarray(x, dtype=np.float64) - spec.mu1) / spec.sigma1
    w = _signed_log(z, spec.alpha)
    return (w - spec.mu2) / spec.sigma2


def inverse(y: np.ndarray, spec: TransformSpec) -> np.ndarray:
    """Exact algebraic inverse of forward."""
    w = np.asarray(y, dtype=np.float64) * spec.sigma2 + spec.mu2
    z = np.sign(w) * np.expm1(np.abs(w)) / spec.alpha
    return z * spec.sigma1 + spec.mu1
