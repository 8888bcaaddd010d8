"""Distance measures from the trained representation and content-loss calibration.

The learned distance between two patches is the l2 norm of their metric-layer
activation differences. Averaging it per lag class over an evaluation stream
gives a distance-vs-lag profile; matching the equilibrium tail of that
profile against the MSE tail in least squares yields the scalar alpha_cnt
used to scale the representation content loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch
from scipy import optimize

from .errors import DegenerateProfileError, IncompleteProfileError, InputError
from .repnet import RepresentationModel, represent
from .sampler import PatchPairSample


@dataclass(frozen=True)
class DistanceProfile:
    """Per-lag mean/std/count of a distance measure; lags are 1..N."""

    lags: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    n_samples: np.ndarray

    @property
    def n_lags(self) -> int:
        return len(self.lags)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["lag", "mean", "std", "n"])
            for row in zip(self.lags, self.mean, self.std, self.n_samples):
                w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(row[3])])

    @classmethod
    def from_csv(cls, path: str | Path) -> "DistanceProfile":
        rows = list(csv.DictReader(open(path)))
        return cls(
            lags=np.array([int(r["lag"]) for r in rows]),
            mean=np.array([float(r["mean"]) for r in rows]),
            std=np.array([float(r["std"]) for r in rows]),
            n_samples=np.array([int(r["n"]) for r in rows]),
        )


@dataclass(frozen=True)
class ContentLossScale:
    alpha_cnt: float


def rep_distance(model: RepresentationModel, patch_a: np.ndarray, patch_b: np.ndarray) -> float:
    """l2 norm of metric-layer activation differences between two patches."""
    ra = represent(model, patch_a)
    rb = represent(model, patch_b)
    return float(np.linalg.norm(ra - rb))


def mse_distance(patch_a: np.ndarray, patch_b: np.ndarray) -> float:
    """Mean squared error baseline distance."""
    a, b = np.asarray(patch_a, dtype=np.float64), np.asarray(patch_b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.mean((a - b) ** 2))


def _batched_rep_distances(model: RepresentationModel, samples: list[PatchPairSample],
                           batch_size: int = 64) -> np.ndarray:
    model.eval()
    out = []
    with torch.no_grad():
        for i in range(0, len(samples), batch_size):
            chunk = samples[i : i + batch_size]
            a = torch.from_numpy(np.stack([s.patch_a for s in chunk])).permute(0, 3, 1, 2)
            b = torch.from_numpy(np.stack([s.patch_b for s in chunk])).permute(0, 3, 1, 2)
            diff = model.represent(a) - model.represent(b)
            out.append(torch.linalg.vector_norm(diff, dim=1).numpy())
    return np.concatenate(out) if out else np.zeros(0)


def distance_profile(
    metric: RepresentationModel | Callable[[np.ndarray, np.ndarray], float] | str,
    stream: Iterable[PatchPairSample],
    n_lags: int,
) -> DistanceProfile:
    """Per-lag mean/std of a distance over a sample stream.

    metric is either a trained representation model, the string "mse", or any
    callable on two patches. Every lag 1..n_lags must be represented in the
    stream.
    """
    samples = list(stream)
    if isinstance(metric, RepresentationModel):
        dists = _batched_rep_distances(metric, samples)
    else:
        fn = mse_distance if metric == "mse" else metric
        dists = np.array([fn(s.patch_a, s.patch_b) for s in samples])
    labels = np.array([s.lag_class for s in samples])

    mean = np.zeros(n_lags)
    std = np.zeros(n_lags)
    n = np.zeros(n_lags, dtype=int)
    for k in range(n_lags):
        sel = dists[labels == k]
        n[k] = len(sel)
        if len(sel):
            mean[k] = sel.mean()
            std[k] = sel.std()
    missing = [k + 1 for k in range(n_lags) if n[k] == 0]
    if missing:
        raise IncompleteProfileError(f"no samples for lags {missing}", missing_lags=missing)
    return DistanceProfile(lags=np.arange(1, n_lags + 1), mean=mean, std=std, n_samples=n)


def _tail_slice(n_lags: int) -> slice:
    # lags floor(N/2)..N inclusive; lag t lives at index t-1
    return slice(n_lags // 2 - 1, n_lags)


def fit_alpha_cnt(c: DistanceProfile, m: DistanceProfile) -> ContentLossScale:
    """Least-squares match of the content-loss tail to the MSE tail.

    Minimizes sum_t (alpha * c_t - m_t)^2 over the equilibrium tail
    t = floor(N/2)..N; the closed-form solution sum(c_t m_t) / sum(c_t^2) is
    cross-checked against a numeric golden-section minimizer.
    """
    if c.n_lags != m.n_lags:
        raise InputError(f"profiles disagree on lag count: {c.n_lags} vs {m.n_lags}")
    tail = _tail_slice(c.n_lags)
    ct, mt = c.mean[tail], m.mean[tail]
    denom = float(np.sum(ct**2))
    if denom <= 0:
        raise DegenerateProfileError("content-loss profile tail is all zero")
    alpha = float(np.sum(ct * mt)) / denom

    objective = lambda a: float(np.sum((a * ct - mt) ** 2))
    res = optimize.minimize_scalar(
        objective, bounds=(1e-6, 1e6), method="bounded", options={"xatol": 1e-12}
    )
    if abs(res.x - alpha) > 1e-8 * max(abs(alpha), 1e-30):
        raise DegenerateProfileError(
            f"closed-form alpha {alpha} disagrees with numeric minimizer {res.x}"
        )
    return ContentLossScale(alpha_cnt=alpha)
