"""Latitude-weighted random patch sampling for pretext pairs and SR pairs.

Patch pairs share one spatial window and carry a categorical lag label equal
to the time-step difference minus one. Latitude selection is by rejection
sampling against a trapezoidal weight: full weight equatorward of the band
edge, linear fade to zero at the polar limit. Longitude wraps periodically;
latitude does not (patches are additionally constrained so they never extend
poleward of the fade limit).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import transform as transform_mod
from .errors import ConfigurationError, FormatError
from .field_data import FieldSeries
from .transform import TransformSpec


@dataclass(frozen=True)
class SamplerConfig:
    patch_size: int = 32
    pairs_per_timestep: int = 21
    max_lag_steps: int = 8           # lag classes are 1..max_lag_steps
    full_weight_band: float = 60.0   # degrees; full weight for |lat| <= band
    fade_limit: float = 82.5         # degrees; zero weight poleward of this
    seed: int = 0
    sr_scale_factor: int = 4
    sr_patches_per_timestep: int = 4

    def __post_init__(self):
        if self.max_lag_steps < 1:
            raise ConfigurationError("max_lag_steps must be >= 1")
        if self.fade_limit <= self.full_weight_band:
            raise ConfigurationError("fade_limit must exceed the full-weight band edge")


@dataclass(frozen=True)
class PatchPairSample:
    """Two co-located patches [h, w, channel] in transformed units plus lag label."""

    patch_a: np.ndarray
    patch_b: np.ndarray
    lag_class: int            # in [0, N-1]; pair is lag_class+1 steps apart
    time_index: int           # time of patch_a; patch_b is at time_index + lag_class + 1
    lat_origin: float         # latitude of the patch's first (northernmost) row
    lon_origin: float


def latitude_weight(lat_center: float, cfg: SamplerConfig) -> float:
    """Trapezoidal sampling weight for a patch-center latitude."""
    a = abs(lat_center)
    if a <= cfg.full_weight_band:
        return 1.0
    if a >= cfg.fade_limit:
        return 0.0
    return (cfg.fade_limit - a) / (cfg.fade_limit - cfg.full_weight_band)


def _valid_origin_rows(series: FieldSeries, cfg: SamplerConfig) -> np.ndarray:
    """Origin rows whose full patch lies equatorward of the fade limit."""
    p = cfg.patch_size
    if p > series.n_lat or p > series.n_lon:
        raise ConfigurationError(
            f"patch_size {p} exceeds grid {series.n_lat}x{series.n_lon}"
        )
    lat = series.lat_coords
    rows = np.arange(series.n_lat - p + 1)
    top = lat[rows]
    bottom = lat[rows + p - 1]
    ok = (top <= cfg.fade_limit) & (bottom >= -cfg.fade_limit)
    return rows[ok]


def _patch_center_lat(series: FieldSeries, row0: int, patch_size: int) -> float:
    lat = series.lat_coords
    return 0.5 * (lat[row0] + lat[row0 + patch_size - 1])


def _row_weights(series, cfg, rows) -> np.ndarray:
    weights = np.array(
        [latitude_weight(_patch_center_lat(series, r, cfg.patch_size), cfg) for r in rows]
    )
    if not np.any(weights > 0):
        raise ConfigurationError("no admissible patch rows with positive latitude weight")
    return weights


def _draw_origin(series, rows, weights, rng) -> tuple[int, int]:
    """Rejection-sample an origin (row, col) against the latitude weight."""
    while True:
        i = rng.integers(len(rows))
        if rng.random() < weights[i]:
            break
    col = int(rng.integers(series.n_lon))
    return int(rows[i]), col


def _extract_patch(series: FieldSeries, t: int, row0: int, col0: int, p: int) -> np.ndarray:
    cols = (col0 + np.arange(p)) % series.n_lon
    return series.values[t, row0 : row0 + p][:, cols]


def sample_pairs(
    series: FieldSeries,
    spec: TransformSpec,
    cfg: SamplerConfig,
    time_range: tuple[int, int] | None = None,
) -> Iterator[PatchPairSample]:
    """Yield transformed patch pairs with uniform lags for each anchor time.

    Anchor times are those in time_range (default: the whole series) that
    leave room for the maximum lag. Deterministic for a fixed config seed.
    """
    t0, t1 = time_range if time_range is not None else (0, series.n_times)
    n_anchor = (t1 - t0) - cfg.max_lag_steps
    if n_anchor < 1:
        raise ConfigurationError(
            f"time range of length {t1 - t0} is too short for max lag {cfg.max_lag_steps}"
        )
    rows = _valid_origin_rows(series, cfg)
    weights = _row_weights(series, cfg, rows)
    rng = np.random.default_rng(cfg.seed)
    p = cfg.patch_size

    for t in range(t0, t0 + n_anchor):
        for _ in range(cfg.pairs_per_timestep):
            row0, col0 = _draw_origin(series, rows, weights, rng)
            lag = int(rng.integers(1, cfg.max_lag_steps + 1))
            a = _extract_patch(series, t, row0, col0, p)
            b = _extract_patch(series, t + lag, row0, col0, p)
            yield PatchPairSample(
                patch_a=transform_mod.forward(a, spec).astype(np.float32),
                patch_b=transform_mod.forward(b, spec).astype(np.float32),
                lag_class=lag - 1,
                time_index=t,
                lat_origin=float(series.lat_coords[row0]),
                lon_origin=float(series.lon_coords[col0]),
            )


def save_pair_cache(samples: list[PatchPairSample], path) -> None:
    """Write sampled pairs in the raw float32 + JSON sidecar idiom.

    Values hold [n, h, w, 2c] with patch_a and patch_b stacked along the
    channel axis; labels and anchor locations live in the sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arr = np.stack([np.concatenate([s.patch_a, s.patch_b], axis=-1) for s in samples])
    np.ascontiguousarray(arr, dtype="<f4").tofile(path)
    meta = {
        "version": 1,
        "shape": list(arr.shape),
        "dtype": "<f4",
        "order": "sample,lat,lon,channel(a then b)",
        "lag_classes": [s.lag_class for s in samples],
        "time_indices": [s.time_index for s in samples],
        "lat_origins": [s.lat_origin for s in samples],
        "lon_origins": [s.lon_origin for s in samples],
    }
    path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True))


def load_pair_cache(path) -> list[PatchPairSample]:
    """Load pairs written by save_pair_cache."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise FormatError(f"missing pair-cache sidecar {sidecar}")
    meta = json.loads(sidecar.read_text())
    shape = tuple(meta["shape"])
    expected = int(np.prod(shape)) * 4
    if path.stat().st_size != expected:
        raise FormatError(
            f"pair cache {path} holds {path.stat().st_size} bytes, expected {expected}"
        )
    arr = np.fromfile(path, dtype="<f4").reshape(shape)
    c = shape[3] // 2
    return [
        PatchPairSample(
            patch_a=arr[i, :, :, :c],
            patch_b=arr[i, :, :, c:],
            lag_class=meta["lag_classes"][i],
            time_index=meta["time_indices"][i],
            lat_origin=meta["lat_origins"][i],
            lon_origin=meta["lon_origins"][i],
        )
        for i in range(shape[0])
    ]


def average_pool(patch: np.ndarray, factor: int) -> np.ndarray:
    """Non-overlapping mean pooling of a [h, w, channel] patch."""
    h, w, c = patch.shape
    if h % factor or w % factor:
        raise ConfigurationError(f"patch {h}x{w} not divisible by scale factor {factor}")
    return patch.reshape(h // factor, factor, w // factor, factor, c).mean(axis=(1, 3))


def sample_sr_pairs(
    series: FieldSeries,
    cfg: SamplerConfig,
    spec: TransformSpec | None = None,
    time_range: tuple[int, int] | None = None,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield (low_res, high_res) patch pairs; low_res is average-pooled high_res.

    If a TransformSpec is given, patches are emitted in transformed units so
    SR training sees the same normalization as the pretext task.
    """
    if cfg.patch_size % cfg.sr_scale_factor:
        raise ConfigurationError(
            f"patch_size {cfg.patch_size} not divisible by scale factor {cfg.sr_scale_factor}"
        )
    t0, t1 = time_range if time_range is not None else (0, series.n_times)
    rows = _valid_origin_rows(series, cfg)
    weights = _row_weights(series, cfg, rows)
    rng = np.random.default_rng(cfg.seed + 1)  # independent stream from sample_pairs

    for t in range(t0, t1):
        for _ in range(cfg.sr_patches_per_timestep):
            row0, col0 = _draw_origin(series, rows, weights, rng)
            high = _extract_patch(series, t, row0, col0, cfg.patch_size)
            if spec is not None:
                high = transform_mod.forward(high, spec)
            high = high.astype(np.float32)
            low = average_pool(high, cfg.sr_scale_factor)
            yield low, high
