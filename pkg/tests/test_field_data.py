import numpy as np
import pytest
from scipy import stats

from atmodist.errors import ConfigurationError, FormatError
from atmodist.field_data import (
    SyntheticConfig,
    generate_synthetic,
    load_series,
    save_series,
)


def test_frozen_dynamics_all_frames_identical():
    cfg = SyntheticConfig(seed=0, n_times=5, advection_speed=0.0, noise_injection_rate=0.0)
    s = generate_synthetic(cfg)
    for t in range(1, s.n_times):
        np.testing.assert_array_equal(s.values[t], s.values[0])


def test_same_seed_bit_identical():
    cfg = SyntheticConfig(seed=42, n_times=6)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    np.testing.assert_array_equal(a.values, b.values)


def test_temporal_decorrelation(small_series):
    v = small_series.values

    def corr(x, y):
        return np.corrcoef(x.ravel(), y.ravel())[0, 1]

    assert corr(v[0], v[1]) > corr(v[0], v[10])


def test_heavy_tailed_channels(small_series):
    for c in range(small_series.n_channels):
        assert stats.kurtosis(small_series.values[..., c].ravel()) > 0


def test_metadata_and_finiteness(small_series):
    assert np.all(np.isfinite(small_series.values))
    assert small_series.time_step_hours > 0
    # latitudes descend from north, longitudes periodic in [0, 360)
    assert small_series.lat_coords[0] > small_series.lat_coords[-1]
    assert small_series.lon_coords.min() >= 0 and small_series.lon_coords.max() < 360


@pytest.mark.parametrize("bad", [dict(n_lat=16), dict(n_lon=8), dict(n_times=1)])
def test_invalid_config_rejected(bad):
    with pytest.raises(ConfigurationError):
        generate_synthetic(SyntheticConfig(**bad))


def test_save_load_roundtrip(tmp_path):
    s = generate_synthetic(SyntheticConfig(seed=1, n_times=4, n_lat=32, n_lon=32))
    path = tmp_path / "series.bin"
    save_series(s, path)
    loaded = load_series(path)
    np.testing.assert_array_equal(loaded.values, s.values)
    assert loaded.channels == s.channels
    assert loaded.time_step_hours == s.time_step_hours
    np.testing.assert_array_equal(loaded.lat_coords, s.lat_coords)
    np.testing.assert_array_equal(loaded.lon_coords, s.lon_coords)


def test_truncated_file_names_byte_counts(tmp_path):
    s = generate_synthetic(SyntheticConfig(seed=1, n_times=4, n_lat=32, n_lon=32))
    path = tmp_path / "series.bin"
    save_series(s, path)
    data = path.read_bytes()
    path.write_bytes(data[: len(data) // 2])
    with pytest.raises(FormatError, match=rf"{len(data) // 2}.*{len(data)}"):
        load_series(path)


def test_channel_count_mismatch(tmp_path):
    import json

    s = generate_synthetic(SyntheticConfig(seed=1, n_times=4, n_lat=32, n_lon=32))
    path = tmp_path / "series.bin"
    save_series(s, path)
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    meta["channels"] = ["a", "b", "c"]
    sidecar.write_text(json.dumps(meta))
    with pytest.raises(FormatError, match="channels"):
        load_series(path)


def test_missing_sidecar(tmp_path):
    s = generate_synthetic(SyntheticConfig(seed=1, n_times=4, n_lat=32, n_lon=32))
    path = tmp_path / "series.bin"
    save_series(s, path)
    path.with_suffix(".json").unlink()
    with pytest.raises(FormatError, match="sidecar"):
        load_series(path)
