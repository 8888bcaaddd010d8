import numpy as np
import pytest
import torch

from atmodist import pipeline
from atmodist.field_data import SyntheticConfig, generate_synthetic


@pytest.fixture(scope="session")
def desk_run(tmp_path_factory):
    """Full desk-scale pipeline artifacts (trained once, shared by all tests)."""
    torch.set_num_threads(4)
    run = tmp_path_factory.mktemp("desk_run")
    cfg = pipeline.resolve_config({"deterministic": False})
    pipeline.stage_gen_data(cfg, run)
    pipeline.stage_fit_transform(cfg, run)
    pipeline.stage_train_pretext(cfg, run)
    pipeline.stage_profile(cfg, run)
    pipeline.stage_train_sr(cfg, run)
    pipeline.stage_eval(cfg, run)
    return run, cfg


@pytest.fixture(scope="session")
def small_series():
    return generate_synthetic(SyntheticConfig(seed=3, n_times=40))


@pytest.fixture(scope="session")
def sampler_statistics():
    """~1e5 lag labels and patch-center latitudes on a fine-latitude grid."""
    from atmodist import transform as transform_mod
    from atmodist.sampler import SamplerConfig, _patch_center_lat, sample_pairs

    series = generate_synthetic(
        SyntheticConfig(seed=11, n_lat=181, n_lon=64, n_times=58, smoothing_scale=2.0)
    )
    tspec = transform_mod.fit(series)
    cfg = SamplerConfig(patch_size=16, pairs_per_timestep=2000, max_lag_steps=8, seed=5)
    lat_by_row = {float(series.lat_coords[r]): r for r in range(series.n_lat)}
    lags, center_lats = [], []
    for s in sample_pairs(series, tspec, cfg):
        lags.append(s.lag_class)
        row0 = lat_by_row[s.lat_origin]
        center_lats.append(_patch_center_lat(series, row0, cfg.patch_size))
    return series, cfg, np.array(lags), np.array(center_lats)
