"""End-to-end orchestration: data, transform, pretext training, calibration,
super-resolution, and the evaluation report.

Every stage reads its inputs from and writes its artifacts under a single run
directory, so each stage is resumable from its predecessor's outputs. A
frozen copy of the resolved config is written at the start of a run; the
final summary.json is a deterministic function of config and seed in
deterministic mode.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from scipy import stats as sstats

from . import eval_stats, metric_cal, repnet, srgan, transform as transform_mod
from .errors import AtmodistError, StageError
from .field_data import FieldSeries, SyntheticConfig, generate_synthetic, load_series, save_series
from .pretext_train import TrainConfig, evaluate, pair_batches, train
from .repnet import RepNetConfig
from .sampler import SamplerConfig, sample_pairs, sample_sr_pairs
from .srgan import SRConfig, batch_sr_pairs, train_sr

DEFAULT_CONFIG: dict = {
    "seed": 0,
    "deterministic": True,
    "data": {
        "n_lat": 64,
        "n_lon": 64,
        "n_times": 400,
        "advection_speed": 1.5,
        "smoothing_scale": 3.5,
        "noise_injection_rate": 0.05,
        "time_step_hours": 3.0,
    },
    "split": {"train_stop": 280, "eval_start": 300},
    "transform": {"alpha": 0.2},
    "sampler": {
        "patch_size": 32,
        "pairs_per_timestep": 21,
        "max_lag_steps": 8,
        "full_weight_band": 60.0,
        "fade_limit": 82.5,
        "sr_scale_factor": 4,
        "sr_patches_per_timestep": 4,
    },
    "repnet": {
        "patch_size": 32,
        "in_channels": 2,
        "stem_channels": 16,
        "stages": [[1, 32], [1, 64]],
        "head_hidden": 256,
        "n_classes": 8,
    },
    "pretext": {
        "batch_size": 64,
        "epochs": 24,
        "curriculum_epochs": 5,
        "curriculum_batches": 10,
    },
    "sr": {
        "scale_factor": 4,
        "alpha_adv": 1e-3,
        "lr": 1e-4,
        "epochs": 6,
        "batch_size": 16,
        "base_channels": 32,
        "n_res_blocks": 4,
    },
    "eval": {"n_bins": 12},
}


def resolve_config(overrides: dict | None = None) -> dict:
    """Deep-merge user overrides into the desk-scale defaults."""

    def merge(base, extra):
        out = dict(base)
        for k, v in (extra or {}).items():
            out[k] = merge(base[k], v) if isinstance(v, dict) and isinstance(base.get(k), dict) else v
        return out

    return merge(DEFAULT_CONFIG, overrides or {})


def _apply_determinism(cfg: dict) -> None:
    if cfg.get("deterministic", True):
        torch.set_num_threads(1)
        torch.use_deterministic_algorithms(True)


def _sampler_cfg(cfg: dict, seed: int) -> SamplerConfig:
    return SamplerConfig(seed=seed, **cfg["sampler"])


def save_patch_set(patches: np.ndarray, path: Path, channels) -> None:
    """Dump a [n, h, w, c] patch set in the field-data binary format."""
    n, h, w, _ = patches.shape
    series = FieldSeries(
        values=np.ascontiguousarray(patches, dtype=np.float32),
        channels=tuple(channels),
        time_step_hours=1.0,
        lat_coords=np.arange(h, dtype=np.float64),
        lon_coords=np.arange(w, dtype=np.float64),
    )
    save_series(series, path)


def load_patch_set(path: Path) -> np.ndarray:
    return load_series(path).values


# ── Stages ───────────────────────────────────────────────────────────────

def stage_gen_data(cfg: dict, run_dir: Path) -> Path:
    data_path = run_dir / "data" / "series.bin"
    series = generate_synthetic(SyntheticConfig(seed=cfg["seed"], **cfg["data"]))
    save_series(series, data_path)
    return data_path


def stage_fit_transform(cfg: dict, run_dir: Path) -> Path:
    series = load_series(run_dir / "data" / "series.bin")
    train_series = series.time_slice(0, cfg["split"]["train_stop"])
    tspec = transform_mod.fit(train_series, alpha=cfg["transform"]["alpha"])
    out = run_dir / "transform.json"
    tspec.save(out)
    return out


def stage_train_pretext(cfg: dict, run_dir: Path) -> Path:
    series = load_series(run_dir / "data" / "series.bin")
    tspec = transform_mod.TransformSpec.load(run_dir / "transform.json")
    scfg = _sampler_cfg(cfg, cfg["seed"])
    tcfg = TrainConfig(seed=cfg["seed"], **cfg["pretext"])
    train_range = (0, cfg["split"]["train_stop"])
    eval_range = (cfg["split"]["eval_start"], series.n_times)

    model = repnet.build(RepNetConfig.from_dict(cfg["repnet"]), seed=cfg["seed"])
    eval_batches = pair_batches(series, tspec, scfg, eval_range, tcfg.batch_size, seed=cfg["seed"] + 10_000)

    def stream(epoch: int):
        return pair_batches(series, tspec, scfg, train_range, tcfg.batch_size, seed=cfg["seed"] + epoch + 1)

    model, log = train(model, stream, eval_batches, tcfg)
    ckpt = run_dir / "ckpt"
    repnet.save_checkpoint(model, tspec, ckpt)
    log.to_csv(run_dir / "pretext_log.csv")
    eval_loss, eval_acc = evaluate(model, eval_batches)
    (run_dir / "pretext_summary.json").write_text(
        json.dumps(
            {
                "eval_loss": eval_loss,
                "eval_acc": eval_acc,
                "curriculum_digests": log.curriculum_digests,
            },
            indent=2,
            sort_keys=True,
        )
    )
    return ckpt


def stage_profile(cfg: dict, run_dir: Path) -> Path:
    series = load_series(run_dir / "data" / "series.bin")
    model, tspec = repnet.load_checkpoint(run_dir / "ckpt")
    scfg = _sampler_cfg(cfg, cfg["seed"] + 20_000)
    eval_range = (cfg["split"]["eval_start"], series.n_times)
    n_lags = scfg.max_lag_steps

    samples = list(sample_pairs(series, tspec, scfg, eval_range))
    rep_profile = metric_cal.distance_profile(model, samples, n_lags)
    mse_profile = metric_cal.distance_profile("mse", samples, n_lags)
    rep_profile.to_csv(run_dir / "profile_rep.csv")
    mse_profile.to_csv(run_dir / "profile_mse.csv")

    alpha = metric_cal.fit_alpha_cnt(rep_profile, mse_profile)
    spearman = float(sstats.spearmanr(rep_profile.lags, rep_profile.mean).statistic)
    out = run_dir / "calibration.json"
    out.write_text(
        json.dumps(
            {"alpha_cnt": alpha.alpha_cnt, "spearman_lag_rep_distance": spearman},
            indent=2,
            sort_keys=True,
        )
    )
    return out


def stage_train_sr(cfg: dict, run_dir: Path, modes=("mse", "representation")) -> dict[str, Path]:
    series = load_series(run_dir / "data" / "series.bin")
    tspec = transform_mod.TransformSpec.load(run_dir / "transform.json")
    scfg = _sampler_cfg(cfg, cfg["seed"] + 30_000)
    train_range = (0, cfg["split"]["train_stop"])
    eval_range = (cfg["split"]["eval_start"], series.n_times)

    calib_path = run_dir / "calibration.json"
    outputs = {}
    train_pairs = list(sample_sr_pairs(series, scfg, tspec, train_range))
    eval_pairs = list(sample_sr_pairs(series, scfg, tspec, eval_range))
    truth = np.stack([hi for _, hi in eval_pairs])
    save_patch_set(truth, run_dir / "sr_eval_truth.bin", series.channels)

    for mode in modes:
        if mode == "representation":
            if not (run_dir / "ckpt" / "params.bin").exists():
                raise StageError("train-sr", f"missing checkpoint {run_dir / 'ckpt' / 'params.bin'}")
            rep_model, _ = repnet.load_checkpoint(run_dir / "ckpt")
            alpha_cnt = json.loads(calib_path.read_text())["alpha_cnt"]
        else:
            rep_model, alpha_cnt = None, 1.0
        sr_cfg = SRConfig(
            content_loss_kind=mode,
            alpha_cnt=alpha_cnt,
            in_channels=len(series.channels),
            seed=cfg["seed"],
            **cfg["sr"],
        )
        batches = batch_sr_pairs(train_pairs, sr_cfg.batch_size)
        gen, curves = train_sr(sr_cfg, batches, rep_model)

        out_dir = run_dir / f"sr_{mode}"
        out_dir.mkdir(parents=True, exist_ok=True)
        torch.save(gen.state_dict(), out_dir / "generator.pt")
        (out_dir / "curves.json").write_text(
            json.dumps(
                {"epochs": curves.epochs, "first_epoch_probe": curves.first_epoch_probe},
                indent=2,
                sort_keys=True,
            )
        )
        gen.eval()
        with torch.no_grad():
            lows = torch.from_numpy(np.stack([lo for lo, _ in eval_pairs])).permute(0, 3, 1, 2)
            pred = gen(lows).permute(0, 2, 3, 1).numpy()
        save_patch_set(pred, out_dir / "generated.bin", series.channels)
        outputs[mode] = out_dir
    return outputs


def stage_eval(cfg: dict, run_dir: Path) -> Path:
    truth = load_patch_set(run_dir / "sr_eval_truth.bin")
    preds = {}
    for mode in ("mse", "representation"):
        path = run_dir / f"sr_{mode}" / "generated.bin"
        if path.exists():
            preds[f"sr_{mode}"] = load_patch_set(path)
    report_dir = run_dir / "report"
    eval_stats.compare_report(truth, preds, n_bins=cfg["eval"]["n_bins"], out_dir=report_dir)
    return report_dir


_STAGES = [
    ("gen-data", stage_gen_data),
    ("fit-transform", stage_fit_transform),
    ("train-pretext", stage_train_pretext),
    ("profile", stage_profile),
    ("train-sr", stage_train_sr),
    ("eval", stage_eval),
]


def run_pipeline(cfg: dict, run_dir: str | Path) -> Path:
    """Run all stages in order, writing artifacts and a final summary.json."""
    cfg = resolve_config(cfg)
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    _apply_determinism(cfg)
    (run_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True))

    for name, fn in _STAGES:
        try:
            fn(cfg, run_dir)
        except StageError:
            raise
        except AtmodistError as err:
            raise StageError(name, str(err)) from err

    summary = {
        "pretext": json.loads((run_dir / "pretext_summary.json").read_text()),
        "calibration": json.loads((run_dir / "calibration.json").read_text()),
        "sr_gaps": json.loads((run_dir / "report" / "summary.json").read_text()),
    }
    out = run_dir / "summary.json"
    out.write_text(json.dumps(summary, indent=2, sort_keys=True))
    return out
