"""Command-line entry point; subcommands mirror the pipeline stages."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import eval_stats, pipeline, transform as transform_mod
from .errors import AtmodistError, StageError
from .field_data import SyntheticConfig, generate_synthetic, load_series, save_series
from .sampler import SamplerConfig, sample_pairs, save_pair_cache


def _load_json(path: str | None) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def cmd_gen_data(args) -> int:
    h, w = (int(x) for x in args.size.lower().split("x"))
    series = generate_synthetic(
        SyntheticConfig(seed=args.seed, n_lat=h, n_lon=w, n_times=args.times)
    )
    save_series(series, Path(args.out) / "series.bin")
    print(f"wrote {series.n_times}x{series.n_lat}x{series.n_lon} series to {args.out}")
    return 0


def cmd_fit_transform(args) -> int:
    series = load_series(Path(args.data) / "series.bin")
    tspec = transform_mod.fit(series, alpha=args.alpha)
    tspec.save(args.out)
    print(f"wrote transform spec to {args.out}")
    return 0


def cmd_sample(args) -> int:
    cfg = pipeline.resolve_config(_load_json(args.config))
    series = load_series(Path(args.data) / "series.bin")
    tspec = transform_mod.TransformSpec.load(args.transform)
    scfg = SamplerConfig(seed=cfg["seed"], **cfg["sampler"])
    samples = list(sample_pairs(series, tspec, scfg))
    save_pair_cache(samples, args.out)
    print(f"cached {len(samples)} pairs to {args.out}")
    return 0


def _stage_command(stage_name, stage_fn):
    def run(args) -> int:
        cfg = pipeline.resolve_config(_load_json(args.config))
        pipeline._apply_determinism(cfg)
        out = stage_fn(cfg, Path(args.run_dir))
        print(f"{stage_name} complete: {out}")
        return 0

    return run


def cmd_train_sr(args) -> int:
    cfg = pipeline.resolve_config(_load_json(args.config))
    pipeline._apply_determinism(cfg)
    modes = {"mse": ("mse",), "rep": ("representation",), "both": ("mse", "representation")}
    out = pipeline.stage_train_sr(cfg, Path(args.run_dir), modes=modes[args.loss])
    print(f"train-sr complete: {out}")
    return 0


def cmd_eval(args) -> int:
    truth = pipeline.load_patch_set(Path(args.truth))
    preds = {"pred": pipeline.load_patch_set(Path(args.pred))}
    if args.pred2:
        preds["pred2"] = pipeline.load_patch_set(Path(args.pred2))
    report = eval_stats.compare_report(truth, preds, out_dir=Path(args.out))
    print(json.dumps(report["summary"], indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = pipeline.resolve_config(_load_json(args.config))
    if args.deterministic:
        cfg["deterministic"] = True
    summary = pipeline.run_pipeline(cfg, args.run_dir)
    print(f"pipeline complete: {summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atmodist")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic field series")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", default="64x64", help="grid as HxW")
    p.add_argument("--times", type=int, default=256)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("fit-transform", help="fit the signed-log normalization")
    p.add_argument("--data", required=True)
    p.add_argument("--alpha", type=float, default=transform_mod.DEFAULT_ALPHA)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_fit_transform)

    p = sub.add_parser("sample", help="cache patch pairs offline")
    p.add_argument("--config")
    p.add_argument("--data", required=True)
    p.add_argument("--transform", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    for name, fn in (
        ("train-pretext", pipeline.stage_train_pretext),
        ("profile", pipeline.stage_profile),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--run-dir", required=True)
        p.set_defaults(fn=_stage_command(name, fn))

    p = sub.add_parser("train-sr", help="train super-resolution generator(s)")
    p.add_argument("--config")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--loss", choices=["mse", "rep", "both"], default="both")
    p.set_defaults(fn=cmd_train_sr)

    p = sub.add_parser("eval", help="spectrum/variogram comparison report")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--pred2")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--config")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(fn=cmd_run)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StageError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except AtmodistError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
