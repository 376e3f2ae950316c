"""Command-line entry point.

Subcommands mirror the pipeline stages: ``gen-data``, ``train-rae``,
``train-lfm``, ``sample``, ``eval``, ``pipeline``, ``ablate``.  Exit
codes: 0 success, 1 runtime failure, 2 config/validation error.  All
subcommands take the same JSON run-config document (missing sections
fall back to defaults; unknown keys are rejected).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import tensor_io
from .degsim import build_dataset, load_dataset
from .lfm import load_field, save_field
from .pipeline import (
    ABLATION_ARMS,
    ConfigError,
    _fit_stage1,
    _fit_stage2,
    _solver_config,
    eval_sweep,
    run_ablate,
    run_pipeline,
    summarize_sweep,
    validate_config,
    write_csv,
)
from .rae import load_rae, save_rae
from .sampler import integrate
from .spline import DegradationLevelSet, normalize_scale


def _load_config(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file {path} is not valid JSON: {e}")
    return validate_config(raw)


def _cmd_gen_data(args) -> int:
    cfg = _load_config(args.config)
    d = cfg["data"]
    build_dataset(
        args.out,
        d["n_train_scenes"],
        d["n_eval_scenes"],
        d["train_scales"],
        d["holdout_scales"],
        seed=cfg["seed"],
        kappa=d["kappa"],
    )
    print(f"dataset written to {args.out}")
    return 0


def _cmd_train_rae(args) -> int:
    cfg = _load_config(args.config)
    manifest, images = load_dataset(args.data)
    model, curve = _fit_stage1(cfg, manifest, images)
    save_rae(model, args.out)
    write_csv(Path(args.out) / "loss.csv", ["iter", "loss"], list(enumerate(curve)))
    print(f"rae checkpoint written to {args.out} (final loss {curve[-1]:.6g})")
    return 0


def _cmd_train_lfm(args) -> int:
    cfg = _load_config(args.config)
    manifest, images = load_dataset(args.data)
    rae = load_rae(args.rae)
    field, curve = _fit_stage2(cfg, rae, manifest, images)
    save_field(field, args.out)
    (Path(args.out) / "levels.json").write_text(
        json.dumps({"train_scales": manifest["train_scales"]}, sort_keys=True) + "\n"
    )
    write_csv(Path(args.out) / "loss.csv", ["iter", "cfm", "perceptual", "total"], curve)
    print(f"lfm checkpoint written to {args.out} (final total loss {curve[-1][3]:.6g})")
    return 0


def _cmd_sample(args) -> int:
    rae = load_rae(args.rae)
    field = load_field(args.lfm)
    if args.t is not None:
        t = float(args.t)
    else:
        if args.scale is None:
            raise ConfigError("provide either --scale or --t")
        levels_path = Path(args.lfm) / "levels.json"
        if not levels_path.exists():
            raise ConfigError(f"missing scale map {levels_path}; use --t instead")
        levels = DegradationLevelSet(
            tuple(json.loads(levels_path.read_text())["train_scales"])
        )
        t = normalize_scale(args.scale, levels)
    image = tensor_io.read(args.input)
    from .rae import decode, encode

    z0, hr_feats = encode(rae, image)
    sol = integrate(field, z0, t, _solver_config(validate_config({"seed": 0})))
    out_img = decode(rae, sol.latent, hr_feats)
    tensor_io.write(args.out, out_img)
    print(f"t={t:g} nfe={sol.nfe}")
    log = Path(args.out).with_name("nfe_log.csv")
    header = not log.exists()
    with log.open("a") as f:
        if header:
            f.write("input,t,nfe\n")
        f.write(f"{args.input},{t!r},{sol.nfe}\n")
    return 0


def _cmd_eval(args) -> int:
    cfg = _load_config(args.config) if args.config else validate_config({"seed": 0})
    rae = load_rae(args.rae)
    field = load_field(args.lfm)
    manifest, images = load_dataset(args.data)
    t_grid = np.linspace(0.0, 1.0, args.t_grid_points)
    rows, timing = eval_sweep(rae, field, manifest, images, t_grid, _solver_config(cfg))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "eval.csv", ["scene_id", "t", "holdout_scale", "psnr", "nfe"], rows)
    write_csv(out / "timing.csv", ["scene_id", "wall_time_s"], timing)
    summary, argmax = summarize_sweep(rows, manifest["holdout_scales"])
    write_csv(out / "summary.csv", ["holdout_scale", "t", "mean_psnr"], summary)
    write_csv(
        out / "argmax.csv",
        ["holdout_scale", "argmax_t", "mean_psnr"],
        [(k, t, m) for k, (t, m) in argmax.items()],
    )
    for key, (t, m) in argmax.items():
        print(f"holdout x{key}: argmax t={t:g} mean psnr={m:.3f} dB")
    return 0


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args.config)
    result = run_pipeline(cfg, args.out)
    for key, (t, m) in result["argmax"].items():
        print(f"holdout x{key}: argmax t={t:g} mean psnr={m:.3f} dB")
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config(args.config)
    if args.arms:
        arms = {}
        for name in args.arms.split(","):
            if name not in ABLATION_ARMS:
                raise ConfigError(
                    f"unknown ablation arm '{name}'; known: {sorted(ABLATION_ARMS)}"
                )
            arms[name] = ABLATION_ARMS[name]
    else:
        arms = dict(ABLATION_ARMS)
    run_ablate(cfg, arms, args.out)
    print(f"ablation results written to {Path(args.out) / 'ablation.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajflow",
        description="Continuous degradation trajectories via spline flow matching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic multi-scale dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train-rae", help="stage 1: train the autoencoder")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_rae)

    p = sub.add_parser("train-lfm", help="stage 2: train the velocity field")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--rae", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_train_lfm)

    p = sub.add_parser("sample", help="integrate a sharp image's latent to a target level")
    p.add_argument("--lfm", required=True)
    p.add_argument("--rae", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--scale", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("eval", help="timestep PSNR sweep over the eval scenes")
    p.add_argument("--rae", required=True)
    p.add_argument("--lfm", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--t-grid-points", type=int, default=21)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pipeline", help="run all stages end to end")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("ablate", help="run ablation arms and merge the results")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--arms", help="comma-separated arm names (default: all)")
    p.set_defaults(func=_cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
