"""End-to-end orchestration: config validation, the two training stages,
the timestep evaluation sweep, and ablation arms.

Everything is a pure function of the validated config (seed included).
All CSV outputs are byte-stable across reruns except ``timing.csv``,
which records wall-clock measurements and is deliberately kept out of
the deterministic set.
"""

from __future__ import annotations

import copy
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .degsim import build_dataset, load_dataset, psnr
from .lfm import (
    ExtrapolationMode,
    FieldConfig,
    LfmTrainConfig,
    VelocityField,
    build_latent_scene,
    save_field,
    train_lfm,
)
from .rae import RaeConfig, RaeModel, RaeTrainConfig, decode, encode, save_rae, train_rae
from .sampler import SolverConfig, integrate
from .spline import DegradationLevelSet

__all__ = [
    "ConfigError",
    "DEFAULT_CONFIG",
    "validate_config",
    "run_pipeline",
    "eval_sweep",
    "run_ablate",
    "ABLATION_ARMS",
]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending key."""


DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "n_train_scenes": 512,
        "n_eval_scenes": 16,
        "train_scales": [1.0, 2.0, 4.0],
        "holdout_scales": [3.0],
        "kappa": 0.6,
    },
    "rae": {
        "iters": 12000,
        "batch_size": 16,
        "lr_max": 3e-3,
        "lr_min": 1e-5,
        "hidden": [192, 96],
        "latent_dim": 64,
        "skips": True,
        "hr_grad_from_lr_term": True,
    },
    "lfm": {
        "iters": 7000,
        "batch_size": 16,
        "lr_max": 3e-3,
        "lr_min": 1e-5,
        "lam": 0.1,
        "mode": "taylor3",
        "perceptual": "pixel_gradient",
        "linear_trajectory": False,
        "projection": "next",
        "delta": 1e-3,
        "width": 128,
        "n_freqs": 8,
    },
    "sampler": {
        "rtol": 1e-5,
        "atol": 1e-7,
        "h0": 1e-2,
        "max_steps": 10000,
    },
    "eval": {
        "t_grid_points": 21,
    },
}


def validate_config(cfg: dict) -> dict:
    """Merge over defaults; unknown keys and a missing seed are errors."""
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if "seed" not in cfg:
        raise ConfigError("missing mandatory key 'seed'")
    merged = copy.deepcopy(DEFAULT_CONFIG)
    for key, value in cfg.items():
        if key not in DEFAULT_CONFIG:
            raise ConfigError(f"unknown config key '{key}'")
        if key == "seed":
            merged["seed"] = int(value)
            continue
        if not isinstance(value, dict):
            raise ConfigError(f"config section '{key}' must be an object")
        for sub, sval in value.items():
            if sub not in DEFAULT_CONFIG[key]:
                raise ConfigError(f"unknown config key '{key}.{sub}'")
            merged[key][sub] = sval
    return merged


def _n_workers() -> int:
    env = os.environ.get("TRAJFLOW_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _train_scene_images(manifest, images):
    scenes = []
    for scene in manifest["scenes"]:
        if scene["role"] != "train":
            continue
        per_scale = {
            key: images[scene["id"]][key]
            for key, entry in scene["files"].items()
            if not entry["eval_only"]
        }
        scenes.append(per_scale)
    return scenes


def _fit_stage1(cfg: dict, manifest, images) -> tuple[RaeModel, list[float]]:
    rcfg = cfg["rae"]
    model = RaeModel(
        RaeConfig(
            hidden=tuple(rcfg["hidden"]),
            latent_dim=rcfg["latent_dim"],
            skips=rcfg["skips"],
            seed=cfg["seed"],
        )
    )
    train_cfg = RaeTrainConfig(
        iters=rcfg["iters"],
        batch_size=rcfg["batch_size"],
        lr_max=rcfg["lr_max"],
        lr_min=rcfg["lr_min"],
        seed=cfg["seed"],
        hr_grad_from_lr_term=rcfg["hr_grad_from_lr_term"],
    )
    return train_rae(model, _train_scene_images(manifest, images), train_cfg)


def _fit_stage2(cfg: dict, rae: RaeModel, manifest, images):
    levels = DegradationLevelSet(tuple(manifest["train_scales"]))
    lfm_scenes = [
        build_latent_scene(rae, per_scale, levels)
        for per_scale in _train_scene_images(manifest, images)
    ]
    lcfg = cfg["lfm"]
    field = VelocityField(
        FieldConfig(
            latent_dim=rae.config.latent_dim,
            width=lcfg["width"],
            n_freqs=lcfg["n_freqs"],
            seed=cfg["seed"],
        )
    )
    train_cfg = LfmTrainConfig(
        iters=lcfg["iters"],
        batch_size=lcfg["batch_size"],
        lr_max=lcfg["lr_max"],
        lr_min=lcfg["lr_min"],
        lam=lcfg["lam"],
        mode=ExtrapolationMode(lcfg["mode"]),
        perceptual=lcfg["perceptual"],
        linear_trajectory=lcfg["linear_trajectory"],
        projection=lcfg["projection"],
        delta=lcfg["delta"],
        seed=cfg["seed"],
    )
    return train_lfm(field, lfm_scenes, train_cfg, rae=rae)


def _solver_config(cfg: dict) -> SolverConfig:
    s = cfg["sampler"]
    return SolverConfig(rtol=s["rtol"], atol=s["atol"], h0=s["h0"], max_steps=s["max_steps"])


def eval_sweep(rae: RaeModel, field: VelocityField, manifest, images, t_grid, solver_cfg):
    """Integrate every eval scene's sharp latent to every grid time.

    Returns (rows, timing_rows).  Each row: scene id, t, held-out scale,
    PSNR of the decoded latent against that scale's ground truth, NFE.
    """
    holdout = [f"{s:g}" for s in manifest["holdout_scales"]]
    hr_key = f"{manifest['train_scales'][0]:g}"
    eval_scenes = [s for s in manifest["scenes"] if s["role"] == "eval"]
    t_grid = [float(t) for t in t_grid]

    def one_scene(scene):
        start = time.perf_counter()
        hr = images[scene["id"]][hr_key]
        z0, hr_feats = encode(rae, hr)
        rows = []
        for t in t_grid:
            sol = integrate(field, z0, t, solver_cfg)
            img = decode(rae, sol.latent, hr_feats)
            for key in holdout:
                rows.append((scene["id"], t, key, psnr(img, images[scene["id"]][key]), sol.nfe))
        return rows, (scene["id"], time.perf_counter() - start)

    workers = min(_n_workers(), max(len(eval_scenes), 1))
    if workers > 1 and len(eval_scenes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one_scene, eval_scenes))
    else:
        results = [one_scene(s) for s in eval_scenes]
    rows = [r for scene_rows, _ in results for r in scene_rows]
    timing = [t for _, t in results]
    return rows, timing


def summarize_sweep(rows, holdout_scales):
    """Mean PSNR per (t, held-out scale) plus the argmax time per scale."""
    summary = []
    argmax = {}
    for key in [f"{s:g}" for s in holdout_scales]:
        by_t = {}
        for scene_id, t, hkey, value, nfe in rows:
            if hkey == key:
                by_t.setdefault(t, []).append(value)
        means = sorted((t, float(np.mean(v))) for t, v in by_t.items())
        for t, m in means:
            summary.append((key, t, m))
        if means:
            argmax[key] = max(means, key=lambda tm: tm[1])
    return summary, argmax


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def run_pipeline(cfg: dict, out_dir) -> dict:
    """gen-data -> train-rae -> train-lfm -> eval, all under one directory."""
    cfg = validate_config(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")

    d = cfg["data"]
    data_dir = out_dir / "data"
    manifest = build_dataset(
        data_dir,
        d["n_train_scenes"],
        d["n_eval_scenes"],
        d["train_scales"],
        d["holdout_scales"],
        seed=cfg["seed"],
        kappa=d["kappa"],
    )
    _, images = load_dataset(data_dir)

    rae_model, rae_curve = _fit_stage1(cfg, manifest, images)
    save_rae(rae_model, out_dir / "rae.ckpt")
    write_csv(out_dir / "rae_loss.csv", ["iter", "loss"], list(enumerate(rae_curve)))

    field, lfm_curve = _fit_stage2(cfg, rae_model, manifest, images)
    save_field(field, out_dir / "lfm.ckpt")
    (out_dir / "lfm.ckpt" / "levels.json").write_text(
        json.dumps({"train_scales": manifest["train_scales"]}, sort_keys=True) + "\n"
    )
    write_csv(out_dir / "lfm_loss.csv", ["iter", "cfm", "perceptual", "total"], lfm_curve)

    n_grid = cfg["eval"]["t_grid_points"]
    t_grid = np.linspace(0.0, 1.0, n_grid)
    rows, timing = eval_sweep(rae_model, field, manifest, images, t_grid, _solver_config(cfg))
    write_csv(out_dir / "eval.csv", ["scene_id", "t", "holdout_scale", "psnr", "nfe"], rows)
    write_csv(out_dir / "timing.csv", ["scene_id", "wall_time_s"], timing)
    summary, argmax = summarize_sweep(rows, manifest["holdout_scales"])
    write_csv(out_dir / "summary.csv", ["holdout_scale", "t", "mean_psnr"], summary)
    write_csv(
        out_dir / "argmax.csv",
        ["holdout_scale", "argmax_t", "mean_psnr"],
        [(k, t, m) for k, (t, m) in argmax.items()],
    )
    return {
        "config": cfg,
        "manifest": manifest,
        "rae": rae_model,
        "field": field,
        "rows": rows,
        "summary": summary,
        "argmax": argmax,
    }


ABLATION_ARMS = {
    "default": {"trajectory": "spline", "perceptual": "taylor3", "skips": "on"},
    "linear_trajectory": {"trajectory": "linear", "perceptual": "taylor3", "skips": "on"},
    "linear_perceptual": {"trajectory": "spline", "perceptual": "linear", "skips": "on"},
    "no_perceptual": {"trajectory": "spline", "perceptual": "none", "skips": "on"},
    "no_skips": {"trajectory": "spline", "perceptual": "taylor3", "skips": "off"},
}


def _apply_arm(cfg: dict, arm: dict) -> dict:
    cfg = copy.deepcopy(cfg)
    for key in arm:
        if key not in ("trajectory", "perceptual", "skips"):
            raise ConfigError(f"unknown ablation arm key '{key}'")
    traj = arm.get("trajectory", "spline")
    if traj not in ("spline", "linear"):
        raise ConfigError(f"invalid trajectory arm '{traj}'")
    cfg["lfm"]["linear_trajectory"] = traj == "linear"
    perc = arm.get("perceptual", "taylor3")
    if perc == "none":
        cfg["lfm"]["perceptual"] = None
    elif perc in ("linear", "taylor3"):
        cfg["lfm"]["mode"] = perc if perc == "linear" else "taylor3"
    else:
        raise ConfigError(f"invalid perceptual arm '{perc}'")
    skips = arm.get("skips", "on")
    if skips not in ("on", "off"):
        raise ConfigError(f"invalid skips arm '{skips}'")
    cfg["rae"]["skips"] = skips == "on"
    return cfg


def run_ablate(cfg: dict, arms: dict, out_dir) -> list:
    """One full pipeline per arm (shared seed); merged comparison CSV.

    Rows: arm, held-out scale, t, mean PSNR, NFE at the knot times, and
    a flag marking the C1-discontinuous linear-trajectory arm.
    """
    if not arms:
        raise ConfigError("ablation needs at least one arm")
    cfg = validate_config(cfg)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    merged = []
    for name, arm in arms.items():
        arm_cfg = _apply_arm(cfg, arm)
        result = run_pipeline(arm_cfg, out_dir / f"arm_{name}")
        c1_flag = arm.get("trajectory", "spline") == "linear"
        nfe_by_t = {}
        for scene_id, t, hkey, value, nfe in result["rows"]:
            nfe_by_t.setdefault(t, []).append(nfe)
        for key, t, mean in result["summary"]:
            mean_nfe = float(np.mean(nfe_by_t[t]))
            merged.append((name, key, t, mean, mean_nfe, c1_flag))
    write_csv(
        out_dir / "ablation.csv",
        ["arm", "holdout_scale", "t", "mean_psnr", "mean_nfe", "c1_discontinuous"],
        merged,
    )
    return merged
