"""Synthetic multi-scale degradation data.

Procedural 16x16 grayscale scenes plus a deterministic, scale-indexed
Gaussian blur stand in for a captured multi-focal-length dataset: scale
s=1 is the sharp reference image and larger s means stronger blur, with
sigma(s) = kappa*(s - 1).  `build_dataset` writes paired images at the
training scales plus held-out intermediate scales for evaluation.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor_io
from .autodiff import make_rng
from .spline import DegradationLevelSet

__all__ = [
    "Scene",
    "DegradationOp",
    "render_scene",
    "degrade",
    "build_dataset",
    "load_dataset",
    "psnr",
]

SCENE_TYPES = ("checker", "gradient", "blob")
IMAGE_SIZE = 16
PSNR_CAP = 99.0


@dataclass(frozen=True)
class Scene:
    seed: int
    kind: str
    image: np.ndarray  # (H, W) in [0, 1]


@dataclass(frozen=True)
class DegradationOp:
    """Gaussian blur family: sigma(s) = kappa*(s-1), reflect boundary."""

    kappa: float = 0.6
    s1: float = 1.0

    def sigma(self, s: float) -> float:
        return self.kappa * (float(s) - self.s1)


def _scene_rng(seed: int, kind: str) -> np.random.Generator:
    # mix the type name into the stream so kinds are decorrelated per seed
    return make_rng((int(seed) << 16) ^ zlib.crc32(kind.encode()))


def render_scene(seed: int, kind: str, size: int = IMAGE_SIZE) -> Scene:
    """Deterministic procedural grayscale image in [0, 1]."""
    if kind not in SCENE_TYPES:
        raise ValueError(f"unknown scene type {kind!r}, expected one of {SCENE_TYPES}")
    rng = _scene_rng(seed, kind)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    if kind == "checker":
        cell = int(rng.choice([2, 4, 8]))
        ox, oy = rng.integers(0, cell, size=2)
        lo = rng.uniform(0.05, 0.35)
        hi = rng.uniform(0.65, 0.95)
        mask = (((xx + ox) // cell + (yy + oy) // cell) % 2).astype(bool)
        img = np.where(mask, hi, lo)
    elif kind == "gradient":
        theta = rng.uniform(0.0, 2.0 * np.pi)
        ramp = np.cos(theta) * xx + np.sin(theta) * yy
        lo = rng.uniform(0.0, 0.3)
        hi = rng.uniform(0.7, 1.0)
        span = ramp.max() - ramp.min()
        img = lo + (hi - lo) * (ramp - ramp.min()) / (span if span > 0 else 1.0)
    else:  # blob mixture around mid gray
        img = np.full((size, size), 0.5)
        for _ in range(int(rng.integers(3, 6))):
            cx, cy = rng.uniform(0, size, size=2)
            w = rng.uniform(1.5, 4.0)
            amp = rng.uniform(-0.45, 0.45)
            img += amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * w * w))
        img = np.clip(img, 0.0, 1.0)
    return Scene(seed=int(seed), kind=kind, image=img)


def _blur_1d(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    r = (kernel.size - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(img, pad, mode="reflect")
    out = np.zeros_like(img)
    for i, w in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + img.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D kernel truncated at radius ceil(3*sigma)."""
    r = math.ceil(3.0 * sigma)
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-(x**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def degrade(image: np.ndarray, s: float, op: DegradationOp | None = None) -> np.ndarray:
    """Blur `image` to degradation scale s; s = s1 is a bit-exact identity."""
    op = op or DegradationOp()
    s = float(s)
    if s < op.s1:
        raise ValueError(f"scale {s} below reference scale {op.s1}")
    if s == op.s1:
        return image.copy()
    k = gaussian_kernel(op.sigma(s))
    out = _blur_1d(_blur_1d(image, k, axis=0), k, axis=1)
    return np.clip(out, 0.0, 1.0)


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB against peak 1.0, capped at the +99 dB sentinel."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(1.0 / mse))


def _fmt_scale(s: float) -> str:
    return f"{float(s):g}"


def build_dataset(
    out_dir,
    n_train_scenes: int,
    n_eval_scenes: int,
    train_scales,
    holdout_scales,
    seed: int,
    kappa: float = 0.6,
) -> dict:
    """Render scenes and write paired degraded images plus a manifest.

    Every scene gets an image at each training scale and each held-out
    scale; held-out images are flagged eval-only and must never feed
    training.  Regenerating with the same arguments is byte-identical.
    """
    levels = DegradationLevelSet(tuple(train_scales))
    holdout = [float(s) for s in holdout_scales]
    if set(holdout) & set(levels.scales):
        raise ValueError("holdout scales overlap training scales")
    for s in holdout:
        if not (levels.scales[0] <= s <= levels.scales[-1]):
            raise ValueError(f"holdout scale {s} outside [{levels.scales[0]}, {levels.scales[-1]}]")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    op = DegradationOp(kappa=kappa, s1=levels.scales[0])
    all_scales = sorted(list(levels.scales) + holdout)
    scenes = []
    n_total = n_train_scenes + n_eval_scenes
    for i in range(n_total):
        kind = SCENE_TYPES[i % len(SCENE_TYPES)]
        scene_seed = seed * 100_000 + i
        scene = render_scene(scene_seed, kind)
        scene_dir = out_dir / f"scene_{i:04d}"
        scene_dir.mkdir(exist_ok=True)
        files = {}
        for s in all_scales:
            rel = f"scene_{i:04d}/s_{_fmt_scale(s)}.dgft"
            tensor_io.write(out_dir / rel, degrade(scene.image, s, op))
            files[_fmt_scale(s)] = {"path": rel, "eval_only": s in holdout}
        scenes.append(
            {
                "id": i,
                "seed": scene_seed,
                "type": kind,
                "role": "train" if i < n_train_scenes else "eval",
                "files": files,
            }
        )
    manifest = {
        "version": 1,
        "seed": seed,
        "kappa": kappa,
        "train_scales": [float(s) for s in levels.scales],
        "holdout_scales": holdout,
        "scenes": scenes,
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    )
    return manifest


def load_dataset(root):
    """Read a dataset directory back as (manifest, images).

    `images[scene_id][scale_str]` is the (H, W) array; eval-only flags
    live in the manifest.
    """
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    images = {}
    for scene in manifest["scenes"]:
        per_scale = {}
        for key, entry in scene["files"].items():
            per_scale[key] = tensor_io.read(root / entry["path"])
        images[scene["id"]] = per_scale
    return manifest, images
