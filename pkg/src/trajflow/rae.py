"""Residual autoencoder on flattened tiny images.

Fully-connected encoder/decoder with a compact latent and two levels of
skip features.  The skip features are always computed from the sharp
(reference-scale) image and injected into the decoder, so the latent
only has to carry what differs between a degraded input and its sharp
counterpart.  Trained with a two-term reconstruction loss: the sharp
image autoencoded, plus a degraded image decoded from its own latent but
with the sharp image's skip features.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_io
from .autodiff import Node, add, add_bias, backward, constant, gelu, make_rng, matmul, mse
from .nn import Adam, cosine_lr, init_linear

__all__ = [
    "RaeConfig",
    "RaeModel",
    "RaeTrainConfig",
    "encode",
    "decode",
    "recon_loss",
    "train_rae",
    "save_rae",
    "load_rae",
]


@dataclass(frozen=True)
class RaeConfig:
    image_size: int = 16
    hidden: tuple = (192, 96)
    latent_dim: int = 64
    skips: bool = True
    seed: int = 0

    @property
    def input_dim(self) -> int:
        return self.image_size * self.image_size

    def __post_init__(self):
        if self.latent_dim >= self.input_dim:
            raise ValueError(
                f"latent_dim {self.latent_dim} must compress below input dim {self.input_dim}"
            )


_PARAM_NAMES = (
    "enc_w1", "enc_b1", "enc_w2", "enc_b2", "enc_wz", "enc_bz",
    "dec_w1", "dec_b1", "dec_skip2", "dec_w2", "dec_b2", "dec_skip1",
    "dec_wout", "dec_bout",
)


class RaeModel:
    """Parameters plus the frozen flag the second training stage relies on."""

    def __init__(self, config: RaeConfig):
        self.config = config
        rng = make_rng(config.seed)
        d_in = config.input_dim
        h1, h2 = config.hidden
        dz = config.latent_dim
        p = {}
        p["enc_w1"], p["enc_b1"] = init_linear(rng, d_in, h1)
        p["enc_w2"], p["enc_b2"] = init_linear(rng, h1, h2)
        p["enc_wz"], p["enc_bz"] = init_linear(rng, h2, dz)
        p["dec_w1"], p["dec_b1"] = init_linear(rng, dz, h2)
        p["dec_skip2"], _ = init_linear(rng, h2, h2)
        p["dec_w2"], p["dec_b2"] = init_linear(rng, h2, h1)
        p["dec_skip1"], _ = init_linear(rng, h1, h1)
        p["dec_wout"], p["dec_bout"] = init_linear(rng, h1, d_in)
        self.params: dict[str, Node] = p
        self.frozen = False

    def parameters(self) -> list[Node]:
        return [self.params[n] for n in _PARAM_NAMES]

    def freeze(self) -> None:
        self.frozen = True

    # --- graph-level forward passes (Node in, Node out) ---

    def encode_nodes(self, x: Node) -> tuple[Node, list[Node]]:
        p = self.params
        h1 = gelu(add_bias(matmul(x, p["enc_w1"]), p["enc_b1"]))
        h2 = gelu(add_bias(matmul(h1, p["enc_w2"]), p["enc_b2"]))
        z = add_bias(matmul(h2, p["enc_wz"]), p["enc_bz"])
        return z, [h1, h2]

    def decode_nodes(self, z: Node, hr_features: list[Node]) -> Node:
        p = self.params
        u = add_bias(matmul(z, p["dec_w1"]), p["dec_b1"])
        if self.config.skips:
            u = add(u, matmul(hr_features[1], p["dec_skip2"]))
        u = gelu(u)
        u = add_bias(matmul(u, p["dec_w2"]), p["dec_b2"])
        if self.config.skips:
            u = add(u, matmul(hr_features[0], p["dec_skip1"]))
        u = gelu(u)
        return add_bias(matmul(u, p["dec_wout"]), p["dec_bout"])


def _flatten_batch(images: np.ndarray, config: RaeConfig) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 2:
        images = images[None]
    if images.shape[-2:] != (config.image_size, config.image_size):
        raise ValueError(
            f"image shape {images.shape[-2:]} does not match model size {config.image_size}"
        )
    return images.reshape(images.shape[0], -1)


def encode(model: RaeModel, image: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Latent plus the hidden skip features of the pass.

    Accepts one (H, W) image or a (B, H, W) batch; single images come
    back as rank-1 latents.
    """
    flat = _flatten_batch(image, model.config)
    z, feats = model.encode_nodes(constant(flat))
    single = np.asarray(image).ndim == 2
    if single:
        return z.value[0], [f.value[0] for f in feats]
    return z.value, [f.value for f in feats]


def decode(model: RaeModel, z: np.ndarray, hr_features: list[np.ndarray]) -> np.ndarray:
    """Image from a latent and sharp-pass skip features, clamped to [0, 1]."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None]
        hr_features = [np.asarray(f)[None] for f in hr_features]
    dz = model.config.latent_dim
    if z.shape[1] != dz:
        raise ValueError(f"latent dim {z.shape[1]} != configured {dz}")
    h1, h2 = model.config.hidden
    if hr_features[0].shape[1] != h1 or hr_features[1].shape[1] != h2:
        raise ValueError("skip feature widths do not match the model")
    out = model.decode_nodes(constant(z), [constant(f) for f in hr_features])
    size = model.config.image_size
    imgs = np.clip(out.value, 0.0, 1.0).reshape(-1, size, size)
    return imgs[0] if single else imgs


def recon_loss(
    model: RaeModel,
    hr_batch: np.ndarray,
    lr_batch: np.ndarray,
    hr_grad_from_lr_term: bool = True,
) -> Node:
    """Two-term reconstruction loss (sharp + degraded, both with sharp skips).

    With `hr_grad_from_lr_term=False` the skip features entering the
    degraded-image term are detached, so the sharp encoder pass only
    receives gradient from its own term.
    """
    cfg = model.config
    hr = _flatten_batch(hr_batch, cfg)
    lr = _flatten_batch(lr_batch, cfg)
    if hr.shape != lr.shape:
        raise ValueError(f"unpaired batch shapes {hr.shape} vs {lr.shape}")
    z_hr, hr_feats = model.encode_nodes(constant(hr))
    out_hr = model.decode_nodes(z_hr, hr_feats)
    term_hr = mse(out_hr, constant(hr))
    z_lr, _ = model.encode_nodes(constant(lr))
    feats = hr_feats if hr_grad_from_lr_term else [constant(f.value) for f in hr_feats]
    out_lr = model.decode_nodes(z_lr, feats)
    term_lr = mse(out_lr, constant(lr))
    return add(term_hr, term_lr)


@dataclass(frozen=True)
class RaeTrainConfig:
    iters: int = 12000
    batch_size: int = 16
    lr_max: float = 3e-3
    lr_min: float = 1e-5
    seed: int = 0
    hr_grad_from_lr_term: bool = True


def train_rae(model: RaeModel, scenes: list[dict], config: RaeTrainConfig):
    """Train in place on (sharp, {degraded}) tuples; freezes the model when done.

    `scenes` is a list of dicts mapping scale strings to (H, W) images;
    the lowest scale is treated as the sharp reference.  Returns the
    model and the per-iteration loss curve.
    """
    if model.frozen:
        raise RuntimeError("model is frozen; build a fresh one to retrain")
    if not scenes:
        raise ValueError("empty dataset")
    scale_keys = sorted(scenes[0].keys(), key=float)
    hr_key = scale_keys[0]
    lr_keys = scale_keys[1:]
    if not lr_keys:
        raise ValueError("need at least one degraded scale besides the reference")
    rng = make_rng(config.seed)
    opt = Adam(model.parameters())
    curve = []
    for it in range(config.iters):
        idx = rng.integers(0, len(scenes), size=config.batch_size)
        picks = rng.integers(0, len(lr_keys), size=config.batch_size)
        hr = np.stack([scenes[i][hr_key] for i in idx])
        lr = np.stack([scenes[i][lr_keys[j]] for i, j in zip(idx, picks)])
        opt.zero_grad()
        loss = recon_loss(model, hr, lr, config.hr_grad_from_lr_term)
        backward(loss)
        opt.step(cosine_lr(it, config.iters, config.lr_max, config.lr_min))
        curve.append(float(loss.value))
    model.freeze()
    return model, curve


def save_rae(model: RaeModel, out_dir) -> None:
    """Checkpoint: JSON manifest plus one DGFT tensor per parameter."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    manifest = {
        "kind": "rae",
        "image_size": cfg.image_size,
        "hidden": list(cfg.hidden),
        "latent_dim": cfg.latent_dim,
        "skips": cfg.skips,
        "seed": cfg.seed,
        "frozen": model.frozen,
        "params": list(_PARAM_NAMES),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name in _PARAM_NAMES:
        tensor_io.write(out_dir / f"{name}.dgft", model.params[name].value)


def load_rae(ckpt_dir) -> RaeModel:
    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    if manifest.get("kind") != "rae":
        raise ValueError(f"{ckpt_dir} is not an RAE checkpoint")
    cfg = RaeConfig(
        image_size=manifest["image_size"],
        hidden=tuple(manifest["hidden"]),
        latent_dim=manifest["latent_dim"],
        skips=manifest["skips"],
        seed=manifest["seed"],
    )
    model = RaeModel(cfg)
    for name in _PARAM_NAMES:
        model.params[name].value = tensor_io.read(ckpt_dir / f"{name}.dgft")
    model.frozen = bool(manifest["frozen"])
    return model
