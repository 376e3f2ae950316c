"""Velocity-field training against spline trajectories.

The velocity network v(x, t) is a small MLP on the latent concatenated
with a sinusoidal time embedding.  It is regressed onto the first
derivative of the natural-cubic-spline trajectory (conditional flow
matching with a deterministic path), optionally plus an image-space
perceptual term: the predicted velocity at an interior time is
extrapolated to the next knot with a third-order Taylor step (exact on
cubics), decoded by the frozen autoencoder, and compared against the
ground-truth image at that knot's scale.  Only the velocity prediction
receives gradient through the extrapolation; the spline-derived value
and higher derivatives are constants.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import tensor_io
from .autodiff import (
    Node,
    add,
    add_bias,
    backward,
    constant,
    gelu,
    make_rng,
    matmul,
    mse,
    reshape,
    scale,
    slice_node,
)
from .nn import Adam, cosine_lr, init_linear
from .rae import RaeModel, encode
from .spline import LatentTrajectory, SplineCoefficients, evaluate

__all__ = [
    "ExtrapolationMode",
    "FieldConfig",
    "VelocityField",
    "TrainBatch",
    "LfmScene",
    "LfmTrainConfig",
    "time_embedding",
    "cfm_loss",
    "taylor_extrapolate",
    "perceptual_loss",
    "total_loss",
    "build_latent_scene",
    "train_lfm",
    "save_field",
    "load_field",
]


class ExtrapolationMode(enum.Enum):
    TAYLOR3 = "taylor3"
    LINEAR = "linear"


@dataclass(frozen=True)
class FieldConfig:
    latent_dim: int
    width: int = 128
    n_freqs: int = 8
    seed: int = 0

    @property
    def embed_dim(self) -> int:
        return 2 * self.n_freqs


def time_embedding(t, n_freqs: int = 8) -> np.ndarray:
    """Sinusoidal embedding with frequencies pi * 2^j.

    The lowest frequency makes cos(pi*t) monotone on [0, 1], so distinct
    times map to distinct embeddings.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    freqs = math.pi * 2.0 ** np.arange(n_freqs)
    angles = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1)


_FIELD_PARAMS = ("w_x", "w_e", "b1", "w2", "b2", "w3", "b3", "w_out", "b_out")


class VelocityField:
    """MLP velocity field with three hidden layers and GELU activations."""

    def __init__(self, config: FieldConfig):
        self.config = config
        rng = make_rng(config.seed)
        d, w = config.latent_dim, config.width
        p = {}
        p["w_x"], p["b1"] = init_linear(rng, d, w)
        p["w_e"], _ = init_linear(rng, config.embed_dim, w)
        p["w2"], p["b2"] = init_linear(rng, w, w)
        p["w3"], p["b3"] = init_linear(rng, w, w)
        p["w_out"], p["b_out"] = init_linear(rng, w, d)
        self.params: dict[str, Node] = p

    def parameters(self) -> list[Node]:
        return [self.params[n] for n in _FIELD_PARAMS]

    def forward_nodes(self, x: Node, t: np.ndarray) -> Node:
        """Graph forward; `t` is one time per batch row."""
        p = self.params
        emb = constant(time_embedding(t, self.config.n_freqs))
        h = add_bias(add(matmul(x, p["w_x"]), matmul(emb, p["w_e"])), p["b1"])
        h = gelu(h)
        h = gelu(add_bias(matmul(h, p["w2"]), p["b2"]))
        h = gelu(add_bias(matmul(h, p["w3"]), p["b3"]))
        return add_bias(matmul(h, p["w_out"]), p["b_out"])

    def __call__(self, x: np.ndarray, t: float) -> np.ndarray:
        """Plain-array evaluation for the ODE sampler."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None] if single else x
        tb = np.full(xb.shape[0], float(t))
        v = self.forward_nodes(constant(xb), tb).value
        return v[0] if single else v


@dataclass
class TrainBatch:
    """Points on spline trajectories with their velocity targets."""

    x: np.ndarray        # (B, d) path points mu_t
    t: np.ndarray        # (B,)
    targets: np.ndarray  # (B, d) spline first derivatives


def cfm_loss(field: VelocityField, batch: TrainBatch) -> Node:
    """Mean squared residual between predicted and spline velocity."""
    if batch.x.shape[0] == 0:
        raise ValueError("empty batch")
    v = field.forward_nodes(constant(batch.x), batch.t)
    return mse(v, constant(batch.targets))


def taylor_extrapolate(
    coeffs: SplineCoefficients,
    t: float,
    v_hat: Node,
    mode: ExtrapolationMode = ExtrapolationMode.TAYLOR3,
) -> tuple[Node, float]:
    """Extrapolate from time t to the next knot using the predicted velocity.

    Third-order mode adds the spline's second/third derivative terms
    (constants); linear mode keeps only the velocity term.  Gradient
    flows into `v_hat` alone.  Returns (latent node, next knot time).
    """
    t = float(t)
    if t >= 1.0:
        raise ValueError("no next degradation level beyond t=1")
    k = coeffs.segment_of(t)
    t_next = float(coeffs.times[k + 1])
    dt = t_next - t
    z = evaluate(coeffs, t, order=0)
    if v_hat.value.shape != z.shape:
        raise ValueError(f"velocity shape {v_hat.value.shape} != latent shape {z.shape}")
    base = z.copy()
    if mode is ExtrapolationMode.TAYLOR3:
        base = base + 0.5 * evaluate(coeffs, t, order=2) * dt**2
        base = base + evaluate(coeffs, t, order=3) * dt**3 / 6.0
    return add(constant(base), scale(v_hat, dt)), t_next


def _image_gradient_terms(img: Node, target: Node) -> Node:
    gx = slice_node(img, (slice(None), slice(1, None), slice(None)))
    gx = add(gx, scale(slice_node(img, (slice(None), slice(None, -1), slice(None))), -1.0))
    tx = target.value[:, 1:, :] - target.value[:, :-1, :]
    gy = slice_node(img, (slice(None), slice(None), slice(1, None)))
    gy = add(gy, scale(slice_node(img, (slice(None), slice(None), slice(None, -1))), -1.0))
    ty = target.value[:, :, 1:] - target.value[:, :, :-1]
    return add(mse(gx, constant(tx)), mse(gy, constant(ty)))


def perceptual_loss(
    decoder: RaeModel,
    z_hat: Node,
    hr_features: list[np.ndarray],
    target_image: np.ndarray,
    metric: str = "pixel_gradient",
) -> Node:
    """Image-space surrogate loss on the decoded extrapolated latent.

    `metric` is either plain "mse" or the default "pixel_gradient":
    pixel L2 plus L2 on first-order finite-difference image gradients
    (weights 1.0 / 1.0).  The decoder must be frozen.
    """
    if not decoder.frozen:
        raise RuntimeError("decoder must be trained and frozen before stage 2")
    if metric not in ("mse", "pixel_gradient"):
        raise ValueError(f"unknown perceptual metric {metric!r}")
    target = np.asarray(target_image, dtype=np.float64)
    if target.ndim == 2:
        target = target[None]
    z = z_hat if z_hat.value.ndim == 2 else reshape(z_hat, (1, -1))
    feats = [np.atleast_2d(f) for f in hr_features]
    out = decoder.decode_nodes(z, [constant(f) for f in feats])
    size = decoder.config.image_size
    img = reshape(out, (-1, size, size))
    pixel = mse(img, constant(target))
    if metric == "mse":
        return pixel
    return add(pixel, _image_gradient_terms(img, constant(target)))


def total_loss(cfm: Node, perc: Node, lam: float) -> Node:
    """Combined objective: cfm + lam * perceptual."""
    return add(cfm, scale(perc, float(lam)))


@dataclass
class LfmScene:
    """Everything stage 2 needs from one scene once the encoder is frozen."""

    trajectory: LatentTrajectory
    hr_features: list = dc_field(default_factory=list)   # sharp-pass skips, or [] for toy data
    knot_images: dict = dc_field(default_factory=dict)   # knot time -> (H, W) ground truth

    def coefficients(self, linear: bool = False) -> SplineCoefficients:
        if linear:
            from .spline import fit_piecewise_linear

            return fit_piecewise_linear(self.trajectory)
        return self.trajectory.coefficients()


def build_latent_scene(rae: RaeModel, images_by_scale: dict, levels) -> LfmScene:
    """Encode one scene's images at every training scale into a trajectory."""
    if not rae.frozen:
        raise RuntimeError("autoencoder must be frozen before building trajectories")
    times = levels.times
    keys = [f"{s:g}" for s in levels.scales]
    knots = []
    for key in keys:
        z, _ = encode(rae, images_by_scale[key])
        knots.append(z)
    hr_image = images_by_scale[keys[0]]
    _, hr_feats = encode(rae, hr_image)
    traj = LatentTrajectory(times=times, knots=np.stack(knots))
    knot_images = {float(t): images_by_scale[k] for t, k in zip(times, keys)}
    return LfmScene(trajectory=traj, hr_features=hr_feats, knot_images=knot_images)


def synthetic_trajectories(n: int, times, seed: int = 0) -> list[LatentTrajectory]:
    """2-D toy trajectories from a smooth rotation-plus-expansion flow.

    Start points sit on an annulus; every knot follows the same analytic
    flow, so the resulting spline velocities are mutually consistent and
    a single field v(x, t) can fit all of them.
    """
    rng = make_rng(seed)
    times = np.asarray(times, dtype=np.float64)
    trajectories = []
    for _ in range(n):
        r = rng.uniform(0.5, 1.0)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        x0 = np.array([r * math.cos(phi), r * math.sin(phi)])
        knots = []
        for t in times:
            ang = 0.9 * t
            rot = np.array(
                [[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]]
            )
            knots.append((1.0 + 0.5 * t) * (rot @ x0))
        trajectories.append(LatentTrajectory(times=times, knots=np.stack(knots)))
    return trajectories


@dataclass(frozen=True)
class LfmTrainConfig:
    iters: int = 7000
    batch_size: int = 16
    lr_max: float = 3e-3
    lr_min: float = 1e-5
    lam: float = 0.1
    mode: ExtrapolationMode = ExtrapolationMode.TAYLOR3
    perceptual: str | None = "pixel_gradient"
    linear_trajectory: bool = False
    projection: str = "next"  # "next" knot, or "nearest" knot in time
    delta: float = 1e-3
    seed: int = 0


def _projection_time(coeffs: SplineCoefficients, t: float, projection: str) -> float:
    if projection == "next":
        return float(coeffs.times[coeffs.segment_of(t) + 1])
    if projection == "nearest":
        times = coeffs.times
        # a projection target of t itself would be a no-op; exclude t=0 too
        candidates = times[times > 0.0]
        return float(candidates[np.argmin(np.abs(candidates - t))])
    raise ValueError(f"unknown projection {projection!r}")


def train_lfm(
    field: VelocityField,
    scenes: list[LfmScene],
    config: LfmTrainConfig,
    rae: RaeModel | None = None,
):
    """Stage-2 training loop.

    Per iteration and per sampled scene: one uniform time draw for the
    flow-matching term, and (when the perceptual term is active) one
    more draw projected to a knot, extrapolated, decoded and compared
    against that knot's ground-truth image.  Returns the field and a
    list of (iter, cfm, perceptual, total) rows.
    """
    if not scenes:
        raise ValueError("empty dataset")
    use_perc = config.lam != 0.0 and config.perceptual is not None
    if use_perc and rae is None:
        raise ValueError("perceptual term requires the frozen autoencoder")
    if rae is not None and not rae.frozen:
        raise RuntimeError("autoencoder must be frozen during stage 2")
    coeffs = [s.coefficients(linear=config.linear_trajectory) for s in scenes]
    rng = make_rng(config.seed)
    opt = Adam(field.parameters())
    curve = []
    d = field.config.latent_dim
    for it in range(config.iters):
        idx = rng.integers(0, len(scenes), size=config.batch_size)
        ts = rng.uniform(0.0, 1.0, size=config.batch_size)
        x = np.stack([evaluate(coeffs[i], t, 0) for i, t in zip(idx, ts)]).reshape(-1, d)
        tgt = np.stack([evaluate(coeffs[i], t, 1) for i, t in zip(idx, ts)]).reshape(-1, d)
        opt.zero_grad()
        loss_cfm = cfm_loss(field, TrainBatch(x=x, t=ts, targets=tgt))
        if use_perc:
            tp = rng.uniform(0.0, 1.0 - config.delta, size=config.batch_size)
            xp = np.stack([evaluate(coeffs[i], t, 0) for i, t in zip(idx, tp)]).reshape(-1, d)
            v_hat = field.forward_nodes(constant(xp), tp)
            perc_terms = None
            for row, (i, t) in enumerate(zip(idx, tp)):
                scene = scenes[i]
                t_next = _projection_time(coeffs[i], t, config.projection)
                dt = t_next - t
                z = evaluate(coeffs[i], t, order=0)
                basis = z.copy()
                if config.mode is ExtrapolationMode.TAYLOR3:
                    basis = basis + 0.5 * evaluate(coeffs[i], t, 2) * dt**2
                    basis = basis + evaluate(coeffs[i], t, 3) * dt**3 / 6.0
                v_row = slice_node(v_hat, (slice(row, row + 1), slice(None)))
                z_hat = add(constant(basis[None]), scale(v_row, dt))
                term = perceptual_loss(
                    rae, z_hat, scene.hr_features, scene.knot_images[t_next], config.perceptual
                )
                perc_terms = term if perc_terms is None else add(perc_terms, term)
            loss_perc = scale(perc_terms, 1.0 / config.batch_size)
        else:
            loss_perc = constant(0.0)
        loss = total_loss(loss_cfm, loss_perc, config.lam if use_perc else 0.0)
        backward(loss)
        opt.step(cosine_lr(it, config.iters, config.lr_max, config.lr_min))
        curve.append((it, float(loss_cfm.value), float(loss_perc.value), float(loss.value)))
    return field, curve


def save_field(field: VelocityField, out_dir) -> None:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = field.config
    manifest = {
        "kind": "lfm",
        "latent_dim": cfg.latent_dim,
        "width": cfg.width,
        "n_freqs": cfg.n_freqs,
        "seed": cfg.seed,
        "params": list(_FIELD_PARAMS),
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    for name in _FIELD_PARAMS:
        tensor_io.write(out_dir / f"{name}.dgft", field.params[name].value)


def load_field(ckpt_dir) -> VelocityField:
    ckpt_dir = Path(ckpt_dir)
    manifest = json.loads((ckpt_dir / "manifest.json").read_text())
    if manifest.get("kind") != "lfm":
        raise ValueError(f"{ckpt_dir} is not a velocity-field checkpoint")
    cfg = FieldConfig(
        latent_dim=manifest["latent_dim"],
        width=manifest["width"],
        n_freqs=manifest["n_freqs"],
        seed=manifest["seed"],
    )
    field = VelocityField(cfg)
    for name in _FIELD_PARAMS:
        field.params[name].value = tensor_io.read(ckpt_dir / f"{name}.dgft")
    return field
