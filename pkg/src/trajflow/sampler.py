"""Adaptive ODE integration of a velocity field.

Dormand-Prince 5(4) ("RK45") with the standard 7-stage FSAL tableau and
a classical step-size controller, plus a fixed-step RK4 fallback used as
an NFE baseline.

NFE accounting: the first stage of the very first step costs one
evaluation; every subsequent attempted step (accepted or rejected) costs
6 evaluations because stage 1 is reused -- from FSAL after an accepted
step, or unchanged after a rejection.  Hence

    NFE = 1 + 6 * (accepted + rejected)      (adaptive)
    NFE = 4 * n_steps                        (fixed RK4)

and a degenerate target t=0 returns the start state with NFE = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SolverConfig",
    "OdeSolution",
    "SolverError",
    "integrate",
    "integrate_piecewise",
    "integrate_fixed",
    "nfe_profile",
]

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B5 - _B4  # local error weights


class SolverError(RuntimeError):
    """Integration failed (max steps exceeded or non-finite field output)."""


@dataclass(frozen=True)
class SolverConfig:
    rtol: float = 1e-5
    atol: float = 1e-7
    h0: float = 1e-2
    max_steps: int = 10_000
    safety: float = 0.9
    min_scale: float = 0.2
    max_scale: float = 5.0

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")


@dataclass
class OdeSolution:
    latent: np.ndarray
    time: float
    nfe: int
    accepted: int
    rejected: int
    path: list = field(default_factory=list)  # (t, latent) at accepted steps


def _check_finite(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise SolverError("velocity field returned NaN/Inf")
    return v


def _error_norm(err: np.ndarray, y: np.ndarray, y_new: np.ndarray, cfg: SolverConfig) -> float:
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def integrate(
    field,
    x0: np.ndarray,
    t_target: float,
    cfg: SolverConfig | None = None,
    t0: float = 0.0,
) -> OdeSolution:
    """Integrate dx/dt = field(x, t) from t=t0 (default 0) to t_target.

    The final step is clamped so the endpoint time is exact; per-step
    local error satisfies the scaled RMS criterion err_norm <= 1 with
    scale = atol + rtol*max(|x|, |x_new|) componentwise.
    """
    cfg = cfg or SolverConfig()
    t_target = float(t_target)
    t0 = float(t0)
    if not (0.0 <= t_target <= 1.0):
        raise ValueError(f"t_target {t_target} outside [0, 1]")
    if not (0.0 <= t0 <= t_target):
        raise ValueError(f"t0 {t0} outside [0, {t_target}]")
    y = np.asarray(x0, dtype=np.float64).copy()
    if t_target == t0:
        return OdeSolution(latent=y, time=t0, nfe=0, accepted=0, rejected=0, path=[(t0, y.copy())])

    t = t0
    nfe = 0
    accepted = 0
    rejected = 0
    path = [(t0, y.copy())]
    k = [None] * 7
    k[0] = _check_finite(field(y, t))
    nfe += 1
    h = min(cfg.h0, t_target - t0)

    while t < t_target:
        if accepted + rejected >= cfg.max_steps:
            raise SolverError(f"max_steps={cfg.max_steps} exceeded at t={t}")
        last = h >= t_target - t
        h = min(h, t_target - t)
        for i in range(1, 7):
            yi = y + h * sum(aij * k[j] for j, aij in enumerate(_A[i]))
            k[i] = _check_finite(field(yi, t + _C[i] * h))
            nfe += 1
        y_new = y + h * sum(b * k[i] for i, b in enumerate(_B5) if b != 0.0)
        err = h * sum(e * k[i] for i, e in enumerate(_E) if e != 0.0)
        err_norm = _error_norm(err, y, y_new, cfg)
        if err_norm <= 1.0:
            t = t_target if last else t + h
            y = y_new
            accepted += 1
            path.append((t, y.copy()))
            k[0] = k[6]  # FSAL
        else:
            rejected += 1
        factor = cfg.max_scale if err_norm == 0.0 else cfg.safety * err_norm ** -0.2
        h *= min(max(factor, cfg.min_scale), cfg.max_scale)

    return OdeSolution(latent=y, time=t, nfe=nfe, accepted=accepted, rejected=rejected, path=path)


def integrate_piecewise(
    field,
    x0: np.ndarray,
    t_target: float,
    breakpoints,
    cfg: SolverConfig | None = None,
) -> OdeSolution:
    """Adaptive integration restarted at known discontinuity times.

    Spline velocity fields are smooth inside a segment but jump in the
    third derivative at knots, which degrades the embedded error
    estimate of a step that straddles a knot.  Restarting at each known
    breakpoint keeps every step inside a smooth piece -- the standard
    treatment for ODEs with known discontinuities.
    """
    t_target = float(t_target)
    stops = sorted({float(b) for b in breakpoints if 0.0 < float(b) < t_target})
    stops.append(t_target)
    y = np.asarray(x0, dtype=np.float64).copy()
    t = 0.0
    nfe = accepted = rejected = 0
    path = [(0.0, y.copy())]
    for stop in stops:
        sol = integrate(field, y, stop, cfg, t0=t)
        y, t = sol.latent, sol.time
        nfe += sol.nfe
        accepted += sol.accepted
        rejected += sol.rejected
        path.extend(sol.path[1:])
    return OdeSolution(latent=y, time=t, nfe=nfe, accepted=accepted, rejected=rejected, path=path)


def integrate_fixed(field, x0: np.ndarray, t_target: float, n_steps: int) -> OdeSolution:
    """Classical RK4 with uniform steps; NFE = 4*n_steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    t_target = float(t_target)
    if not (0.0 <= t_target <= 1.0):
        raise ValueError(f"t_target {t_target} outside [0, 1]")
    y = np.asarray(x0, dtype=np.float64).copy()
    path = [(0.0, y.copy())]
    if t_target == 0.0:
        return OdeSolution(latent=y, time=0.0, nfe=0, accepted=0, rejected=0, path=path)
    h = t_target / n_steps
    nfe = 0
    for i in range(n_steps):
        t = i * h
        k1 = _check_finite(field(y, t))
        k2 = _check_finite(field(y + 0.5 * h * k1, t + 0.5 * h))
        k3 = _check_finite(field(y + 0.5 * h * k2, t + 0.5 * h))
        k4 = _check_finite(field(y + h * k3, t + h))
        nfe += 4
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        path.append(((i + 1) * h, y.copy()))
    return OdeSolution(latent=y, time=t_target, nfe=nfe, accepted=n_steps, rejected=0, path=path)


def nfe_profile(field, x0: np.ndarray, targets, cfg: SolverConfig | None = None) -> list[tuple[float, int]]:
    """NFE required to reach each target time (targets sorted ascending)."""
    targets = [float(t) for t in targets]
    if targets != sorted(targets):
        raise ValueError("targets must be sorted ascending")
    return [(t, integrate(field, x0, t, cfg).nfe) for t in targets]
