"""Natural cubic spline trajectories through knot latents.

The trajectory through the knot latents {z_{t_k}} is a natural cubic
spline: per segment k,

    mu(t) = a_k*(t-t_k)^3 + b_k*(t-t_k)^2 + c_k*(t-t_k) + d_k

with C0/C1/C2 continuity at interior knots and zero second derivative at
both endpoints.  Coefficients come from the classical tridiagonal system
in the knot second derivatives, solved with the Thomas algorithm; latent
coordinates are independent, so the solve is vectorized across them.

Also provides the degradation-scale -> timestamp mapping (min-max
normalization of the scale set) and a piecewise-linear trajectory used
as an ablation baseline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensor_io

__all__ = [
    "DegradationLevelSet",
    "LatentTrajectory",
    "SplineCoefficients",
    "normalize_scale",
    "denormalize_time",
    "fit_spline",
    "fit_piecewise_linear",
    "evaluate",
    "velocity_target",
    "save_coefficients",
    "load_coefficients",
]


@dataclass(frozen=True)
class DegradationLevelSet:
    """Strictly increasing scale set S = {s_k}; s_1 maps to t=0, s_m to t=1."""

    scales: tuple

    def __post_init__(self):
        s = tuple(float(v) for v in self.scales)
        if len(s) < 2:
            raise ValueError("need at least two scales")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError(f"scales must be strictly increasing, got {s}")
        object.__setattr__(self, "scales", s)

    @property
    def times(self) -> np.ndarray:
        """Normalized timestamps of every scale."""
        return np.array([normalize_scale(s, self) for s in self.scales])


def normalize_scale(s: float, levels: DegradationLevelSet) -> float:
    """Min-max map of a degradation scale onto [0, 1]."""
    s = float(s)
    s1, sm = levels.scales[0], levels.scales[-1]
    if not (s1 <= s <= sm):
        raise ValueError(f"scale {s} outside [{s1}, {sm}]")
    return (s - s1) / (sm - s1)


def denormalize_time(t: float, levels: DegradationLevelSet) -> float:
    """Inverse of `normalize_scale`."""
    t = float(t)
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"time {t} outside [0, 1]")
    s1, sm = levels.scales[0], levels.scales[-1]
    return s1 + t * (sm - s1)


@dataclass
class LatentTrajectory:
    """One sample's knot latents at normalized timestamps."""

    times: np.ndarray  # (m,), strictly increasing, endpoints exactly 0 and 1
    knots: np.ndarray  # (m, *latent_shape)
    _coeffs: "SplineCoefficients | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.knots = np.asarray(self.knots, dtype=np.float64)
        m = self.times.shape[0]
        if m < 2 or self.knots.shape[0] != m:
            raise ValueError("need m >= 2 knots matching the timestamps")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if self.times[0] != 0.0 or self.times[-1] != 1.0:
            raise ValueError("timestamps must start at 0 and end at 1")

    @property
    def m(self) -> int:
        return self.times.shape[0]

    def coefficients(self) -> "SplineCoefficients":
        """Fitted spline, cached per trajectory."""
        if self._coeffs is None:
            self._coeffs = fit_spline(self)
        return self._coeffs


@dataclass(frozen=True)
class SplineCoefficients:
    """Per-segment cubic coefficients; shapes are (m-1, *knot_shape)."""

    times: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray

    @property
    def m(self) -> int:
        return self.times.shape[0]

    def segment_of(self, t: float) -> int:
        """Right-closed convention: t in [t_k, t_{k+1}) -> k; t=1 -> last."""
        t = float(t)
        if not (0.0 <= t <= 1.0):
            raise ValueError(f"time {t} outside [0, 1]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(max(k, 0), self.m - 2)


def _solve_second_derivatives(times: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Knot second derivatives M (natural: M[0]=M[-1]=0), Thomas algorithm.

    `y` is (m, D); the solve runs once and is vectorized over the D columns.
    """
    m = times.shape[0]
    M = np.zeros_like(y)
    if m == 2:
        return M
    h = np.diff(times)  # (m-1,)
    # interior equations i = 1..m-2:
    #   h[i-1]*M[i-1] + 2*(h[i-1]+h[i])*M[i] + h[i]*M[i+1] = rhs[i]
    slopes = np.diff(y, axis=0) / h[:, None]
    rhs = 6.0 * (slopes[1:] - slopes[:-1])  # (m-2, D)
    lower = h[:-1].copy()  # sub-diagonal coefficients
    diag = 2.0 * (h[:-1] + h[1:])
    upper = h[1:].copy()
    n = m - 2
    # forward sweep
    cp = np.empty(n)
    dp = np.empty((n, y.shape[1]))
    cp[0] = upper[0] / diag[0]
    dp[0] = rhs[0] / diag[0]
    for i in range(1, n):
        denom = diag[i] - lower[i] * cp[i - 1]
        cp[i] = upper[i] / denom
        dp[i] = (rhs[i] - lower[i] * dp[i - 1]) / denom
    # back substitution
    M[n] = dp[n - 1]
    for i in range(n - 2, -1, -1):
        M[i + 1] = dp[i] - cp[i] * M[i + 2]
    return M


def fit_spline(traj: LatentTrajectory) -> SplineCoefficients:
    """Natural cubic spline through the trajectory's knots.

    For m=2 this degenerates to the straight segment (a=b=0).
    """
    times = traj.times
    knot_shape = traj.knots.shape[1:]
    y = traj.knots.reshape(traj.m, -1)  # (m, D)
    M = _solve_second_derivatives(times, y)
    h = np.diff(times)[:, None]
    a = (M[1:] - M[:-1]) / (6.0 * h)
    b = M[:-1] / 2.0
    c = np.diff(y, axis=0) / h - h * (2.0 * M[:-1] + M[1:]) / 6.0
    d = y[:-1]
    seg_shape = (traj.m - 1,) + knot_shape
    return SplineCoefficients(
        times=times.copy(),
        a=a.reshape(seg_shape),
        b=b.reshape(seg_shape),
        c=c.reshape(seg_shape),
        d=d.reshape(seg_shape).copy(),
    )


def fit_piecewise_linear(traj: LatentTrajectory) -> SplineCoefficients:
    """Linear interpolant per segment (a=b=0).

    The order-1 evaluation is piecewise constant and jumps at interior
    knots; kept as the trajectory-ablation baseline.
    """
    times = traj.times
    knot_shape = traj.knots.shape[1:]
    y = traj.knots.reshape(traj.m, -1)
    h = np.diff(times)[:, None]
    c = np.diff(y, axis=0) / h
    seg_shape = (traj.m - 1,) + knot_shape
    zeros = np.zeros(seg_shape)
    return SplineCoefficients(
        times=times.copy(),
        a=zeros,
        b=zeros.copy(),
        c=c.reshape(seg_shape),
        d=y[:-1].reshape(seg_shape).copy(),
    )


def evaluate(coeffs: SplineCoefficients, t: float, order: int = 0) -> np.ndarray:
    """Trajectory value or derivative (order 0..3) at time t.

    At interior knots orders 0-2 are segment-independent by continuity;
    order 3 takes the right segment's constant (segment convention of
    `segment_of`).
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    k = coeffs.segment_of(t)
    dt = float(t) - coeffs.times[k]
    a, b, c, d = coeffs.a[k], coeffs.b[k], coeffs.c[k], coeffs.d[k]
    if order == 0:
        return ((a * dt + b) * dt + c) * dt + d
    if order == 1:
        return (3.0 * a * dt + 2.0 * b) * dt + c
    if order == 2:
        return 6.0 * a * dt + 2.0 * b
    return 6.0 * a


def velocity_target(traj: LatentTrajectory, t: float) -> np.ndarray:
    """First derivative of the fitted spline at t (the regression target)."""
    return evaluate(traj.coefficients(), t, order=1)


def save_coefficients(coeffs: SplineCoefficients, stem) -> None:
    """Write <stem>.dgft (stacked a,b,c,d) plus a <stem>.json sidecar."""
    stem = Path(stem)
    stacked = np.stack([coeffs.a, coeffs.b, coeffs.c, coeffs.d])
    tensor_io.write(stem.with_suffix(".dgft"), stacked)
    sidecar = {
        "m": coeffs.m,
        "times": [float(t) for t in coeffs.times],
        "dims": list(coeffs.a.shape[1:]),
    }
    stem.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))


def load_coefficients(stem) -> SplineCoefficients:
    stem = Path(stem)
    stacked = tensor_io.read(stem.with_suffix(".dgft"))
    sidecar = json.loads(stem.with_suffix(".json").read_text())
    times = np.asarray(sidecar["times"], dtype=np.float64)
    a, b, c, d = stacked
    return SplineCoefficients(times=times, a=a, b=b, c=c, d=d)
