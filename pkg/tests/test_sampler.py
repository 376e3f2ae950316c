import numpy as np
import pytest

from conftest import random_trajectory
from trajflow.sampler import (
    OdeSolution,
    SolverConfig,
    SolverError,
    integrate,
    integrate_fixed,
    integrate_piecewise,
    nfe_profile,
)
from trajflow.spline import evaluate, fit_spline


def decay(x, t):
    return -x


def test_exponential_decay_accuracy():
    for rtol in (1e-5, 1e-8):
        cfg = SolverConfig(rtol=rtol, atol=rtol * 1e-2)
        sol = integrate(decay, np.array([1.0]), 1.0, cfg)
        assert abs(sol.latent[0] - np.exp(-1.0)) < 10 * rtol


def test_zero_target_is_free():
    x0 = np.array([1.0, 2.0])
    sol = integrate(decay, x0, 0.0)
    assert sol.nfe == 0
    assert sol.accepted == 0
    assert np.array_equal(sol.latent, x0)


def test_endpoint_time_is_exact():
    sol = integrate(decay, np.array([1.0]), 0.7)
    assert sol.time == 0.7
    assert sol.path[-1][0] == 0.7


def test_nfe_accounting_constant_field():
    # a constant field has zero local error: with h0 covering the whole
    # interval the solver takes exactly one accepted step, so NFE = 1 + 6
    sol = integrate(lambda x, t: np.ones_like(x), np.zeros(3), 1.0, SolverConfig(h0=1.0))
    assert sol.accepted == 1
    assert sol.rejected == 0
    assert sol.nfe == 7
    assert np.allclose(sol.latent, 1.0)


def test_nfe_formula_holds():
    sol = integrate(decay, np.array([1.0]), 1.0)
    assert sol.nfe == 1 + 6 * (sol.accepted + sol.rejected)


def test_spline_field_recovers_knots(rng):
    traj = random_trajectory(rng, m=4, dim=3)
    coeffs = fit_spline(traj)
    field = lambda x, t: evaluate(coeffs, min(t, 1.0), 1)
    cfg = SolverConfig(rtol=1e-8, atol=1e-10)
    for t, knot in zip(traj.times, traj.knots):
        sol = integrate(field, traj.knots[0].copy(), float(t), cfg)
        assert np.allclose(sol.latent, knot, atol=1e-6)


def test_input_validation():
    with pytest.raises(ValueError):
        integrate(decay, np.array([1.0]), 1.5)
    with pytest.raises(ValueError):
        integrate_fixed(decay, np.array([1.0]), 0.5, 0)
    with pytest.raises(ValueError):
        SolverConfig(rtol=-1.0)


def test_max_steps_enforced():
    stiff = lambda x, t: -5000.0 * x
    with pytest.raises(SolverError, match="max_steps"):
        integrate(stiff, np.array([1.0]), 1.0, SolverConfig(max_steps=3))


def test_non_finite_field_detected():
    bad = lambda x, t: np.array([np.nan])
    with pytest.raises(SolverError, match="NaN"):
        integrate(bad, np.array([1.0]), 1.0)


def test_path_is_monotone_in_time():
    sol = integrate(decay, np.array([1.0]), 1.0)
    times = [t for t, _ in sol.path]
    assert times[0] == 0.0
    assert times[-1] == 1.0
    assert all(b > a for a, b in zip(times, times[1:]))


def test_integrate_from_interior_start():
    sol = integrate(decay, np.array([1.0]), 1.0, t0=0.5)
    assert sol.path[0][0] == 0.5
    assert abs(sol.latent[0] - np.exp(-0.5)) < 1e-4
    with pytest.raises(ValueError, match="t0"):
        integrate(decay, np.array([1.0]), 0.5, t0=0.7)


def test_integrate_piecewise_matches_plain_on_smooth_field():
    plain = integrate(decay, np.array([1.0]), 1.0)
    split = integrate_piecewise(decay, np.array([1.0]), 1.0, [0.25, 0.5, 0.75])
    # both land on e^-1 within the default tolerance regime
    assert abs(split.latent[0] - np.exp(-1.0)) < 1e-5
    assert abs(split.latent[0] - plain.latent[0]) < 1e-5
    assert split.time == 1.0
    assert split.nfe == 1 + 6 * (split.accepted + split.rejected) + 3  # one restart eval per piece


def test_integrate_piecewise_sharpens_knot_recovery(rng):
    traj = random_trajectory(rng, m=6, dim=4)
    coeffs = fit_spline(traj)
    field = lambda x, t: evaluate(coeffs, min(t, 1.0), 1)
    cfg = SolverConfig(rtol=1e-8, atol=1e-10)
    sol = integrate_piecewise(field, traj.knots[0].copy(), 1.0, traj.times, cfg)
    assert np.allclose(sol.latent, traj.knots[-1], atol=1e-9)
    # breakpoints outside (0, t_target) are ignored
    sol2 = integrate_piecewise(field, traj.knots[0].copy(), 0.5, [0.0, 0.7, 1.0], cfg)
    assert sol2.time == 0.5


def test_rk4_fixed_step():
    sol = integrate_fixed(decay, np.array([1.0]), 1.0, 50)
    assert sol.nfe == 200
    assert abs(sol.latent[0] - np.exp(-1.0)) < 1e-8


def test_rk4_empirical_order():
    errors = []
    steps = [5, 10, 20, 40]
    for n in steps:
        sol = integrate_fixed(decay, np.array([1.0]), 1.0, n)
        errors.append(abs(sol.latent[0] - np.exp(-1.0)))
    orders = [
        np.log2(errors[i] / errors[i + 1]) for i in range(len(errors) - 1)
    ]
    assert all(abs(p - 4.0) < 0.3 for p in orders)


def test_nfe_profile_sorted_and_consistent():
    profile = nfe_profile(decay, np.array([1.0]), [0.0, 0.5, 1.0])
    assert profile[0] == (0.0, 0)
    assert profile[1][1] <= profile[2][1]
    with pytest.raises(ValueError):
        nfe_profile(decay, np.array([1.0]), [1.0, 0.5])


def test_tighter_tolerance_needs_more_work():
    loose = integrate(decay, np.array([1.0]), 1.0, SolverConfig(rtol=1e-4, atol=1e-6))
    tight = integrate(decay, np.array([1.0]), 1.0, SolverConfig(rtol=1e-9, atol=1e-11))
    assert tight.nfe > loose.nfe
