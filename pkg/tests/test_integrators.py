import math

import numpy as np
import pytest
import scipy.linalg as sla

from sigmalab.clock import SigmaClock, identity_clock, uniform_clock
from sigmalab.gamma import fit_slope
from sigmalab.integrators import (
    CflViolation,
    LinearSystem,
    StepPlan,
    certify_steps,
    cfl_limit,
    cfl_limit_from,
    energy_of,
    euler_matrix,
    euler_step,
    generator,
    heun_matrix,
    integrate_on_clock,
    midpoint_matrix,
    midpoint_step,
    step_energy_factor,
)
from sigmalab.jumps import scale_map
from sigmalab.models import build_gcc_wave, dissipative_benchmark, scalar_system, worked_exemplar


def periodic_wave(n=32):
    """Skew-symmetric first-order wave on a periodic grid (no boundary terms)."""
    h = 1.0 / n
    D = (np.roll(np.eye(n), 1, axis=1) - np.roll(np.eye(n), -1, axis=1)) / (2 * h)
    K = np.block([[np.zeros((n, n)), D], [D, np.zeros((n, n))]])
    return LinearSystem(K, np.zeros_like(K), h * np.eye(2 * n), "periodic")


def test_midpoint_scalar_amplification():
    out = midpoint_step(scalar_system(), [1.0], 0.1)
    assert out[0] == pytest.approx(0.95 / 1.05, abs=1e-15)
    assert out[0] == pytest.approx(0.904762, abs=1e-6)


def test_midpoint_conserves_skew_energy():
    sys = periodic_wave()
    x = np.random.default_rng(0).standard_normal(sys.dim)
    e0 = energy_of(sys, x)
    Phi = midpoint_matrix(generator(sys), 0.01)
    for _ in range(100):
        x = Phi @ x
    assert energy_of(sys, x) / e0 == pytest.approx(1.0, abs=1e-10)


def test_midpoint_local_error_third_order():
    M = generator(build_gcc_wave(1.0, 17, 0.3, (0.0, 1.0)))
    dts = [0.02, 0.01, 0.005, 0.0025]
    errs = [np.linalg.norm(midpoint_matrix(M, dt) - sla.expm(dt * M), 2) for dt in dts]
    assert fit_slope(dts, errs) >= 2.9


def test_cfl_limit_baseline():
    assert cfl_limit_from(1.8) == pytest.approx(1.1111, abs=1e-4)
    assert cfl_limit(dissipative_benchmark()) == pytest.approx(2 / 1.8, rel=1e-10)


def test_euler_refuses_beyond_limit():
    with pytest.raises(CflViolation) as info:
        euler_step(scalar_system(), [1.0], 3.0)
    assert info.value.limit == pytest.approx(2.0)


def test_euler_override_quadruples_energy():
    out = euler_step(scalar_system(), [1.0], 3.0, override=True)
    assert out[0] ** 2 == pytest.approx(4.0)


@pytest.mark.parametrize("dt", [0.01, 0.3, 1.0])
def test_euler_on_rotation_gains_energy(dt):
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    assert step_energy_factor(euler_matrix(rot, dt), np.eye(2)) == pytest.approx(1 + dt * dt, rel=1e-12)


def test_euler_monotone_within_cfl_on_benchmark():
    sys = dissipative_benchmark()
    limit = cfl_limit_from(1.8)
    x = np.random.default_rng(1).standard_normal(sys.dim)
    for dt in (0.25 * limit, 0.5 * limit, limit):
        energies = [energy_of(sys, x)]
        y = x.copy()
        for _ in range(200):
            y = euler_step(sys, y, dt, lambda_max=1.8)
            energies.append(energy_of(sys, y))
        assert np.all(np.diff(energies) <= 1e-12 * energies[0])


def test_euler_step_factor_bound():
    # Per-step bound on an H-self-adjoint generator is (1 - kappa dt)^2 with
    # kappa the smallest decay rate, valid while dt <= 2 / (kappa + Lambda_max).
    sys = dissipative_benchmark()
    M = generator(sys)
    lam = -np.linalg.eigvals(M).real
    kappa, big = lam.min(), lam.max()
    for dt in (0.1, 0.5, 2 / (kappa + big)):
        q = step_energy_factor(euler_matrix(M, dt), sys.energy)
        assert q <= (1 - kappa * dt) ** 2 * (1 + 1e-10)


def test_heun_rotation_factor():
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    dt = 0.5
    assert step_energy_factor(heun_matrix(rot, dt), np.eye(2)) == pytest.approx(1 + dt**4 / 4, rel=1e-12)


def test_worked_clock_energy_ratio():
    ex = worked_exemplar()
    traj = integrate_on_clock(scalar_system(), ex.clock, ex.ledger_maps(1), np.array([1.0]), StepPlan(0.1))
    ratio = traj.energy[-1] / traj.energy[0]
    assert ratio <= math.exp(-0.30 * 1.40) + 1e-9
    assert ratio == pytest.approx(0.657046819815, abs=1e-12)
    assert [e for e in traj.events if e != "step"] == ["atom_pre", "atom_post"] * 2


def test_scalar_log_slope_matches_damping():
    a0 = 0.7
    traj = integrate_on_clock(scalar_system(), uniform_clock(2.0, a0), [], np.array([1.0]), StepPlan(1e-3))
    slope = np.polyfit(traj.t, np.log(traj.energy), 1)[0]
    assert slope == pytest.approx(-2 * a0, rel=0.02)


def test_flat_clock_conserves_energy():
    sys = build_gcc_wave(1.0, 33, 0.0, (0.0, 1.0))
    # Undamped interior; only the boundary SAT acts, so use the periodic model.
    per = periodic_wave()
    flat = SigmaClock(1.0, ((0.0, 1.0, 0.0),))
    x = np.random.default_rng(2).standard_normal(per.dim)
    traj = integrate_on_clock(per, flat, [], x, StepPlan(0.01))
    assert np.ptp(traj.energy) <= 1e-10 * traj.energy[0]
    traj = integrate_on_clock(sys, flat, [], np.random.default_rng(3).standard_normal(sys.dim), StepPlan(0.01))
    assert np.all(np.diff(traj.energy) <= 1e-12 * traj.energy[0])


def test_gated_damping_leaves_flats_quiet():
    wave = build_gcc_wave(1.0, 33, 0.5, (0.0, 1.0))
    per = periodic_wave()
    sys = LinearSystem(per.K, -0.5 * np.eye(per.dim), per.energy)
    clock = SigmaClock(2.0, ((0.0, 1.0, 0.0), (1.0, 2.0, 1.0)))
    traj = integrate_on_clock(sys, clock, [], np.ones(per.dim), StepPlan(0.05))
    on_flat = traj.energy[traj.t <= 1.0]
    assert np.ptp(on_flat) <= 1e-12 * on_flat[0]
    assert traj.energy[-1] < on_flat[-1]
    assert certify_steps(wave, clock, StepPlan(0.05)).flat_factor <= 1 + 1e-12


def test_atom_count_must_match():
    clock = uniform_clock(1.0, 1.0, [(0.5, 0.2)])
    with pytest.raises(ValueError):
        integrate_on_clock(scalar_system(), clock, [], np.array([1.0]), StepPlan(0.1))
    traj = integrate_on_clock(scalar_system(), clock, {0.5: scale_map(0.5, 1)}, np.array([1.0]), StepPlan(0.1))
    assert traj.atom_events[0][2] == pytest.approx(0.25 * traj.atom_events[0][1])


def test_identity_clock_matches_concatenated_product():
    sys = build_gcc_wave(1.0, 21, 0.3, (0.0, 1.0))
    plan = StepPlan(0.05)
    clock = identity_clock(2.0)
    cert = certify_steps(sys, clock, plan)
    traj = integrate_on_clock(sys, clock, [], np.ones(sys.dim), plan)
    bound = traj.energy[0] * np.exp(-2 * cert.kappa_h * traj.t)
    assert np.all(traj.energy <= bound * (1 + 1e-10))
    # Stepwise envelope equals the closed-form exponential for a uniform grid.
    steps = np.exp(-2 * cert.kappa_h * np.diff(traj.t))
    assert np.prod(steps) == pytest.approx(math.exp(-2 * cert.kappa_h * 2.0), rel=1e-10)


def test_unknown_method_rejected():
    with pytest.raises(ValueError):
        StepPlan(0.1, method="rk4")
    with pytest.raises(ValueError):
        StepPlan(0.0)
