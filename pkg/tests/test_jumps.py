import numpy as np
import pytest

from sigmalab.jumps import (
    JumpError,
    apply_jump,
    cayley_tick,
    contraction_factor,
    extremal_state,
    jump_product,
    ledger_map,
    maps_in_interval,
    matrix_map,
    scale_map,
)
from sigmalab.sbp import SatConfig, assemble_damped_wave, build_sbp


def energy_of(E, x):
    return 0.5 * x @ E @ x


@pytest.fixture
def wave_energy():
    return assemble_damped_wave(build_sbp(9, 1.0), 0.2, SatConfig()).energy


def test_cayley_identity_when_theta_zero(wave_energy):
    m = cayley_tick(wave_energy, range(wave_energy.shape[0]), 0.0)
    np.testing.assert_allclose(m.J, np.eye(wave_energy.shape[0]), atol=1e-15)
    assert m.rho == pytest.approx(1.0)


def test_cayley_full_space_half(wave_energy):
    m = cayley_tick(wave_energy, range(wave_energy.shape[0]), 0.5)
    np.testing.assert_allclose(m.J, np.eye(wave_energy.shape[0]) / 3, atol=1e-14)
    assert m.rho == pytest.approx(1 / 9, rel=1e-12)


def test_cayley_annihilates_when_theta_one(wave_energy):
    m = cayley_tick(wave_energy, range(wave_energy.shape[0]), 1.0)
    np.testing.assert_allclose(m.J, 0.0, atol=1e-14)
    assert m.rho == pytest.approx(0.0, abs=1e-14)


def test_cayley_parameter_out_of_range(wave_energy):
    with pytest.raises(JumpError):
        cayley_tick(wave_energy, [0], 1.5)


def test_cayley_on_subspace_keeps_complement(wave_energy):
    n = wave_energy.shape[0] // 2
    m = cayley_tick(wave_energy, range(n), 0.5)
    assert m.rho == pytest.approx(1.0, abs=1e-12)
    x = np.zeros(2 * n)
    x[n + 2] = 1.0
    assert energy_of(wave_energy, apply_jump(m, x)) == pytest.approx(energy_of(wave_energy, x), rel=1e-12)


def test_scaling_factor_squared():
    assert contraction_factor(0.7 * np.eye(4), np.eye(4)) == pytest.approx(0.49)


def test_singular_energy_rejected():
    with pytest.raises(JumpError):
        contraction_factor(np.eye(2), np.diag([1.0, 0.0]))


def test_random_map_against_sampling():
    rng = np.random.default_rng(3)
    E = np.diag(rng.uniform(0.5, 2.0, 6))
    J = 0.1 * rng.standard_normal((6, 6))
    rho = contraction_factor(J, E)
    X = rng.standard_normal((10_000, 6))
    ratios = np.einsum("ij,jk,ik->i", X @ J.T, E, X @ J.T) / np.einsum("ij,jk,ik->i", X, E, X)
    assert rho < 1
    assert ratios.max() <= rho + 1e-8


def test_extremal_state_attains_factor():
    rng = np.random.default_rng(4)
    E = np.diag(rng.uniform(0.5, 2.0, 5))
    J = 0.4 * rng.standard_normal((5, 5))
    m = matrix_map(J, E)
    v = extremal_state(J, E)
    assert energy_of(E, apply_jump(m, v)) / energy_of(E, v) == pytest.approx(m.rho, rel=1e-10)


def test_apply_zero_and_dimension_mismatch():
    m = scale_map(0.5, 3)
    np.testing.assert_array_equal(apply_jump(m, np.zeros(3)), np.zeros(3))
    with pytest.raises(JumpError):
        apply_jump(m, np.zeros(4))


def test_admissible_map_never_increases_energy(wave_energy):
    rng = np.random.default_rng(5)
    m = cayley_tick(wave_energy, [0, 3, 4], 0.8)
    assert m.admissible
    X = rng.standard_normal((10_000, wave_energy.shape[0]))
    before = np.einsum("ij,jk,ik->i", X, wave_energy, X)
    Y = X @ m.J.T
    after = np.einsum("ij,jk,ik->i", Y, wave_energy, Y)
    assert np.all(after <= before * (1 + 1e-12))


def test_products():
    assert jump_product([]) == 1.0
    assert jump_product([scale_map(0.9, 2), scale_map(0.8, 2)]) == pytest.approx(0.5184)
    assert ledger_map(0.8, 1.0, 0.15, 1).rho == pytest.approx(0.786627861067, abs=1e-12)


def test_product_is_multiplicative_over_intervals():
    sched = [(0.3, scale_map(0.9, 1)), (0.9, scale_map(0.8, 1)), (1.5, scale_map(0.95, 1))]
    whole = jump_product(maps_in_interval(sched, 0.0, 2.0))
    split = jump_product(maps_in_interval(sched, 0.0, 0.9)) * jump_product(maps_in_interval(sched, 0.9, 2.0))
    assert whole == pytest.approx(split, rel=1e-15)
    assert maps_in_interval(sched, 0.3, 0.9) == [sched[1][1]]
