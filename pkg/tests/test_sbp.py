import numpy as np
import pytest

from sigmalab.gamma import fit_slope
from sigmalab.sbp import (
    SatConfig,
    SbpError,
    assemble_damped_wave,
    boundary_sat_form,
    build_sbp,
    energy_symmetric_part,
    generalized_max,
    max_eig,
    sat_threshold,
    split_varcoeff,
    trace_constant,
    two_block_interface,
)


def test_small_operator_matrices():
    op = build_sbp(5, 1.0)
    assert op.h == 0.25
    np.testing.assert_array_equal(np.diag(op.H), 0.25 * np.array([0.5, 1, 1, 1, 0.5]))
    np.testing.assert_array_equal(op.B, np.diag([-1.0, 0, 0, 0, 1]))


@pytest.mark.parametrize("order", [2, 4])
@pytest.mark.parametrize("n", [8, 17, 64, 201])
def test_sbp_identity_exact(n, order):
    op = build_sbp(n, 1.7, order)
    assert np.max(np.abs(op.Q + op.Q.T - op.B)) <= 1e-14
    assert np.all(np.diag(op.H) > 0)


@pytest.mark.parametrize("order", [2, 4])
def test_derivative_consistency(order):
    op = build_sbp(21, 2.0, order)
    np.testing.assert_allclose(op.D @ np.ones(op.n), 0.0, atol=1e-12)
    np.testing.assert_allclose((op.D @ op.x)[1:-1], 1.0, atol=1e-12)


def test_derivative_of_square_exact_in_interior():
    # Centred differences differentiate quadratics exactly away from the ends.
    for n in (51, 101, 201):
        op = build_sbp(n, 1.0)
        assert np.abs(op.D @ op.x**2 - 2 * op.x)[1:-1].max() < 1e-10


def test_interior_sine_derivative_slope():
    hs, errs = [], []
    for n in (51, 101, 201):
        op = build_sbp(n, 1.0)
        e = (op.D @ np.sin(3 * op.x) - 3 * np.cos(3 * op.x))[1:-1]
        hs.append(op.h)
        errs.append(np.abs(e).max())
    assert fit_slope(hs, errs) >= 1.9


def test_too_few_nodes():
    with pytest.raises(SbpError):
        build_sbp(3, 1.0)
    with pytest.raises(SbpError):
        build_sbp(7, 1.0, order=4)


def test_green_identity_random():
    rng = np.random.default_rng(1)
    op = build_sbp(33, 1.0)
    u, v = rng.standard_normal((2, op.n))
    lhs = u @ op.H @ op.D @ v + (op.D @ u) @ op.H @ v
    assert lhs == pytest.approx(u @ op.B @ v, abs=1e-12)


def test_split_identity_identity_coefficient():
    rng = np.random.default_rng(2)
    op = build_sbp(17, 1.0)
    u, v = rng.standard_normal((2, op.n))
    s = split_varcoeff(op, np.ones(op.n), u, v)
    assert s.form == pytest.approx(u @ op.H @ op.D @ v, abs=1e-12)
    assert abs(s.first_order_residual) <= 1e-12
    assert abs(s.second_order_residual) <= 1e-12


def test_split_identity_constant_state():
    op = build_sbp(17, 1.0)
    a = 1 + op.x
    one = np.ones(op.n)
    s = split_varcoeff(op, a, one, one)
    assert s.form == pytest.approx(0.5 * (a[-1] - a[0]), abs=1e-14)
    assert s.coercive == pytest.approx(0.0, abs=1e-20)


@pytest.mark.parametrize("seed", range(5))
def test_split_identity_random(seed):
    rng = np.random.default_rng(seed)
    op = build_sbp(40, 1.0)
    a = 1 + op.x
    u, v = rng.standard_normal((2, op.n))
    s = split_varcoeff(op, a, u, v)
    scale = max(1.0, abs(s.form))
    assert abs(s.first_order_residual) / scale <= 1e-12
    assert abs(s.second_order_residual) / max(1.0, abs(s.second_order_lhs)) <= 1e-12


def test_split_rejects_nonpositive_coefficient():
    op = build_sbp(9, 1.0)
    with pytest.raises(SbpError):
        split_varcoeff(op, np.zeros(op.n), np.ones(op.n), np.ones(op.n))


def test_sat_threshold_identity_flux():
    op = build_sbp(21, 1.0)
    tau = sat_threshold(op, 1.0)
    assert tau == pytest.approx(0.5, abs=1e-9)
    worst = max(max_eig(boundary_sat_form(op, 1.0, tau, tau, s)) for s in (1, -1))
    assert -1e-8 <= worst <= 1e-8


def test_sat_threshold_no_flux():
    assert sat_threshold(build_sbp(9, 1.0), 0.0) == 0.0


def test_sat_threshold_brackets():
    op = build_sbp(21, 1.0)
    a = 1 + op.x
    tau = sat_threshold(op, a)
    ends = np.ix_([0, op.n - 1], [0, op.n - 1])
    # Interior rows of the form vanish, so strict negativity lives on the trace nodes.
    for s in (1, -1):
        assert max_eig(boundary_sat_form(op, a, 2 * tau, 2 * tau, s)[ends]) < 0
    assert max(max_eig(boundary_sat_form(op, a, tau / 2, tau / 2, s)) for s in (1, -1)) > 0


def test_trace_constant():
    op = build_sbp(5, 1.0)
    assert trace_constant(op) == pytest.approx(8.0)
    for n in (9, 33, 129):
        o = build_sbp(n, 1.0)
        assert trace_constant(o) * o.h == pytest.approx(2.0)
    e0 = np.zeros(op.n)
    e0[0] = 1.0
    assert e0[0] ** 2 == pytest.approx(trace_constant(op) * e0 @ op.H @ e0)


def test_baseline_sat_effective_penalty():
    op = build_sbp(51, 1.0)
    sat = SatConfig()
    assert sat.tau(op.h)[0] == pytest.approx(50.0)
    assert sat.effective(op)[0] == pytest.approx(sat_threshold(op, 1.0), abs=1e-9)


def test_undamped_wave_is_energy_stable():
    op = build_sbp(33, 1.0)
    w = assemble_damped_wave(op, 0.0, SatConfig())
    assert generalized_max(energy_symmetric_part(w.generator, w.energy), w.energy) <= 1e-10


def test_damped_wave_dissipates_velocity():
    op = build_sbp(33, 1.0)
    a0 = 0.4
    w = assemble_damped_wave(op, a0, SatConfig())
    S = energy_symmetric_part(w.generator, w.energy)
    Pv = np.zeros_like(S)
    Pv[: op.n, : op.n] = a0 * op.H
    assert max_eig(S + Pv) <= 1e-10


def test_flipped_sat_refused_then_unstable():
    op = build_sbp(33, 1.0)
    with pytest.raises(SbpError):
        assemble_damped_wave(op, 0.1, SatConfig(sign=-1))
    w = assemble_damped_wave(op, 0.1, SatConfig(sign=-1), allow_flipped=True)
    assert generalized_max(energy_symmetric_part(w.generator, w.energy), w.energy) > 0


def test_interface_zero_jump():
    cpl = two_block_interface(build_sbp(11, 0.5), build_sbp(15, 0.5, x0=0.5), tau=0.7)
    state = np.ones(11 + 15)
    assert cpl.interface_jump(state) == 0.0
    assert cpl.interface_value(state) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_interface_penalises_jump_squared(seed):
    rng = np.random.default_rng(seed)
    tau = 0.8
    cpl = two_block_interface(build_sbp(11, 0.5), build_sbp(21, 0.5, x0=0.5), tau=tau, damping=(0.2, 0.1))
    x = rng.standard_normal(32)
    assert cpl.interface_value(x) == pytest.approx(-tau * cpl.interface_jump(x) ** 2, abs=1e-12)
    assert cpl.interface_max_eig <= 1e-12
    total = energy_symmetric_part(cpl.generator, cpl.energy)
    assert generalized_max(total, cpl.energy) <= 1e-10


def test_interface_zero_penalty_cancels_flux():
    cpl = two_block_interface(build_sbp(11, 0.5), build_sbp(11, 0.5, x0=0.5), tau=0.0, damping=(0.3, 0.3))
    np.testing.assert_allclose(cpl.interface_form, 0.0, atol=1e-12)
    S = energy_symmetric_part(cpl.generator, cpl.energy)
    np.testing.assert_allclose(S, cpl.interior_form + cpl.outer_form, atol=1e-12)


def test_interface_position_mismatch():
    with pytest.raises(SbpError):
        two_block_interface(build_sbp(11, 0.5), build_sbp(11, 0.5, x0=0.6), tau=1.0)
