"""Executable counterexamples: each scenario asserts that a predicted failure happens.

Every scenario also runs a control in which the offending ingredient is
repaired; a report is healthy only when the failure is observed and the
control passes.  Witness values are deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.optimize as so

from .clock import SigmaClock, identity_clock
from .gamma import coercivity_constant, fit_slope
from .integrators import (
    LinearSystem,
    StepPlan,
    cfl_limit,
    euler_matrix,
    generator,
    heun_matrix,
    integrate_on_clock,
    midpoint_matrix,
    step_energy_factor,
)
from .jumps import jump_product, scale_map
from .ledger import extract_rates
from .models import build_gcc_wave, dissipative_benchmark, scalar_system, slowest_mode
from .parallel import parallel_map
from .sbp import (
    SatConfig,
    assemble_damped_wave,
    boundary_sat_form,
    build_sbp,
    energy_symmetric_part,
    generalized_max,
    max_eig,
)


class AtlasError(ValueError):
    pass


@dataclass(frozen=True)
class FailureReport:
    scenario: str
    expected_failure: str
    observed: bool
    control_passed: bool
    witness: dict = field(default_factory=dict)

    @property
    def healthy(self) -> bool:
        return self.observed and self.control_passed

    def csv_rows(self):
        for k, v in self.witness.items():
            yield self.scenario, k, v


DEFAULT_H = (1 / 32, 1 / 64, 1 / 128, 1 / 256)


def _n_for(h: float, L: float = 1.0) -> int:
    return int(round(L / h)) + 1


# -- SAT scaling and sign ----------------------------------------------------------------------


def underscaled_sat(h_list: Sequence[float] = DEFAULT_H, exponent: float = 0.5, tau_scale: float = 1.0, control_scale: float = 2.0) -> FailureReport:
    """Penalty ``tau_scale * h**-exponent`` with ``exponent < 1``.

    The admissible rate is the coercivity constant of the static energy
    (Dirichlet gradient plus boundary penalty); it must degrade with h.  The
    boundary form ``u^T B u / 2 - tau_eff (u_0^2 + u_N^2)`` must turn
    indefinite because the effective penalty drops below one half.
    """
    if not exponent < 1:
        raise AtlasError("under-scaling needs an exponent below 1")
    h_list = list(h_list)

    def sweep(sat: SatConfig):
        cs, bmax = [], []
        for h in h_list:
            op = build_sbp(_n_for(h), 1.0)
            cs.append(coercivity_constant(op, sat))
            tl, tr = sat.effective(op)
            bmax.append(max(max_eig(boundary_sat_form(op, 1.0, tl, tr, s)) for s in (1, -1)))
        return cs, bmax

    cs, bmax = sweep(SatConfig(tau_scale=tau_scale, exponent=exponent))
    ctrl, ctrl_b = sweep(SatConfig(tau_scale=control_scale, exponent=1.0))
    decreasing = all(b < a for a, b in zip(cs, cs[1:]))
    decay_exponent = fit_slope(h_list, cs)
    observed = decreasing and decay_exponent > 0 and bmax[-1] > 0
    control_ok = min(ctrl) >= 0.9 * max(ctrl) and max(ctrl_b) <= 1e-12
    return FailureReport(
        "underscaled-sat",
        "admissible decay constant degenerates as h -> 0 and the boundary form becomes indefinite",
        observed,
        control_ok,
        {
            "c_sigma_h": cs,
            "ratio_last_first": cs[-1] / cs[0],
            "decay_exponent": decay_exponent,
            "boundary_form_max": bmax,
            "control_c_sigma_h": ctrl,
            "control_boundary_form_max": ctrl_b,
        },
    )


def flipped_sat(n: int = 33, damping: float = 0.3, dt: float = 0.01, T: float = 0.5) -> FailureReport:
    """Wrong-signed boundary penalty injects energy into the damped wave."""
    op = build_sbp(n, 1.0)

    def probe(sat: SatConfig):
        wave = assemble_damped_wave(op, damping, sat, allow_flipped=True)
        M = wave.K + wave.G
        growth = generalized_max(energy_symmetric_part(M, wave.energy), wave.energy)
        # Start from the state the boundary terms amplify fastest.
        S = energy_symmetric_part(M, wave.energy)
        _, vecs = sla.eigh(S, wave.energy)
        x0 = vecs[:, -1]
        sys = LinearSystem(wave.K, wave.G, wave.energy)
        traj = integrate_on_clock(sys, identity_clock(T), [], x0, StepPlan(dt))
        return growth, float(traj.energy[-1] / traj.energy[0])

    growth, ratio = probe(SatConfig(sign=-1))
    c_growth, c_ratio = probe(SatConfig())
    return FailureReport(
        "flipped-sat",
        "flipped penalty sign makes the energy grow",
        growth > 0 and ratio > 1,
        c_growth <= 1e-10 and c_ratio <= 1 + 1e-12,
        {"growth_rate": growth, "energy_ratio": ratio, "control_growth_rate": c_growth, "control_energy_ratio": c_ratio},
    )


# -- time stepping ----------------------------------------------------------------------------------


def cfl_violation(lambda_max: float = 1.8, factor: float = 1.5, n: int = 33, steps: int = 40) -> FailureReport:
    """Forward Euler beyond ``2 / lambda_max`` on the dissipative benchmark."""
    system = dissipative_benchmark(n, lambda_max)
    limit = cfl_limit(system, 1.0)
    amp = step_energy_factor(euler_matrix(generator(system), factor * limit), system.energy)
    ctrl_amp = step_energy_factor(euler_matrix(generator(system), limit), system.energy)
    rng = np.random.default_rng(0)
    x0 = rng.standard_normal(system.dim)
    traj = integrate_on_clock(system, identity_clock(steps * limit), [], x0, StepPlan(limit, "euler", lambda_max=lambda_max))
    monotone = bool(np.all(np.diff(traj.energy) <= 1e-12 * traj.energy[0]))
    return FailureReport(
        "cfl-violation",
        "Euler step beyond the stability limit amplifies some mode",
        amp > 1,
        monotone and ctrl_amp <= 1 + 1e-12,
        {"limit": limit, "amplification": amp, "control_amplification": ctrl_amp, "control_monotone": monotone},
    )


def rotation_system() -> LinearSystem:
    """Undamped oscillator ``x' = (0 1; -1 0) x`` with the identity energy."""
    K = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return LinearSystem(K, np.zeros((2, 2)), np.eye(2), "rotation")


def heun_rotation_factor(dt: float) -> float:
    """``|1 + i dt - dt^2 / 2|^2 = 1 + dt^4 / 4``."""
    return abs(1 + 1j * dt - dt * dt / 2) ** 2


def unstable_step_on_flat(method: str = "euler", dt: float | None = None, wave_n: int = 33) -> FailureReport:
    """Explicit one-step maps are expansive on a flat; midpoint is not."""
    if method not in ("euler", "heun"):
        raise AtlasError("explicit method must be euler or heun")
    dt = dt if dt is not None else (0.1 if method == "euler" else 0.5)
    make = euler_matrix if method == "euler" else heun_matrix
    rot = rotation_system()
    ratio = step_energy_factor(make(rot.K, dt), rot.energy)
    ctrl = step_energy_factor(midpoint_matrix(rot.K, dt), rot.energy)
    expected = 1 + dt * dt if method == "euler" else heun_rotation_factor(dt)
    # Same test on the undamped wave: the clock is flat, only K acts.
    flat = SigmaClock(1.0, ((0.0, 1.0, 0.0),))
    wave = assemble_damped_wave(build_sbp(wave_n, 1.0), 0.0, SatConfig())
    sys = LinearSystem(wave.K, wave.G, wave.energy)
    wdt = 0.5 / (wave_n - 1)
    wave_ratio = step_energy_factor(make(wave.K, wdt), wave.energy)
    wave_ctrl = step_energy_factor(midpoint_matrix(wave.K, wdt), wave.energy)
    S = make(wave.K, wdt)
    _, vecs = sla.eigh(S.T @ wave.energy @ S, wave.energy)
    # Reported only: boundary SAT loss can outweigh the O(dt^4) Heun growth
    # over many steps, so the one-step expansion is the observed failure.
    traj = integrate_on_clock(sys, flat, [], vecs[:, -1], StepPlan(wdt, method, cfl_override=True))
    return FailureReport(
        "explicit-flat",
        f"{method} step map increases the energy on a flat",
        ratio > 1 and wave_ratio > 1,
        abs(ctrl - 1) <= 1e-12 and wave_ctrl <= 1 + 1e-12,
        {
            "method": method,
            "rotation_ratio": ratio,
            "rotation_ratio_closed_form": expected,
            "midpoint_ratio": ctrl,
            "wave_step_ratio": wave_ratio,
            "wave_midpoint_ratio": wave_ctrl,
            "wave_flat_energy_ratio": float(traj.energy[-1] / traj.energy[0]),
        },
    )


# -- nonlinear damping --------------------------------------------------------------------------------


def midpoint_damping_step(g: Callable[[float], float], u: float, dsigma: float) -> float:
    """Solve ``u' = u + dsigma g((u + u') / 2)`` for ``u'``."""
    # In terms of the midpoint z: z - u - dsigma/2 g(z) = 0.  Bracket the
    # root closest to u, which is the branch continuing from dsigma = 0.
    F = lambda z: z - u - 0.5 * dsigma * g(z)
    if F(u) == 0:
        return u
    r = 1e-3 * max(1.0, abs(u))
    for _ in range(60):
        lo, hi = u - r, u + r
        if F(lo) * F(u) <= 0:
            zval = so.brentq(F, lo, u, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            break
        if F(hi) * F(u) <= 0:
            zval = so.brentq(F, u, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
            break
        r *= 2
    else:
        raise AtlasError(f"midpoint damping step has no solution near u={u}")
    return 2 * zval - u


def is_dissipative(g: Callable[[float], float], lo: float = -3.0, hi: float = 3.0, n: int = 601) -> bool:
    """``g`` nonincreasing on the grid, i.e. ``(g(v) - g(w))(v - w) <= 0``."""
    x = np.linspace(lo, hi, n)
    y = np.array([g(v) for v in x])
    return bool(np.all(np.diff(y) <= 1e-14))


def nonmonotone_damping(g: Callable[[float], float] | None = None, dsigma: float = 0.1, grid: int = 801, span: float = 2.0, seed: int = 0) -> FailureReport:
    """Grid search for a state where one midpoint step with ``g`` raises ``u^2 / 2``.

    The default ``g(u) = u - u**3`` is increasing on ``|u| < 1/sqrt(3)`` and
    feeds energy for ``|z| < 1`` (``z g(z) > 0``).
    """
    g = g if g is not None else (lambda u: u - u**3)
    best_u, best_ratio = math.nan, -math.inf
    for u in np.linspace(-span, span, grid):
        if u == 0:
            continue
        up = midpoint_damping_step(g, float(u), dsigma)
        r = up * up / (u * u)
        if r > best_ratio:
            best_u, best_ratio = float(u), r
    rng = np.random.default_rng(seed)
    worst_ctrl = -math.inf
    lin = lambda u: -u
    for u in rng.uniform(-span, span, 1000):
        up = midpoint_damping_step(lin, float(u), dsigma)
        worst_ctrl = max(worst_ctrl, up * up / (u * u))
    zero_ratio = midpoint_damping_step(lambda u: 0.0, 0.7, dsigma) ** 2 / 0.49
    return FailureReport(
        "nonmonotone-damping",
        "midpoint step with a nonmonotone damping map increases the energy",
        best_ratio > 1,
        worst_ctrl <= 1.0 and abs(zero_ratio - 1) <= 1e-14,
        {"state": best_u, "energy_ratio": best_ratio, "dissipative": is_dissipative(g), "control_worst_ratio": worst_ctrl, "zero_map_ratio": zero_ratio},
    )


# -- atoms ----------------------------------------------------------------------------------------------


def accumulation_log_product(N: int, c: float) -> float:
    """``log prod_k rho_k^2`` for amplitude factors ``rho_k = 1 + c / k``, k = 1..N."""
    maps = [scale_map(1.0 + c / k, 1) for k in range(1, N + 1)]
    return math.log(jump_product(maps)) if maps else 0.0


def accumulation_failure(N_list: Sequence[int] = (100, 1000, 10_000), c: float = 1.0) -> FailureReport:
    if not c > 0:
        raise AtlasError("accumulation needs c > 0")
    logs = [accumulation_log_product(N, c) for N in N_list]
    growing = all(b > a for a, b in zip(logs, logs[1:]))
    harmonic = 2 * c * math.log(N_list[-1])
    rel = abs(logs[-1] - harmonic) / harmonic
    ctrl = [math.exp(sum(2 * math.log(1 - 1 / (k + 1)) for k in range(1, N + 1))) for N in N_list]
    zero = accumulation_log_product(N_list[-1], 0.0)
    return FailureReport(
        "accumulation",
        "infinitely many expansive atoms make the ledger product diverge",
        growing and (c != 1.0 or rel <= 0.05),
        all(p <= 1 for p in ctrl) and zero == 0.0,
        {"N": list(N_list), "log_product": logs, "two_c_log_N": harmonic, "relative_gap": rel, "control_products": ctrl},
    )


# -- schedules ---------------------------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleRates:
    name: str
    mass: float
    horizon: float
    wall_rate: float
    sigma_rate: float
    terminal_energy: float


def schedule_clocks(mass: float = 1.4, active: float = 2.0, T_padded: float = 20.0) -> dict[str, SigmaClock]:
    """Equal-mass schedules: dense on ``[0, active]``, flat-padded to ``T_padded``, and postponed."""
    w = mass / active
    return {
        "dense": SigmaClock(active, ((0.0, active, w),)),
        "flat-padded": SigmaClock(T_padded, ((0.0, active, w), (active, T_padded, 0.0))),
        "postponed": SigmaClock(T_padded, ((0.0, T_padded - active, 0.0), (T_padded - active, T_padded, w))),
    }


def schedule_rates(clocks: dict[str, SigmaClock], dt: float = 1e-3, kappa: float = 1.0) -> list[ScheduleRates]:
    masses = {k: c.total_mass for k, c in clocks.items()}
    ref = next(iter(masses.values()))
    bad = {k: m for k, m in masses.items() if abs(m - ref) > 1e-12 * max(1.0, ref)}
    if bad:
        raise AtlasError(f"schedules must share the clock mass {ref}; mismatched: {bad}")
    system = scalar_system()
    out = []
    for name, clock in clocks.items():
        traj = integrate_on_clock(system, clock, [], np.array([1.0]), StepPlan(dt))
        wall, sig = extract_rates(traj, clock, kappa)
        out.append(ScheduleRates(name, clock.total_mass, clock.horizon, wall, sig, float(traj.energy[-1])))
    return out


def schedule_adversary(mass: float = 1.4, active: float = 2.0, T_padded: float = 20.0, dt: float = 1e-3) -> FailureReport:
    """Clock rates persist across equal-mass schedules while the wall rate collapses under padding."""
    rates = {r.name: r for r in schedule_rates(schedule_clocks(mass, active, T_padded), dt)}
    sig = [r.sigma_rate for r in rates.values()]
    spread = max(sig) - min(sig)
    collapse = rates["flat-padded"].wall_rate / rates["dense"].wall_rate
    # Self comparison must be exact.
    again = {r.name: r for r in schedule_rates({"dense": schedule_clocks(mass, active, T_padded)["dense"]}, dt)}
    self_ok = again["dense"].sigma_rate == rates["dense"].sigma_rate and again["dense"].wall_rate == rates["dense"].wall_rate
    terminal = [r.terminal_energy for r in rates.values()]
    return FailureReport(
        "schedule-adversary",
        "wall-clock rate collapses under flat padding while the clock rate persists",
        spread <= 1e-6 and collapse <= 0.1 * (1 + 1e-9),
        self_ok and max(terminal) - min(terminal) <= 1e-12,
        {
            "sigma_rates": {k: r.sigma_rate for k, r in rates.items()},
            "wall_rates": {k: r.wall_rate for k, r in rates.items()},
            "sigma_rate_spread": spread,
            "wall_rate_ratio": collapse,
            "terminal_energies": {k: r.terminal_energy for k, r in rates.items()},
        },
    )


# -- discrete observability ------------------------------------------------------------------------------


def measured_wave_rate(h: float, a: float = 0.3, T: float = 10.0, kappa: float = 1.0, dt: float | None = None) -> float:
    """Clock rate of the slowest-mode trajectory of the uniformly damped wave under midpoint stepping."""
    wave = build_gcc_wave(1.0, _n_for(h), a, (0.0, 1.0))
    mode = slowest_mode(wave)
    clock = identity_clock(T)
    sys = LinearSystem(wave.K, wave.G, wave.energy)
    traj = integrate_on_clock(sys, clock, [], mode.state, StepPlan(dt if dt is not None else h))
    return extract_rates(traj, clock, kappa)[1]


def no_super_observability_sweep(h_list: Sequence[float] = DEFAULT_H, a: float = 0.3, c_sigma: float = 0.15, kappa: float = 1.0, T: float = 10.0) -> FailureReport:
    """Measured ``c_sigma_h`` never exceeds the continuum constant."""
    rates = parallel_map(lambda h: measured_wave_rate(h, a, T, kappa), list(h_list))
    bounded = all(r <= c_sigma + 1e-3 for r in rates)
    coarse_below = rates[0] < c_sigma
    return FailureReport(
        "no-super-observability",
        "discrete clock rates stay at or below the continuum constant",
        bounded and coarse_below,
        True,
        {"h": list(h_list), "c_sigma_h": rates, "c_sigma": c_sigma, "max_excess": max(rates) - c_sigma},
    )


SCENARIOS: dict[str, Callable[[], FailureReport]] = {
    "underscaled-sat": underscaled_sat,
    "flipped-sat": flipped_sat,
    "cfl-violation": cfl_violation,
    "explicit-flat": unstable_step_on_flat,
    "nonmonotone-damping": nonmonotone_damping,
    "accumulation": accumulation_failure,
    "schedule-adversary": schedule_adversary,
    "no-super-observability": no_super_observability_sweep,
}


def run_atlas(names: Sequence[str] | None = None) -> list[FailureReport]:
    names = list(SCENARIOS) if names is None else list(names)
    unknown = [n for n in names if n not in SCENARIOS]
    if unknown:
        raise AtlasError(f"unknown scenario(s): {', '.join(unknown)}")
    return parallel_map(lambda n: SCENARIOS[n](), names)
