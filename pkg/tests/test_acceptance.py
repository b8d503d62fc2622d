"""Acceptance criteria, one test each, each printing a PASS/FAIL line with its runtime."""

import math
import time

import numpy as np
import pytest

from sigmalab.atlas import cfl_violation, no_super_observability_sweep, run_atlas
from sigmalab.clock import SigmaClock
from sigmalab.config import preset
from sigmalab.gamma import recovery_study, sine_mode
from sigmalab.integrators import LinearSystem, StepPlan, certify_steps, integrate_on_clock
from sigmalab.jumps import ledger_map, matrix_map
from sigmalab.ledger import envelope_report, verify_master_decay
from sigmalab.models import build_gcc_wave, calibrate, scalar_hybrid_clock, scalar_hybrid_exact, scalar_system, slowest_mode
from sigmalab.runner import certify, run
from sigmalab.sbp import boundary_sat_form, build_sbp, max_eig, sat_threshold, split_varcoeff
from sigmalab.stochastic import ledger_model, mc_expectation_envelope, pathwise_check, poisson_law, sample_trajectories


class Criterion:
    def __init__(self, log, number: int, title: str, budget: float | None):
        self.log, self.number, self.title, self.budget = log, number, title, budget
        self.start = time.perf_counter()

    def finish(self, ok: bool, detail: str) -> None:
        elapsed = time.perf_counter() - self.start
        in_time = self.budget is None or elapsed < self.budget
        status = "PASS" if ok and in_time else "FAIL"
        limit = f" < {self.budget:g} s" if self.budget is not None else ""
        line = f"[{self.number:02d}] {status}  {self.title}: {detail} ({elapsed:.2f} s{limit})"
        self.log.append(line)
        print(line)
        assert ok, line
        assert in_time, line


@pytest.fixture
def criterion(acceptance_log):
    return lambda number, title, budget=None: Criterion(acceptance_log, number, title, budget)


def test_01_worked_sigma_benchmark(criterion):
    c = criterion(1, "worked-sigma benchmark", 1.0)
    res = run(preset("worked-sigma"))
    sig = [row[2] for row in res.table]
    bench = {row[0]: row[3] for row in res.table}
    sig_ok = np.allclose(sig, [0, 0, 0.8, 0.8, 1.4, 1.4, 1.4], rtol=0, atol=1e-12)
    b_ok = (
        bench["0"] == 1.0
        and abs(bench["0.30+"] - math.exp(-0.3 * 0.8)) <= 1e-4
        and abs(bench["0.30+"] - 0.7866) <= 1e-4
        and abs(bench["2.00"] - 0.6570) <= 1e-4
        and abs(bench["2.00"] - 0.659) <= 5e-3
    )
    c.finish(sig_ok and b_ok and res.passed, f"sigma={sig}, B(0.30+)={bench['0.30+']:.4f}, B(2.00)={bench['2.00']:.4f}")


def test_02_scalar_hybrid_oracle(criterion):
    c = criterion(2, "scalar hybrid oracle", 10.0)
    rng = np.random.default_rng(20240)
    worst_mixed = worst_atoms = 0.0
    for k in range(50):
        T = 1.0
        pure = k % 5 == 0
        cuts = np.sort(rng.choice(np.arange(1, 10), size=rng.integers(0, 4), replace=False)) / 10
        edges = [0.0, *cuts.tolist(), T]
        damping = [(a, b, 0.0 if pure else float(rng.uniform(0, 1.5))) for a, b in zip(edges[:-1], edges[1:])]
        times = np.sort(rng.choice(np.arange(1, 100), size=rng.integers(1, 4), replace=False)) / 100
        atoms = [(float(t), float(rng.uniform(0.2, 0.99))) for t in times]
        clock, maps = scalar_hybrid_clock(damping, atoms, T)
        dt = 0.5 if pure else 1e-4
        traj = integrate_on_clock(scalar_system(), clock, maps, np.array([1.0]), StepPlan(dt))
        exact = scalar_hybrid_exact(damping, atoms, T)
        err = abs(traj.energy[-1] / traj.energy[0] - exact) / exact
        if pure:
            worst_atoms = max(worst_atoms, err)
        else:
            worst_mixed = max(worst_mixed, err)
    c.finish(worst_mixed <= 1e-6 and worst_atoms <= 1e-10, f"worst rel err {worst_mixed:.2e} (mixed), {worst_atoms:.2e} (atoms only)")


def test_03_sbp_sat_structure(criterion):
    c = criterion(3, "SBP/SAT structure", 5.0)
    rng = np.random.default_rng(3)
    sym = split = 0.0
    bracket = True
    for n, order in [(17, 2), (64, 2), (201, 2), (33, 4), (129, 4)]:
        op = build_sbp(n, 1.0, order)
        sym = max(sym, float(np.max(np.abs(op.Q + op.Q.T - op.B))))
        a = 1 + op.x**2
        for _ in range(5):
            u, v = rng.standard_normal((2, op.n))
            s = split_varcoeff(op, a, u, v)
            split = max(split, abs(s.first_order_residual) / max(1.0, abs(s.form)))
        tau = sat_threshold(op, a)
        ends = np.ix_([0, op.n - 1], [0, op.n - 1])
        for scale in (1.0, 2.0, 10.0):
            bracket &= max(max_eig(boundary_sat_form(op, a, scale * tau, scale * tau, s)) for s in (1, -1)) <= 1e-10
        bracket &= all(max_eig(boundary_sat_form(op, a, 2 * tau, 2 * tau, s)[ends]) < 0 for s in (1, -1))
        bracket &= max(max_eig(boundary_sat_form(op, a, tau / 2, tau / 2, s)) for s in (1, -1)) > 0
    c.finish(sym <= 1e-14 and split <= 1e-12 and bracket, f"max|Q+Q^T-B|={sym:.1e}, split residual {split:.1e}, bracket {'ok' if bracket else 'broken'}")


def test_04_cfl_law(criterion):
    c = criterion(4, "CFL law", None)
    rep = cfl_violation(lambda_max=1.8, factor=1.5)
    w = rep.witness
    ok = abs(w["limit"] - 1.1111) <= 1e-4 and w["control_monotone"] and w["amplification"] > 1
    c.finish(ok, f"limit={w['limit']:.4f}, monotone at limit={w['control_monotone']}, amplification at 1.5x={w['amplification']:.4g}")


def _random_clock(rng: np.random.Generator) -> SigmaClock:
    n_seg = int(rng.integers(1, 5))
    edges = np.concatenate([[0.0], np.cumsum(rng.integers(10, 80, n_seg)) / 100])
    T = float(edges[-1])
    dens = [0.0 if rng.random() < 0.3 else float(rng.uniform(0.05, 2.0)) for _ in range(n_seg)]
    ticks = np.sort(rng.choice(np.arange(1, int(round(T * 100)) + 1), size=int(rng.integers(0, 4)), replace=False))
    atoms = tuple((float(t) / 100, float(rng.uniform(0.01, 1.0))) for t in ticks)
    return SigmaClock(T, tuple(zip(edges[:-1].tolist(), edges[1:].tolist(), dens)), atoms)


def test_05_discrete_master_envelope(criterion):
    c = criterion(5, "discrete master envelope", 120.0)
    rng = np.random.default_rng(5)
    violations = 0
    worst_synth = 0.0
    for _ in range(200):
        clock = _random_clock(rng)
        # Scalar model: oracle-exact ledger with kappa_h = 1.
        damping = list(clock.segments)
        factors = [(t, math.exp(-m)) for t, m in clock.atoms]
        sc, maps = scalar_hybrid_clock(damping, factors, clock.horizon)
        traj = integrate_on_clock(scalar_system(), sc, maps, np.array([1.0]), StepPlan(1e-2))
        md = verify_master_decay(traj, sc, 1.0, [m.rho for m in maps], tol=1e-8)
        violations += not md.passed
        worst_synth = max(worst_synth, md.worst_ratio)
        # Random dissipative 3x3 system with contractive matrix atoms.
        A, B = rng.standard_normal((2, 3, 3))
        sys = LinearSystem(A - A.T, -(B @ B.T) / 3, np.eye(3))
        jm = []
        for _ in clock.atoms:
            J = rng.standard_normal((3, 3))
            jm.append(matrix_map(J / (1.1 * np.linalg.norm(J, 2)), sys.energy))
        plan = StepPlan(1e-2)
        kh = certify_steps(sys, clock, plan).kappa_h
        traj = integrate_on_clock(sys, clock, jm, rng.standard_normal(3), plan)
        md = verify_master_decay(traj, clock, kh, [m.rho for m in jm], tol=1e-8)
        violations += not md.passed
        worst_synth = max(worst_synth, md.worst_ratio)
    # Uniform-damping wave: envelope from the calibrated constant and the
    # pairwise ledger with the certified step rate, ledger atoms included.
    wave = build_gcc_wave(1.0, 51, 0.3, (0.0, 1.0))
    sys = LinearSystem(wave.K, wave.G, wave.energy)
    mode = slowest_mode(sys)
    kappa = 1.0
    c_sigma = calibrate(1.0, 0.3, mode.rate / 0.3, kappa, 1.0).c_sigma_lb
    clock = SigmaClock(8.0, ((0.0, 8.0, 1.0),), ((2.0, 0.3), (5.0, 0.5)))
    maps = [ledger_map(m, kappa, c_sigma, sys.dim) for _, m in clock.atoms]
    plan = StepPlan(0.01)
    traj = integrate_on_clock(sys, clock, maps, mode.state, plan)
    rep = envelope_report(traj, clock, kappa, c_sigma, tol=1e-3)
    md = verify_master_decay(traj, clock, max(certify_steps(sys, clock, plan).kappa_h, 0.0), [m.rho for m in maps], tol=1e-3)
    wave_viol = (not rep.passed) + (not md.passed)
    c.finish(
        violations == 0 and wave_viol == 0,
        f"synthetic violations {violations}/400 (worst ratio {worst_synth:.12f}), wave violations {wave_viol} (envelope excess {rep.max_violation:.1e})",
    )


def test_06_gamma_recovery(criterion):
    c = criterion(6, "Gamma recovery", 30.0)
    u, du = sine_mode()
    study = recovery_study(u, du, [1 / 32, 1 / 64, 1 / 128, 1 / 256])
    ok = study.energy_slope >= 0.9 and study.residue_slope >= 0.9 and abs(study.reference - 2.4674) <= 1e-4
    c.finish(ok, f"reference {study.reference:.4f}, energy slope {study.energy_slope:.3f}, SAT residue slope {study.residue_slope:.3f}")


def test_07_stochastic_expectation_envelope(criterion):
    c = criterion(7, "stochastic expectation envelope", 60.0)
    kappa, c_sigma, T = 1.0, 0.15, 4.0
    law = poisson_law(2.0, 0.1, 0.5)
    model = ledger_model(kappa, c_sigma, ac_rate=0.6)
    rep = mc_expectation_envelope(model, law, kappa, c_sigma, T, n_paths=10_000, seed=0, delta=0.0, eta=0.0)
    below = bool(np.all(rep.ci_hi <= rep.envelope))
    paths = pathwise_check(sample_trajectories(model, law, T, 10_000, seed=0), kappa, c_sigma)
    ok = rep.outcome == "pass" and below and paths.violations == 0
    c.finish(ok, f"outcome {rep.outcome}, CI below envelope at all {len(rep.t)} checkpoints: {below}, pathwise violations {paths.violations}")


def test_08_failure_atlas(criterion):
    c = criterion(8, "failure atlas", 60.0)
    reports = {r.scenario: r for r in run_atlas()}
    six = ["underscaled-sat", "flipped-sat", "cfl-violation", "explicit-flat", "nonmonotone-damping", "accumulation"]
    healthy = {n: bool(reports[n].observed and reports[n].control_passed) for n in six}
    adv = reports["schedule-adversary"].witness
    adv_ok = reports["schedule-adversary"].healthy and adv["sigma_rate_spread"] <= 1e-6 and adv["wall_rate_ratio"] <= 0.1 * (1 + 1e-9)
    bad = [n for n, ok in healthy.items() if not ok]
    c.finish(
        not bad and adv_ok,
        f"scenarios healthy {6 - len(bad)}/6{' (broken: ' + ', '.join(bad) + ')' if bad else ''}, "
        f"sigma-rate spread {adv['sigma_rate_spread']:.1e}, wall-rate ratio {adv['wall_rate_ratio']:.4f}",
    )


def test_09_no_super_observability(criterion):
    c = criterion(9, "no numerical super-observability", None)
    rep = no_super_observability_sweep()
    rates = rep.witness["c_sigma_h"]
    cs = rep.witness["c_sigma"]
    ok = all(r <= cs + 1e-3 for r in rates)
    c.finish(ok, f"c_sigma={cs:g}, measured " + ", ".join(f"{r:.6f}" for r in rates))


def test_10_certification(criterion):
    c = criterion(10, "baseline certification", None)
    cfg = preset("baseline")
    cert = certify(cfg)
    status = {chk.name: chk.status for chk in cert.checks}
    params_ok = cfg["integrator"]["dt"] == 0.02 and cfg["calibration"]["kappa"] == 0.6 and cfg["window"]["var_sigma"] == 0.22
    all_pass = all(s == "pass" for s in status.values())
    failing = [n for n, s in status.items() if s != "pass"]
    c.finish(cert.passed and all_pass and params_ok, f"{len(status)} checks, not passing: {failing or 'none'}")
