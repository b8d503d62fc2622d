"""Assemble validated configurations into runs and certificates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .clock import ClockError, SigmaClock, clock_from_config, decompose
from .config import ConfigError
from .gamma import recovery_study, sine_mode
from .integrators import LinearSystem, StepPlan, certify_steps, integrate_on_clock
from .jumps import JumpMap, cayley_tick, ledger_map
from .ledger import EnvelopeReport, MasterDecayResult, Trajectory, envelope_report, verify_master_decay
from .models import (
    build_gcc_wave,
    scalar_hybrid_clock,
    scalar_hybrid_exact,
    scalar_system,
    slowest_mode,
    worked_exemplar,
)
from .sbp import SatConfig, SbpError, energy_symmetric_part, generalized_max, sat_threshold


@dataclass
class WaveSetup:
    clock: SigmaClock
    system: LinearSystem
    wave: object
    sat: SatConfig
    plan: StepPlan
    kappa: float
    c_sigma: float
    jumps: list[JumpMap]
    u0: np.ndarray
    h: float


def _sat(cfg: dict) -> SatConfig:
    s = cfg.get("sat", {})
    return SatConfig(tau_scale=s.get("tau_scale", 1.0), exponent=s.get("exponent", 1.0), sign=s.get("sign", 1))


def _c_sigma(cal: dict) -> float:
    if "c_sigma" in cal:
        return cal["c_sigma"]
    try:
        return cal["c0"] * cal["a_omega"] * cal["lambda_omega"]
    except KeyError as exc:
        raise ConfigError(f"missing required field 'calibration.{exc.args[0]}' (or give calibration.c_sigma)") from None


def _plan(cfg: dict) -> StepPlan:
    i = cfg["integrator"]
    return StepPlan(i["dt"], i.get("method", "midpoint"), i.get("cfl_override", False), i.get("lambda_max"))


def _clock(cfg: dict) -> SigmaClock:
    try:
        return clock_from_config(cfg["clock"])
    except ClockError as exc:
        raise ConfigError(f"invalid clock: {exc}") from None


def wave_setup(cfg: dict, allow_flipped: bool = False) -> WaveSetup:
    clock = _clock(cfg)
    sp = cfg["space"]
    L = sp.get("L", 1.0)
    d = cfg["damping"]
    region = tuple(d.get("region", (0.0, L)))
    sat = _sat(cfg)
    if sat.sign < 0 and not allow_flipped:
        raise ConfigError("sat.sign = -1 gives an energy-injecting boundary; only 'certify' accepts it")
    try:
        wave = build_gcc_wave(L, sp["n"], d["level"], region, d.get("background", 0.0), sat, sp.get("order", 2), allow_flipped)
    except (SbpError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    system = LinearSystem(wave.K, wave.G, wave.energy, "wave")
    cal = cfg["calibration"]
    kappa = cal["kappa"]
    c_sigma = _c_sigma(cal)
    n2 = system.dim
    jk = cfg.get("jumps", {})
    if jk.get("kind", "ledger") == "ledger":
        jumps = [ledger_map(a, kappa, c_sigma, n2) for _, a in clock.atoms]
    else:
        # Dissipative tick on the velocity block.
        jumps = [cayley_tick(system.energy, range(sp["n"]), jk.get("theta", 0.5)) for _ in clock.atoms]
    mode = cfg.get("initial", {}).get("mode", "slowest")
    if mode == "slowest":
        u0 = slowest_mode(system).state
    else:
        u0 = np.random.default_rng(cfg.get("seed", 0)).standard_normal(n2)
    return WaveSetup(clock, system, wave, sat, _plan(cfg), kappa, c_sigma, jumps, u0, wave.op.h)


@dataclass
class RunResult:
    scenario: str
    trajectory: Trajectory | None
    report: EnvelopeReport | None
    master: MasterDecayResult | None = None
    table: list[tuple] = field(default_factory=list)
    table_header: tuple[str, ...] = ()
    oracle_error: float | None = None

    @property
    def passed(self) -> bool:
        ok = self.report is None or self.report.passed
        if self.master is not None:
            ok = ok and self.master.passed
        return ok


def run(cfg: dict) -> RunResult:
    scen = cfg["scenario"]
    tol = cfg.get("tolerance", 1e-8)
    if scen == "worked-sigma":
        ex = worked_exemplar()
        maps = ex.ledger_maps(1)
        traj = integrate_on_clock(scalar_system(), ex.clock, maps, np.array([1.0]), StepPlan(0.1))
        rows = []
        for r in ex.rows:
            rows.append((r.label, r.t, r.sigma, r.benchmark, _energy_at(traj, r.t, r.left) / traj.E0))
        cal = ex.calibration
        rep = envelope_report(traj, ex.clock, cal.kappa, cal.c_sigma_lb, tol=tol)
        return RunResult(scen, traj, rep, table=rows, table_header=("label", "t", "sigma", "benchmark", "energy_ratio"))
    if scen == "scalar":
        s = cfg["scalar"]
        try:
            clock, maps = scalar_hybrid_clock([tuple(x) for x in s["damping"]], [tuple(x) for x in s.get("atoms", [])], s["horizon"])
        except ClockError as exc:
            raise ConfigError(f"invalid scalar clock: {exc}") from None
        if any(m.rho > 1 for m in maps):
            raise ConfigError("scalar atoms must have factors rho <= 1")
        dt = cfg.get("integrator", {}).get("dt", 1e-3)
        traj = integrate_on_clock(scalar_system(), clock, maps, np.array([1.0]), StepPlan(dt))
        exact = scalar_hybrid_exact([tuple(x) for x in s["damping"]], [tuple(x) for x in s.get("atoms", [])], s["horizon"])
        rep = envelope_report(traj, clock, 1.0, 1.0, tol=tol)
        err = abs(traj.energy[-1] / traj.energy[0] - exact) / exact
        return RunResult(scen, traj, rep, oracle_error=err)
    ws = wave_setup(cfg)
    traj = integrate_on_clock(ws.system, ws.clock, ws.jumps, ws.u0, ws.plan)
    rep = envelope_report(traj, ws.clock, ws.kappa, ws.c_sigma, tol=tol)
    master = verify_master_decay(traj, ws.clock, _certified_rate(ws), [j.rho for j in ws.jumps], tol=max(tol, 1e-10))
    return RunResult(scen, traj, rep, master)


def _certified_rate(ws: WaveSetup) -> float:
    """Per-step dissipation rate the stepper guarantees on every interval.

    The canonical rate kappa * c_sigma holds from t = 0 only: wave energy
    plateaus whenever the velocity passes through zero, so it cannot serve
    as a rate between arbitrary sample pairs.
    """
    return max(certify_steps(ws.system, ws.clock, ws.plan).kappa_h, 0.0)


def _energy_at(traj: Trajectory, t: float, left: bool) -> float:
    idx = np.flatnonzero(np.isclose(traj.t, t, rtol=0, atol=1e-12))
    if idx.size == 0:
        return float(np.interp(t, traj.t, traj.energy))
    if left:
        pre = [i for i in idx if traj.events[i] == "atom_pre"]
        return float(traj.energy[pre[0] if pre else idx[0]])
    return float(traj.energy[idx[-1]])


# -- certificate ---------------------------------------------------------------------------------


@dataclass(frozen=True)
class Check:
    name: str
    status: str
    witness: str

    def __post_init__(self) -> None:
        if self.status not in ("pass", "fail", "skipped"):
            raise ValueError(f"bad check status {self.status!r}")


@dataclass
class Certificate:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def by_name(self) -> dict[str, Check]:
        return {c.name: c for c in self.checks}

    def as_text(self) -> str:
        width = max(len(c.name) for c in self.checks)
        lines = [f"{c.name:<{width}}  {c.status:<7}  {c.witness}" for c in self.checks]
        lines.append(f"overall: {'pass' if self.passed else 'fail'}")
        return "\n".join(lines)


def _g(x: float) -> str:
    return f"{x:.6g}"


def certify(cfg: dict) -> Certificate:
    """Run every checklist item; failures are recorded, never raised."""
    if cfg["scenario"] != "wave":
        raise ConfigError("certify needs a 'wave' scenario")
    tol = cfg.get("tolerance", 1e-8)
    checks: list[Check] = []
    add = lambda name, ok, witness: checks.append(Check(name, "pass" if ok else "fail", witness))
    skip = lambda name, why: checks.append(Check(name, "skipped", why))

    clock = _clock(cfg)
    dec = decompose(clock)
    add("clock", True, f"ac={_g(dec.ac_mass)} atoms={len(clock.atoms)} atomic={_g(dec.atomic_mass)} flats={len(dec.flat_set)}")

    ws = wave_setup(cfg, allow_flipped=True)
    # Observability belongs to the damping geometry, so it is measured with a
    # dissipative boundary even when the configured SAT sign is wrong.
    ref = ws if ws.sat.sign > 0 else wave_setup({**cfg, "sat": {**cfg.get("sat", {}), "sign": 1}})
    slow = slowest_mode(ref.system)
    need = ws.kappa * ws.c_sigma
    add("H1 observability", slow.rate >= need * (1 - 1e-9), f"slowest amplitude rate {_g(slow.rate)} >= kappa*c_sigma {_g(need)}")
    g_max = generalized_max(energy_symmetric_part(ws.system.G, ws.system.energy), ws.system.energy)
    add("H2 dissipation", g_max <= 1e-12 and np.all(ws.wave.damping >= 0), f"max energy growth of damping part {_g(g_max)}")
    wmax = max(w for _, _, w in clock.segments)
    add("H3 regularity", math.isfinite(wmax) and math.isfinite(clock.total_mass), f"max density {_g(wmax)} total mass {_g(clock.total_mass)}")
    rho = [j.rho for j in ws.jumps]
    add("H4 jumps", all(r <= 1 + 1e-12 for r in rho), f"max rho {_g(max(rho)) if rho else 'none'}")

    op = ws.wave.op
    tau_h = ws.sat.tau(op.h)[0]
    tau_eff = min(ws.sat.effective(op))
    tau_star = sat_threshold(op, 1.0)
    sat_ok = ws.sat.sign == 1 and ws.sat.exponent == 1 and tau_eff >= tau_star - 1e-9
    add("SAT sign/scale", sat_ok, f"sign {ws.sat.sign} tau_h {_g(tau_h)} effective {_g(tau_eff)} threshold {_g(tau_star)} exponent {_g(ws.sat.exponent)}")

    lam = cfg["integrator"].get("lambda_max")
    dsig = ws.plan.dt * wmax
    if lam is None:
        if ws.plan.method == "midpoint":
            skip("CFL window", "implicit step, no spectral bound configured")
        else:
            add("CFL window", False, "explicit step without lambda_max")
    else:
        limit = 2.0 / lam
        ok = dsig <= limit or ws.plan.method == "midpoint"
        add("CFL window", ok, f"dsigma {_g(dsig)} limit {_g(limit)} method {ws.plan.method}")

    win = cfg.get("window")
    if win and "var_sigma" in win:
        h_ok = win.get("h_min", 0) <= ws.h <= win.get("h_max", math.inf)
        v_ok = win.get("var_min", 0) <= win["var_sigma"] <= win.get("var_max", math.inf)
        add("admissible window", h_ok and v_ok, f"h {_g(ws.h)} Var_sigma {_g(win['var_sigma'])}")
    else:
        skip("admissible window", "no window configured")

    if not sat_ok:
        for name in ("discrete premise", "Gamma bridge", "canonical decay"):
            skip(name, "SAT check failed")
        return Certificate(checks)

    cert = certify_steps(ws.system, clock, ws.plan)
    add("discrete premise", cert.kappa_h >= -1e-10 and cert.flat_factor <= 1 + 1e-12, f"kappa_h {_g(cert.kappa_h)} flat factor {_g(cert.flat_factor)}")

    u, du = sine_mode()
    h_list = [ws.h / 2**k for k in range(4)]
    study = recovery_study(u, du, h_list, sat=ws.sat, order=op.order)
    add("Gamma bridge", study.passed, f"energy slope {_g(study.energy_slope)} residue slope {_g(study.residue_slope)}")

    traj = integrate_on_clock(ws.system, clock, ws.jumps, ws.u0, ws.plan)
    rep = envelope_report(traj, clock, ws.kappa, ws.c_sigma, tol=tol)
    md = verify_master_decay(traj, clock, max(cert.kappa_h, 0.0), rho, tol=max(tol, 1e-10))
    add("canonical decay", rep.passed and md.passed, f"max violation {_g(rep.max_violation)} sigma rate {_g(rep.sigma_rate)} master ratio {_g(md.worst_ratio)}")
    return Certificate(checks)
