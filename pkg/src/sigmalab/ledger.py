"""Energy ledgers: trajectories, envelopes, master-decay verification and rate extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Sequence

import numpy as np

from .clock import SigmaClock, dominates, sigma_of


class LedgerError(ValueError):
    pass


@dataclass
class Trajectory:
    """Samples ``(t, sigma, E, event)`` plus one ``(t_k, E-, E+)`` record per atom.

    ``sigma_ac`` is the absolutely continuous part of the clock at each sample;
    it is what the exponential factor of the master envelope integrates.
    """

    t: np.ndarray
    sigma: np.ndarray
    energy: np.ndarray
    events: list[str]
    sigma_ac: np.ndarray
    atom_events: list[tuple[float, float, float]] = field(default_factory=list)
    final_state: np.ndarray | None = None
    states: np.ndarray | None = None

    @property
    def E0(self) -> float:
        return float(self.energy[0])

    def __len__(self) -> int:
        return len(self.t)

    def scaled(self, factor: float) -> "Trajectory":
        return Trajectory(
            t=self.t, sigma=self.sigma, energy=self.energy * factor, events=list(self.events),
            sigma_ac=self.sigma_ac,
            atom_events=[(t, a * factor, b * factor) for t, a, b in self.atom_events],
        )

    def check_clock(self, clock: SigmaClock, tol: float = 1e-12) -> float:
        """Largest mismatch between recorded sigma and the clock."""
        worst = 0.0
        for t, s, ev in zip(self.t, self.sigma, self.events):
            ref = sigma_of(clock, t, left=(ev == "atom_pre"))
            worst = max(worst, abs(ref - s))
        if worst > tol * max(1.0, clock.total_mass):
            raise LedgerError(f"trajectory sigma deviates from the clock by {worst:.3e}")
        return worst

    def rows(self):
        for t, s, e, ev in zip(self.t, self.sigma, self.energy, self.events):
            yield float(t), float(s), float(e), ev


def trajectory_from_samples(clock: SigmaClock, times: Sequence[float], energies: Sequence[float], events: Sequence[str] | None = None) -> Trajectory:
    """Assemble a trajectory from raw samples, reading sigma off the clock."""
    times = np.asarray(times, dtype=float)
    events = list(events) if events is not None else ["step"] * len(times)
    sig = np.array([sigma_of(clock, t, left=(ev == "atom_pre")) for t, ev in zip(times, events)])
    ac = np.array([clock.ac_part(t) for t in times])
    energies = np.asarray(energies, dtype=float)
    atom_events = []
    for i, ev in enumerate(events):
        if ev == "atom_pre" and i + 1 < len(events) and events[i + 1] == "atom_post":
            atom_events.append((float(times[i]), float(energies[i]), float(energies[i + 1])))
    return Trajectory(times, sig, energies, events, ac, atom_events)


# -- envelopes ------------------------------------------------------------------


def envelope(E0: float, kappa: float, c_sigma: float, clock: SigmaClock, t, left: bool = False):
    """Benchmark ``E0 * exp(-2 kappa c_sigma sigma(t))``; ``t`` may be an array."""
    if kappa < 0 or c_sigma < 0:
        raise LedgerError("kappa and c_sigma must be non-negative")
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    sig = np.array([sigma_of(clock, x, left=left) for x in ts])
    out = E0 * np.exp(-2.0 * kappa * c_sigma * sig)
    return float(out[0]) if np.ndim(t) == 0 else out


@dataclass
class EnvelopeReport:
    kappa: float
    c_sigma: float
    max_violation: float
    wall_rate: float
    sigma_rate: float
    passed: bool
    tol: float

    def as_text(self) -> str:
        return "\n".join(f"{k} = {_fmt(v)}" for k, v in asdict(self).items())

    def csv_header(self) -> list[str]:
        return list(asdict(self).keys())

    def csv_row(self) -> list[str]:
        return [_fmt(v) for v in asdict(self).values()]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v + 0.0:.12g}"
    return str(v)


def envelope_report(traj: Trajectory, clock: SigmaClock, kappa: float, c_sigma: float, tol: float = 1e-8, t_min: float | None = None) -> EnvelopeReport:
    B = traj.E0 * np.exp(-2.0 * kappa * c_sigma * traj.sigma)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(B > 0, traj.energy / B, np.inf)
    viol = float(np.max(ratio) - 1.0) if traj.E0 > 0 else 0.0
    wall, sig = extract_rates(traj, clock, kappa, t_min=t_min)
    return EnvelopeReport(kappa, c_sigma, viol, wall, sig, viol <= tol, tol)


# -- master decay ----------------------------------------------------------------


@dataclass(frozen=True)
class MasterDecayResult:
    passed: bool
    worst_ratio: float
    worst_interval: tuple[float, float]

    def __bool__(self) -> bool:
        return self.passed


def verify_master_decay(traj: Trajectory, clock: SigmaClock, kappa_h: float, rho_list: Sequence[float], tol: float = 1e-8) -> MasterDecayResult:
    """Check ``E(t) <= exp(-2 kappa_h m_ac(s,t]) prod rho_k E(s) (1 + tol)`` for all sample pairs.

    ``m_ac(s, t]`` is the absolutely continuous clock mass; atoms contribute
    only through their factors ``rho_k`` so that ledger-kind atoms are not
    counted twice.  Pairs are taken in sample order, which puts the pre-atom
    sample before the post-atom one at equal times.  The check is linear in
    the number of samples: with ``phi = log E + 2 kappa_h m_ac - log P`` the
    condition reads ``phi(t) - min_{s<t} phi(s) <= log(1 + tol)``.
    """
    if len(rho_list) != len(clock.atoms):
        raise LedgerError(f"need {len(clock.atoms)} atom factors, got {len(rho_list)}")
    rho = np.asarray(rho_list, dtype=float)
    if np.any(rho <= 0):
        # A zero factor forces E = 0 afterwards; handled by the log floor below.
        rho = np.maximum(rho, np.finfo(float).tiny)
    log_rho = np.log(rho)
    n = len(traj)
    log_P = np.zeros(n)
    k = 0
    acc = 0.0
    for i, ev in enumerate(traj.events):
        if ev == "atom_post":
            acc += log_rho[k]
            k += 1
        log_P[i] = acc
    if k != len(rho):
        raise LedgerError(f"trajectory records {k} atoms, clock has {len(rho)}")
    tiny = np.finfo(float).tiny
    if math.isnan(kappa_h):
        raise LedgerError("kappa_h must be a number")
    # An all-flat clock certifies kappa_h = inf; with no a.c. mass the term is 0.
    with np.errstate(invalid="ignore"):
        ac_term = np.where(traj.sigma_ac > 0, 2.0 * kappa_h * traj.sigma_ac, 0.0)
    phi = np.log(np.maximum(traj.energy, tiny)) + ac_term - log_P
    prefix = np.minimum.accumulate(phi)
    excess = np.full(n, -np.inf)
    excess[1:] = phi[1:] - prefix[:-1]
    j = int(np.argmax(excess)) if n > 1 else 0
    worst = float(np.exp(excess[j])) if n > 1 else 0.0
    s_idx = int(np.argmin(phi[:j])) if j > 0 else 0
    ok = worst <= 1.0 + tol
    return MasterDecayResult(ok, worst, (float(traj.t[s_idx]), float(traj.t[j])))


def extract_rates(traj: Trajectory, clock: SigmaClock, kappa: float, t_min: float | None = None) -> tuple[float, float]:
    """Wall rate and sigma rate as infima over samples after the transient window.

    Returns ``nan`` for the sigma rate when no sample carries positive clock mass.
    """
    if traj.E0 <= 0:
        raise LedgerError("initial energy must be positive")
    if kappa <= 0:
        raise LedgerError("kappa must be positive")
    if t_min is None:
        t_min = 0.01 * clock.horizon
    with np.errstate(divide="ignore"):
        logr = -np.log(np.maximum(traj.energy / traj.E0, np.finfo(float).tiny))
    late = traj.t > t_min
    wall = float(np.min(logr[late] / (2 * kappa * traj.t[late]))) if late.any() else math.nan
    massive = (traj.sigma > 0) & late
    sig = float(np.min(logr[massive] / (2 * kappa * traj.sigma[massive]))) if massive.any() else math.nan
    return wall, sig


def average_rate_condition(clock: SigmaClock, rho_list: Sequence[float], kappa: float, eta: float) -> tuple[bool, float]:
    """``(1/T)(2 kappa m_ac + sum log(1/rho_k)) >= eta``; returns the verdict and the average."""
    rho = np.asarray(rho_list, dtype=float)
    if np.any(rho <= 0):
        raise LedgerError("atom factors must be positive")
    ac = clock.ac_part(clock.horizon)
    avg = (2.0 * kappa * ac + float(np.sum(-np.log(rho)))) / clock.horizon
    return avg >= eta - 1e-12 * max(1.0, abs(eta)), avg


def monotonicity_check(c1: SigmaClock, c2: SigmaClock, kappa: float, c_sigma: float) -> bool:
    """Faster clock gives the lower envelope: ``B_2 <= B_1`` on the merged grid."""
    if not dominates(c1, c2):
        raise LedgerError("monotonicity check needs sigma_1 <= sigma_2")
    grid = sorted(set(c1.breakpoints()) | set(c2.breakpoints()))
    for left in (True, False):
        b1 = envelope(1.0, kappa, c_sigma, c1, grid, left=left)
        b2 = envelope(1.0, kappa, c_sigma, c2, grid, left=left)
        if np.any(b2 > b1):
            return False
    return True
