"""Random clocks, their compensators and Monte-Carlo checks of the decay envelopes.

Randomness enters only through the clock: Poisson atoms on top of a base
density, or a damping level switched by a finite-state Markov chain.  Every
path draws from its own Philox stream keyed by ``(seed, path)``, so any path
can be regenerated in isolation with ``numpy.random.Philox(key=[seed, path])``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla
from scipy.stats import norm

from .clock import SigmaClock
from .ledger import Trajectory
from .parallel import parallel_map


class LawError(ValueError):
    pass


@dataclass(frozen=True)
class ClockLaw:
    """Law of a random clock.

    ``kind="poisson"``: density ``base_density`` plus atoms of mass ``alpha``
    at the jump times of a Poisson process with intensity ``rate``.
    ``kind="markov"``: density ``base_density + levels[xi_t]`` where ``xi`` is a
    chain with generator ``generator`` started from ``initial`` (stationary
    law when omitted).
    """

    kind: str
    base_density: float = 0.0
    rate: float = 0.0
    alpha: float = 1.0
    generator: tuple[tuple[float, ...], ...] = ()
    levels: tuple[float, ...] = ()
    initial: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.base_density < 0:
            raise LawError("base density must be non-negative")
        if self.kind == "poisson":
            if self.rate < 0:
                raise LawError("Poisson intensity must be non-negative")
            if not self.alpha > 0:
                raise LawError("atom mass must be positive")
        elif self.kind == "markov":
            Q = np.asarray(self.generator, dtype=float)
            m = len(self.levels)
            if Q.shape != (m, m) or m == 0:
                raise LawError("generator must be square and match the number of levels")
            off = Q - np.diag(np.diag(Q))
            if np.any(off < 0):
                raise LawError("generator off-diagonal entries must be non-negative")
            if np.any(np.abs(Q.sum(axis=1)) > 1e-12 * max(1.0, np.abs(Q).max())):
                raise LawError("generator rows must sum to zero")
            if any(a < 0 for a in self.levels):
                raise LawError("damping levels must be non-negative")
            if self.initial is not None:
                p = np.asarray(self.initial, dtype=float)
                if p.shape != (m,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
                    raise LawError("initial law must be a probability vector over the states")
        else:
            raise LawError(f"unknown clock law {self.kind!r}")

    @property
    def Q(self) -> np.ndarray:
        return np.asarray(self.generator, dtype=float)

    def initial_law(self) -> np.ndarray:
        if self.initial is not None:
            return np.asarray(self.initial, dtype=float)
        return stationary_law(self.Q)


def poisson_law(rate: float, alpha: float, base_density: float = 0.0) -> ClockLaw:
    return ClockLaw("poisson", base_density=base_density, rate=rate, alpha=alpha)


def two_state_law(switch_rate: float, levels: tuple[float, float], base_density: float = 0.0, initial=None) -> ClockLaw:
    """Symmetric two-state chain switching at ``switch_rate`` each way."""
    q = float(switch_rate)
    return ClockLaw("markov", base_density=base_density, generator=((-q, q), (q, -q)), levels=tuple(levels), initial=initial)


def stationary_law(Q: np.ndarray) -> np.ndarray:
    m = Q.shape[0]
    A = np.vstack([Q.T, np.ones(m)])
    b = np.zeros(m + 1)
    b[-1] = 1.0
    p, *_ = np.linalg.lstsq(A, b, rcond=None)
    p = np.clip(p, 0.0, None)
    return p / p.sum()


def path_rng(seed: int, path: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[int(seed), int(path)]))


def sample_clock(law: ClockLaw, T: float, seed: int, path: int = 0) -> SigmaClock:
    """One realisation on ``[0, T]``; bit-for-bit reproducible from ``(seed, path)``."""
    if not T > 0:
        raise LawError("horizon must be positive")
    rng = path_rng(seed, path)
    if law.kind == "poisson":
        atoms = []
        if law.rate > 0:
            t = rng.exponential(1.0 / law.rate)
            while t <= T:
                atoms.append((float(t), law.alpha))
                t += rng.exponential(1.0 / law.rate)
        return SigmaClock(T, ((0.0, T, law.base_density),), tuple(atoms))
    Q = law.Q
    exit_rate = -np.diag(Q)
    # Inverse-CDF tables for the embedded jump chain.
    jumps = np.clip(Q, 0.0, None)
    np.fill_diagonal(jumps, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        cdf = np.cumsum(jumps, axis=1) / jumps.sum(axis=1, keepdims=True)
    p0 = np.cumsum(law.initial_law())
    state = min(int(np.searchsorted(p0, rng.random() * p0[-1], side="right")), len(p0) - 1)
    levels = [law.base_density + a for a in law.levels]
    segments = []
    t = 0.0
    while t < T:
        out = exit_rate[state]
        hold = rng.exponential(1.0 / out) if out > 0 else math.inf
        end = min(T, t + hold)
        segments.append((t, end, levels[state]))
        t = end
        if t < T:
            state = min(int(np.searchsorted(cdf[state], rng.random(), side="right")), len(levels) - 1)
    return SigmaClock(T, tuple(segments), ())


def compensator(law: ClockLaw, t: float) -> float:
    """Expected clock mass ``Lambda(t)``; exact for both laws."""
    if t < 0:
        raise LawError("time must be non-negative")
    if law.kind == "poisson":
        return law.base_density * t + law.rate * law.alpha * t
    Q = law.Q
    m = Q.shape[0]
    # Top-right block of expm([[Q, I], [0, 0]] t) is int_0^t expm(Q s) ds.
    aug = np.zeros((2 * m, 2 * m))
    aug[:m, :m] = Q * t
    aug[:m, m:] = np.eye(m) * t
    occupation = law.initial_law() @ sla.expm(aug)[:m, m:]
    return law.base_density * t + float(occupation @ np.asarray(law.levels, dtype=float))


# -- scalar model on random clocks ------------------------------------------------------------


@dataclass(frozen=True)
class ScalarClockModel:
    """``E(t) = E0 exp(-ac_rate m_ac(t)) prod_k rho(alpha_k)``.

    ``ac_rate`` is the energy decay per unit of absolutely continuous clock
    mass.  Atoms follow the ledger rule ``rho = exp(-atom_rate alpha)``; an
    ``atom_rate`` below zero models an inadmissible, energy-raising kick.
    """

    ac_rate: float
    atom_rate: float
    E0: float = 1.0

    def energy_on(self, clock: SigmaClock, times: np.ndarray) -> np.ndarray:
        ac = clock.ac_parts(times)
        at = clock.atomic_parts(times)
        return self.E0 * np.exp(-self.ac_rate * ac - self.atom_rate * at)

    def trajectory(self, clock: SigmaClock, times: np.ndarray) -> Trajectory:
        times = np.asarray(times, dtype=float)
        E = self.energy_on(clock, times)
        ac = clock.ac_parts(times)
        sig = ac + clock.atomic_parts(times)
        return Trajectory(times, sig, E, ["step"] * len(times), ac)


def ledger_model(kappa: float, c_sigma: float, ac_rate: float | None = None, E0: float = 1.0) -> ScalarClockModel:
    """Atoms exactly on the ledger; a.c. decay defaults to the ledger rate too."""
    r = 2.0 * kappa * c_sigma
    return ScalarClockModel(ac_rate=r if ac_rate is None else ac_rate, atom_rate=r, E0=E0)


def poisson_mean_energy(model: ScalarClockModel, law: ClockLaw, t) -> np.ndarray:
    """Exact ``E[E(t)]`` for the scalar model on a Poisson clock."""
    if law.kind != "poisson":
        raise LawError("closed form is available for Poisson clocks only")
    t = np.asarray(t, dtype=float)
    kick = 1.0 - math.exp(-model.atom_rate * law.alpha)
    return model.E0 * np.exp(-(model.ac_rate * law.base_density + law.rate * kick) * t)


def critical_eta(beta: float, law: ClockLaw) -> float:
    """Smallest ``eta`` with ``E[E(t)] <= E0 exp(-(beta - eta) Lambda(t))`` for a tight ledger model.

    ``beta = 2 kappa c_sigma``.  It is positive whenever atoms are present:
    by Jensen the mean of ``exp(-beta sigma)`` exceeds ``exp(-beta Lambda)``.
    """
    if law.kind != "poisson":
        raise LawError("closed form is available for Poisson clocks only")
    drift = law.base_density + law.rate * law.alpha
    if drift == 0:
        return 0.0
    realised = beta * law.base_density + law.rate * (1.0 - math.exp(-beta * law.alpha))
    return beta - realised / drift


@dataclass
class ExpectationReport:
    t: np.ndarray
    mean: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    envelope: np.ndarray
    outcomes: list[str]
    n_paths: int
    confidence: float = 0.99
    per_path: np.ndarray | None = field(default=None, repr=False)

    @property
    def outcome(self) -> str:
        if "fail" in self.outcomes:
            return "fail"
        if "inconclusive" in self.outcomes:
            return "inconclusive"
        return "pass"

    def rows(self):
        for row in zip(self.t, self.mean, self.ci_lo, self.ci_hi, self.envelope):
            yield tuple(float(v) for v in row)


def _sample_energies(model: ScalarClockModel, law: ClockLaw, T: float, times: np.ndarray, seed: int, paths: Sequence[int]) -> np.ndarray:
    return np.array([model.energy_on(sample_clock(law, T, seed, p), times) for p in paths])


def mc_expectation_envelope(
    model: ScalarClockModel,
    law: ClockLaw,
    kappa: float,
    c_sigma: float,
    T: float,
    n_paths: int = 10_000,
    seed: int = 0,
    delta: float = 0.0,
    eta: float = 0.0,
    checkpoints: int = 41,
    confidence: float = 0.99,
    keep_paths: bool = False,
) -> ExpectationReport:
    """Compare the sample mean energy with ``E0 exp(-(2 kappa (1-delta) c_sigma - eta) Lambda(t))``.

    Each checkpoint is ``pass`` when the upper confidence bound is below the
    envelope, ``fail`` when the lower bound is above it and ``inconclusive``
    otherwise.
    """
    if n_paths < 100:
        raise LawError("need at least 100 paths")
    if not 0.0 <= delta < 1.0:
        raise LawError("delta must lie in [0, 1)")
    if eta < 0:
        raise LawError("eta must be non-negative")
    times = np.linspace(0.0, T, checkpoints)
    chunks = [range(i, min(i + 500, n_paths)) for i in range(0, n_paths, 500)]
    blocks = parallel_map(lambda c: _sample_energies(model, law, T, times, seed, c), chunks)
    E = np.vstack(blocks)
    mean = E.mean(axis=0)
    se = E.std(axis=0, ddof=1) / math.sqrt(n_paths)
    z = float(norm.ppf(0.5 + confidence / 2))
    lo, hi = mean - z * se, mean + z * se
    Lam = np.array([compensator(law, t) for t in times])
    env = model.E0 * np.exp(-(2.0 * kappa * (1.0 - delta) * c_sigma - eta) * Lam)
    slack = 1e-12 * model.E0
    outcomes = []
    for l, h, b in zip(lo, hi, env):
        if h <= b + slack:
            outcomes.append("pass")
        elif l > b + slack:
            outcomes.append("fail")
        else:
            outcomes.append("inconclusive")
    return ExpectationReport(times, mean, lo, hi, env, outcomes, n_paths, confidence, E if keep_paths else None)


def fit_decay_rate(t, mean) -> float:
    """Least-squares slope of ``-log mean`` against ``t``."""
    t = np.asarray(t, dtype=float)
    y = -np.log(np.asarray(mean, dtype=float))
    return float(np.polyfit(t, y, 1)[0])


@dataclass(frozen=True)
class PathwiseResult:
    n_paths: int
    violations: int
    flagged: tuple[int, ...]
    worst_ratio: float


def pathwise_check(trajectories: Sequence[Trajectory], kappa: float, c_sigma: float, tol: float = 1e-9) -> PathwiseResult:
    """Count paths with ``E(t) > (1 + tol) E(0) exp(-2 kappa c_sigma sigma(t))`` somewhere."""
    flagged = []
    worst = 0.0
    for i, tr in enumerate(trajectories):
        B = tr.E0 * np.exp(-2.0 * kappa * c_sigma * tr.sigma)
        r = float(np.max(tr.energy / B)) if tr.E0 > 0 else 0.0
        worst = max(worst, r)
        if r > 1.0 + tol:
            flagged.append(i)
    return PathwiseResult(len(trajectories), len(flagged), tuple(flagged), worst)


def sample_trajectories(model: ScalarClockModel, law: ClockLaw, T: float, n_paths: int, seed: int, checkpoints: int = 41) -> list[Trajectory]:
    """Per-path trajectories sampled at the checkpoints and just before and after every atom."""
    grid = np.linspace(0.0, T, checkpoints)

    def one(p: int) -> Trajectory:
        clock = sample_clock(law, T, seed, p)
        times = np.unique(np.concatenate([grid, [t for t, _ in clock.atoms]]))
        return model.trajectory(clock, times)

    return parallel_map(one, range(n_paths))
