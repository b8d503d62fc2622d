"""Time stepping on a clock: implicit midpoint, guarded explicit steps, atoms as impulses.

Systems are linear, ``x' = (K + w(t) G) x``: ``K`` carries everything that
acts regardless of the clock (transport, boundary penalties) and ``G`` the
interior damping, gated by the clock density.  Flats therefore evolve under
``K`` alone and atoms are applied as single jump maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np
import scipy.linalg as sla

from .clock import SigmaClock
from .jumps import JumpMap
from .ledger import Trajectory


class IntegrationError(RuntimeError):
    pass


class CflViolation(ValueError):
    def __init__(self, dt: float, limit: float):
        super().__init__(f"step {dt:.6g} exceeds the explicit stability limit {limit:.6g}")
        self.dt = dt
        self.limit = limit


class LinearDynamics(Protocol):
    K: np.ndarray
    G: np.ndarray
    energy: np.ndarray


@dataclass(frozen=True)
class LinearSystem:
    K: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    name: str = "linear"

    @property
    def dim(self) -> int:
        return self.K.shape[0]


def generator(system: LinearDynamics, w: float = 1.0) -> np.ndarray:
    return system.K + w * system.G


def energy_of(system: LinearDynamics, x: np.ndarray) -> float:
    return 0.5 * float(x @ system.energy @ x)


METHODS = ("midpoint", "euler", "heun")


@dataclass(frozen=True)
class StepPlan:
    dt: float
    method: str = "midpoint"
    cfl_override: bool = False
    lambda_max: float | None = None
    keep_states: bool = False

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown integrator {self.method!r}; choose from {METHODS}")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")


# -- single steps ---------------------------------------------------------------


def midpoint_matrix(M: np.ndarray, dt: float) -> np.ndarray:
    """One-step map ``(I - dt/2 M)^{-1} (I + dt/2 M)``."""
    I = np.eye(M.shape[0])
    try:
        lu = sla.lu_factor(I - 0.5 * dt * M, check_finite=True)
    except (sla.LinAlgError, ValueError) as exc:
        raise IntegrationError(f"midpoint resolvent is singular at dt={dt}") from exc
    if np.any(np.diag(lu[0]) == 0):
        raise IntegrationError(f"midpoint resolvent is singular at dt={dt}")
    return sla.lu_solve(lu, I + 0.5 * dt * M)


def euler_matrix(M: np.ndarray, dt: float) -> np.ndarray:
    return np.eye(M.shape[0]) + dt * M


def heun_matrix(M: np.ndarray, dt: float) -> np.ndarray:
    A = dt * M
    return np.eye(M.shape[0]) + A + 0.5 * A @ A


def midpoint_step(system: LinearDynamics, state, dt: float, w: float = 1.0) -> np.ndarray:
    return midpoint_matrix(generator(system, w), dt) @ np.asarray(state, dtype=float)


def spectral_radius(M: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def cfl_limit_from(lambda_max: float) -> float:
    """Explicit Euler bound ``2 / Lambda_max`` on the clock step."""
    if not lambda_max > 0:
        raise ValueError("Lambda_max must be positive")
    return 2.0 / lambda_max


def cfl_limit(system: LinearDynamics, w: float = 1.0, lambda_max: float | None = None) -> float:
    lam = lambda_max if lambda_max is not None else spectral_radius(generator(system, w))
    return cfl_limit_from(lam)


def euler_step(system: LinearDynamics, state, dt: float, w: float = 1.0, override: bool = False, lambda_max: float | None = None) -> np.ndarray:
    if not override:
        limit = cfl_limit(system, w, lambda_max)
        if dt > limit:
            raise CflViolation(dt, limit)
    return euler_matrix(generator(system, w), dt) @ np.asarray(state, dtype=float)


def heun_step(system: LinearDynamics, state, dt: float, w: float = 1.0) -> np.ndarray:
    return heun_matrix(generator(system, w), dt) @ np.asarray(state, dtype=float)


# -- clock-driven integration ---------------------------------------------------------


class _StepCache:
    def __init__(self, system: LinearDynamics, plan: StepPlan):
        self.system = system
        self.plan = plan
        self._maps: dict[tuple[float, float], np.ndarray] = {}

    def get(self, w: float, dt: float) -> np.ndarray:
        key = (w, dt)
        if key not in self._maps:
            M = generator(self.system, w)
            if self.plan.method == "midpoint":
                Phi = midpoint_matrix(M, dt)
            elif self.plan.method == "euler":
                if not self.plan.cfl_override:
                    limit = cfl_limit(self.system, w, self.plan.lambda_max)
                    if dt > limit:
                        raise CflViolation(dt, limit)
                Phi = euler_matrix(M, dt)
            else:
                Phi = heun_matrix(M, dt)
            self._maps[key] = Phi
        return self._maps[key]

    def items(self):
        return self._maps.items()


def step_schedule(clock: SigmaClock, dt: float):
    """Yield ``(t0, t1, w, n_steps, atom_at_t1)`` intervals between consecutive breakpoints."""
    pts = clock.breakpoints()
    for a, b in zip(pts[:-1], pts[1:]):
        w = clock.density_at(a)
        n = max(1, math.ceil((b - a) / dt - 1e-12))
        yield a, b, w, n, clock.atom_at(b)


def integrate_on_clock(
    system: LinearDynamics,
    clock: SigmaClock,
    jumps: Sequence[JumpMap] | Mapping[float, JumpMap],
    u0,
    plan: StepPlan,
) -> Trajectory:
    """Advance ``u0`` over the clock horizon, one jump per atom."""
    if isinstance(jumps, Mapping):
        try:
            jump_list = [jumps[t] for t, _ in clock.atoms]
        except KeyError as exc:
            raise ValueError(f"no jump map supplied for the atom at t={exc.args[0]}") from None
    else:
        jump_list = list(jumps)
        if len(jump_list) != len(clock.atoms):
            raise ValueError(f"clock has {len(clock.atoms)} atoms but {len(jump_list)} jump maps were supplied")

    x = np.asarray(u0, dtype=float).copy()
    if not np.all(np.isfinite(x)):
        raise ValueError("initial state must be finite")
    cache = _StepCache(system, plan)
    E = system.energy
    ts, sig, ac, en, ev = [0.0], [0.0], [0.0], [0.5 * float(x @ E @ x)], ["step"]
    states = [x.copy()] if plan.keep_states else None
    atom_events = []
    sigma_atoms = 0.0
    k = 0
    for a, b, w, n, alpha in step_schedule(clock, plan.dt):
        h = (b - a) / n
        Phi = cache.get(w, h)
        ac0 = clock.ac_part(a)
        for i in range(1, n + 1):
            x = Phi @ x
            t = b if i == n else a + i * h
            e = 0.5 * float(x @ E @ x)
            if not math.isfinite(e):
                raise IntegrationError(f"energy became non-finite at t={t:.6g}")
            m_ac = ac0 + w * (t - a) if i < n else clock.ac_part(b)
            ts.append(t)
            ac.append(m_ac)
            sig.append(m_ac + sigma_atoms)
            en.append(e)
            ev.append("atom_pre" if (i == n and alpha > 0) else "step")
            if states is not None:
                states.append(x.copy())
        if alpha > 0:
            jm = jump_list[k]
            if jm.J.shape[1] != x.shape[0]:
                raise ValueError(f"jump map {k} has the wrong dimension")
            e_pre = en[-1]
            x = jm.J @ x
            e_post = 0.5 * float(x @ E @ x)
            sigma_atoms += alpha
            ts.append(b)
            ac.append(ac[-1])
            sig.append(ac[-1] + sigma_atoms)
            en.append(e_post)
            ev.append("atom_post")
            atom_events.append((b, e_pre, e_post))
            if states is not None:
                states.append(x.copy())
            k += 1
    return Trajectory(
        t=np.array(ts),
        sigma=np.array(sig),
        energy=np.array(en),
        events=ev,
        sigma_ac=np.array(ac),
        atom_events=atom_events,
        final_state=x,
        states=np.array(states) if states is not None else None,
    )


def step_energy_factor(Phi: np.ndarray, energy: np.ndarray) -> float:
    """Largest per-step energy amplification ``sup E(Phi x)/E(x)``."""
    S = Phi.T @ energy @ Phi
    return float(sla.eigh(0.5 * (S + S.T), energy, eigvals_only=True)[-1])


@dataclass(frozen=True)
class StepCertificate:
    kappa_h: float
    flat_factor: float
    per_density: dict[float, float]


def certify_steps(system: LinearDynamics, clock: SigmaClock, plan: StepPlan) -> StepCertificate:
    """Per-step dissipation rate the integrator actually delivers on this clock.

    For every step map ``Phi`` used with density ``w > 0`` the rate is
    ``-log q / (2 w dt)`` where ``q`` is the worst energy amplification;
    ``kappa_h`` is the minimum.  Flat steps only need ``q <= 1``.
    """
    cache = _StepCache(system, plan)
    rates: dict[float, float] = {}
    flat = 0.0
    for a, b, w, n, _ in step_schedule(clock, plan.dt):
        h = (b - a) / n
        q = step_energy_factor(cache.get(w, h), system.energy)
        if w > 0:
            r = -math.log(max(q, np.finfo(float).tiny)) / (2 * w * h)
            rates[w] = min(rates.get(w, math.inf), r)
        else:
            flat = max(flat, q)
    kappa = min(rates.values()) if rates else math.inf
    return StepCertificate(kappa_h=kappa, flat_factor=flat, per_density=rates)
