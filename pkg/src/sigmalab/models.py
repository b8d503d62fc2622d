"""Model builders and closed-form oracles: scalar hybrid decay, damped wave, calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .clock import SigmaClock, sigma_of
from .integrators import LinearSystem
from .jumps import JumpMap, ledger_map, scale_map
from .sbp import SatConfig, WaveSystem, assemble_damped_wave, build_sbp


class ModelError(ValueError):
    pass


# -- scalar hybrid ----------------------------------------------------------------


def scalar_hybrid_exact(damping: Sequence[tuple[float, float, float]], atoms: Sequence[tuple[float, float]], T: float) -> float:
    """``E(T+)/E(0+) = exp(-2 int_0^T a) * prod rho_k^2`` for ``u' = -a(t) u`` with kicks ``u -> rho_k u``."""
    integral = 0.0
    for t0, t1, a in damping:
        if a < 0:
            raise ModelError("damping must be non-negative")
        lo, hi = max(t0, 0.0), min(t1, T)
        if hi > lo:
            integral += a * (hi - lo)
    prod = 1.0
    for t, rho in atoms:
        if 0 < t <= T:
            prod *= rho * rho
    return math.exp(-2.0 * integral) * prod


def scalar_system() -> LinearSystem:
    """``u' = -w(t) u`` with energy ``u^2 / 2``: the clock density is the damping."""
    return LinearSystem(K=np.zeros((1, 1)), G=-np.ones((1, 1)), energy=np.ones((1, 1)), name="scalar")


def scalar_hybrid_clock(damping: Sequence[tuple[float, float, float]], atoms: Sequence[tuple[float, float]], T: float) -> tuple[SigmaClock, list[JumpMap]]:
    """Clock and jump maps realising the scalar hybrid model on :func:`integrate_on_clock`.

    An atom with amplitude factor ``rho < 1`` gets clock mass ``-log rho``, so
    it also obeys the ledger rule with ``kappa * c_sigma = 1``.  Non-contracting
    atoms (atlas use only) get unit mass.
    """
    clock = SigmaClock(T, tuple(damping), tuple((t, -math.log(r) if r < 1 else 1.0) for t, r in atoms))
    return clock, [scale_map(r, 1) for _, r in atoms]


# -- damped wave --------------------------------------------------------------------


def build_gcc_wave(
    L: float,
    n: int,
    a_omega: float,
    omega: tuple[float, float],
    a_bg: float = 0.0,
    sat: SatConfig | None = None,
    order: int = 2,
    allow_flipped: bool = False,
) -> WaveSystem:
    """Damped wave with ``a = a_bg + a_omega`` on the open interval ``omega``."""
    lo, hi = omega
    if not (0.0 <= lo < hi <= L):
        raise ModelError(f"damping region ({lo}, {hi}) must be a nonempty subinterval of (0, {L})")
    if a_omega < 0 or a_bg < 0:
        raise ModelError("damping levels must be non-negative")
    op = build_sbp(n, L, order)
    a = a_bg + np.where((op.x > lo) & (op.x < hi), a_omega, 0.0)
    return assemble_damped_wave(op, a, sat or SatConfig(), allow_flipped)


@dataclass(frozen=True)
class SlowMode:
    """Slowest decaying eigen-pair of a damped system (the conserved kernel excluded).

    ``rate`` is the amplitude decay ``-Re(lambda)``; energy decays at twice it.
    ``state`` is a real initial datum whose energy follows ``exp(-2 rate t)``
    as an upper envelope with equality once per half period.
    """

    rate: float
    frequency: float
    state: np.ndarray = field(repr=False)


def slowest_mode(system, w: float = 1.0, kernel_tol: float = 1e-8) -> SlowMode:
    M = system.K + w * system.G
    vals, vecs = np.linalg.eig(M)
    scale = max(1.0, float(np.max(np.abs(vals))))
    keep = np.abs(vals) > kernel_tol * scale
    if not keep.any():
        raise ModelError("system has no decaying modes")
    vals, vecs = vals[keep], vecs[:, keep]
    # Uniform damping makes many modes tie up to rounding; among those take
    # the lowest frequency.
    slowest = float(np.max(vals.real))
    tied = np.flatnonzero(vals.real >= slowest - 1e-8 * max(1.0, abs(slowest)))
    pick = tied[np.argmin(np.abs(vals[tied].imag))]
    lam = vals[pick]
    phi = vecs[:, pick]
    return SlowMode(rate=float(-lam.real), frequency=float(abs(lam.imag)), state=_max_energy_phase(phi, system.energy))


def _max_energy_phase(phi: np.ndarray, energy: np.ndarray) -> np.ndarray:
    R, I = phi.real, phi.imag
    if np.linalg.norm(I) <= 1e-14 * np.linalg.norm(R):
        x = R
    else:
        # Energy of Re(e^{i th} phi) is a quadratic form on (cos th, -sin th).
        basis = np.column_stack([R, -I])
        G = basis.T @ energy @ basis
        _, vec = np.linalg.eigh(0.5 * (G + G.T))
        x = basis @ vec[:, -1]
    return x / math.sqrt(0.5 * float(x @ energy @ x))


def wave_energy(system, x: np.ndarray) -> float:
    return 0.5 * float(x @ system.energy @ x)


def continuum_uniform_rate(a: float, L: float) -> float:
    """Amplitude decay rate of the slowest Dirichlet mode for ``u_tt + a u_t = u_xx``."""
    w1 = math.pi / L
    if a <= 2 * w1:
        return a / 2
    return a / 2 - math.sqrt(a * a / 4 - w1 * w1)


def dissipative_benchmark(n: int = 33, lambda_max: float = 1.8, L: float = 1.0) -> LinearSystem:
    """Discrete heat operator with Dirichlet SATs, rescaled to spectral radius ``lambda_max``.

    The generator is ``H``-self-adjoint and negative definite, so explicit
    Euler is energy-monotone exactly when ``dt <= 2 / lambda_max``.
    """
    op = build_sbp(n, L, 2)
    S = op.D.T @ op.H @ op.D
    S[0, 0] += 1.0
    S[-1, -1] += 1.0
    vals = sla.eigh(S, op.H, eigvals_only=True)
    M = -np.linalg.solve(op.H, S) * (lambda_max / vals[-1])
    return LinearSystem(K=np.zeros_like(M), G=M, energy=op.H.copy(), name="dissipative-benchmark")


# -- calibration --------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationSet:
    c0: float
    a_omega: float
    lambda_omega: float
    kappa: float
    C_P: float
    c_sigma_lb: float

    @property
    def rate(self) -> float:
        """Energy decay exponent ``2 kappa c_sigma`` per unit clock mass."""
        return 2.0 * self.kappa * self.c_sigma_lb


def calibrate(c0: float, a_omega: float, lambda_omega: float, kappa: float, L: float) -> CalibrationSet:
    for name, v in (("c0", c0), ("a_omega", a_omega), ("lambda_omega", lambda_omega), ("kappa", kappa), ("L", L)):
        if not v > 0:
            raise ModelError(f"{name} must be positive, got {v}")
    return CalibrationSet(c0, a_omega, lambda_omega, kappa, L / math.pi, c0 * a_omega * lambda_omega)


def window_upgrade(C0: float, sigma0: float, m: float, T0: float) -> float:
    """Lower bound ``sigma0 m / (C0 T0)`` from a uniform window density."""
    if m > T0:
        raise ModelError(f"window mass length m={m} exceeds window T0={T0}")
    if C0 <= 0 or T0 <= 0 or m < 0 or sigma0 < 0:
        raise ModelError("window parameters must be positive")
    return sigma0 * m / (C0 * T0)


# -- worked exemplar ------------------------------------------------------------------


@dataclass(frozen=True)
class BenchmarkRow:
    label: str
    t: float
    left: bool
    sigma: float
    benchmark: float


@dataclass(frozen=True)
class WorkedExemplar:
    clock: SigmaClock
    calibration: CalibrationSet
    rows: tuple[BenchmarkRow, ...]

    def ledger_maps(self, dim: int) -> list[JumpMap]:
        cal = self.calibration
        return [ledger_map(a, cal.kappa, cal.c_sigma_lb, dim) for _, a in self.clock.atoms]


def worked_exemplar() -> WorkedExemplar:
    """Purely atomic clock: atoms 0.8 at t=0.3 and 0.6 at t=0.9, flat elsewhere, horizon 2."""
    clock = SigmaClock(2.0, ((0.0, 2.0, 0.0),), ((0.30, 0.80), (0.90, 0.60)))
    cal = calibrate(1.0, 0.30, 0.50, 1.0, 1.0)
    rows = []
    for label, t, left in (
        ("0", 0.0, False),
        ("0.30-", 0.30, True),
        ("0.30+", 0.30, False),
        ("0.90-", 0.90, True),
        ("0.90+", 0.90, False),
        ("1.80", 1.80, False),
        ("2.00", 2.00, False),
    ):
        s = sigma_of(clock, t, left=left)
        rows.append(BenchmarkRow(label, t, left, s, math.exp(-cal.rate * s)))
    return WorkedExemplar(clock, cal, tuple(rows))
