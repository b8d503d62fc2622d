"""Discrete quadratic energies and their empirical convergence to the continuum energy.

The SAT contribution to a static energy uses the same weighting as the
hyperbolic penalty, ``SAT_h(u) = 1/2 * sum_b tau_b * H_bb * u_b**2``.
Grid functions are obtained from continuum functions by averaging over the
dual cells whose widths are the norm weights ``H_ii``; nodal sampling would
hide the boundary defect completely for functions vanishing at the ends.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.integrate as si
import scipy.linalg as sla

from .sbp import SatConfig, SbpDiscretization, build_sbp


class GammaError(ValueError):
    pass


def _diag(op: SbpDiscretization, coef) -> np.ndarray:
    if coef is None:
        return np.zeros(op.n)
    if callable(coef):
        return np.asarray(coef(op.x), dtype=float)
    return np.broadcast_to(np.asarray(coef, dtype=float), (op.n,)).astype(float)


def sat_energy(op: SbpDiscretization, sat: SatConfig | None, u) -> float:
    if sat is None:
        return 0.0
    if sat.sign < 0:
        raise GammaError("SAT energy must be non-negative; a flipped sign is not a valid energy")
    tl, tr = sat.tau(op.h)
    u = np.asarray(u, dtype=float)
    return 0.5 * (tl * op.H[0, 0] * u[0] ** 2 + tr * op.H[-1, -1] * u[-1] ** 2)


def discrete_energy(op: SbpDiscretization, A, C, sat: SatConfig | None, u) -> float:
    """``1/2 <Du, A Du>_H + 1/2 <C u, u>_H + SAT_h(u)``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (op.n,):
        raise GammaError(f"grid function must have {op.n} entries")
    a = _diag(op, 1.0 if A is None else A)
    c = _diag(op, C)
    w = op.weights
    Du = op.D @ u
    return 0.5 * float(np.sum(w * a * Du * Du)) + 0.5 * float(np.sum(w * c * u * u)) + sat_energy(op, sat, u)


def dual_cell_edges(op: SbpDiscretization) -> np.ndarray:
    edges = op.x[0] + np.concatenate([[0.0], np.cumsum(op.weights)])
    edges[-1] = op.x[-1]
    return edges


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def project(op: SbpDiscretization, u: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Dual-cell averages of ``u`` (8-point Gauss rule per cell)."""
    e = dual_cell_edges(op)
    lo, hi = e[:-1], e[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return (u(pts) * _GL_WEIGHTS[None, :]).sum(axis=1) / 2.0


def continuum_energy(du: Callable, L: float = 1.0, A: Callable | float = 1.0, C: Callable | float = 0.0, u: Callable | None = None) -> float:
    """``1/2 int A u'^2 + 1/2 int C u^2`` by adaptive quadrature."""
    a = A if callable(A) else (lambda x, _a=float(A): _a)
    c = C if callable(C) else (lambda x, _c=float(C): _c)
    grad = si.quad(lambda x: a(x) * du(x) ** 2, 0.0, L, limit=200, epsabs=1e-13, epsrel=1e-13)[0]
    mass = 0.0
    if u is not None:
        mass = si.quad(lambda x: c(x) * u(x) ** 2, 0.0, L, limit=200, epsabs=1e-13, epsrel=1e-13)[0]
    return 0.5 * grad + 0.5 * mass


def fit_slope(h: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log h`` (nan if any ``y`` vanishes)."""
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        return math.nan
    return float(np.polyfit(np.log(h), np.log(y), 1)[0])


@dataclass(frozen=True)
class GammaStudy:
    h_list: tuple[float, ...]
    energies: tuple[float, ...]
    errors: tuple[float, ...]
    sat_residues: tuple[float, ...]
    reference: float
    energy_slope: float
    residue_slope: float

    @property
    def errors_decreasing(self) -> bool:
        e = np.asarray(self.errors)
        return bool(np.all(np.diff(e) <= 0))

    @property
    def passed(self) -> bool:
        if all(e == 0 for e in self.errors):
            return True
        return self.errors_decreasing and self.energy_slope >= 0.9 and (
            all(r == 0 for r in self.sat_residues) or self.residue_slope >= 0.9
        )

    @property
    def fitted_slopes(self) -> dict[str, float]:
        return {"energy": self.energy_slope, "sat_residue": self.residue_slope}

    @property
    def liminf_constant(self) -> float:
        """Smallest ``C`` with ``E(u) <= E_h(u_h) + C h`` on the studied meshes (0 if never needed)."""
        return max(0.0, max((self.reference - e) / h for h, e in zip(self.h_list, self.energies)))

    def rows(self):
        for h, e, err, r in zip(self.h_list, self.energies, self.errors, self.sat_residues):
            yield h, e, err, r


def recovery_study(
    u: Callable,
    du: Callable,
    h_list: Sequence[float],
    A=1.0,
    C=0.0,
    sat: SatConfig | None = None,
    L: float = 1.0,
    order: int = 2,
    reference: float | None = None,
) -> GammaStudy:
    """Energies of projected ``u`` on successively finer grids against the continuum value."""
    h_list = [float(h) for h in h_list]
    if len(h_list) < 3:
        raise GammaError("recovery study needs at least three mesh sizes")
    if any(b >= a for a, b in zip(h_list, h_list[1:])):
        raise GammaError("mesh sizes must be strictly decreasing")
    sat = sat if sat is not None else SatConfig()
    ref = continuum_energy(du, L, A, C, u) if reference is None else reference
    energies, errors, residues = [], [], []
    for h in h_list:
        n = int(round(L / h)) + 1
        op = build_sbp(n, L, order)
        uh = project(op, u)
        a = A(op.x) if callable(A) else A
        c = C(op.x) if callable(C) else C
        e = discrete_energy(op, a, c, sat, uh)
        energies.append(e)
        errors.append(abs(e - ref))
        residues.append(sat_energy(op, sat, uh))
    return GammaStudy(
        h_list=tuple(h_list),
        energies=tuple(energies),
        errors=tuple(errors),
        sat_residues=tuple(residues),
        reference=ref,
        energy_slope=fit_slope(h_list, errors),
        residue_slope=fit_slope(h_list, residues),
    )


def coercivity_constant(op: SbpDiscretization, sat: SatConfig | None) -> float:
    """Smallest ``lambda`` with ``||Du||_H^2 + 2 SAT_h(u) >= lambda ||u||_H^2``.

    This is the decay rate of the discrete heat flow the energy generates, so
    it is the admissible constant for the gradient-flow ledger (kappa = 1).
    """
    K = op.D.T @ op.H @ op.D
    if sat is not None:
        if sat.sign < 0:
            raise GammaError("coercivity is undefined for a flipped SAT sign")
        tl, tr = sat.effective(op)
        K = K.copy()
        K[0, 0] += tl
        K[-1, -1] += tr
    return float(sla.eigh(0.5 * (K + K.T), op.H, eigvals_only=True)[0])


@dataclass(frozen=True)
class EquicoercivityResult:
    ratios: tuple[float, ...]
    energies: tuple[float, ...]
    traces: tuple[float, ...]
    passed: bool
    reason: str


def equicoercivity_check(
    ops: Sequence[SbpDiscretization],
    states: Sequence[np.ndarray],
    sat: SatConfig | None = None,
    energy_bound: float | None = None,
    spread: float = 0.05,
) -> EquicoercivityResult:
    """Check ``||u_h||_H <= c_P * sqrt(||D u_h||_H^2 + 2 SAT_h(u_h))`` with ``c_P`` independent of h.

    ``ratios`` are the left side over the square root; the check passes when
    their maximum is within ``spread`` of their minimum and the energies stay
    below ``energy_bound``.  ``traces`` report ``u_b^2 / E_h`` for diagnosis.
    """
    ratios, energies, traces = [], [], []
    for op, u in zip(ops, states):
        u = np.asarray(u, dtype=float)
        w = op.weights
        norm2 = float(np.sum(w * u * u))
        Du = op.D @ u
        energy = 0.5 * float(np.sum(w * Du * Du)) + sat_energy(op, sat, u)
        energies.append(energy)
        trace = max(u[0] ** 2, u[-1] ** 2)
        traces.append(trace / energy if energy > 0 else (math.inf if trace > 0 else 0.0))
        if norm2 == 0:
            ratios.append(0.0)
        elif energy == 0:
            ratios.append(math.inf)
        else:
            ratios.append(math.sqrt(norm2 / (2 * energy)))
    r = np.asarray(ratios)
    if np.all(r == 0):
        return EquicoercivityResult(tuple(ratios), tuple(energies), tuple(traces), True, "all states vanish")
    if energy_bound is not None and max(energies) > energy_bound:
        return EquicoercivityResult(tuple(ratios), tuple(energies), tuple(traces), False, "energy bound exceeded")
    if not np.all(np.isfinite(r)):
        return EquicoercivityResult(tuple(ratios), tuple(energies), tuple(traces), False, "zero energy with nonzero state")
    nz = r[r > 0]
    ok = nz.max() <= (1 + spread) * nz.min()
    reason = "uniform Poincare constant" if ok else f"Poincare ratio drifts from {nz.min():.4g} to {nz.max():.4g}"
    return EquicoercivityResult(tuple(ratios), tuple(energies), tuple(traces), bool(ok), reason)


def sine_mode(k: int = 1, L: float = 1.0):
    """``sin(k pi x / L)`` and its derivative, vectorised."""
    w = k * math.pi / L
    return (lambda x: np.sin(w * np.asarray(x))), (lambda x: w * np.cos(w * np.asarray(x)))
