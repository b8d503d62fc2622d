"""Atomic update maps and their certified energy contraction factors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla


class JumpError(ValueError):
    pass


@dataclass(frozen=True)
class JumpMap:
    """State update ``x+ = J x-`` with ``E(J x) <= rho * E(x)`` certified.

    ``kind`` is ``"cayley"``, ``"scale"`` or ``"ledger"``; ``mass`` records the
    clock atom mass when the map came from the ledger rule.
    """

    J: np.ndarray = field(repr=False)
    rho: float
    kind: str = "matrix"
    theta: float | None = None
    target: tuple[int, ...] = ()
    mass: float | None = None

    @property
    def admissible(self) -> bool:
        return self.rho <= 1.0 + 1e-10


def _check_energy(energy: np.ndarray) -> np.ndarray:
    E = np.asarray(energy, dtype=float)
    if E.ndim != 2 or E.shape[0] != E.shape[1]:
        raise JumpError("energy matrix must be square")
    try:
        np.linalg.cholesky(0.5 * (E + E.T))
    except np.linalg.LinAlgError as exc:
        raise JumpError("energy matrix is not positive definite") from exc
    return E


def contraction_factor(J: np.ndarray, energy: np.ndarray) -> float:
    """Exact ``sup E(Jv)/E(v)``: top generalized eigenvalue of ``(J^T Hx J, Hx)``."""
    E = _check_energy(energy)
    J = np.asarray(J, dtype=float)
    if J.shape != E.shape:
        raise JumpError(f"map shape {J.shape} does not match energy {E.shape}")
    S = J.T @ E @ J
    vals = sla.eigh(0.5 * (S + S.T), 0.5 * (E + E.T), eigvals_only=True)
    return float(max(vals[-1], 0.0))


def extremal_state(J: np.ndarray, energy: np.ndarray) -> np.ndarray:
    """State attaining the contraction factor."""
    E = _check_energy(energy)
    S = J.T @ E @ J
    _, vecs = sla.eigh(0.5 * (S + S.T), 0.5 * (E + E.T))
    return vecs[:, -1]


def energy_projector(energy: np.ndarray, indices: Sequence[int]) -> np.ndarray:
    """Hx-orthogonal projector onto the span of the given coordinate vectors."""
    E = _check_energy(energy)
    idx = np.asarray(sorted(set(int(i) for i in indices)), dtype=int)
    n = E.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise JumpError(f"target indices must lie in [0, {n})")
    S = np.zeros((n, idx.size))
    S[idx, np.arange(idx.size)] = 1.0
    if idx.size == 0:
        return np.zeros((n, n))
    G = S.T @ E @ S
    return S @ np.linalg.solve(G, S.T @ E)


def cayley_tick(energy: np.ndarray, indices: Sequence[int], theta: float) -> JumpMap:
    """``J = (I + theta P)^{-1} (I - theta P)`` for the Hx-orthogonal projector ``P``."""
    if not 0.0 <= theta <= 1.0:
        raise JumpError(f"Cayley parameter must lie in [0, 1], got {theta}")
    P = energy_projector(energy, indices)
    I = np.eye(P.shape[0])
    J = np.linalg.solve(I + theta * P, I - theta * P)
    return JumpMap(
        J=J,
        rho=contraction_factor(J, energy),
        kind="cayley",
        theta=float(theta),
        target=tuple(sorted(set(int(i) for i in indices))),
    )


def scale_map(factor: float, dim: int) -> JumpMap:
    """``J = factor * I``; energy contracts by ``factor**2``."""
    return JumpMap(J=factor * np.eye(dim), rho=float(factor) ** 2, kind="scale", target=tuple(range(dim)))


def ledger_map(mass: float, kappa: float, c_sigma: float, dim: int) -> JumpMap:
    """Ledger rule ``E+ = exp(-2 kappa c_sigma alpha) E-`` as a uniform scaling."""
    rho = math.exp(-2.0 * kappa * c_sigma * mass)
    return JumpMap(J=math.sqrt(rho) * np.eye(dim), rho=rho, kind="ledger", target=tuple(range(dim)), mass=float(mass))


def matrix_map(J: np.ndarray, energy: np.ndarray) -> JumpMap:
    J = np.asarray(J, dtype=float)
    return JumpMap(J=J, rho=contraction_factor(J, energy), kind="matrix", target=tuple(range(J.shape[0])))


def apply_jump(jump: JumpMap, state: np.ndarray) -> np.ndarray:
    x = np.asarray(state, dtype=float)
    if x.shape[0] != jump.J.shape[1]:
        raise JumpError(f"state has dimension {x.shape[0]}, map expects {jump.J.shape[1]}")
    return jump.J @ x


def jump_product(maps: Iterable[JumpMap]) -> float:
    """Product of certified factors; 1 for an empty interval."""
    out = 1.0
    for m in maps:
        out *= m.rho
    return out


def maps_in_interval(schedule: Sequence[tuple[float, JumpMap]], s: float, t: float) -> list[JumpMap]:
    """Maps whose atom time lies in the half-open interval (s, t]."""
    return [m for tk, m in schedule if s < tk <= t]
