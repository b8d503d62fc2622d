"""Diagonal-norm summation-by-parts operators, SAT penalties and block couplings.

Conventions used throughout the package
---------------------------------------
* ``D = H^{-1} Q`` approximates d/dx and ``Q + Q^T = B = diag(-1, 0, ..., 0, 1)``.
* A SAT penalty of strength ``tau_h = c * h**(-s)`` acts *nodally* on the
  boundary value of a hyperbolic variable, ``-tau_h * e_b * u_b``.  In the
  ``H``-energy this contributes ``-tau_h * H_bb * u_b**2``; the product
  ``tau_h * H_bb`` is the *effective* penalty compared with the threshold
  returned by :func:`sat_threshold`.  With ``s = 1`` the effective penalty is
  mesh independent; with ``s < 1`` it vanishes as ``h -> 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class SbpError(ValueError):
    pass


@dataclass(frozen=True)
class SbpDiscretization:
    n: int
    h: float
    H: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    order: int
    x: np.ndarray = field(repr=False)

    @property
    def D(self) -> np.ndarray:
        return self.Q / np.diag(self.H)[:, None]

    @property
    def weights(self) -> np.ndarray:
        return np.diag(self.H).copy()

    @property
    def left(self) -> float:
        return float(self.x[0])

    @property
    def right(self) -> float:
        return float(self.x[-1])


_O4_NORM = np.array([17 / 48, 59 / 48, 43 / 48, 49 / 48])
_O4_BLOCK = np.array(
    [
        [-1 / 2, 59 / 96, -1 / 12, -1 / 32],
        [-59 / 96, 0.0, 59 / 96, 0.0],
        [1 / 12, -59 / 96, 0.0, 59 / 96],
        [1 / 32, 0.0, -59 / 96, 0.0],
    ]
)


def build_sbp(n: int, L: float, order: int = 2, x0: float = 0.0) -> SbpDiscretization:
    """Build the diagonal-norm SBP first-derivative pair on ``[x0, x0 + L]``."""
    if order not in (2, 4):
        raise SbpError(f"order must be 2 or 4, got {order}")
    min_n = 4 if order == 2 else 8
    if n < min_n:
        raise SbpError(f"order {order} needs at least {min_n} nodes, got {n}")
    if not L > 0:
        raise SbpError(f"domain length must be positive, got {L}")
    h = L / (n - 1)
    Q = np.zeros((n, n))
    if order == 2:
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        idx = np.arange(n - 1)
        Q[idx, idx + 1] = 0.5
        Q[idx + 1, idx] = -0.5
        Q[0, 0] = -0.5
        Q[-1, -1] = 0.5
    else:
        w = np.ones(n)
        w[:4] = _O4_NORM
        w[-4:] = _O4_NORM[::-1]
        stencil = {-2: 1 / 12, -1: -2 / 3, 1: 2 / 3, 2: -1 / 12}
        for i in range(n):
            for off, c in stencil.items():
                j = i + off
                if 0 <= j < n and not (i < 4 and j < 4) and not (i >= n - 4 and j >= n - 4):
                    Q[i, j] = c
        Q[:4, :4] = _O4_BLOCK
        Q[-4:, -4:] = -_O4_BLOCK[::-1, ::-1]
    B = np.zeros((n, n))
    B[0, 0] = -1.0
    B[-1, -1] = 1.0
    x = x0 + h * np.arange(n)
    x[-1] = x0 + L
    return SbpDiscretization(n=n, h=h, H=np.diag(h * w), Q=Q, B=B, order=order, x=x)


# -- variable coefficients -----------------------------------------------------


@dataclass(frozen=True)
class SplitIdentity:
    """Both sides of the variable-coefficient summation-by-parts identities.

    First order: ``u^T Qt(A) v`` with ``Qt(A) = (QA + AQ)/2`` equals
    ``boundary + skew`` where ``boundary = u^T B A v / 2``.  For ``u = v`` the
    skew part vanishes and only the boundary term survives.

    Second order: ``u^T Q A D v`` equals ``-a_h(u, v) + u^T B A D v`` with the
    symmetric coercive form ``a_h(u, v) = (Du)^T H A (Dv)``.
    """

    form: float
    boundary: float
    skew: float
    second_order_lhs: float
    coercive: float
    second_order_boundary: float

    @property
    def first_order_residual(self) -> float:
        return self.form - (self.boundary + self.skew)

    @property
    def second_order_residual(self) -> float:
        return self.second_order_lhs - (-self.coercive + self.second_order_boundary)


def split_varcoeff(op: SbpDiscretization, A, u, v) -> SplitIdentity:
    a = np.asarray(A, dtype=float)
    if a.ndim == 2:
        a = np.diag(a)
    if a.shape != (op.n,):
        raise SbpError(f"coefficient must have {op.n} entries")
    if np.any(a <= 0):
        raise SbpError(f"coefficient must be positive, min entry {a.min()}")
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    D, Hw, Q, b = op.D, op.weights, op.Q, np.diag(op.B)
    Du, Dv = D @ u, D @ v
    form = 0.5 * (u @ (Q @ (a * v)) + (a * u) @ (Q @ v))
    boundary = 0.5 * np.sum(u * b * a * v)
    skew = 0.5 * ((a * u) @ (Hw * Dv) - Du @ (Hw * a * v))
    coercive = Du @ (Hw * a * Dv)
    return SplitIdentity(
        form=float(form),
        boundary=float(boundary),
        skew=float(skew),
        second_order_lhs=float(u @ (Q @ (a * Dv))),
        coercive=float(coercive),
        second_order_boundary=float(np.sum(u * b * a * Dv)),
    )


def varcoeff_operator(op: SbpDiscretization, A) -> np.ndarray:
    """Symmetrised nodal surrogate ``H^{-1} (QA + AQ)/2`` for ``d/dx (a .)``-type fluxes."""
    a = np.asarray(A, dtype=float)
    Qt = 0.5 * (op.Q * a[None, :] + a[:, None] * op.Q)
    return Qt / op.weights[:, None]


# -- SAT ----------------------------------------------------------------------


@dataclass(frozen=True)
class SatConfig:
    tau_scale: float = 1.0
    exponent: float = 1.0
    sign: int = 1
    tau_left: float | None = None
    tau_right: float | None = None

    def __post_init__(self) -> None:
        if self.sign not in (1, -1):
            raise SbpError(f"SAT sign must be +1 or -1, got {self.sign}")
        if self.tau_scale < 0:
            raise SbpError("tau_scale must be non-negative")

    @property
    def dissipative(self) -> bool:
        return self.sign == 1 and self.exponent == 1.0

    def tau(self, h: float) -> tuple[float, float]:
        """Nodal penalties ``(tau_L, tau_R)``; explicit per-side values override the scaling law."""
        base = self.tau_scale * h ** (-self.exponent)
        left = base if self.tau_left is None else self.tau_left
        right = base if self.tau_right is None else self.tau_right
        return left, right

    def effective(self, op: SbpDiscretization) -> tuple[float, float]:
        """Penalties as they enter the H-energy: ``tau * H_bb``."""
        tl, tr = self.tau(op.h)
        return tl * op.H[0, 0], tr * op.H[-1, -1]


def boundary_sat_form(op: SbpDiscretization, A, tau_left: float, tau_right: float, flux_sign: int = 1):
    """Quadratic form ``flux_sign * u^T B A u / 2 - tau_L u_0^2 - tau_R u_N^2``."""
    a = np.broadcast_to(np.asarray(A, dtype=float), (op.n,))
    F = 0.5 * flux_sign * op.B * a[None, :]
    F[0, 0] -= tau_left
    F[-1, -1] -= tau_right
    return F


def max_eig(sym: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(0.5 * (sym + sym.T))[-1])


def sat_threshold(op: SbpDiscretization, A, tol: float = 1e-10) -> float:
    """Smallest scalar penalty making the boundary+SAT form NSD for both flux orientations."""

    def worst(tau: float) -> float:
        return max(max_eig(boundary_sat_form(op, A, tau, tau, s)) for s in (1, -1))

    if worst(0.0) <= 0.0:
        return 0.0
    lo, hi = 0.0, 1.0
    while worst(hi) > 0.0:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if worst(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return hi


def trace_constant(op: SbpDiscretization) -> float:
    """Best constant in ``|v_b|^2 <= C ||v||_H^2``; attained by the boundary delta."""
    C = 1.0 / min(op.H[0, 0], op.H[-1, -1])
    if not 0.0 < C * op.h <= 4.0:
        raise SbpError(f"trace constant scaling C*h = {C * op.h} outside (0, 4]")
    return C


# -- damped wave -----------------------------------------------------------------


@dataclass(frozen=True)
class WaveSystem:
    """Linear system ``x' = (K + w(t) G) x`` with energy ``E = x^T Hx x / 2``.

    ``K`` holds the conservative transport and the SAT boundary terms, ``G``
    the clock-gated interior damping.  State ordering is ``(v, w) = (u_t, u_x)``.
    """

    op: SbpDiscretization
    K: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    damping: np.ndarray = field(repr=False)
    sat: SatConfig

    @property
    def generator(self) -> np.ndarray:
        return self.K + self.G

    @property
    def dim(self) -> int:
        return self.K.shape[0]


def damping_profile(op: SbpDiscretization, profile) -> np.ndarray:
    """Nodal damping from ``float`` (constant), ``("indicator", a, lo, hi)`` or a table."""
    if np.isscalar(profile):
        a = np.full(op.n, float(profile))
    elif isinstance(profile, (tuple, list)) and profile and profile[0] == "indicator":
        _, level, lo, hi = profile
        a = np.where((op.x > lo) & (op.x < hi), float(level), 0.0)
    else:
        a = np.asarray(profile, dtype=float)
        if a.shape != (op.n,):
            raise SbpError(f"damping table must have {op.n} entries")
    if np.any(a < 0):
        raise SbpError("damping must be non-negative")
    return a


def assemble_damped_wave(op: SbpDiscretization, damping, sat: SatConfig, allow_flipped: bool = False) -> WaveSystem:
    """First-order damped wave ``v' = Dw - a v``, ``w' = Dv`` with Dirichlet SATs.

    The velocity receives a nodal penalty ``-tau e_b v_b`` and the strain a
    flux-cancelling term ``H^{-1}(e_0 v_0 - e_N v_N)``, which removes the
    boundary flux ``v_N w_N - v_0 w_0``.  Flipping the sign doubles the flux
    instead and turns the penalty into a source.
    """
    if sat.sign != 1 and not allow_flipped:
        raise SbpError(
            "refusing flipped SAT sign: the boundary terms would inject energy; "
            "pass allow_flipped=True only for stress tests"
        )
    a = damping_profile(op, damping)
    n = op.n
    D = op.D
    Hw = op.weights
    tl, tr = sat.tau(op.h)
    s = sat.sign
    K = np.zeros((2 * n, 2 * n))
    K[:n, n:] = D
    K[n:, :n] = D
    K[0, 0] -= s * tl
    K[n - 1, n - 1] -= s * tr
    K[n, 0] += s / Hw[0]
    K[2 * n - 1, n - 1] -= s / Hw[-1]
    G = np.zeros_like(K)
    G[:n, :n] = -np.diag(a)
    energy = sla.block_diag(op.H, op.H)
    return WaveSystem(op=op, K=K, G=G, energy=energy, damping=a, sat=sat)


def energy_symmetric_part(M: np.ndarray, energy: np.ndarray) -> np.ndarray:
    """Symmetric matrix ``(Hx M + M^T Hx)/2`` whose sign governs dE/dt."""
    S = energy @ M
    return 0.5 * (S + S.T)


def generalized_max(S: np.ndarray, energy: np.ndarray) -> float:
    """Largest ``lambda`` with ``S x = lambda Hx x``."""
    return float(sla.eigh(0.5 * (S + S.T), energy, eigvals_only=True)[-1])


# -- two blocks ---------------------------------------------------------------------


@dataclass(frozen=True)
class InterfaceCoupling:
    """Advection ``u_t + c u_x = -a u`` on two SBP blocks joined at one point."""

    left: SbpDiscretization
    right: SbpDiscretization
    generator: np.ndarray = field(repr=False)
    energy: np.ndarray = field(repr=False)
    interface_form: np.ndarray = field(repr=False)
    interior_form: np.ndarray = field(repr=False)
    outer_form: np.ndarray = field(repr=False)
    tau: float = 0.0

    def interface_jump(self, state) -> float:
        nL = self.left.n
        return float(state[nL - 1] - state[nL])

    def interface_value(self, state) -> float:
        return float(state @ self.interface_form @ state)

    @property
    def interface_max_eig(self) -> float:
        return max_eig(self.interface_form)


def two_block_interface(
    opL: SbpDiscretization,
    opR: SbpDiscretization,
    tau: float,
    speed: float = 1.0,
    damping: tuple = (0.0, 0.0),
    inflow_tau: float | None = None,
    atol: float = 1e-12,
) -> InterfaceCoupling:
    """Couple two blocks with mirrored interface SATs.

    Each block carries ``u_t = -c D u - a u``.  The interface terms combine a
    central flux cancellation with the penalty ``tau``, so the interface
    contribution to ``dE/dt`` is exactly ``-tau (u_L,N - u_R,0)^2``.  Grids
    may differ in spacing; the single interface point makes the trace
    operators trivially H-adjoint.
    """
    if abs(opL.right - opR.left) > atol * max(1.0, abs(opL.right)):
        raise SbpError(f"interface mismatch: left block ends at {opL.right}, right block starts at {opR.left}")
    if tau < 0:
        raise SbpError("interface penalty must be non-negative")
    nL, nR = opL.n, opR.n
    N = nL + nR
    c = float(speed)
    M = np.zeros((N, N))
    M[:nL, :nL] = -c * opL.D - damping[0] * np.eye(nL)
    M[nL:, nL:] = -c * opR.D - damping[1] * np.eye(nR)
    Hw = np.concatenate([opL.weights, opR.weights])
    iL, iR = nL - 1, nL
    # The flux leaves -c/2 (uL^2 - uR^2) at the interface; penalties with
    # weights c/2 -+ tau turn that into -tau * (uL - uR)^2.
    pen_left = c / 2 - tau
    pen_right = c / 2 + tau
    M[iL, iL] += pen_left / Hw[iL]
    M[iL, iR] -= pen_left / Hw[iL]
    M[iR, iL] += pen_right / Hw[iR]
    M[iR, iR] -= pen_right / Hw[iR]
    tin = abs(c) if inflow_tau is None else inflow_tau
    inflow = 0 if c >= 0 else N - 1
    M[inflow, inflow] -= tin / Hw[inflow]
    energy = np.diag(Hw)

    interior = np.zeros((N, N))
    interior[:nL, :nL] = -damping[0] * opL.H
    interior[nL:, nL:] = -damping[1] * opR.H
    outer = np.zeros((N, N))
    outer[0, 0] = c / 2
    outer[N - 1, N - 1] = -c / 2
    outer[inflow, inflow] -= tin
    interface_form = energy_symmetric_part(M, energy) - interior - outer
    return InterfaceCoupling(
        left=opL,
        right=opR,
        generator=M,
        energy=energy,
        interface_form=interface_form,
        interior_form=interior,
        outer_form=outer,
        tau=tau,
    )
