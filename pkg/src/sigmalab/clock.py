"""Measure-time clocks: piecewise-constant density, finitely many atoms, flats.

A clock is the right-continuous nondecreasing map

    sigma(t) = int_0^t w(s) ds + sum_{t_k <= t} alpha_k

on a finite horizon [0, T].  The density w is constant on each segment, so
every evaluation below is exact in closed form.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class ClockError(ValueError):
    """Raised for malformed clocks or out-of-domain queries."""


@dataclass(frozen=True)
class SigmaClock:
    """Immutable clock description.

    ``segments`` are ``(t_start, t_end, w)`` triples partitioning ``[0, T]``;
    ``atoms`` are ``(t_k, alpha_k)`` pairs with ``0 < t_k <= T``.  An atom at
    ``t = 0`` is rejected because it would break ``sigma(0) = 0``.
    """

    horizon: float
    segments: tuple[tuple[float, float, float], ...]
    atoms: tuple[tuple[float, float], ...] = ()
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _cum_ac: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _atom_times: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _cum_atoms: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        segs = tuple((float(a), float(b), float(w)) for a, b, w in self.segments)
        atoms = tuple((float(t), float(a)) for t, a in self.atoms)
        T = float(self.horizon)
        if not np.isfinite(T) or T <= 0:
            raise ClockError(f"horizon must be positive and finite, got {T}")
        if not segs:
            raise ClockError("clock needs at least one segment")
        if segs[0][0] != 0.0:
            raise ClockError(f"first segment must start at 0, starts at {segs[0][0]}")
        if segs[-1][1] != T:
            raise ClockError(f"last segment must end at the horizon {T}, ends at {segs[-1][1]}")
        for i, (a, b, w) in enumerate(segs):
            if not b > a:
                raise ClockError(f"segment {i} is empty or reversed: [{a}, {b}]")
            if not (w >= 0 and np.isfinite(w)):
                raise ClockError(f"segment {i} has invalid density {w}")
            if i and segs[i - 1][1] != a:
                raise ClockError(f"segments {i - 1} and {i} leave a gap or overlap at {a}")
        prev = 0.0
        for k, (t, a) in enumerate(atoms):
            if not (0.0 < t <= T):
                raise ClockError(f"atom {k} at t={t} lies outside (0, {T}]")
            if not (a > 0 and np.isfinite(a)):
                raise ClockError(f"atom {k} has non-positive mass {a}")
            if k and not t > prev:
                raise ClockError(f"atom times must be strictly increasing (atom {k} at {t})")
            prev = t

        cum = [0.0]
        for a, b, w in segs:
            cum.append(cum[-1] + w * (b - a))
        cum_atoms = [0.0]
        for _, a in atoms:
            cum_atoms.append(cum_atoms[-1] + a)

        object.__setattr__(self, "horizon", T)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "_starts", tuple(s[0] for s in segs))
        object.__setattr__(self, "_cum_ac", tuple(cum))
        object.__setattr__(self, "_atom_times", tuple(t for t, _ in atoms))
        object.__setattr__(self, "_cum_atoms", tuple(cum_atoms))

    # -- evaluation -------------------------------------------------------

    def _check_time(self, t: float) -> float:
        t = float(t)
        if not (0.0 <= t <= self.horizon):
            raise ClockError(f"time {t} outside [0, {self.horizon}]")
        return t

    def ac_part(self, t: float) -> float:
        """Mass of the absolutely continuous part on [0, t]."""
        t = self._check_time(t)
        i = max(bisect.bisect_right(self._starts, t) - 1, 0)
        a, _, w = self.segments[i]
        return self._cum_ac[i] + w * (t - a)

    def atomic_part(self, t: float, left: bool = False) -> float:
        """Total atom mass with ``t_k <= t`` (``t_k < t`` when ``left``)."""
        t = self._check_time(t)
        pick = bisect.bisect_left if left else bisect.bisect_right
        return self._cum_atoms[pick(self._atom_times, t)]

    def ac_parts(self, times) -> np.ndarray:
        """Vectorised :meth:`ac_part` (the a.c. mass is piecewise linear)."""
        ts = np.asarray(times, dtype=float)
        if ts.size and (ts.min() < 0 or ts.max() > self.horizon):
            raise ClockError(f"times must lie in [0, {self.horizon}]")
        knots = np.array(self._starts + (self.horizon,))
        return np.interp(ts, knots, np.array(self._cum_ac))

    def atomic_parts(self, times, left: bool = False) -> np.ndarray:
        """Vectorised :meth:`atomic_part`."""
        ts = np.asarray(times, dtype=float)
        if ts.size and (ts.min() < 0 or ts.max() > self.horizon):
            raise ClockError(f"times must lie in [0, {self.horizon}]")
        idx = np.searchsorted(np.array(self._atom_times), ts, side="left" if left else "right")
        return np.array(self._cum_atoms)[idx]

    def atom_at(self, t: float) -> float:
        i = bisect.bisect_left(self._atom_times, t)
        if i < len(self._atom_times) and self._atom_times[i] == t:
            return self.atoms[i][1]
        return 0.0

    def density_at(self, t: float) -> float:
        """Right-continuous density value (segment containing ``t``)."""
        t = self._check_time(t)
        i = min(bisect.bisect_right(self._starts, t) - 1, len(self.segments) - 1)
        return self.segments[i][2]

    def breakpoints(self) -> list[float]:
        """Sorted union of segment boundaries and atom times."""
        pts = {0.0, self.horizon}
        pts.update(s[0] for s in self.segments)
        pts.update(self._atom_times)
        return sorted(pts)

    @property
    def total_mass(self) -> float:
        return self._cum_ac[-1] + self._cum_atoms[-1]

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "segments": [list(s) for s in self.segments],
            "atoms": [list(a) for a in self.atoms],
        }


@dataclass(frozen=True)
class ClockDecomposition:
    ac_mass: float
    atomic_mass: float
    flat_set: tuple[tuple[float, float], ...]


def sigma_of(clock: SigmaClock, t: float, left: bool = False) -> float:
    """Clock value at ``t``; ``left=True`` gives the left limit sigma(t-)."""
    return clock.ac_part(t) + clock.atomic_part(t, left=left)


def sigma_mass(clock: SigmaClock, s: float, t: float) -> float:
    """Mass of the half-open interval (s, t]."""
    if s > t:
        raise ClockError(f"sigma_mass needs s <= t, got s={s}, t={t}")
    if s == t:
        clock._check_time(t)
        return 0.0
    ac = clock.ac_part(t) - clock.ac_part(s)
    at = clock.atomic_part(t) - clock.atomic_part(s)
    return ac + at


def decompose(clock: SigmaClock) -> ClockDecomposition:
    flats: list[tuple[float, float]] = []
    for a, b, w in clock.segments:
        if w != 0.0:
            continue
        if flats and flats[-1][1] == a:
            flats[-1] = (flats[-1][0], b)
        else:
            flats.append((a, b))
    return ClockDecomposition(
        ac_mass=clock._cum_ac[-1],
        atomic_mass=clock._cum_atoms[-1],
        flat_set=tuple(flats),
    )


def constant_pieces(clock: SigmaClock) -> list[tuple[float, float]]:
    """Flat intervals further cut at atom times, so sigma is constant inside each piece."""
    pieces = []
    for a, b in decompose(clock).flat_set:
        cuts = [a] + [t for t in clock._atom_times if a < t < b] + [b]
        pieces.extend(zip(cuts[:-1], cuts[1:]))
    return pieces


def dominates(c1: SigmaClock, c2: SigmaClock) -> bool:
    """True iff sigma_1(t) <= sigma_2(t) on all of [0, T]."""
    if c1.horizon != c2.horizon:
        raise ClockError(f"horizon mismatch: {c1.horizon} vs {c2.horizon}")
    grid = sorted(set(c1.breakpoints()) | set(c2.breakpoints()))
    # Both clocks are affine between merged breakpoints, so comparing the
    # left limit and the value at each breakpoint is exhaustive.
    for t in grid:
        for left in (True, False):
            if sigma_of(c1, t, left) > sigma_of(c2, t, left):
                return False
    return True


def var_sigma(samples: Sequence[tuple[float, float]], clock: SigmaClock) -> float:
    """Total variation of sampled values along the clock's time axis.

    The finest partition available is the sample grid itself, so the
    supremum over admissible partitions is the plain sum of increments.
    Repeated times are allowed so that pre/post atom samples both count.
    """
    if len(samples) == 0:
        return 0.0
    times = np.array([s[0] for s in samples], dtype=float)
    values = np.array([s[1] for s in samples], dtype=float)
    if np.any(np.diff(times) < 0):
        raise ClockError("samples must be sorted by time")
    if times[0] < 0 or times[-1] > clock.horizon:
        raise ClockError(f"sample times must lie in [0, {clock.horizon}]")
    return float(np.abs(np.diff(values)).sum())


def identity_clock(T: float) -> SigmaClock:
    return SigmaClock(T, ((0.0, T, 1.0),))


def uniform_clock(T: float, w: float, atoms: Iterable[tuple[float, float]] = ()) -> SigmaClock:
    return SigmaClock(T, ((0.0, T, w),), tuple(atoms))


def clock_from_config(cfg: dict) -> SigmaClock:
    return SigmaClock(
        horizon=cfg["horizon"],
        segments=tuple(tuple(s) for s in cfg["segments"]),
        atoms=tuple(tuple(a) for a in cfg.get("atoms", [])),
    )
