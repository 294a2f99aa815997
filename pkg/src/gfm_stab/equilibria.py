"""Equilibria of the reduced models and their classification."""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .models import FirstOrderModel, SwingModel

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_WINDOW = (-math.pi, 3.0 * math.pi)


class EquilibriumKind(str, enum.Enum):
    SEP = "SEP"
    UEP = "UEP"
    SOURCE = "source"
    DEGENERATE = "degenerate"


class NoEquilibriumError(LookupError):
    pass


@dataclass(frozen=True)
class EquilibriumPoint:
    delta: float
    kind: EquilibriumKind
    eigenvalues: tuple[complex, ...]
    period_index: int

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "kind": self.kind.value,
            "eigenvalues": [[complex(v).real, complex(v).imag] for v in self.eigenvalues],
            "period_index": self.period_index,
        }


def _period_index(delta: float) -> int:
    return int(math.floor((delta + math.pi) / TWO_PI))


def _check_window(window) -> tuple[float, float]:
    lo, hi = map(float, window)
    if not hi > lo:
        raise ValueError("window must be increasing")
    if hi - lo > 4 * math.pi + 1e-12:
        raise ValueError("window wider than 4 pi")
    return lo, hi


def classify_second_order(model: SwingModel, delta: float) -> EquilibriumPoint:
    eig = np.linalg.eigvals(model.jacobian(delta))
    re = eig.real
    if abs(float(model.p_e_prime(delta))) < 1e-12:
        kind = EquilibriumKind.DEGENERATE
    elif np.all(re < 0):
        kind = EquilibriumKind.SEP
    elif float(model.d_eq(delta)) == 0.0 and float(model.p_e_prime(delta)) > 0:
        # center of an undamped model: Lyapunov stable, counted as SEP
        kind = EquilibriumKind.SEP
    elif np.sum(re > 0) == 1 and np.all(np.abs(eig.imag) == 0):
        kind = EquilibriumKind.UEP
    else:
        kind = EquilibriumKind.SOURCE
    eig = tuple(sorted((complex(v) for v in eig), key=lambda z: (z.real, z.imag)))
    return EquilibriumPoint(float(delta), kind, eig, _period_index(delta))


def find_equilibria_second_order(
    model: SwingModel, window=DEFAULT_WINDOW, points_per_period: int = 2000, tol: float = 1e-12
) -> list[EquilibriumPoint]:
    """All roots of P_M - P_E(delta) in ``window``, sorted by angle.

    Roots are bracketed on a uniform grid and refined with Brent's method.
    Tangential (double) roots without a sign change are searched separately
    and reported as DEGENERATE.
    """
    lo, hi = _check_window(window)
    n = int(math.ceil((hi - lo) / TWO_PI * points_per_period)) + 1
    grid = np.linspace(lo, hi, n)
    f = model.accel(grid)

    def acc(x):
        return float(model.p_m - model.p_e(x))

    roots: list[float] = []
    for i in range(n - 1):
        a, b = f[i], f[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            r = brentq(acc, grid[i], grid[i + 1], xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            if abs(acc(r)) > tol:
                r = _bisect(acc, grid[i], grid[i + 1], tol)
            roots.append(float(r))
    if f[-1] == 0.0:
        roots.append(float(grid[-1]))

    points = [classify_second_order(model, r) for r in roots]

    # tangencies: local extremum of the residual that touches zero
    for i in range(1, n - 1):
        if f[i - 1] * f[i] <= 0 or f[i] * f[i + 1] <= 0:
            continue
        if (f[i] - f[i - 1]) * (f[i + 1] - f[i]) > 0:
            continue
        dp = lambda x: float(model.p_e_prime(x))  # noqa: E731
        try:
            x = brentq(dp, grid[i - 1], grid[i + 1], xtol=1e-15)
        except ValueError:
            x = float(grid[i])
        if abs(acc(x)) < 1e-9:
            log.warning("degenerate equilibrium at delta=%.6f excluded from stability logic", x)
            eig = tuple(complex(v) for v in np.linalg.eigvals(model.jacobian(x)))
            points.append(EquilibriumPoint(float(x), EquilibriumKind.DEGENERATE, eig, _period_index(x)))
    points.sort(key=lambda p: p.delta)
    return points


def _bisect(f, a: float, b: float, tol: float) -> float:
    fa = f(a)
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = f(m)
        if abs(fm) < tol or m in (a, b):
            return m
        if (fa < 0) == (fm < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def principal_sep(model: SwingModel | FirstOrderModel) -> EquilibriumPoint:
    """The stable equilibrium closest to zero angle within (-pi, pi]."""
    if isinstance(model, FirstOrderModel):
        eqs = find_equilibria_first_order(model, (-math.pi, math.pi))
    else:
        eqs = find_equilibria_second_order(model, (-math.pi, math.pi))
    seps = [e for e in eqs if e.kind is EquilibriumKind.SEP]
    if not seps:
        raise NoEquilibriumError("no stable equilibrium in (-pi, pi]")
    return min(seps, key=lambda e: abs(e.delta))


def bounding_ueps(model: SwingModel | FirstOrderModel, sep: float) -> tuple[EquilibriumPoint, EquilibriumPoint]:
    """The saddles (UEPs) immediately below and above ``sep``."""
    window = (sep - TWO_PI, sep + TWO_PI)
    if isinstance(model, FirstOrderModel):
        eqs = find_equilibria_first_order(model, window)
    else:
        eqs = find_equilibria_second_order(model, window)
    ueps = [e for e in eqs if e.kind is EquilibriumKind.UEP]
    below = [e for e in ueps if e.delta < sep]
    above = [e for e in ueps if e.delta > sep]
    if not below or not above:
        raise NoEquilibriumError(f"no saddle bracketing the SEP at {sep:.6f}")
    return below[-1], above[0]


# --- first-order (two droop inverters) -----------------------------------------


class ExistenceResult(NamedTuple):
    holds: bool
    margin: float


def existence_condition(c: FirstOrderModel) -> ExistenceResult:
    """A^2 <= B^2 + C^2, the condition for an equilibrium of the droop-droop flow."""
    margin = c.a * c.a - (c.b * c.b + c.c * c.c)
    return ExistenceResult(margin <= 0.0, margin)


def find_equilibria_first_order(c: FirstOrderModel, window=DEFAULT_WINDOW) -> list[EquilibriumPoint]:
    """Closed-form roots of a + b cos(delta) + c sin(delta) within ``window``."""
    lo, hi = _check_window(window)
    if not existence_condition(c).holds:
        return []
    r = math.hypot(c.b, c.c)
    if r == 0.0:
        raise ValueError("a = b = c = 0: every angle is an equilibrium")
    phi = math.atan2(c.c, c.b)
    theta = math.acos(max(-1.0, min(1.0, -c.a / r)))
    bases = {phi + theta, phi - theta} if theta not in (0.0, math.pi) else {phi + theta}
    out = []
    for base in bases:
        k_lo = math.ceil((lo - base) / TWO_PI)
        k_hi = math.floor((hi - base) / TWO_PI)
        for k in range(k_lo, k_hi + 1):
            x = base + TWO_PI * k
            slope = float(c.rate_prime(x))
            if abs(slope) <= 1e-12 * r:
                kind = EquilibriumKind.DEGENERATE
            elif slope < 0:
                kind = EquilibriumKind.SEP
            else:
                kind = EquilibriumKind.UEP
            out.append(EquilibriumPoint(x, kind, (complex(slope),), _period_index(x)))
    out.sort(key=lambda p: p.delta)
    return out
