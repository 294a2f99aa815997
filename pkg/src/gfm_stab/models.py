"""Device parameters and reduced synchronization models of two-source systems.

Every two-source variant with at least one inertial device collapses to the
same swing form

    d(delta)/dt   = omega_n * omega_e
    T d(omega_e)/dt = P_M - P_E(delta) - D(delta) * omega_e

with P_E(delta) = c_minus*cos(delta - gamma) + c_plus*cos(delta + gamma) and
D(delta) = D_0 + D_var*sin(gamma - delta).  :class:`SwingModel` stores those
coefficients; the constructors below fill them in for the hybrid (SG + droop),
SMIB and uniform-damping two-generator cases.  Two droop inverters give the
first-order flow of :class:`FirstOrderModel`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .network import ReducedAdmittances, ThreeBusNetwork, TopologyMode, reduce_three_bus


@dataclass(frozen=True)
class SgParams:
    """Inertial source: synchronous generator or VSG."""

    tj: float
    d: float
    p_star: float
    e: float

    def __post_init__(self):
        if not self.tj > 0:
            raise ValueError(f"inertia time constant must be positive, got {self.tj}")
        if self.d < 0:
            raise ValueError(f"damping must be non-negative, got {self.d}")
        if not self.e > 0:
            raise ValueError(f"internal voltage must be positive, got {self.e}")


@dataclass(frozen=True)
class DroopParams:
    """Inertialess P-f droop inverter.  ``k = 0`` behaves as an infinite bus."""

    k: float
    p_star: float
    e: float

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"droop coefficient must be non-negative, got {self.k}")
        if not self.e > 0:
            raise ValueError(f"internal voltage must be positive, got {self.e}")


@dataclass(frozen=True)
class GlobalConstants:
    omega_n: float = 100 * math.pi
    omega_0: float = 1.0

    def __post_init__(self):
        if not self.omega_n > 0:
            raise ValueError("omega_n must be positive")


@dataclass(frozen=True)
class SystemState:
    """Relative angle (rad) and relative frequency (p.u.).

    ``omega_e`` is None for the first-order two-inverter model.
    """

    delta: float
    omega_e: float | None = 0.0

    def __post_init__(self):
        if not math.isfinite(self.delta) or (self.omega_e is not None and not math.isfinite(self.omega_e)):
            raise ValueError("state must be finite")


def power_outputs(red: ReducedAdmittances, e1: float, e2: float, delta):
    """Active power of both sources for relative angle ``delta`` (array-friendly)."""
    y, gamma = red.y12_mag, red.gamma
    p1 = e1 * e1 * (red.g12 + red.g1g) - e1 * e2 * y * np.cos(delta + gamma)
    p2 = e2 * e2 * (red.g12 + red.g2g) - e1 * e2 * y * np.cos(delta - gamma)
    return p1, p2


@dataclass(frozen=True)
class SwingModel:
    """Coefficients of a second-order reduced model (see module docstring)."""

    p_m: float
    pe_minus: float
    pe_plus: float
    gamma: float
    d_const: float
    d_var: float
    t_jeq: float
    omega_n: float

    def p_e(self, delta):
        return self.pe_minus * np.cos(delta - self.gamma) + self.pe_plus * np.cos(delta + self.gamma)

    def p_e_prime(self, delta):
        return -self.pe_minus * np.sin(delta - self.gamma) - self.pe_plus * np.sin(delta + self.gamma)

    def p_e_integral(self, delta):
        """An antiderivative of P_E."""
        return self.pe_minus * np.sin(delta - self.gamma) + self.pe_plus * np.sin(delta + self.gamma)

    def extra_damping(self, delta):
        """State-dependent part of the damping (the droop contribution D_delta)."""
        return self.d_var * np.sin(self.gamma - delta)

    def d_eq(self, delta):
        return self.d_const + self.d_var * np.sin(self.gamma - delta)

    def accel(self, delta):
        return self.p_m - self.p_e(delta)

    def rhs(self, delta, omega_e):
        dd = self.omega_n * omega_e
        dw = (self.p_m - self.p_e(delta) - self.d_eq(delta) * omega_e) / self.t_jeq
        return dd, dw

    def jacobian(self, delta: float) -> np.ndarray:
        return np.array(
            [
                [0.0, self.omega_n],
                [-float(self.p_e_prime(delta)) / self.t_jeq, -float(self.d_eq(delta)) / self.t_jeq],
            ]
        )

    @property
    def undamped(self) -> bool:
        return self.d_const == 0.0 and self.d_var == 0.0

    def params(self) -> np.ndarray:
        """Packed coefficient vector consumed by the compiled integrators."""
        return np.array(
            [self.p_m, self.pe_minus, self.pe_plus, self.gamma, self.d_const, self.d_var, self.t_jeq, self.omega_n]
        )


# Name used for the hybrid-model record in the design notes.
HybridDerived = SwingModel


@dataclass(frozen=True)
class FirstOrderModel:
    """d(delta)/dt = a + b cos(delta) + c sin(delta), all in rad/s."""

    a: float
    b: float
    c: float
    omega_n: float

    def rate(self, delta):
        return self.a + self.b * np.cos(delta) + self.c * np.sin(delta)

    def rate_prime(self, delta):
        return -self.b * np.sin(delta) + self.c * np.cos(delta)

    def params(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.omega_n])


TwoInverterCoefficients = FirstOrderModel


def hybrid_derived(sg: SgParams, inv: DroopParams, red: ReducedAdmittances, g: GlobalConstants) -> SwingModel:
    e1, e2 = sg.e, inv.e
    emf = e1 * e2 * red.y12_mag
    d1k2 = sg.d * inv.k
    return SwingModel(
        p_m=sg.p_star - e1 * e1 * (red.g12 + red.g1g) - d1k2 * (inv.p_star - e2 * e2 * (red.g12 + red.g2g)),
        pe_minus=d1k2 * emf,
        pe_plus=-emf,
        gamma=red.gamma,
        d_const=sg.d,
        d_var=inv.k * sg.tj * g.omega_n * emf,
        t_jeq=sg.tj,
        omega_n=g.omega_n,
    )


def smib_derived(sg: SgParams, e2: float, red: ReducedAdmittances, g: GlobalConstants) -> SwingModel:
    """Generator against a stiff source of magnitude ``e2``."""
    emf = sg.e * e2 * red.y12_mag
    return SwingModel(
        p_m=sg.p_star - sg.e * sg.e * (red.g12 + red.g1g),
        pe_minus=0.0,
        pe_plus=-emf,
        gamma=red.gamma,
        d_const=sg.d,
        d_var=0.0,
        t_jeq=sg.tj,
        omega_n=g.omega_n,
    )


class NonUniformDampingError(ValueError):
    pass


def two_generator_reduce(
    sg1: SgParams, sg2: SgParams, red: ReducedAdmittances, g: GlobalConstants, rtol: float = 1e-9
) -> SwingModel:
    """Relative motion of two generators; requires D1/T_J1 == D2/T_J2."""
    r1, r2 = sg1.d / sg1.tj, sg2.d / sg2.tj
    if abs(r1 - r2) > rtol * max(abs(r1), abs(r2), 1e-300) and not (r1 == r2 == 0):
        raise NonUniformDampingError(
            f"uniform damping condition D1/T_J1 == D2/T_J2 violated: {r1!r} != {r2!r}"
        )
    t1, t2 = sg1.tj, sg2.tj
    s = t1 + t2
    e1, e2 = sg1.e, sg2.e
    emf = e1 * e2 * red.y12_mag
    m1 = sg1.p_star - e1 * e1 * (red.g12 + red.g1g)
    m2 = sg2.p_star - e2 * e2 * (red.g12 + red.g2g)
    return SwingModel(
        p_m=(t2 * m1 - t1 * m2) / s,
        pe_minus=t1 * emf / s,
        pe_plus=-t2 * emf / s,
        gamma=red.gamma,
        d_const=sg1.d * t2 / s,
        d_var=0.0,
        t_jeq=t1 * t2 / s,
        omega_n=g.omega_n,
    )


def two_inverter_coefficients(
    inv1: DroopParams, inv2: DroopParams, red: ReducedAdmittances, g: GlobalConstants
) -> FirstOrderModel:
    wn = g.omega_n
    e1, e2 = inv1.e, inv2.e
    a = wn * inv1.k * (inv1.p_star - e1 * e1 * red.g12 - e1 * e1 * red.g1g) - wn * inv2.k * (
        inv2.p_star - e2 * e2 * red.g12 - e2 * e2 * red.g2g
    )
    b = wn * e1 * e2 * red.g12 * (inv1.k - inv2.k)
    c = wn * e1 * e2 * red.b12 * (inv1.k + inv2.k)
    return FirstOrderModel(a, b, c, wn)


def hybrid_rhs(state: SystemState, hd: SwingModel, g: GlobalConstants) -> tuple[float, float]:
    dd, dw = hd.rhs(state.delta, state.omega_e)
    return float(dd), float(dw)


# --- unreduced two-source models (oracles for the reductions) -----------------


def coupled_rhs(full_state, sg: SgParams, inv: DroopParams, red: ReducedAdmittances, g: GlobalConstants):
    """Generator (delta1, omega1) plus droop inverter delta2; omega1 is absolute p.u."""
    d1, w1, d2 = full_state
    p1, p2 = power_outputs(red, sg.e, inv.e, d1 - d2)
    return (
        g.omega_n * (w1 - g.omega_0),
        (sg.p_star - p1 - sg.d * (w1 - g.omega_0)) / sg.tj,
        g.omega_n * inv.k * (inv.p_star - p2),
    )


def coupled_two_generator_rhs(full_state, sg1: SgParams, sg2: SgParams, red: ReducedAdmittances, g: GlobalConstants):
    d1, w1, d2, w2 = full_state
    p1, p2 = power_outputs(red, sg1.e, sg2.e, d1 - d2)
    return (
        g.omega_n * (w1 - g.omega_0),
        (sg1.p_star - p1 - sg1.d * (w1 - g.omega_0)) / sg1.tj,
        g.omega_n * (w2 - g.omega_0),
        (sg2.p_star - p2 - sg2.d * (w2 - g.omega_0)) / sg2.tj,
    )


def coupled_two_inverter_rhs(full_state, inv1: DroopParams, inv2: DroopParams, red: ReducedAdmittances, g: GlobalConstants):
    d1, d2 = full_state
    p1, p2 = power_outputs(red, inv1.e, inv2.e, d1 - d2)
    return (g.omega_n * inv1.k * (inv1.p_star - p1), g.omega_n * inv2.k * (inv2.p_star - p2))


# --- frequency jump ------------------------------------------------------------


def _jump_from_deviation(w1_dev: float, delta: float, inv: DroopParams, red_post: ReducedAdmittances, e1: float) -> float:
    _, p2_post = power_outputs(red_post, e1, inv.e, delta)
    return w1_dev + inv.k * (float(p2_post) - inv.p_star)


def frequency_jump(
    omega1_pre: float,
    delta_pre: float,
    inv: DroopParams,
    red_post: ReducedAdmittances,
    e1: float,
    g: GlobalConstants,
) -> float:
    """Relative frequency right after a topology change.

    The generator frequency and the angle are continuous; the droop frequency
    follows the new inverter power instantly.
    """
    return _jump_from_deviation(omega1_pre - g.omega_0, delta_pre, inv, red_post, e1)


def damping_gain(hd: SwingModel, delta: float | None = None) -> float:
    """Droop-introduced damping at ``delta`` (default: the principal SEP)."""
    if delta is None:
        from .equilibria import principal_sep

        delta = principal_sep(hd).delta
    return float(hd.extra_damping(delta))


# --- two-source systems --------------------------------------------------------


class SystemKind(str, enum.Enum):
    HYBRID = "hybrid"
    SMIB = "smib"
    TWO_GENERATOR = "two_generator"
    TWO_INVERTER = "two_inverter"


Source = Union[SgParams, DroopParams]

_EXPECTED = {
    SystemKind.HYBRID: (SgParams, DroopParams),
    SystemKind.SMIB: (SgParams, DroopParams),
    SystemKind.TWO_GENERATOR: (SgParams, SgParams),
    SystemKind.TWO_INVERTER: (DroopParams, DroopParams),
}


@dataclass(frozen=True)
class TwoSourceSystem:
    """A prototype network with its two devices; dispatches to the right reduction.

    ``frequency_jump`` can be switched off for diagnostics: the droop
    frequency is then (incorrectly) treated as continuous across events.
    """

    kind: SystemKind
    network: ThreeBusNetwork
    source1: Source
    source2: Source
    constants: GlobalConstants = GlobalConstants()
    frequency_jump: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", SystemKind(self.kind))
        t1, t2 = _EXPECTED[self.kind]
        if not (isinstance(self.source1, t1) and isinstance(self.source2, t2)):
            raise TypeError(
                f"{self.kind.value} expects ({t1.__name__}, {t2.__name__}), "
                f"got ({type(self.source1).__name__}, {type(self.source2).__name__})"
            )
        if self.kind is SystemKind.SMIB and self.source2.k != 0:
            raise ValueError("smib requires a zero droop coefficient on source 2")

    @property
    def order(self) -> int:
        return 1 if self.kind is SystemKind.TWO_INVERTER else 2

    def admittances(self, mode: TopologyMode) -> ReducedAdmittances:
        return reduce_three_bus(self.network, mode)

    def model(self, mode: TopologyMode) -> SwingModel | FirstOrderModel:
        red = self.admittances(mode)
        g = self.constants
        if self.kind is SystemKind.HYBRID:
            return hybrid_derived(self.source1, self.source2, red, g)
        if self.kind is SystemKind.SMIB:
            return smib_derived(self.source1, self.source2.e, red, g)
        if self.kind is SystemKind.TWO_GENERATOR:
            return two_generator_reduce(self.source1, self.source2, red, g)
        return two_inverter_coefficients(self.source1, self.source2, red, g)

    def powers(self, mode: TopologyMode, delta):
        return power_outputs(self.admittances(mode), self.source1.e, self.source2.e, delta)

    def droop_gain(self) -> float:
        """k of source 2 for the SG + droop variants, else 0."""
        if self.kind in (SystemKind.HYBRID, SystemKind.SMIB):
            return self.source2.k
        return 0.0

    def jump(self, delta: float, omega_e: float, before: TopologyMode, after: TopologyMode) -> float:
        """Re-initialize the relative frequency across a topology change."""
        if self.kind not in (SystemKind.HYBRID, SystemKind.SMIB) or not self.frequency_jump:
            return omega_e
        inv = self.source2
        _, p2_before = self.powers(before, delta)
        w1_dev = omega_e + inv.k * (inv.p_star - float(p2_before))
        return _jump_from_deviation(w1_dev, delta, inv, self.admittances(after), self.source1.e)

    def frequencies(self, mode: TopologyMode, delta, omega_e):
        """Absolute source frequencies (p.u.) along samples.

        The two-generator reduction keeps only the relative motion, so its
        individual frequencies are reported as NaN.
        """
        delta = np.asarray(delta, dtype=float)
        w0 = self.constants.omega_0
        p1, p2 = self.powers(mode, delta)
        if self.kind in (SystemKind.HYBRID, SystemKind.SMIB):
            w2 = w0 + self.source2.k * (self.source2.p_star - p2)
            return w2 + omega_e, w2
        if self.kind is SystemKind.TWO_INVERTER:
            return (
                w0 + self.source1.k * (self.source1.p_star - p1),
                w0 + self.source2.k * (self.source2.p_star - p2),
            )
        nan = np.full_like(delta, np.nan)
        return nan, nan.copy()
