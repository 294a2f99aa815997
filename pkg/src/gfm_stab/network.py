"""Impedances, topologies and network elimination.

The three-bus prototype connects two sources (internal EMFs behind Z1 and Z2)
to a common load bus with shunt Z3.  Eliminating the load bus gives the
pi-equivalent Y12 / Y1g / Y2g used by every reduced model.  A direct phasor
solve of the same circuit is kept alongside as an independent check of the
closed-form power expressions.
"""

from __future__ import annotations

import cmath
import csv
import enum
import math
from dataclasses import dataclass
from typing import IO, Mapping, NamedTuple, Sequence

import numpy as np


class DegenerateNetworkError(ValueError):
    """A branch impedance or an eliminated block is singular."""


@dataclass(frozen=True)
class ComplexImpedance:
    """Series impedance in per-unit (resistance ``re``, reactance ``im``)."""

    re: float
    im: float

    def __post_init__(self):
        if not (math.isfinite(self.re) and math.isfinite(self.im)):
            raise ValueError(f"impedance components must be finite, got {self.re}, {self.im}")

    @classmethod
    def from_complex(cls, z: complex) -> "ComplexImpedance":
        return cls(float(z.real), float(z.imag))

    @classmethod
    def from_ohm(cls, re: float, im: float, z_base: float) -> "ComplexImpedance":
        return cls(re / z_base, im / z_base)

    @classmethod
    def from_polar(cls, magnitude: float, angle: float) -> "ComplexImpedance":
        return cls.from_complex(cmath.rect(magnitude, angle))

    @property
    def value(self) -> complex:
        return complex(self.re, self.im)

    @property
    def magnitude(self) -> float:
        return abs(self.value)

    @property
    def angle(self) -> float:
        return math.atan2(self.im, self.re)

    def branch(self) -> complex:
        """Complex value, rejecting a zero branch."""
        z = self.value
        if z == 0:
            raise DegenerateNetworkError("zero branch impedance")
        return z


ZERO = ComplexImpedance(0.0, 0.0)


class TopologyMode(enum.Enum):
    PRE_FAULT = "pre_fault"
    FAULT = "fault"
    POST_FAULT = "post_fault"


def parallel(a: complex, b: complex) -> complex:
    if a + b == 0:
        raise DegenerateNetworkError("parallel combination of opposite impedances")
    return a * b / (a + b)


@dataclass(frozen=True)
class ThreeBusNetwork:
    """Two sources feeding one constant-impedance load bus.

    ``z_v`` is the virtual impedance inserted at source 2 while the fault is
    on (current limiting of a droop inverter).  ``z_v1`` plays the same role
    for source 1 and stays zero unless source 1 is itself an inverter.
    """

    z1: ComplexImpedance
    z2_base: ComplexImpedance
    z_load: ComplexImpedance
    z_fault: ComplexImpedance
    z_v: ComplexImpedance = ZERO
    z_v1: ComplexImpedance = ZERO
    voltage_kv: float = 110.0
    power_mva: float = 100.0

    def __post_init__(self):
        for name in ("z1", "z2_base", "z_load", "z_fault"):
            if getattr(self, name).value == 0:
                raise DegenerateNetworkError(f"{name} must be nonzero")
        if self.voltage_kv <= 0 or self.power_mva <= 0:
            raise ValueError("base voltage and power must be positive")

    @property
    def z_base(self) -> float:
        """Ohmic base impedance U_N^2 / S_N."""
        return self.voltage_kv**2 / self.power_mva

    def branch_impedances(self, mode: TopologyMode) -> tuple[complex, complex, complex]:
        """(Z1, Z2, Z3) for the given topology."""
        z1 = self.z1.branch()
        z2 = self.z2_base.branch()
        z3 = self.z_load.branch()
        if mode is TopologyMode.FAULT:
            z1 = z1 + self.z_v1.value
            z2 = z2 + self.z_v.value
            z3 = parallel(z3, self.z_fault.branch())
        if z1 == 0 or z2 == 0 or z3 == 0:
            raise DegenerateNetworkError("zero branch impedance in reduced topology")
        return z1, z2, z3

    def replace(self, **changes) -> "ThreeBusNetwork":
        from dataclasses import replace

        return replace(self, **changes)


@dataclass(frozen=True)
class ReducedAdmittances:
    """Pi-equivalent between the two source internal nodes."""

    y12: complex
    y1g: complex
    y2g: complex

    @property
    def g12(self) -> float:
        return self.y12.real

    @property
    def b12(self) -> float:
        return self.y12.imag

    @property
    def g1g(self) -> float:
        return self.y1g.real

    @property
    def g2g(self) -> float:
        return self.y2g.real

    @property
    def gamma(self) -> float:
        """Impedance angle of Z12 = 1/Y12."""
        return cmath.phase(1.0 / self.y12)

    @property
    def y12_mag(self) -> float:
        return abs(self.y12)


def reduce_three_bus(net: ThreeBusNetwork, mode: TopologyMode) -> ReducedAdmittances:
    z1, z2, z3 = net.branch_impedances(mode)
    # star-delta: 1/Y12 = Z1 + Z2 + Z1 Z2 / Z3 and cyclic
    z12 = z1 + z2 + z1 * z2 / z3
    z1g = z1 + z3 + z1 * z3 / z2
    z2g = z2 + z3 + z2 * z3 / z1
    if z12 == 0 or z1g == 0 or z2g == 0:
        raise DegenerateNetworkError("star-delta transform produced a zero branch")
    return ReducedAdmittances(1.0 / z12, 1.0 / z1g, 1.0 / z2g)


# --- dense admittance matrices -------------------------------------------------


def three_bus_admittance(net: ThreeBusNetwork, mode: TopologyMode) -> np.ndarray:
    """Nodal matrix over (source 1 internal, source 2 internal, load bus)."""
    z1, z2, z3 = net.branch_impedances(mode)
    y1, y2, y3 = 1 / z1, 1 / z2, 1 / z3
    return np.array(
        [
            [y1, 0, -y1],
            [0, y2, -y2],
            [-y1, -y2, y1 + y2 + y3],
        ],
        dtype=complex,
    )


def admittance_matrix(
    n: int, branches: Sequence[tuple[int, int, complex]], shunts: Mapping[int, complex] | None = None
) -> np.ndarray:
    """Assemble an n x n nodal matrix from series branches ``(i, j, z)``.

    ``shunts`` maps node -> shunt admittance (line charging, capacitors).
    """
    y = np.zeros((n, n), dtype=complex)
    for i, j, z in branches:
        if z == 0:
            raise DegenerateNetworkError(f"zero impedance on branch {i}-{j}")
        yb = 1.0 / z
        y[i, i] += yb
        y[j, j] += yb
        y[i, j] -= yb
        y[j, i] -= yb
    for node, ysh in (shunts or {}).items():
        y[node, node] += ysh
    return y


def kron_reduce(y: np.ndarray, retained: Sequence[int]) -> np.ndarray:
    """Schur complement of ``y`` onto the ``retained`` nodes (in the given order)."""
    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    keep = list(retained)
    if len(set(keep)) != len(keep) or any(k < 0 or k >= n for k in keep):
        raise ValueError(f"invalid retained node list {keep} for {n} nodes")
    drop = [k for k in range(n) if k not in set(keep)]
    y_kk = y[np.ix_(keep, keep)]
    if not drop:
        return y_kk.copy()
    y_dd = y[np.ix_(drop, drop)]
    try:
        # LinAlgError is not raised for all near-singular inputs
        if np.linalg.cond(y_dd) > 1e14:
            raise np.linalg.LinAlgError
        x = np.linalg.solve(y_dd, y[np.ix_(drop, keep)])
    except np.linalg.LinAlgError:
        raise DegenerateNetworkError("eliminated block is singular") from None
    return y_kk - y[np.ix_(keep, drop)] @ x


def fold_constant_impedance_loads(y: np.ndarray, loads: Mapping[int, ComplexImpedance]) -> np.ndarray:
    """Return a copy of ``y`` with 1/Z_L added on each load node's diagonal."""
    out = np.array(y, dtype=complex, copy=True)
    for node, z in loads.items():
        if not 0 <= node < out.shape[0]:
            raise ValueError(f"load node {node} out of range")
        if z.value == 0:
            raise DegenerateNetworkError(f"zero load impedance at node {node}")
        out[node, node] += 1.0 / z.value
    return out


def is_reciprocal(y: np.ndarray, rtol: float = 1e-12) -> bool:
    scale = max(np.max(np.abs(y)), 1e-300)
    return bool(np.max(np.abs(y - y.T)) <= rtol * scale)


def write_admittance_csv(y: np.ndarray, fh: IO[str]) -> None:
    """Write the nonzero entries as ``row,col,re,im`` rows."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["row", "col", "re", "im"])
    for (i, j), v in np.ndenumerate(y):
        if v != 0:
            w.writerow([i, j, repr(float(v.real)), repr(float(v.imag))])


def read_admittance_csv(fh: IO[str], n: int | None = None) -> np.ndarray:
    rows = list(csv.DictReader(fh))
    size = n if n is not None else 1 + max(max(int(r["row"]), int(r["col"])) for r in rows)
    y = np.zeros((size, size), dtype=complex)
    for r in rows:
        y[int(r["row"]), int(r["col"])] = complex(float(r["re"]), float(r["im"]))
    return y


# --- phasor solve --------------------------------------------------------------


class PhasorSolution(NamedTuple):
    v_load: complex
    i1: complex
    i2: complex
    p1: float
    p2: float
    load_power: float
    losses: float


def solve_network_phasors(
    net: ThreeBusNetwork, mode: TopologyMode, e1: float, e2: float, delta1: float, delta2: float
) -> PhasorSolution:
    """Solve the unreduced three-bus circuit for fixed source EMFs."""
    z1, z2, z3 = net.branch_impedances(mode)
    v1 = cmath.rect(e1, delta1)
    v2 = cmath.rect(e2, delta2)
    # nodal equation at the load bus
    denom = 1 / z1 + 1 / z2 + 1 / z3
    if denom == 0:
        raise DegenerateNetworkError("load-bus self admittance is zero")
    v3 = (v1 / z1 + v2 / z2) / denom
    i1 = (v1 - v3) / z1
    i2 = (v2 - v3) / z2
    s1 = v1 * i1.conjugate()
    s2 = v2 * i2.conjugate()
    i3 = v3 / z3
    load = (v3 * i3.conjugate()).real
    losses = (abs(i1) ** 2 * z1.real) + (abs(i2) ** 2 * z2.real)
    return PhasorSolution(v3, i1, i2, s1.real, s2.real, load, losses)


def solve_network_powers(
    net: ThreeBusNetwork, mode: TopologyMode, e1: float, e2: float, delta1: float, delta2: float
) -> tuple[float, float]:
    """Active power injected at each source internal node."""
    sol = solve_network_phasors(net, mode, e1, e2, delta1, delta2)
    return sol.p1, sol.p2
