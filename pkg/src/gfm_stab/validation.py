"""Independent checks of the closed-form models.

* closed-form source powers against a direct phasor solve of the circuit;
* reduced relative-motion models against the unreduced device equations,
  integrated by a plain-Python RK4 with no shared code path;
* energy conservation of undamped runs.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import IntegratorConfig, integrate
from .equilibria import principal_sep
from .models import (
    SystemKind,
    TwoSourceSystem,
    coupled_rhs,
    coupled_two_generator_rhs,
    coupled_two_inverter_rhs,
    power_outputs,
)
from .network import ComplexImpedance, ThreeBusNetwork, TopologyMode, reduce_three_bus, solve_network_powers
from .region import AutonomousSwing, EnergyFunction

MODES = (TopologyMode.PRE_FAULT, TopologyMode.FAULT, TopologyMode.POST_FAULT)


class CheckResult(NamedTuple):
    name: str
    passed: bool
    max_residual: float
    tolerance: float
    detail: str = ""

    def as_dict(self) -> dict:
        return dict(self._asdict())


def random_network(rng: np.random.Generator) -> ThreeBusNetwork:
    """Impedances in physically plausible ranges, capacitive loads included."""

    def z(r, x):
        return ComplexImpedance(rng.uniform(*r), rng.uniform(*x))

    load = ComplexImpedance.from_polar(rng.uniform(0.3, 3.0), math.radians(rng.uniform(-60.0, 85.0)))
    return ThreeBusNetwork(
        z1=z((0.0, 0.2), (0.05, 1.0)),
        z2_base=z((0.0, 0.2), (0.05, 1.0)),
        z_load=load,
        z_fault=ComplexImpedance(rng.uniform(1e-5, 1e-2), rng.uniform(0.0, 1e-2)),
        z_v=ComplexImpedance(0.0, rng.uniform(0.0, 1.0)),
    )


def phasor_oracle_check(
    samples: int = 1000,
    seed: int = 0,
    tol: float = 1e-9,
    powers: Callable = power_outputs,
) -> CheckResult:
    """Closed-form P1, P2 against the phasor solve on random draws.

    The residual is |difference| / max(|P|, E1 E2 |Y12|), i.e. relative to
    the size of the terms being combined.  ``powers`` can be swapped for a
    deliberately wrong formula to see the check fail.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        net = random_network(rng)
        mode = MODES[int(rng.integers(3))]
        e1, e2 = rng.uniform(0.8, 1.2, 2)
        d1, d2 = rng.uniform(-math.pi, math.pi, 2)
        red = reduce_three_bus(net, mode)
        p_closed = powers(red, e1, e2, d1 - d2)
        p_ref = solve_network_powers(net, mode, e1, e2, d1, d2)
        scale = e1 * e2 * red.y12_mag
        for a, b in zip(p_closed, p_ref):
            worst = max(worst, abs(float(a) - b) / max(abs(b), scale))
    return CheckResult("phasor_oracle", bool(worst < tol), float(worst), tol, f"{samples} random draws")


def _rk4(f, y, dt, n):
    y = np.array(y, dtype=float)
    out = np.empty((n + 1, len(y)))
    out[0] = y
    for i in range(n):
        k1 = np.array(f(y))
        k2 = np.array(f(y + 0.5 * dt * k1))
        k3 = np.array(f(y + 0.5 * dt * k2))
        k4 = np.array(f(y + dt * k3))
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i + 1] = y
    return out


def reduced_vs_coupled(
    system: TwoSourceSystem,
    mode: TopologyMode,
    t_end: float = 10.0,
    dt: float = 1e-4,
    delta_offset: float = 0.3,
    omega_offset: float = 2e-3,
    tol: float = 1e-8,
) -> CheckResult:
    """Max |delta_reduced - (delta1 - delta2)| over a fixed-topology run."""
    g = system.constants
    red = system.admittances(mode)
    model = system.model(mode)
    sep = principal_sep(system.model(TopologyMode.PRE_FAULT)).delta
    d0 = sep + delta_offset
    n = int(round(t_end / dt))
    s1, s2 = system.source1, system.source2
    if system.kind in (SystemKind.HYBRID, SystemKind.SMIB):
        w1 = g.omega_0 + omega_offset
        _, p2 = power_outputs(red, s1.e, s2.e, d0)
        w2 = g.omega_0 + s2.k * (s2.p_star - float(p2))
        full = _rk4(lambda y: coupled_rhs(y, s1, s2, red, g), (d0, w1, 0.0), dt, n)
        rel = full[:, 0] - full[:, 2]
        state0 = (d0, w1 - w2)
    elif system.kind is SystemKind.TWO_GENERATOR:
        w1, w2 = g.omega_0 + omega_offset, g.omega_0
        full = _rk4(lambda y: coupled_two_generator_rhs(y, s1, s2, red, g), (d0, w1, 0.0, w2), dt, n)
        rel = full[:, 0] - full[:, 2]
        state0 = (d0, w1 - w2)
    else:
        full = _rk4(lambda y: coupled_two_inverter_rhs(y, s1, s2, red, g), (d0, 0.0), dt, n)
        rel = full[:, 0] - full[:, 1]
        state0 = (d0, None)
    if system.order == 1:
        cfg = IntegratorConfig(dt=dt, t_end=n * dt)
        traj = integrate(system, state0, cfg, initial_mode=mode)
    else:
        traj = integrate(AutonomousSwing(model), state0, IntegratorConfig(dt=dt, t_end=n * dt))
    err = float(np.max(np.abs(traj.delta - rel)))
    return CheckResult(f"reduced_vs_coupled[{system.kind.value},{mode.value}]", bool(err < tol), err, tol,
                       f"{t_end} s at dt = {dt}")


class EnergyReport(NamedTuple):
    relative_drift: float
    amplitude_variation: float
    peaks: np.ndarray


def energy_drift(system: TwoSourceSystem, delta_offset: float = 0.5, t_end: float = 10.0, dt: float = 1e-4,
                 mode: TopologyMode = TopologyMode.PRE_FAULT) -> EnergyReport:
    """Energy drift and swing-amplitude spread of an undamped free oscillation."""
    model = system.model(mode)
    if not model.undamped:
        raise ValueError("energy conservation needs an undamped model (D1 = 0, k2 = 0)")
    sep = principal_sep(model).delta
    traj = integrate(AutonomousSwing(model), (sep + delta_offset, 0.0), IntegratorConfig(dt=dt, t_end=round(t_end / dt) * dt))
    ef = EnergyFunction(model, sep)
    v = ef(traj.delta, traj.omega_e)
    drift = float(np.max(np.abs(v - v[0])) / abs(v[0]))
    d = traj.delta - sep
    # local maxima of the angle swing
    idx = np.flatnonzero((d[1:-1] > d[:-2]) & (d[1:-1] >= d[2:])) + 1
    peaks = d[idx]
    var = float((peaks.max() - peaks.min()) / abs(peaks.mean())) if peaks.size > 1 else float("nan")
    return EnergyReport(drift, var, peaks)


def run_all(system: TwoSourceSystem | None, samples: int = 1000, seed: int = 0, t_end: float = 10.0) -> list[CheckResult]:
    """The full oracle suite for a two-source scenario."""
    results = [phasor_oracle_check(samples, seed)]
    if system is not None:
        for mode in MODES:
            results.append(reduced_vs_coupled(system, mode, t_end=t_end))
        if system.kind in (SystemKind.HYBRID, SystemKind.SMIB):
            from dataclasses import replace

            undamped = replace(system, kind=SystemKind.SMIB, source1=replace(system.source1, d=0.0),
                               source2=replace(system.source2, k=0.0))
            rep = energy_drift(undamped, t_end=t_end)
            results.append(CheckResult("energy_drift", bool(rep.relative_drift < 1e-6), rep.relative_drift, 1e-6,
                                       f"amplitude variation {rep.amplitude_variation:.2e}"))
    return results
