"""Networks of m generators and n droop inverters.

Source internal nodes are retained and every other bus is eliminated after
folding constant-impedance loads, so the dynamics only need the reduced
matrix Y = G + jB.  Injected powers use

    P_k = sum_l E_k E_l (G_kl cos(d_k - d_l) + B_kl sin(d_k - d_l))

which equals E_k E_l |Y_kl| cos(d_k - d_l + g_kl) with g_kl = -angle(Y_kl).
State vectors are laid out as [generator angles, generator speeds (absolute
p.u.), inverter angles].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy.optimize import fsolve

from . import _kernels as K
from .dynamics import MODES, Outcome, OutcomeKind, Trajectory, _MODE_CODE
from .models import DroopParams, GlobalConstants, SgParams
from .network import (
    ComplexImpedance,
    DegenerateNetworkError,
    TopologyMode,
    admittance_matrix,
    is_reciprocal,
    kron_reduce,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class MultiMachineSystem:
    """Reduced multi-source model with one admittance matrix per topology mode.

    ``delta0``/``omega0`` hold the pre-fault operating point (angles of all
    sources, generators first).  ``slip_limit`` is the angle excursion of any
    source relative to source 0, measured from its pre-fault value, that
    counts as a pole slip.
    """

    generators: tuple[SgParams, ...]
    inverters: tuple[DroopParams, ...]
    y_modes: Mapping[TopologyMode, np.ndarray]
    delta0: np.ndarray
    constants: GlobalConstants = GlobalConstants()
    include_gen_damping: bool = True
    slip_limit: float = math.pi
    names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "inverters", tuple(self.inverters))
        ns = self.m + self.n
        if ns < 1:
            raise ValueError("need at least one source")
        for mode in MODES:
            y = np.asarray(self.y_modes[mode], dtype=complex)
            if y.shape != (ns, ns):
                raise ValueError(f"{mode.value} admittance must be {ns}x{ns}, got {y.shape}")
            if not is_reciprocal(y, 1e-12):
                raise ValueError(f"{mode.value} admittance is not symmetric")
        if len(self.delta0) != ns:
            raise ValueError("delta0 needs one angle per source")
        if not self.names:
            names = [f"gen{i + 1}" for i in range(self.m)] + [f"inv{j + 1}" for j in range(self.n)]
            object.__setattr__(self, "names", tuple(names))

    @property
    def m(self) -> int:
        return len(self.generators)

    @property
    def n(self) -> int:
        return len(self.inverters)

    @property
    def e(self) -> np.ndarray:
        return np.array([s.e for s in self.generators + self.inverters])

    @property
    def p_star(self) -> np.ndarray:
        return np.array([s.p_star for s in self.generators + self.inverters])

    def y(self, mode: TopologyMode) -> np.ndarray:
        return np.asarray(self.y_modes[mode], dtype=complex)

    def gamma(self, mode: TopologyMode) -> np.ndarray:
        """Angles g_kl in the cos(d_k - d_l + g_kl) power expression."""
        return -np.angle(self.y(mode))

    # state helpers

    def split(self, y: np.ndarray):
        m = self.m
        return y[:m], y[m : 2 * m], y[2 * m :]

    def angles(self, y: np.ndarray) -> np.ndarray:
        gd, _, idl = self.split(np.asarray(y))
        return np.concatenate([gd, idl])

    def initial_state(self) -> np.ndarray:
        d = np.asarray(self.delta0, dtype=float)
        return np.concatenate([d[: self.m], np.full(self.m, self.constants.omega_0), d[self.m :]])

    def powers(self, mode: TopologyMode, angles: np.ndarray) -> np.ndarray:
        y = self.y(mode)
        return K.multi_powers(np.ascontiguousarray(angles, dtype=float), self.e, y.real.copy(), y.imag.copy())

    def inverter_frequencies(self, mode: TopologyMode, y: np.ndarray) -> np.ndarray:
        p = self.powers(mode, self.angles(y))
        k = np.array([inv.k for inv in self.inverters])
        return self.constants.omega_0 + k * (self.p_star[self.m :] - p[self.m :])

    def _packed(self, mode: TopologyMode):
        y = self.y(mode)
        tj = np.array([g.tj for g in self.generators])
        dgen = np.array([g.d for g in self.generators])
        kinv = np.array([inv.k for inv in self.inverters])
        return (self.m, self.e, y.real.copy(), y.imag.copy(), self.p_star, tj, dgen, kinv,
                self.include_gen_damping, self.constants.omega_n, self.constants.omega_0)

    def make_runner(self) -> "_MultiRunner":
        return _MultiRunner(self)

    def classify(self, traj: Trajectory) -> Outcome:
        """Pole slip (any source beyond ``slip_limit``) or first-period stable."""
        if traj.stop == "diverged":
            return Outcome(OutcomeKind.DIVERGED)
        return Outcome(OutcomeKind.STABLE_SAME_PERIOD)

    def with_damping(self, flag: bool) -> "MultiMachineSystem":
        from dataclasses import replace

        return replace(self, include_gen_damping=flag)


class _MultiRunner:
    def __init__(self, sys: MultiMachineSystem):
        self.sys = sys
        self.columns = tuple(
            [f"{nm}_delta" for nm in sys.names[: sys.m]]
            + [f"{nm}_omega" for nm in sys.names[: sys.m]]
            + [f"{nm}_delta" for nm in sys.names[sys.m :]]
        )
        self._packs = {mode: sys._packed(mode) for mode in MODES}
        d0 = np.asarray(sys.delta0, dtype=float)
        self._slip_ref = d0 - d0[0]

    def initial(self, state0, mode) -> np.ndarray:
        return np.array(state0, dtype=float)

    def run(self, y, mode, dt, n, stride, step0, out, n_out, settle):
        y, i, n_out, status = K.multi_run(
            np.array(y, dtype=float), *self._packs[mode], dt, n, stride, step0, out, n_out,
            self._slip_ref, self.sys.slip_limit,
        )
        return y, i, n_out, status

    def jump(self, y, before, after) -> np.ndarray:
        # angles and generator speeds are continuous; inverter frequencies are
        # algebraic and pick up the new network on their own
        return np.array(y, dtype=float)

    def derived(self, traj: Trajectory) -> dict[str, np.ndarray]:
        sys = self.sys
        ns = sys.m + sys.n
        n = len(traj.t)
        p = np.empty((n, ns))
        w_inv = np.empty((n, sys.n))
        for code, mode in enumerate(MODES):
            for i in np.flatnonzero(traj.modes == code):
                p[i] = sys.powers(mode, sys.angles(traj.states[i]))
                w_inv[i] = sys.inverter_frequencies(mode, traj.states[i])
        out = {f"{nm}_p": p[:, k] for k, nm in enumerate(sys.names)}
        for j in range(sys.n):
            out[f"{sys.names[sys.m + j]}_omega"] = w_inv[:, j]
        if sys.m:
            tj = np.array([g.tj for g in sys.generators])
            gd, gw, _ = sys.split(traj.states.T)
            out["delta_coa1"] = tj @ gd / tj.sum()
            out["omega_coa1"] = tj @ gw / tj.sum()
        if sys.n:
            inv_k = 1.0 / np.array([inv.k for inv in sys.inverters])
            out["omega_coa2"] = w_inv @ inv_k / inv_k.sum()
        return out


# --- COA diagnostics ------------------------------------------------------------


class CoaSnapshot(NamedTuple):
    delta_coa1: float
    omega_coa1: float
    delta_coa2: float
    omega_coa2: float
    t_coa1: float
    k_coa2: float
    omega_rel: float


def mm_rhs(state, sys: MultiMachineSystem, include_gen_damping: bool | None = None,
           mode: TopologyMode = TopologyMode.PRE_FAULT) -> np.ndarray:
    """Time derivative of the full state."""
    pack = list(sys._packed(mode))
    if include_gen_damping is not None:
        pack[8] = include_gen_damping
    return K._multi_f(np.asarray(state, dtype=float), *pack)


def coa_snapshot(state, sys: MultiMachineSystem, mode: TopologyMode = TopologyMode.PRE_FAULT) -> CoaSnapshot:
    if sys.m < 1 or sys.n < 1:
        raise ValueError("COA split needs at least one generator and one inverter")
    state = np.asarray(state, dtype=float)
    gd, gw, idl = sys.split(state)
    tj = np.array([g.tj for g in sys.generators])
    k = np.array([inv.k for inv in sys.inverters])
    if np.any(k <= 0):
        raise ValueError("inverse-droop weighting needs k > 0 on every inverter")
    t_coa1 = float(tj.sum())
    d1 = float(tj @ gd) / t_coa1
    w1 = float(tj @ gw) / t_coa1
    k_coa2 = 1.0 / float(np.sum(1.0 / k))
    d2 = k_coa2 * float(np.sum(idl / k))
    p = sys.powers(mode, sys.angles(state))
    w2 = sys.constants.omega_0 + k_coa2 * float(np.sum(sys.p_star[sys.m :] - p[sys.m :]))
    return CoaSnapshot(d1, w1, d2, w2, t_coa1, k_coa2, w1 - w2)


def coa_damping_matrix(state, sys: MultiMachineSystem, mode: TopologyMode = TopologyMode.PRE_FAULT) -> np.ndarray:
    """D_ji = T_COA1 k_COA2 E_j E_i |Y_ji| omega_n cos(d_j - d_i), inverters j by generators i.

    This is the inductive-line picture of how the droop group damps the
    generator group; it is a diagnostic only.
    """
    snap = coa_snapshot(state, sys, mode)
    ang = sys.angles(np.asarray(state, dtype=float))
    e = sys.e
    ymag = np.abs(sys.y(mode))
    m = sys.m
    out = np.empty((sys.n, m))
    for j in range(sys.n):
        for i in range(m):
            jj = m + j
            out[j, i] = (snap.t_coa1 * snap.k_coa2 * e[jj] * e[i] * ymag[jj, i] * sys.constants.omega_n
                         * math.cos(ang[jj] - ang[i]))
    return out


def relative_motion_decay(traj: Trajectory, sys: MultiMachineSystem, group1: Sequence[int],
                          group2: Sequence[int], t_clear: float, window: float = 2.0) -> float:
    """Late-to-early RMS ratio of the relative angle between two source groups.

    Each group angle is the inertia-weighted (generators) or inverse-droop
    weighted (inverters) mean of its members.  The early window starts at
    ``t_clear``; the late window ends at the last sample.  Smaller means
    faster decay of the post-fault oscillation.
    """
    ang = np.array([sys.angles(s) for s in traj.states])

    def weights(idx):
        w = []
        for k in idx:
            w.append(sys.generators[k].tj if k < sys.m else 1.0 / sys.inverters[k - sys.m].k)
        return np.array(w) / np.sum(w)

    rel = ang[:, list(group1)] @ weights(group1) - ang[:, list(group2)] @ weights(group2)
    post = traj.t >= t_clear
    t, rel = traj.t[post], rel[post]
    early = t <= t_clear + window
    late = t >= t[-1] - window
    mean = rel[late].mean()
    rms = lambda x: float(np.sqrt(np.mean((x - mean) ** 2)))  # noqa: E731
    return rms(rel[late]) / rms(rel[early])


# --- bus/branch cases and power flow --------------------------------------------


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    z: ComplexImpedance
    b_total: float = 0.0


@dataclass(frozen=True)
class Load:
    bus: int
    p: float
    q: float


@dataclass(frozen=True)
class Bus:
    id: int
    type: str  # slack | pv | pq
    v: float = 1.0
    p: float = 0.0


@dataclass(frozen=True)
class GridCase:
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    base_mva: float = 100.0
    generators: tuple[dict, ...] = ()
    source: str = ""

    def index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    def y_bus(self, extra_shunts: Mapping[int, complex] | None = None) -> np.ndarray:
        idx = self.index()
        branches = [(idx[b.from_bus], idx[b.to_bus], b.z.value) for b in self.branches]
        shunts: dict[int, complex] = {}
        for b in self.branches:
            for node in (b.from_bus, b.to_bus):
                shunts[idx[node]] = shunts.get(idx[node], 0) + 0.5j * b.b_total
        for bus, ysh in (extra_shunts or {}).items():
            shunts[idx[bus]] = shunts.get(idx[bus], 0) + ysh
        return admittance_matrix(len(self.buses), branches, shunts)


def load_case(data: Mapping) -> GridCase:
    buses = tuple(Bus(int(b["id"]), b["type"], float(b.get("v", 1.0)), float(b.get("p", 0.0))) for b in data["buses"])
    branches = tuple(
        Branch(int(b["from"]), int(b["to"]), ComplexImpedance(float(b["r"]), float(b["x"])), float(b.get("b", 0.0)))
        for b in data["branches"]
    )
    loads = tuple(Load(int(l["bus"]), float(l["p"]), float(l["q"])) for l in data.get("loads", ()))
    return GridCase(buses, branches, loads, float(data.get("base_mva", 100.0)),
                    tuple(data.get("generators", ())), data.get("source", ""))


def wscc9_case() -> GridCase:
    text = resources.files("gfm_stab").joinpath("data/wscc9.json").read_text()
    return load_case(json.loads(text))


class PowerFlowResult(NamedTuple):
    v: np.ndarray  # complex bus voltages, case bus order
    s_gen: dict[int, complex]  # bus id -> generated complex power
    mismatch: float


def solve_power_flow(case: GridCase, tol: float = 1e-12) -> PowerFlowResult:
    """Polar-form load flow with one slack and PV/PQ buses."""
    idx = case.index()
    nb = len(case.buses)
    y = case.y_bus()
    p_load = np.zeros(nb)
    q_load = np.zeros(nb)
    for ld in case.loads:
        p_load[idx[ld.bus]] += ld.p
        q_load[idx[ld.bus]] += ld.q
    types = [b.type for b in case.buses]
    if types.count("slack") != 1:
        raise ValueError("power flow needs exactly one slack bus")
    ang_idx = [i for i, t in enumerate(types) if t != "slack"]
    mag_idx = [i for i, t in enumerate(types) if t == "pq"]
    vm0 = np.array([b.v if b.type != "pq" else 1.0 for b in case.buses])

    def unpack(x):
        va = np.zeros(nb)
        vm = vm0.copy()
        va[ang_idx] = x[: len(ang_idx)]
        vm[mag_idx] = x[len(ang_idx) :]
        return vm * np.exp(1j * va)

    p_spec = np.array([b.p for b in case.buses]) - p_load
    q_spec = -q_load

    def mismatch(x):
        v = unpack(x)
        s = v * np.conj(y @ v)
        return np.concatenate([s.real[ang_idx] - p_spec[ang_idx], s.imag[mag_idx] - q_spec[mag_idx]])

    x0 = np.zeros(len(ang_idx) + len(mag_idx))
    x0[len(ang_idx) :] = 1.0
    x, _, ok, msg = fsolve(mismatch, x0, xtol=1e-14, full_output=True)
    res = float(np.max(np.abs(mismatch(x))))
    if ok != 1 and res > tol:
        raise RuntimeError(f"power flow did not converge: {msg}")
    if res > 1e-9:
        raise RuntimeError(f"power flow residual {res:.2e} too large")
    v = unpack(x)
    s = v * np.conj(y @ v)
    s_gen = {}
    for b in case.buses:
        i = idx[b.id]
        if b.type in ("slack", "pv"):
            s_gen[b.id] = complex(s[i] + p_load[i] + 1j * q_load[i])
    return PowerFlowResult(v, s_gen, res)


@dataclass(frozen=True)
class SourceSpec:
    """A source behind ``z_coupling`` at ``bus``.

    ``params`` supplies T_J/D (generators) or k (inverters); the internal
    voltage and power reference are taken from the load flow.  ``z_v`` is
    added to the coupling while the fault is on (inverters only).
    """

    bus: int
    kind: str  # generator | inverter
    z_coupling: ComplexImpedance
    tj: float = 0.0
    d: float = 0.0
    k: float = 0.0
    z_v: ComplexImpedance = ComplexImpedance(0.0, 0.0)
    name: str = ""


def build_multimachine(
    case: GridCase,
    sources: Sequence[SourceSpec],
    fault_bus: int,
    z_fault: ComplexImpedance,
    constants: GlobalConstants = GlobalConstants(),
    include_gen_damping: bool = True,
    slip_limit: float = math.pi,
    pf: PowerFlowResult | None = None,
) -> MultiMachineSystem:
    """Classical reduced model of ``case`` around its load-flow operating point."""
    pf = pf or solve_power_flow(case)
    idx = case.index()
    nb = len(case.buses)
    if fault_bus not in idx:
        raise ValueError(f"fault bus {fault_bus} not in case")
    ordered = [s for s in sources if s.kind == "generator"] + [s for s in sources if s.kind == "inverter"]
    if len(ordered) != len(sources):
        raise ValueError("source kind must be 'generator' or 'inverter'")
    emf = []
    for s in ordered:
        if s.bus not in pf.s_gen:
            raise ValueError(f"bus {s.bus} has no generation in the load flow")
        v = pf.v[idx[s.bus]]
        i = np.conj(pf.s_gen[s.bus] / v)
        emf.append(v + s.z_coupling.value * i)
    emf = np.array(emf)

    load_y = {}
    for ld in case.loads:
        v = pf.v[idx[ld.bus]]
        load_y[ld.bus] = load_y.get(ld.bus, 0) + np.conj(complex(ld.p, ld.q)) / abs(v) ** 2

    def reduced(mode: TopologyMode) -> np.ndarray:
        shunts = dict(load_y)
        if mode is TopologyMode.FAULT:
            if z_fault.value == 0:
                raise DegenerateNetworkError("zero fault impedance")
            shunts[fault_bus] = shunts.get(fault_bus, 0) + 1.0 / z_fault.value
        y = case.y_bus(shunts)
        ns = len(ordered)
        full = np.zeros((nb + ns, nb + ns), dtype=complex)
        full[:nb, :nb] = y
        for k, s in enumerate(ordered):
            z = s.z_coupling.value + (s.z_v.value if mode is TopologyMode.FAULT and s.kind == "inverter" else 0)
            if z == 0:
                raise DegenerateNetworkError(f"zero coupling impedance at bus {s.bus}")
            a, b = idx[s.bus], nb + k
            yb = 1.0 / z
            full[a, a] += yb
            full[b, b] += yb
            full[a, b] -= yb
            full[b, a] -= yb
        yr = kron_reduce(full, list(range(nb, nb + ns)))
        return 0.5 * (yr + yr.T)

    y_modes = {mode: reduced(mode) for mode in MODES}
    delta0 = np.angle(emf)
    e = np.abs(emf)
    y_pre = y_modes[TopologyMode.PRE_FAULT]
    p0 = K.multi_powers(delta0, e, y_pre.real.copy(), y_pre.imag.copy())
    gens, invs = [], []
    for k, s in enumerate(ordered):
        if s.kind == "generator":
            gens.append(SgParams(tj=s.tj, d=s.d, p_star=float(p0[k]), e=float(e[k])))
        else:
            invs.append(DroopParams(k=s.k, p_star=float(p0[k]), e=float(e[k])))
    names = tuple(s.name or f"{s.kind[:3]}@{s.bus}" for s in ordered)
    return MultiMachineSystem(tuple(gens), tuple(invs), y_modes, delta0, constants, include_gen_damping,
                              slip_limit, names)


def wscc9_sources(replace_g3: bool = False, k: float = 0.04, z_v: ComplexImpedance | None = None,
                  d: Sequence[float] = (0.0, 0.0, 0.0), x_inverter: float | None = None) -> list[SourceSpec]:
    """Generator (and optional inverter at bus 3) specs for the 9-bus case; T_J = 2H."""
    case = wscc9_case()
    out = []
    for i, g in enumerate(case.generators):
        x = float(g["xd_prime"])
        if replace_g3 and g["bus"] == 3:
            out.append(SourceSpec(3, "inverter", ComplexImpedance(0.0, x if x_inverter is None else x_inverter),
                                  k=k, z_v=z_v or ComplexImpedance(0.0, 0.0), name="inv3"))
        else:
            out.append(SourceSpec(int(g["bus"]), "generator", ComplexImpedance(0.0, x), tj=2.0 * float(g["h"]),
                                  d=float(d[i]), name=f"gen{g['bus']}"))
    return out
