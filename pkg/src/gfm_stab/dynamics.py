"""Fixed-step integration with fault events and outcome classification."""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .models import FirstOrderModel, SystemState, TwoSourceSystem
from .network import TopologyMode

TWO_PI = 2.0 * math.pi


class NonFiniteStateError(RuntimeError):
    def __init__(self, t: float):
        super().__init__(f"state became non-finite at t = {t:.6g} s")
        self.t = t


class InconclusiveError(RuntimeError):
    """Neither settled nor diverged within the horizon."""


@dataclass(frozen=True)
class EventSchedule:
    """Fault application and clearing times; ``fault_clear=None`` keeps the fault on."""

    fault_apply: float
    fault_clear: float | None = None

    def __post_init__(self):
        if self.fault_apply < 0:
            raise ValueError("fault_apply must be >= 0")
        if self.fault_clear is not None and not self.fault_clear > self.fault_apply:
            raise ValueError("fault_clear must be later than fault_apply")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4
    t_end: float = 10.0
    record_stride: int = 1
    method: str = "rk4"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be non-negative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")

    def steps(self, t: float, what: str = "time") -> int:
        """Number of steps to reach ``t``; ``t`` must sit on the step grid."""
        n = round(t / self.dt)
        if abs(n * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"{what} {t} is not a multiple of dt = {self.dt}")
        return int(n)


@dataclass(frozen=True)
class SettleCriteria:
    tol_delta: float = 1e-3
    tol_omega: float = 1e-5
    hold: float = 1.0
    max_periods: int = 4

    def packed(self, sep: float, dt: float) -> np.ndarray:
        return np.array(
            [1.0, sep, self.tol_delta, self.tol_omega, float(max(1, round(self.hold / dt))), TWO_PI * self.max_periods]
        )


_NO_SETTLE = np.zeros(6)


@dataclass(frozen=True)
class Event:
    t: float
    kind: str
    mode_before: TopologyMode
    mode_after: TopologyMode
    state_before: tuple
    state_after: tuple

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "kind": self.kind,
            "mode_before": self.mode_before.value,
            "mode_after": self.mode_after.value,
            "state_before": list(self.state_before),
            "state_after": list(self.state_after),
        }


@dataclass
class Trajectory:
    """Sampled states plus derived quantities; ``columns`` names the state columns."""

    t: np.ndarray
    states: np.ndarray
    columns: tuple[str, ...]
    modes: np.ndarray
    events: list[Event]
    stop: str = "horizon"
    extras: dict[str, np.ndarray] = field(default_factory=dict)
    dt: float = 0.0
    stride: int = 1

    def column(self, name: str) -> np.ndarray:
        if name in self.columns:
            return self.states[:, self.columns.index(name)]
        return self.extras[name]

    @property
    def delta(self) -> np.ndarray:
        return self.column("delta")

    @property
    def omega_e(self) -> np.ndarray:
        return self.column("omega_e")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def __len__(self) -> int:
        return len(self.t)


_MODE_CODE = {TopologyMode.PRE_FAULT: 0, TopologyMode.FAULT: 1, TopologyMode.POST_FAULT: 2}
MODES = (TopologyMode.PRE_FAULT, TopologyMode.FAULT, TopologyMode.POST_FAULT)


class _TwoSourceRunner:
    columns = ("delta", "omega_e")

    def __init__(self, system: TwoSourceSystem):
        self.system = system
        self._params = {m: system.model(m).params() for m in MODES}

    def initial(self, state0, mode: TopologyMode) -> np.ndarray:
        if isinstance(state0, SystemState):
            w = state0.omega_e
        else:
            d, w = (tuple(state0) + (None,))[:2]
            state0 = SystemState(float(d), None if w is None else float(w))
        if self.system.order == 1:
            w = float(self.system.model(mode).rate(state0.delta)) / self.system.constants.omega_n
        return np.array([state0.delta, 0.0 if w is None else w])

    def run(self, y, mode, dt, n, stride, step0, out, n_out, settle):
        p = self._params[mode]
        if self.system.order == 1:
            d, i, n_out, status, _ = K.first_order_run(y[0], p, dt, n, stride, step0, out, n_out, settle, 0)
            w = (p[0] + p[1] * math.cos(d) + p[2] * math.sin(d)) / p[3]
            return np.array([d, w]), i, n_out, status
        d, w, i, n_out, status, _ = K.swing_run(y[0], y[1], p, dt, n, stride, step0, out, n_out, settle, 0)
        return np.array([d, w]), i, n_out, status

    def jump(self, y, before, after) -> np.ndarray:
        if self.system.order == 1:
            p = self._params[after]
            return np.array([y[0], (p[0] + p[1] * math.cos(y[0]) + p[2] * math.sin(y[0])) / p[3]])
        return np.array([y[0], self.system.jump(float(y[0]), float(y[1]), before, after)])

    def derived(self, traj: Trajectory) -> dict[str, np.ndarray]:
        n = len(traj.t)
        out = {k: np.empty(n) for k in ("p1", "p2", "d_eq", "omega1", "omega2")}
        for code, mode in enumerate(MODES):
            sel = traj.modes == code
            if not sel.any():
                continue
            d, w = traj.states[sel, 0], traj.states[sel, 1]
            p1, p2 = self.system.powers(mode, d)
            out["p1"][sel], out["p2"][sel] = p1, p2
            model = self.system.model(mode)
            out["d_eq"][sel] = np.nan if isinstance(model, FirstOrderModel) else model.d_eq(d)
            w1, w2 = self.system.frequencies(mode, d, w)
            out["omega1"][sel], out["omega2"][sel] = w1, w2
        return out


def _runner_for(system):
    if isinstance(system, TwoSourceSystem):
        return _TwoSourceRunner(system)
    return system.make_runner()


def integrate(
    system,
    state0,
    cfg: IntegratorConfig,
    events: EventSchedule | None = None,
    *,
    initial_mode: TopologyMode = TopologyMode.PRE_FAULT,
    settle: SettleCriteria | None = None,
    sep_delta: float | None = None,
) -> Trajectory:
    """Integrate ``system`` from ``state0`` with classical RK4.

    Fault application switches to the faulted topology, clearing to the
    post-fault one; the frequency re-initialization happens at each switch
    with the angle held.  With ``settle`` (and ``sep_delta``) given, the run
    stops early once the final segment settles or diverges.
    """
    runner = _runner_for(system)
    dt, stride = cfg.dt, cfg.record_stride
    n_end = cfg.steps(cfg.t_end, "t_end")
    switches: list[tuple[int, str, TopologyMode]] = []
    if events is not None:
        switches.append((cfg.steps(events.fault_apply, "fault_apply"), "fault_apply", TopologyMode.FAULT))
        if events.fault_clear is not None:
            switches.append((cfg.steps(events.fault_clear, "fault_clear"), "fault_clear", TopologyMode.POST_FAULT))
    switches = [s for s in switches if s[0] <= n_end]
    if settle is not None and sep_delta is None:
        raise ValueError("settle criteria need sep_delta")

    y = runner.initial(state0, initial_mode)
    dim = y.shape[0]
    out = np.empty((n_end // stride + 3, dim + 1))
    n_out = 0
    mode = initial_mode
    step = 0
    ev_log: list[Event] = []
    mode_at: list[tuple[int, TopologyMode]] = [(0, mode)]
    stop = "horizon"

    def apply(at_step, kind, new_mode):
        nonlocal y, mode
        before = y
        y = runner.jump(y, mode, new_mode)
        ev_log.append(Event(at_step * dt, kind, mode, new_mode, tuple(map(float, before)), tuple(map(float, y))))
        mode = new_mode
        mode_at.append((at_step, new_mode))

    while switches and switches[0][0] == 0:
        _, kind, new_mode = switches.pop(0)
        apply(0, kind, new_mode)
    out[0, 0] = 0
    out[0, 1:] = y
    n_out = 1

    targets = [s for s in switches] + [(n_end, None, None)]
    for idx, (target, kind, new_mode) in enumerate(targets):
        n = target - step
        last = idx == len(targets) - 1
        packed = settle.packed(sep_delta, dt) if (settle is not None and last) else _NO_SETTLE
        if n > 0:
            y, done, n_out, status = runner.run(y, mode, dt, n, stride, step, out, n_out, packed)
            step += done
            if status == K.NONFINITE:
                raise NonFiniteStateError(step * dt)
            if status != K.HORIZON:
                stop = "settled" if status == K.SETTLED else "diverged"
                break
        if kind is not None:
            apply(target, kind, new_mode)
            if out[n_out - 1, 0] == target:
                out[n_out - 1, 1:] = y
    if out[n_out - 1, 0] != step:
        out[n_out, 0] = step
        out[n_out, 1:] = y
        n_out += 1

    data = out[:n_out]
    steps_rec = data[:, 0].astype(np.int64)
    modes = np.zeros(n_out, dtype=np.int8)
    for at, m in mode_at:
        modes[steps_rec >= at] = _MODE_CODE[m]
    traj = Trajectory(
        t=steps_rec * dt,
        states=data[:, 1:].copy(),
        columns=runner.columns,
        modes=modes,
        events=ev_log,
        stop=stop,
        dt=dt,
        stride=stride,
    )
    traj.extras = runner.derived(traj)
    return traj


# --- classification ------------------------------------------------------------


class OutcomeKind(str, enum.Enum):
    STABLE_SAME_PERIOD = "stable_same_period"
    STABLE_ADJACENT_PERIOD = "stable_adjacent_period"
    DIVERGED = "diverged"


@dataclass(frozen=True)
class Outcome:
    kind: OutcomeKind
    slips: int = 0
    settling_time: float | None = None

    @property
    def stable(self) -> bool:
        """Engineering stability: no pole slip."""
        return self.kind is OutcomeKind.STABLE_SAME_PERIOD

    @property
    def mathematically_stable(self) -> bool:
        return self.kind is not OutcomeKind.DIVERGED

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "slips": self.slips, "settling_time": self.settling_time}


def classify_outcome(traj: Trajectory, sep_delta: float, criteria: SettleCriteria = SettleCriteria()) -> Outcome:
    """Classify where a post-disturbance trajectory ends up relative to the SEP.

    Raises :class:`InconclusiveError` when the samples neither settle for
    ``criteria.hold`` seconds nor leave the ``max_periods`` band.
    """
    d = traj.delta
    w = traj.omega_e
    if traj.stop == "diverged" or not (np.all(np.isfinite(d)) and np.all(np.isfinite(w))):
        return Outcome(OutcomeKind.DIVERGED)
    rel = d - sep_delta
    if np.max(np.abs(rel)) > TWO_PI * criteria.max_periods:
        return Outcome(OutcomeKind.DIVERGED)
    k = int(math.floor(rel[-1] / TWO_PI + 0.5))
    inside = (np.abs(rel - TWO_PI * k) < criteria.tol_delta) & (np.abs(w) < criteria.tol_omega)
    if not inside[-1]:
        raise InconclusiveError(f"not settled by t = {traj.t[-1]:.3f} s; extend the horizon")
    outside = np.flatnonzero(~inside)
    first = outside[-1] + 1 if outside.size else 0
    held = traj.t[-1] - traj.t[first]
    slack = traj.stride * traj.dt + 1e-9
    if held < criteria.hold - slack:
        raise InconclusiveError(f"settled for only {held:.3f} s by t = {traj.t[-1]:.3f} s; extend the horizon")
    t_ref = traj.events[-1].t if traj.events else 0.0
    settling = max(0.0, float(traj.t[first]) - t_ref)
    if k == 0:
        return Outcome(OutcomeKind.STABLE_SAME_PERIOD, 0, settling)
    return Outcome(OutcomeKind.STABLE_ADJACENT_PERIOD, k, settling)


# --- output --------------------------------------------------------------------

TRAJECTORY_COLUMNS = ("t", "delta", "omega_e", "omega1", "omega2", "p1", "p2", "d_eq", "event_flag")


def write_trajectory_csv(traj: Trajectory, fh: IO[str], header: Iterable[str] = ()) -> None:
    for line in header:
        fh.write(f"# {line}\n")
    w = csv.writer(fh, lineterminator="\n")
    event_times = {round(e.t / traj.dt) for e in traj.events} if traj.dt else set()
    cols = [c for c in TRAJECTORY_COLUMNS[1:-1]]
    if "delta" not in traj.columns:
        cols = list(traj.columns) + sorted(traj.extras)
    w.writerow(["t", *cols, "event_flag"])
    arrays = [traj.column(c) for c in cols]
    for i, t in enumerate(traj.t):
        flag = 1 if traj.dt and round(t / traj.dt) in event_times else 0
        w.writerow([repr(float(t)), *(repr(float(a[i])) for a in arrays), flag])


def write_events_jsonl(events: Sequence[Event], fh: IO[str]) -> None:
    for e in events:
        fh.write(json.dumps(e.as_dict()) + "\n")
