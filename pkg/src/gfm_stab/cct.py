"""Critical clearing time search.

A probe starts from the pre-fault SEP, applies the fault (with the frequency
re-initialization), clears it after ``t_clear`` seconds and classifies the
post-fault run.  Only convergence inside the present period counts as
stable; the search is a coarse forward scan followed by bisection on the
integration step grid, so the refined values are bit-reproducible.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .dynamics import (
    EventSchedule,
    InconclusiveError,
    IntegratorConfig,
    Outcome,
    OutcomeKind,
    SettleCriteria,
    Trajectory,
    classify_outcome,
    integrate,
)
from .equilibria import principal_sep
from .models import SystemState, TwoSourceSystem
from .network import TopologyMode

log = logging.getLogger(__name__)


class CctSearchError(RuntimeError):
    """The bracket does not contain a stable-to-unstable transition."""


class UndefinedCctError(CctSearchError):
    """No post-fault (or pre-fault) SEP, so no clearing time is critical."""


@dataclass(frozen=True)
class FaultScenario:
    """A system, its fault timing and the search settings.

    ``horizon`` is the simulated time after clearing; an inconclusive probe
    is retried once with ``extended_horizon``.
    """

    system: Any
    fault_apply: float = 0.0
    t_min: float = 0.0
    t_max: float = 1.5
    dt: float = 1e-4
    horizon: float = 20.0
    extended_horizon: float = 60.0
    record_stride: int = 100
    settle: SettleCriteria = SettleCriteria()

    def __post_init__(self):
        if not 0 <= self.t_min < self.t_max:
            raise ValueError("need 0 <= t_min < t_max")

    @property
    def two_source(self) -> bool:
        return isinstance(self.system, TwoSourceSystem)

    def pre_fault_state(self):
        if not self.two_source:
            return self.system.initial_state()
        try:
            sep = principal_sep(self.system.model(TopologyMode.PRE_FAULT)).delta
        except LookupError as exc:
            raise UndefinedCctError(f"pre-fault SEP: {exc}") from None
        return SystemState(sep, None if self.system.order == 1 else 0.0)

    def post_fault_sep(self) -> float | None:
        if not self.two_source:
            return None
        try:
            return principal_sep(self.system.model(TopologyMode.POST_FAULT)).delta
        except LookupError as exc:
            raise UndefinedCctError(f"post-fault SEP: {exc}") from None

    def config(self, t_end: float, stride: int | None = None) -> IntegratorConfig:
        n = round(t_end / self.dt)
        return IntegratorConfig(dt=self.dt, t_end=n * self.dt, record_stride=stride or self.record_stride)


def fault_on_trajectory(sc: FaultScenario, t_max: float, stride: int = 1) -> Trajectory:
    """Sustained fault from the pre-fault SEP for ``t_max`` seconds."""
    cfg = sc.config(sc.fault_apply + t_max, stride)
    return integrate(sc.system, sc.pre_fault_state(), cfg, EventSchedule(sc.fault_apply))


def _probe(sc: FaultScenario, t_clear: float, horizon: float) -> tuple[Outcome, Trajectory]:
    clear_at = sc.fault_apply + t_clear
    events = EventSchedule(sc.fault_apply, clear_at) if t_clear > 0 else None
    cfg = sc.config(clear_at + horizon)
    state0 = sc.pre_fault_state()
    if sc.two_source:
        sep = sc.post_fault_sep()
        mode = TopologyMode.PRE_FAULT if events is not None else TopologyMode.POST_FAULT
        traj = integrate(sc.system, state0, cfg, events, initial_mode=mode, settle=sc.settle, sep_delta=sep)
        return classify_outcome(traj, sep, sc.settle), traj
    traj = integrate(sc.system, state0, cfg, events)
    return sc.system.classify(traj), traj


def clear_and_classify(sc: FaultScenario, t_clear: float, return_trajectory: bool = False):
    """Outcome of clearing the fault ``t_clear`` seconds after it was applied."""
    try:
        outcome, traj = _probe(sc, t_clear, sc.horizon)
    except InconclusiveError:
        log.info("probe at %.4f s inconclusive, extending horizon to %.0f s", t_clear, sc.extended_horizon)
        try:
            outcome, traj = _probe(sc, t_clear, sc.extended_horizon)
        except InconclusiveError as exc:
            raise InconclusiveError(f"clearing time {t_clear:.4f} s: {exc}") from None
    return (outcome, traj) if return_trajectory else outcome


@dataclass
class CctReport:
    last_stable: float
    first_unstable: float
    cct_refined: float
    coarse_step: float
    refine_tol: float
    classification_at_bracket: dict[str, dict]
    scan: list[tuple[float, dict]] = field(default_factory=list)
    mathematical_cct: float | None = None
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "last_stable": self.last_stable,
            "first_unstable": self.first_unstable,
            "cct_refined": self.cct_refined,
            "coarse_step": self.coarse_step,
            "refine_tol": self.refine_tol,
            "classification_at_bracket": self.classification_at_bracket,
            "scan": [{"t_clear": t, "outcome": o} for t, o in self.scan],
            "mathematical_cct": self.mathematical_cct,
            "notes": self.notes,
        }


def compute_cct(
    sc: FaultScenario, coarse: float = 0.01, refine_tol: float = 1e-3, mathematical: bool = False
) -> CctReport:
    """Largest stable clearing time, to within ``refine_tol``.

    With ``mathematical`` set the scan also continues to the first diverging
    clearing time (any convergence, including a slipped period, counts as
    stable there); it is reported as None when no probe in the bracket
    diverges.
    """
    dt = sc.dt
    step_of = lambda t: int(round(t / dt))  # noqa: E731
    c_steps = step_of(coarse)
    if c_steps < 1 or abs(c_steps * dt - coarse) > 1e-9:
        raise ValueError("coarse step must be a positive multiple of dt")
    lo = step_of(sc.t_min)
    hi_limit = step_of(sc.t_max)
    cache: dict[int, Outcome] = {}

    def outcome(n: int) -> Outcome:
        if n not in cache:
            try:
                cache[n] = clear_and_classify(sc, n * dt)
            except InconclusiveError as exc:
                raise InconclusiveError(f"CCT search aborted: {exc}") from None
        return cache[n]

    notes: list[str] = []
    scan: list[tuple[float, dict]] = []
    first = outcome(lo)
    scan.append((round(lo * dt, 10), first.as_dict()))
    if not first.stable:
        raise CctSearchError(f"unstable already at t_min = {sc.t_min} s ({first.kind.value})")
    n = lo
    hi = None
    while n + c_steps <= hi_limit:
        n += c_steps
        o = outcome(n)
        scan.append((round(n * dt, 10), o.as_dict()))
        if not o.stable:
            hi = n
            break
    if hi is None:
        raise CctSearchError(f"still stable at t_max = {sc.t_max} s")
    lo = hi - c_steps
    tol_steps = max(1, int(math.floor(refine_tol / dt + 1e-9)))
    while hi - lo > tol_steps:
        mid = (lo + hi) // 2
        if outcome(mid).stable:
            lo = mid
        else:
            hi = mid

    math_cct = None
    if mathematical:
        m = None
        for t, o in scan:
            if o["kind"] == OutcomeKind.DIVERGED.value:
                m = step_of(t)
                break
        k = step_of(scan[-1][0])
        while m is None and k + c_steps <= hi_limit:
            k += c_steps
            o = outcome(k)
            scan.append((round(k * dt, 10), o.as_dict()))
            if o.kind is OutcomeKind.DIVERGED:
                m = k
        if m is not None:
            mlo, mhi = m - c_steps, m
            while mhi - mlo > tol_steps:
                mid = (mlo + mhi) // 2
                if outcome(mid).mathematically_stable:
                    mlo = mid
                else:
                    mhi = mid
            math_cct = round(mlo * dt, 10)
        else:
            notes.append("no diverging probe in the bracket; mathematical CCT undefined")

    kinds = [o["kind"] for _, o in scan if step_of(_) <= hi]
    stable_flags = [k == OutcomeKind.STABLE_SAME_PERIOD.value for k in kinds]
    if any(not a and b for a, b in zip(stable_flags, stable_flags[1:])):
        notes.append("non-monotone outcomes in the coarse scan")
    return CctReport(
        last_stable=round(lo * dt, 10),
        first_unstable=round(hi * dt, 10),
        cct_refined=round(lo * dt, 10),
        coarse_step=coarse,
        refine_tol=refine_tol,
        classification_at_bracket={"last_stable": outcome(lo).as_dict(), "first_unstable": outcome(hi).as_dict()},
        scan=scan,
        mathematical_cct=math_cct,
        notes=notes,
    )


def outcome_sequence(sc: FaultScenario, times) -> list[Outcome]:
    return [clear_and_classify(sc, float(t)) for t in np.asarray(times, dtype=float)]
