import io
import json
import math

import numpy as np
import pytest

from gfm_stab.dynamics import (
    EventSchedule,
    InconclusiveError,
    IntegratorConfig,
    OutcomeKind,
    SettleCriteria,
    Trajectory,
    classify_outcome,
    integrate,
    write_events_jsonl,
    write_trajectory_csv,
)
from gfm_stab.equilibria import principal_sep
from gfm_stab.network import TopologyMode
from gfm_stab.region import AutonomousSwing

from conftest import hybrid


def sep_of(system):
    return principal_sep(system.model(TopologyMode.PRE_FAULT)).delta


def test_config_validation():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(ValueError):
        IntegratorConfig(record_stride=0)
    with pytest.raises(ValueError):
        EventSchedule(0.5, 0.4)
    with pytest.raises(ValueError):
        IntegratorConfig(dt=1e-3).steps(0.0005)


def test_stays_at_sep_without_events(hybrid_system):
    sep = sep_of(hybrid_system)
    traj = integrate(hybrid_system, (sep, 0.0), IntegratorConfig(dt=1e-3, t_end=5.0))
    assert np.max(np.abs(traj.delta - sep)) < 1e-12
    assert np.max(np.abs(traj.omega_e)) < 1e-14


@pytest.mark.parametrize("stride", [1, 7, 100])
def test_row_count_follows_stride(hybrid_system, stride):
    cfg = IntegratorConfig(dt=1e-4, t_end=2.0, record_stride=stride)
    traj = integrate(hybrid_system, (sep_of(hybrid_system), 0.0), cfg)
    steps = 20000
    expected = steps // stride + 1 + (steps % stride != 0)
    assert len(traj) == expected
    assert traj.t[-1] == pytest.approx(2.0)


def test_event_times_and_modes(hybrid_system):
    cfg = IntegratorConfig(dt=1e-4, t_end=1.0, record_stride=10)
    traj = integrate(hybrid_system, (sep_of(hybrid_system), 0.0), cfg, EventSchedule(0.1, 0.3))
    assert [e.kind for e in traj.events] == ["fault_apply", "fault_clear"]
    assert [e.t for e in traj.events] == pytest.approx([0.1, 0.3])
    for e in traj.events:
        assert e.state_before[0] == e.state_after[0]
        assert e.state_before[1] != e.state_after[1]
    assert set(np.unique(traj.modes)) == {0, 1, 2}
    assert np.all(np.diff(traj.modes) >= 0)


def test_jump_matches_droop_law(hybrid_system):
    s = hybrid_system
    cfg = IntegratorConfig(dt=1e-4, t_end=0.6)
    traj = integrate(s, (sep_of(s), 0.0), cfg, EventSchedule(0.0, 0.5))
    k = s.source2.k
    for e in traj.events:
        d = e.state_before[0]
        _, p_b = s.powers(e.mode_before, d)
        _, p_a = s.powers(e.mode_after, d)
        assert abs((e.state_after[1] - e.state_before[1]) - k * (p_a - p_b)) < 1e-12


def test_fault_at_time_zero(hybrid_system):
    cfg = IntegratorConfig(dt=1e-4, t_end=0.1)
    traj = integrate(hybrid_system, (sep_of(hybrid_system), 0.0), cfg, EventSchedule(0.0))
    assert traj.modes[0] == 1
    assert traj.omega_e[0] != 0.0


def test_first_order_state_tracks_rate():
    from gfm_stab.models import DroopParams, TwoSourceSystem
    from conftest import prototype_network

    s = TwoSourceSystem("two_inverter", prototype_network(), DroopParams(0.04, 0.5, 1.1), DroopParams(0.04, 0.3, 1.1))
    m = s.model(TopologyMode.PRE_FAULT)
    traj = integrate(s, (0.0, None), IntegratorConfig(dt=1e-4, t_end=1.0))
    assert traj.omega_e[0] == pytest.approx(float(m.rate(0.0)) / m.omega_n)
    # first-order flow: no overshoot, monotone approach
    assert np.all(np.diff(traj.delta) * np.sign(m.rate(0.0)) >= 0)


def _fake(delta, omega, events=()):
    t = np.arange(len(delta)) * 0.01
    return Trajectory(t, np.column_stack([delta, omega]), ("delta", "omega_e"), np.zeros(len(t), np.int8),
                      list(events), dt=0.01, stride=1)


def test_classify_same_and_adjacent():
    n = 300
    assert classify_outcome(_fake(np.full(n, 0.2), np.zeros(n)), 0.2).kind is OutcomeKind.STABLE_SAME_PERIOD
    out = classify_outcome(_fake(np.full(n, 0.2 + 2 * math.pi), np.zeros(n)), 0.2)
    assert out.kind is OutcomeKind.STABLE_ADJACENT_PERIOD and out.slips == 1
    out = classify_outcome(_fake(np.full(n, 0.2 - 2 * math.pi), np.zeros(n)), 0.2)
    assert out.slips == -1


def test_classify_diverged_and_inconclusive():
    n = 300
    d = np.linspace(0, 40, n)
    assert classify_outcome(_fake(d, np.ones(n)), 0.0).kind is OutcomeKind.DIVERGED
    with pytest.raises(InconclusiveError):
        classify_outcome(_fake(0.3 * np.sin(np.arange(n)), np.ones(n) * 1e-3), 0.0)
    # settled but not for long enough
    with pytest.raises(InconclusiveError):
        classify_outcome(_fake(np.r_[np.ones(250), np.zeros(50)], np.zeros(n)), 0.0, SettleCriteria(hold=1.0))


def test_early_stop_when_settled():
    s = hybrid()
    sep = sep_of(s)
    cfg = IntegratorConfig(dt=1e-4, t_end=60.0, record_stride=100)
    traj = integrate(s, (sep + 0.3, 0.0), cfg, settle=SettleCriteria(), sep_delta=sep)
    assert traj.stop == "settled"
    assert traj.t[-1] < 60.0


def test_nonfinite_state_raises():
    from gfm_stab.dynamics import NonFiniteStateError
    from gfm_stab.models import SwingModel

    m = SwingModel(float("nan"), 0.0, -1.0, 0.0, 0.0, 0.0, 3.0, 100 * math.pi)
    with pytest.raises(NonFiniteStateError):
        integrate(AutonomousSwing(m), (0.0, 0.0), IntegratorConfig(dt=1e-3, t_end=1.0))


def test_outputs(hybrid_system):
    cfg = IntegratorConfig(dt=1e-3, t_end=0.5, record_stride=10)
    traj = integrate(hybrid_system, (sep_of(hybrid_system), 0.0), cfg, EventSchedule(0.0, 0.2))
    buf = io.StringIO()
    write_trajectory_csv(traj, buf, ["gfm-stab test"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# gfm-stab test"
    assert lines[1].startswith("t,delta,omega_e")
    assert "\r" not in buf.getvalue()
    ev = io.StringIO()
    write_events_jsonl(traj.events, ev)
    recs = [json.loads(x) for x in ev.getvalue().splitlines()]
    assert recs[1]["kind"] == "fault_clear" and recs[1]["mode_after"] == "post_fault"
