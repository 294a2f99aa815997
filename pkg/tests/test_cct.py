import numpy as np
import pytest

from gfm_stab.cct import CctSearchError, FaultScenario, clear_and_classify, compute_cct, fault_on_trajectory, outcome_sequence
from gfm_stab.dynamics import InconclusiveError, OutcomeKind, SettleCriteria
from gfm_stab.equilibria import principal_sep
from gfm_stab.network import TopologyMode

from conftest import hybrid, smib


def test_zero_clearing_time_is_stable():
    assert clear_and_classify(FaultScenario(hybrid()), 0.0).kind is OutcomeKind.STABLE_SAME_PERIOD


def test_hybrid_outcomes_either_side():
    sc = FaultScenario(hybrid())
    a, b = outcome_sequence(sc, [0.64, 0.66])
    assert a.kind is OutcomeKind.STABLE_SAME_PERIOD
    assert b.kind is OutcomeKind.STABLE_ADJACENT_PERIOD and b.slips == 1


def test_fault_on_angle_rises():
    sc = FaultScenario(smib())
    traj = fault_on_trajectory(sc, 0.5, stride=10)
    sep = principal_sep(smib().model(TopologyMode.PRE_FAULT)).delta
    assert traj.delta[0] == pytest.approx(sep)
    assert np.all(np.diff(traj.delta) > 0)


def test_bracket_errors():
    with pytest.raises(CctSearchError, match="t_max"):
        compute_cct(FaultScenario(hybrid(), t_max=0.3))
    with pytest.raises(CctSearchError, match="t_min"):
        compute_cct(FaultScenario(hybrid(), t_min=0.9, t_max=1.2))
    with pytest.raises(ValueError):
        FaultScenario(hybrid(), t_min=0.5, t_max=0.5)


def test_inconclusive_propagates():
    # a settle tolerance no trajectory can meet
    sc = FaultScenario(hybrid(), horizon=1.0, extended_horizon=2.0, settle=SettleCriteria(tol_omega=1e-30))
    with pytest.raises(InconclusiveError):
        clear_and_classify(sc, 0.1)
    with pytest.raises(InconclusiveError, match="aborted"):
        compute_cct(sc)


def test_report_is_reproducible_and_refined():
    sc = FaultScenario(smib())
    a = compute_cct(sc)
    b = compute_cct(sc)
    assert a.as_dict() == b.as_dict()
    assert a.first_unstable - a.last_stable <= 1e-3 + 1e-12
    assert a.cct_refined == a.last_stable
    assert a.scan[0][0] == 0.0
    assert a.classification_at_bracket["last_stable"]["kind"] == "stable_same_period"


def test_zero_droop_hybrid_equals_smib():
    assert compute_cct(FaultScenario(hybrid(k2=0.0))).cct_refined == compute_cct(FaultScenario(smib())).cct_refined
