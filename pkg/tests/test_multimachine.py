import math

import numpy as np
import pytest

from gfm_stab import scenario as sc
from gfm_stab.dynamics import EventSchedule, IntegratorConfig, OutcomeKind, integrate
from gfm_stab.models import DroopParams, GlobalConstants, SgParams
from gfm_stab.multimachine import (
    MultiMachineSystem,
    build_multimachine,
    coa_damping_matrix,
    coa_snapshot,
    mm_rhs,
    relative_motion_decay,
    solve_power_flow,
    wscc9_case,
    wscc9_sources,
)
from gfm_stab.network import ComplexImpedance, TopologyMode

Z_FAULT = ComplexImpedance(0.01 / 529.0, 0.0)


@pytest.fixture(scope="module")
def original():
    return build_multimachine(wscc9_case(), wscc9_sources(), 9, Z_FAULT)


@pytest.fixture(scope="module")
def replaced():
    return build_multimachine(wscc9_case(), wscc9_sources(True, z_v=ComplexImpedance(0.0, 0.75)), 9, Z_FAULT)


def test_power_flow_textbook_values():
    pf = solve_power_flow(wscc9_case())
    assert pf.mismatch < 1e-10
    idx = wscc9_case().index()
    v = {b: pf.v[i] for b, i in idx.items()}
    # classical published load-flow solution of the 9-bus case
    for bus, mag, ang in [(4, 1.0258, -2.2168), (5, 0.9956, -3.9888), (6, 1.0127, -3.6874),
                          (7, 1.0258, 3.7197), (8, 1.0159, 0.7275), (9, 1.0324, 1.9667)]:
        assert abs(v[bus]) == pytest.approx(mag, abs=1e-4)
        assert math.degrees(np.angle(v[bus])) == pytest.approx(ang, abs=1e-3)
    assert pf.s_gen[1].real == pytest.approx(0.7164, abs=1e-4)


def test_internal_emfs(original):
    np.testing.assert_allclose(original.e, [1.0566, 1.0502, 1.0170], atol=1e-4)
    np.testing.assert_allclose(np.degrees(original.delta0), [2.27, 19.73, 13.17], atol=1e-2)


def test_equilibrium_at_start(original, replaced):
    for s in (original, replaced):
        assert np.max(np.abs(mm_rhs(s.initial_state(), s))) < 1e-12
        y = s.y(TopologyMode.PRE_FAULT)
        assert np.allclose(y, y.T)


def test_gamma_is_negative_admittance_angle(original):
    y = original.y(TopologyMode.PRE_FAULT)
    np.testing.assert_allclose(original.gamma(TopologyMode.PRE_FAULT), -np.angle(y))


def test_shape_validation():
    y = np.eye(2, dtype=complex)
    with pytest.raises(ValueError):
        MultiMachineSystem([SgParams(3, 0, 0.5, 1.0)], [], {m: y for m in TopologyMode}, np.zeros(1))


def test_single_pair_reduces_to_two_source_powers():
    y12 = 1 / (0.1 + 0.5j)
    y = np.array([[y12 + 0.2, -y12], [-y12, y12 + 0.1]])
    s = MultiMachineSystem([SgParams(3, 0, 0.5, 1.0)], [DroopParams(0.04, 0.3, 1.1)],
                           {m: y for m in TopologyMode}, np.array([0.3, 0.0]))
    p = s.powers(TopologyMode.PRE_FAULT, np.array([0.3, 0.0]))
    v = np.array([np.exp(0.3j), 1.1])
    ref = (v * np.conj(y @ v)).real
    np.testing.assert_allclose(p, ref, rtol=1e-12)


def test_inverter_frequency_jumps_at_fault(replaced):
    y0 = replaced.initial_state()
    before = replaced.inverter_frequencies(TopologyMode.PRE_FAULT, y0)
    after = replaced.inverter_frequencies(TopologyMode.FAULT, y0)
    assert before == pytest.approx([1.0], abs=1e-12)
    assert abs(after[0] - before[0]) > 1e-3
    traj = integrate(replaced, y0, IntegratorConfig(dt=1e-4, t_end=0.3, record_stride=10), EventSchedule(0.0, 0.2))
    assert traj.extras["inv3_omega"][0] == pytest.approx(after[0], abs=1e-12)


def test_slip_detection(original):
    long = integrate(original, original.initial_state(), IntegratorConfig(dt=1e-4, t_end=5.6, record_stride=100),
                     EventSchedule(0.0, 0.6))
    assert original.classify(long).kind is OutcomeKind.DIVERGED
    short = integrate(original, original.initial_state(), IntegratorConfig(dt=1e-4, t_end=5.1, record_stride=100),
                      EventSchedule(0.0, 0.1))
    assert original.classify(short).kind is OutcomeKind.STABLE_SAME_PERIOD


def test_coa_quantities(replaced):
    y0 = replaced.initial_state()
    snap = coa_snapshot(y0, replaced)
    assert snap.omega_rel == pytest.approx(0.0, abs=1e-12)
    assert snap.t_coa1 == pytest.approx(2 * (23.64 + 6.40))
    d = coa_damping_matrix(y0, replaced)
    assert d.shape == (1, 2) and np.all(d > 0)


def test_replacement_damps_relative_motion(original, replaced):
    cfg = IntegratorConfig(dt=1e-4, t_end=10.2, record_stride=10)
    ratios = []
    for s in (original, replaced):
        tr = integrate(s, s.initial_state(), cfg, EventSchedule(0.0, 0.2))
        ratios.append(relative_motion_decay(tr, s, [0, 1], [2], 0.2))
    assert ratios[1] < ratios[0]


def test_shipped_configs_build_multimachine():
    for name in ("wscc9-original", "wscc9-hybrid"):
        s = sc.build_system(sc.shipped(name))
        assert isinstance(s, MultiMachineSystem)
        assert s.constants == GlobalConstants(omega_n=100 * math.pi)
