import math

import numpy as np
import pytest

from gfm_stab.models import (
    DroopParams,
    NonUniformDampingError,
    SgParams,
    SystemKind,
    TwoSourceSystem,
    coupled_rhs,
    damping_gain,
    frequency_jump,
    power_outputs,
    two_generator_reduce,
)
from gfm_stab.network import TopologyMode, reduce_three_bus

from conftest import hybrid, prototype_network


def test_parameter_validation():
    with pytest.raises(ValueError):
        SgParams(0.0, 1.5, 0.5, 1.1)
    with pytest.raises(ValueError):
        SgParams(3.0, -1.0, 0.5, 1.1)
    with pytest.raises(ValueError):
        DroopParams(-0.1, 0.3, 1.1)


def test_kind_checks_device_types():
    with pytest.raises(TypeError):
        TwoSourceSystem("hybrid", prototype_network(), DroopParams(0.04, 0.5, 1.1), DroopParams(0.04, 0.3, 1.1))
    with pytest.raises(ValueError):
        TwoSourceSystem("smib", prototype_network(), SgParams(3, 1.5, 0.5, 1.1), DroopParams(0.04, 0.3, 1.1))


def test_smib_is_zero_droop_limit():
    a = hybrid(k2=0.0).model(TopologyMode.PRE_FAULT)
    b = TwoSourceSystem("smib", prototype_network(), SgParams(3, 1.5, 0.5, 1.1), DroopParams(0, 0.3, 1.1))
    b = b.model(TopologyMode.PRE_FAULT)
    for d in np.linspace(-3, 3, 13):
        assert a.rhs(d, 0.01) == pytest.approx(b.rhs(d, 0.01), abs=1e-15)


def test_hybrid_matches_coupled_equations():
    s = hybrid()
    red = s.admittances(TopologyMode.PRE_FAULT)
    m = s.model(TopologyMode.PRE_FAULT)
    sg, inv, g = s.source1, s.source2, s.constants
    for d, w_dev in [(0.3, 0.002), (1.7, -0.01), (-2.2, 0.0)]:
        w1 = 1.0 + w_dev
        dd1, dw1, dd2 = coupled_rhs((d, w1, 0.0), sg, inv, red, g)
        _, p2 = power_outputs(red, sg.e, inv.e, d)
        dp2 = -(sg.e * inv.e * red.y12_mag) * -math.sin(d - red.gamma) * (dd1 - dd2)
        w_e = w1 - (1.0 + inv.k * (inv.p_star - p2))
        dd, dw = m.rhs(d, w_e)
        assert dd == pytest.approx(dd1 - dd2, rel=1e-12)
        # d(omega_e)/dt = d(omega1)/dt + k dP2/dt
        assert dw == pytest.approx(dw1 + inv.k * dp2, rel=1e-10, abs=1e-14)


def test_damping_gain_positive_at_sep():
    m = hybrid().model(TopologyMode.PRE_FAULT)
    assert damping_gain(m) > 0


def test_two_generator_needs_uniform_damping():
    red = reduce_three_bus(prototype_network(), TopologyMode.PRE_FAULT)
    g = hybrid().constants
    with pytest.raises(NonUniformDampingError):
        two_generator_reduce(SgParams(3, 1.5, 0.5, 1.1), SgParams(3, 3.0, 0.3, 1.1), red, g)
    m = two_generator_reduce(SgParams(3, 1.5, 0.5, 1.1), SgParams(3, 1.5, 0.3, 1.1), red, g)
    assert m.t_jeq == pytest.approx(1.5)
    assert m.d_const == pytest.approx(0.75)


def test_frequency_jump_formula():
    s = hybrid()
    red_post = s.admittances(TopologyMode.POST_FAULT)
    w = frequency_jump(1.01, 0.8, s.source2, red_post, s.source1.e, s.constants)
    _, p2 = power_outputs(red_post, 1.1, 1.1, 0.8)
    assert w == pytest.approx(0.01 + 0.04 * (p2 - 0.3), abs=1e-15)


def test_jump_is_identity_without_droop_or_flag():
    assert hybrid(frequency_jump=False).jump(1.0, 0.01, TopologyMode.FAULT, TopologyMode.POST_FAULT) == 0.01
    s = TwoSourceSystem("two_generator", prototype_network(), SgParams(3, 1.5, 0.5, 1.1), SgParams(3, 1.5, 0.3, 1.1))
    assert s.kind is SystemKind.TWO_GENERATOR
    assert s.jump(1.0, 0.01, TopologyMode.FAULT, TopologyMode.POST_FAULT) == 0.01


def test_two_inverter_coefficients():
    s = TwoSourceSystem("two_inverter", prototype_network(), DroopParams(0.04, 0.5, 1.1), DroopParams(0.04, 0.3, 1.1))
    m = s.model(TopologyMode.PRE_FAULT)
    red = s.admittances(TopologyMode.PRE_FAULT)
    p1, p2 = power_outputs(red, 1.1, 1.1, 0.6)
    expect = s.constants.omega_n * 0.04 * ((0.5 - p1) - (0.3 - p2))
    assert m.rate(0.6) == pytest.approx(expect, rel=1e-12)
    assert m.b == pytest.approx(0.0)  # equal droops cancel the conductance term
