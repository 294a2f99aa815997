import io
import math

import numpy as np
import pytest

from gfm_stab.equilibria import bounding_ueps, principal_sep
from gfm_stab.models import SwingModel
from gfm_stab.network import TopologyMode
from gfm_stab.region import (
    EnergyFunction,
    Window,
    densify,
    energy_level_boundary,
    hausdorff,
    is_stable_point,
    level_set_between,
    membership,
    reference_window,
    stratified_samples,
    trace_stability_boundary,
    write_membership_csv,
)

from conftest import hybrid, smib

WN = 100 * math.pi


def pre(system):
    m = system.model(TopologyMode.PRE_FAULT)
    sep = principal_sep(m).delta
    return m, sep


def test_window_and_samples():
    w = reference_window(0.2)
    assert w.area == pytest.approx(4 * math.pi * 0.2)
    pts = stratified_samples(w, 400, seed=3)
    assert pts.shape == (400, 2)
    assert np.all(w.contains(pts[:, 0], pts[:, 1]))
    np.testing.assert_array_equal(pts, stratified_samples(w, 400, seed=3))
    with pytest.raises(ValueError):
        stratified_samples(w, 399)


def test_densify_and_hausdorff():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert np.max(np.diff(densify(a, 0.1)[:, 0])) <= 0.1 + 1e-15
    b = a + [0.0, 0.25]
    assert hausdorff(a, b) == pytest.approx(0.25)


def test_energy_is_conserved_along_flow():
    m, sep = pre(smib(d1=0.0))
    ef = EnergyFunction(m, sep)
    assert ef(sep, 0.0) == pytest.approx(0.0, abs=1e-15)
    d, w = 1.0, 0.01
    dd, dw = m.rhs(d, w)
    h = 1e-6
    grad_d = (ef(d + h, w) - ef(d - h, w)) / (2 * h)
    grad_w = (ef(d, w + h) - ef(d, w - h)) / (2 * h)
    assert grad_d * dd + grad_w * dw == pytest.approx(0.0, abs=1e-6)
    assert ef.rate(d, w) == 0.0


def test_trace_rejects_non_saddle():
    m, sep = pre(hybrid())
    with pytest.raises(ValueError):
        trace_stability_boundary(m, principal_sep(m), reference_window(sep))


def test_boundary_points_lie_on_level_set_when_undamped():
    m, sep = pre(smib(d1=0.0))
    lo, hi = bounding_ueps(m, sep)
    b = trace_stability_boundary(m, hi, reference_window(sep))
    ef = EnergyFunction(m, sep)
    closed = [k for k, e in b.exits.items() if e == "closed"]
    assert closed
    pts = b.branches[closed[0]]
    assert np.max(np.abs(ef(pts[:, 0], pts[:, 1]) - ef(hi.delta, 0.0))) < 1e-8


def test_level_contour_matches_analytic_level():
    m, sep = pre(smib(d1=0.0))
    lo, hi = bounding_ueps(m, sep)
    ef = EnergyFunction(m, sep)
    c = energy_level_boundary(ef, hi, reference_window(sep), resolution=400)
    pts = level_set_between(c, lo.delta, hi.delta)
    assert len(pts) > 100
    assert np.all((pts[:, 0] > lo.delta) & (pts[:, 0] <= hi.delta))
    with pytest.raises(ValueError):
        energy_level_boundary(EnergyFunction(*pre(hybrid())), hi, reference_window(sep))


def test_is_stable_point():
    m, sep = pre(hybrid())
    assert is_stable_point(m, (sep + 0.5, 0.0), sep).stable
    assert not is_stable_point(m, (sep + 0.5, 0.08), sep).stable


def test_membership_agrees_with_forward_simulation():
    m, sep = pre(hybrid())
    pts = np.array([[sep + 0.5, 0.0], [sep + 0.5, 0.08], [sep - 1.0, -0.02], [sep + 2.5, 0.03]])
    mem = membership(m, pts, sep)
    ref = [is_stable_point(m, p, sep).stable for p in pts]
    assert mem.stable.tolist() == ref
    assert mem.undecided == 0


def test_membership_energy_rule_for_undamped():
    m, sep = pre(smib(d1=0.0))
    mem = membership(m, np.array([[sep, 0.0], [sep, 1.0]]), sep)
    assert mem.stable.tolist() == [True, False]


def test_membership_csv():
    buf = io.StringIO()
    write_membership_csv(np.array([[0.1, 0.0]]), np.array([0]), buf, ["h"])
    assert buf.getvalue() == "# h\ndelta,omega_e,label\n0.1,0.0,0\n"


def test_custom_window_contains():
    w = Window(0.0, 1.0, -1.0, 1.0)
    assert w.contains(0.5, 0.0) and not w.contains(1.5, 0.0)
