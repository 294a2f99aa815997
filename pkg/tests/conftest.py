import math

import pytest

from gfm_stab import scenario as sc
from gfm_stab.models import DroopParams, SgParams, TwoSourceSystem
from gfm_stab.network import ComplexImpedance, ThreeBusNetwork, ZERO

Z_BASE = 110.0**2 / 100.0


def prototype_network(z_v=ComplexImpedance(0.0, 0.75), z_v1=ZERO, **changes) -> ThreeBusNetwork:
    net = ThreeBusNetwork(
        ComplexImpedance(0.05, 0.44),
        ComplexImpedance(0.10, 0.30),
        ComplexImpedance(0.82, 0.57),
        ComplexImpedance.from_ohm(0.01, 0.0, Z_BASE),
        z_v=z_v,
        z_v1=z_v1,
    )
    return net.replace(**changes) if changes else net


def hybrid(k2=0.04, d1=1.5, tj=3.0, **kw) -> TwoSourceSystem:
    return TwoSourceSystem("hybrid", prototype_network(), SgParams(tj, d1, 0.5, 1.1), DroopParams(k2, 0.3, 1.1), **kw)


def smib(d1=1.5) -> TwoSourceSystem:
    return TwoSourceSystem("smib", prototype_network(), SgParams(3.0, d1, 0.5, 1.1), DroopParams(0.0, 0.3, 1.1))


@pytest.fixture
def hybrid_system():
    return hybrid()


@pytest.fixture
def smib_system():
    return smib()


@pytest.fixture(params=sc.SHIPPED)
def shipped_name(request):
    return request.param


TAU = 2 * math.pi


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
