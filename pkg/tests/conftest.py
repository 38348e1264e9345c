import os

import pytest
from hypothesis import HealthCheck, settings

from wlansandbox.wlan.scenario import Bss, Node, Scenario, canonical_scenario

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=200,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def isolated_bss(d_sta=3.0, power=23.0, load=float("inf")) -> Scenario:
    return Scenario(nodes=(Node("AP1", "AP", 0.0, 0.0, "1"), Node("STA1", "STA", d_sta, 0.0, "1")),
                    bss=(Bss("1", "AP1", ("STA1",), load, power),))


def colocated_pair(power=23.0) -> Scenario:
    nodes = (Node("AP1", "AP", 0.0, 0.0, "1"), Node("STA1", "STA", -3.0, 0.0, "1"),
             Node("AP2", "AP", 1.0, 0.0, "2"), Node("STA2", "STA", 4.0, 0.0, "2"))
    return Scenario(nodes=nodes, bss=(Bss("1", "AP1", ("STA1",), tx_power=power),
                                      Bss("2", "AP2", ("STA2",), tx_power=power)))


@pytest.fixture
def canonical():
    return canonical_scenario()


def pytest_terminal_summary(terminalreporter):
    import sys
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])
