import dataclasses
import random

import pytest
from hypothesis import given, settings, strategies as st

from strategies import scenarios
from wlansandbox.adapter import (REFERENCE_CAPABILITIES, AdapterError, AdapterRunner, Collect,
                                 Configure, IllegalState, InvalidValue, ReferenceBackend, Start,
                                 State, Status, Stop, UnsupportedParameter, capabilities, dispatch,
                                 replay)
from wlansandbox.sim import seconds
from wlansandbox.wlan.dcf import simulate_scenario
from wlansandbox.wlan.scenario import canonical_scenario

CANON = canonical_scenario()


def test_start_then_collect_matches_engine():
    be = ReferenceBackend()
    assert dispatch(be, Start(CANON, seconds(10), 1)).state is State.FINISHED
    assert dispatch(be, Collect()).report == simulate_scenario(CANON, seconds(10), 1)


def test_collect_before_start():
    with pytest.raises(IllegalState):
        dispatch(ReferenceBackend(), Collect())


def test_stop_is_idempotent():
    be = ReferenceBackend()
    assert dispatch(be, Stop()).state is State.IDLE
    dispatch(be, Start(CANON, 1000, 0))
    assert dispatch(be, Stop()).state is State.IDLE
    assert dispatch(be, Stop()).state is State.IDLE
    with pytest.raises(IllegalState):
        dispatch(be, Collect())


def test_start_requires_idle():
    be = ReferenceBackend()
    dispatch(be, Start(CANON, 1000, 0))
    with pytest.raises(IllegalState):
        dispatch(be, Start(CANON, 1000, 0))


def test_configure_while_running():
    be = ReferenceBackend()
    be.state = State.RUNNING      # batch runs never yield mid-run, so force it
    with pytest.raises(IllegalState):
        dispatch(be, Configure({"tx_power.1": 7}))


def test_configure_validation():
    be = ReferenceBackend()
    with pytest.raises(UnsupportedParameter):
        dispatch(be, Configure({"cca_threshold": -70}))
    with pytest.raises(InvalidValue):
        dispatch(be, Configure({"tx_power.1": "loud"}))
    with pytest.raises(InvalidValue):
        dispatch(be, Configure({"sim.duration": 1.5}))
    dispatch(be, Configure({"tx_power.9": 7}))
    with pytest.raises(InvalidValue):        # unknown BSS surfaces at Start
        dispatch(be, Start(CANON, 1000, 0))
    assert be.state is State.IDLE


def test_configured_overrides_apply():
    be = ReferenceBackend()
    dispatch(be, Configure({"tx_power.1": 7, "tx_power.2": 7, "traffic_load.1": 5,
                            "sim.duration": seconds(1)}))
    rep = dispatch(be, Start(CANON, None, 2)).report
    expect = simulate_scenario(CANON.with_powers({"1": 7, "2": 7}).with_loads({"1": 5}), seconds(1), 2)
    assert rep == expect


def test_status_has_no_side_effects():
    be = ReferenceBackend()
    dispatch(be, Start(CANON, 1000, 0))
    before = (be.state, be.report)
    assert dispatch(be, Status()).state is State.FINISHED
    assert (be.state, be.report) == before


def test_capabilities():
    be = ReferenceBackend()
    caps = capabilities(be)
    assert caps == capabilities(be) == REFERENCE_CAPABILITIES
    assert "tx_power.*" in caps.parameters and caps.monitoring_mode == "batch"
    assert caps.allows("tx_power.bss7") and not caps.allows("tx_power") and not caps.allows("foo.1")
    assert {"start", "stop", "configure", "status", "collect"} <= set(caps.commands)


def test_runner_gates_before_dispatch():
    class Narrow(ReferenceBackend):
        def capabilities(self):
            return dataclasses.replace(REFERENCE_CAPABILITIES, parameters=("sim.duration",))

    be = Narrow()
    with pytest.raises(UnsupportedParameter):
        AdapterRunner(be).configure({"tx_power.1": 7})
    assert be.transcript == []


KEYS = ["tx_power.1", "tx_power.2", "tx_power.3", "traffic_load.1", "sim.duration", "bogus", "tx_power"]
VALUES = [3, 7, 8, 23, -1, 0, 1000, "saturated", "x", 2.5, None]


def random_command(rnd):
    kind = rnd.randrange(5)
    if kind == 0:
        return Start(CANON, rnd.choice([None, 500, 2000]), rnd.randrange(4))
    if kind == 1:
        return Configure({rnd.choice(KEYS): rnd.choice(VALUES) for _ in range(rnd.randrange(4))})
    return [Stop(), Status(), Collect()][kind - 2]


LEGAL = {(State.IDLE, State.IDLE), (State.IDLE, State.FINISHED), (State.FINISHED, State.FINISHED),
         (State.FINISHED, State.IDLE)}


@settings(max_examples=5)
@given(st.integers(0, 2**32))
def test_random_command_sequences(seed):
    rnd = random.Random(seed)
    seq = [random_command(rnd) for _ in range(1000)]
    be = ReferenceBackend()
    for cmd in seq:
        before = be.state
        try:
            dispatch(be, cmd)
        except AdapterError:
            assert be.state is before
        assert (before, be.state) in LEGAL
    assert [e.seq for e in be.transcript] == list(range(len(seq)))
    again = replay(be.transcript)
    assert (again.state, again.report, again.overrides) == (be.state, be.report, be.overrides)
    assert again.transcript_csv() == be.transcript_csv()


def test_transcript_csv():
    be = ReferenceBackend()
    dispatch(be, Stop())
    with pytest.raises(IllegalState):
        dispatch(be, Collect())
    lines = be.transcript_csv().splitlines()
    assert lines[0] == "seq,command,args,result"
    assert lines[1] == "0,stop,,ok" and lines[2] == "1,collect,,IllegalState"


@settings(max_examples=20)
@given(scenarios(), st.integers(0, 2**32))
def test_runner_is_neutral(s, seed):
    assert AdapterRunner()(s, seconds(0.2), seed) == simulate_scenario(s, seconds(0.2), seed)
