import dataclasses
import json

import pytest

from wlansandbox.sandbox.underlay import (EstimationError, UnderlayHandle, extract_features,
                                          fit_path_loss, load_underlay, prepare_sandbox)
from wlansandbox.sim import seconds
from wlansandbox.wlan.scenario import Bss, Node, Scenario, ScenarioError, canonical_scenario


def exact(s=None):
    return UnderlayHandle(s or canonical_scenario(), seed=0, exponent_jitter=0.0, traffic_jitter=0.0)


def test_estimate_without_jitter():
    u = exact()
    spec = extract_features(u)
    assert u.true_exponent == 3.5
    assert spec.exponent == pytest.approx(3.5, abs=0.05)
    assert spec.pl0 == pytest.approx(40.0, abs=0.1)


def test_no_probes_is_an_error():
    with pytest.raises(EstimationError):
        extract_features(exact(), probes=[])


def test_single_distance_is_an_error():
    with pytest.raises(EstimationError):
        fit_path_loss([(10.0, 75.0), (10.0, 76.0)])


@pytest.mark.parametrize("seed", range(10))
def test_estimate_with_jitter(seed):
    u = UnderlayHandle(canonical_scenario(), seed=seed)
    assert abs(u.true_exponent - 3.5) <= 0.2
    assert abs(extract_features(u).exponent - u.true_exponent) <= 0.3


def test_walls_removed_before_fit():
    base = Scenario(nodes=(Node("AP1", "AP", 0, 0, "1"), Node("S1", "STA", 4, 0, "1"),
                           Node("AP2", "AP", 25, 0, "2"), Node("S2", "STA", 25, 6, "2")),
                    bss=(Bss("1", "AP1", ("S1",)), Bss("2", "AP2", ("S2",))),
                    walls=(("AP1", "AP2", 2), ("S1", "S2", 1)))
    spec = extract_features(exact(base))
    assert spec.exponent == pytest.approx(3.5, abs=1e-6)
    assert spec.fit_residual_db == pytest.approx(0.0, abs=1e-6)


def test_round_trip_through_sandbox():
    u = UnderlayHandle(canonical_scenario(), seed=4)
    s = prepare_sandbox(extract_features(u))
    base = canonical_scenario()
    assert s.nodes == base.nodes and s.bss_ids == base.bss_ids
    assert s.power_levels == base.power_levels and s.default_power == base.default_power
    assert abs(s.channel.exponent - u.true_exponent) < 0.05


def test_prepare_rejects_incomplete_spec():
    spec = extract_features(exact())
    with pytest.raises(ScenarioError):
        prepare_sandbox(dataclasses.replace(spec, power_levels=()))
    with pytest.raises(ScenarioError):
        prepare_sandbox(dataclasses.replace(spec, exponent=float("nan")))


def test_perturbations_are_fixed_and_hidden():
    a = UnderlayHandle(canonical_scenario(), seed=7)
    b = UnderlayHandle(canonical_scenario(), seed=7)
    assert a.true_exponent == b.true_exponent
    nodes, bss, walls = a.inventory()
    assert all(x.saturated for x in bss)
    assert a.measure(seconds(0.5), 1) == b.measure(seconds(0.5), 1)


def test_traffic_jitter_only_touches_finite_loads():
    base = canonical_scenario().with_loads({"1": 20.0})
    u = UnderlayHandle(base, seed=3, traffic_jitter=0.1)
    loads = u.offered_loads()
    assert 18.0 <= loads["1"] <= 22.0 and loads["2"] == float("inf")


def test_apply_validates_and_records():
    u = exact()
    with pytest.raises(ValueError):
        u.apply({"1": 8.0})
    with pytest.raises(KeyError):
        u.apply({"9": 7.0})
    assert u.config == {"1": 23.0, "2": 23.0} and u.deployments == []
    u.apply({"1": 7.0, "2": 7.0})
    assert u.config == {"1": 7.0, "2": 7.0} and len(u.deployments) == 1


def test_load_underlay_file(tmp_path):
    p = tmp_path / "u.json"
    p.write_text(json.dumps({"scenario": "canonical", "seed": 5}))
    u = load_underlay(p)
    assert u.seed == 5 and u.true_exponent == UnderlayHandle(canonical_scenario(), 5).true_exponent
    p.write_text('{\n  "seed": 1,\n  "colour": 2\n}\n')
    with pytest.raises(ScenarioError) as err:
        load_underlay(p)
    assert err.value.key == "colour" and err.value.line == 3
