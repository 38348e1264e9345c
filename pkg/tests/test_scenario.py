import json
import math

import pytest
from hypothesis import given

from strategies import scenarios
from wlansandbox.wlan.scenario import (Bss, Node, Scenario, ScenarioError, canonical_scenario,
                                       load_scenario, save_scenario, scenario_from_dict,
                                       scenario_to_dict)


def test_canonical_layout(canonical):
    s = canonical
    assert s.bss_ids == ("1", "2")
    assert s.power_levels == (3, 7, 11, 15, 19, 23) and s.default_power == 23
    assert s.node("AP1").distance_to(s.node("STA1")) == 3
    assert s.node("AP1").distance_to(s.node("AP2")) == 30
    assert all(b.saturated and b.tx_power == 23 for b in s.bss)
    assert s.walls == ()


def test_canonical_carrier_sense(canonical):
    assert canonical.rx_dbm("AP2", "AP1", 23) == pytest.approx(-68.70, abs=0.01)
    assert canonical.cca_busy("AP1", [("AP2", 23)])
    assert canonical.rx_dbm("AP2", "AP1", 7) == pytest.approx(-84.70, abs=0.01)
    assert not canonical.cca_busy("AP1", [("AP2", 7)])


def test_listener_cannot_transmit(canonical):
    with pytest.raises(ValueError):
        canonical.cca_busy("AP1", [("AP1", 23)])


@given(scenarios())
def test_dict_round_trip(s):
    assert scenario_from_dict(json.loads(json.dumps(scenario_to_dict(s)))) == s


def test_file_round_trip(tmp_path, canonical):
    p = tmp_path / "s.json"
    save_scenario(canonical, p)
    assert load_scenario(p) == canonical


def test_optional_sections_default():
    d = scenario_to_dict(canonical_scenario())
    for key in ("channel", "mcs_table", "mac", "power_levels", "default_power", "walls"):
        d.pop(key)
    assert scenario_from_dict(d) == canonical_scenario()


def test_malformed_json_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "nodes": [\n    {"id": "AP1",\n  ]\n}\n')
    with pytest.raises(ScenarioError) as err:
        load_scenario(p)
    assert err.value.line is not None and err.value.line >= 3


def test_bad_value_names_key_and_line(tmp_path):
    d = scenario_to_dict(canonical_scenario())
    d["channel"]["exponent"] = "steep"
    text = json.dumps(d, indent=2)
    p = tmp_path / "bad.json"
    p.write_text(text)
    with pytest.raises(ScenarioError) as err:
        load_scenario(p)
    line = next(i for i, ln in enumerate(text.splitlines(), 1) if '"exponent"' in ln)
    assert err.value.key == "channel.exponent" and err.value.line == line
    assert "channel.exponent" in str(err.value) and f"line {line}" in str(err.value)


@pytest.mark.parametrize("mutate, key", [
    (lambda d: d.pop("nodes"), "nodes"),
    (lambda d: d["bss"][0].update(traffic_load=-1), "bss.traffic_load"),
    (lambda d: d["bss"][0].update(tx_power=8), "bss.tx_power"),
    (lambda d: d["bss"][0].update(ap="STA1"), "bss.ap"),
    (lambda d: d.update(default_power=9), "default_power"),
    (lambda d: d.update(power_levels=[]), "power_levels"),
    (lambda d: d["mac"].update(cw_min=0), "mac.cw_min"),
    (lambda d: d["mac"].update(bogus=1), "mac.bogus"),
    (lambda d: d.update(extra=1), "extra"),
    (lambda d: d["nodes"][0].update(role="router"), "nodes.role"),
])
def test_invalid_content_names_field(mutate, key):
    d = scenario_to_dict(canonical_scenario())
    mutate(d)
    with pytest.raises(ScenarioError) as err:
        scenario_from_dict(d)
    assert err.value.key == key


def test_unassociated_station_rejected():
    with pytest.raises(ScenarioError):
        Scenario(nodes=(Node("AP1", "AP", 0, 0, "1"), Node("S", "STA", 1, 0, "1")),
                 bss=(Bss("1", "AP1", ()),))


def test_saturated_serializes_as_keyword():
    d = scenario_to_dict(canonical_scenario())
    assert d["bss"][0]["traffic_load"] == "saturated"
    d["bss"][0]["traffic_load"] = 12.5
    assert scenario_from_dict(d).bss[0].traffic_load == 12.5


def test_walls_add_loss():
    s = Scenario(nodes=(Node("AP1", "AP", 0, 0, "1"), Node("S", "STA", 10, 0, "1")),
                 bss=(Bss("1", "AP1", ("S",)),), walls=(("AP1", "S", 2),))
    assert s.path_loss("AP1", "S") == pytest.approx(85.0)


def test_with_powers_and_bounds(canonical):
    s = canonical.with_powers({"1": 7})
    assert s.powers == {"1": 7.0, "2": 23.0}
    assert s.with_default_powers().powers == {"1": 23.0, "2": 23.0}
    assert s.reward_bound("1") == 129.0
    assert s.with_loads({"1": 20}).reward_bound("1") == 20.0
    with pytest.raises(KeyError):
        canonical.with_powers({"9": 7})
    assert math.isinf(canonical.bss[0].traffic_load)
