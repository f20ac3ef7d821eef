import json
from importlib import resources
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightadopt.agents import AgentPreferences
from lightadopt.market import LampType
from lightadopt.scenarios import (
    BUILTIN_IDS,
    PREFERENCE_FIELDS,
    Ban,
    PreferenceIntervention,
    PriceIntervention,
    Scenario,
    ScenarioError,
    apply_preference_intervention,
    apply_to_population,
    builtin,
    parse_scenario_file,
    parse_scenario_text,
    resolve,
    serialize,
    with_campaign_multiplier,
)


def shipped(name):
    return resources.files("lightadopt").joinpath(f"data/scenarios/{name}.json")


def test_no_regulation_is_empty():
    s = builtin("no_regulation")
    assert s.price == () and s.ban == () and s.preference == ()


def test_builtin_definitions():
    soft = builtin("soft_ban")
    assert soft.price == (PriceIntervention(LampType.INCANDESCENT, 2013, 2018, 0.10),) and soft.ban == ()
    hard = builtin("hard_ban")
    assert hard.price == (PriceIntervention(LampType.INCANDESCENT, 2012, 2014, 0.20),)
    assert hard.ban == (Ban(LampType.INCANDESCENT, 2015),)
    info = builtin("info_campaign")
    assert info.preference == (
        PreferenceIntervention(("financial_energy_focus", "environmental_energy_focus"), 2012, 1.5),
    )


def test_soft_ban_info_is_union():
    combo, soft, info = builtin("soft_ban_info"), builtin("soft_ban"), builtin("info_campaign")
    assert sorted(map(repr, combo.price + combo.ban + combo.preference)) == sorted(
        map(repr, soft.price + soft.ban + soft.preference + info.price + info.ban + info.preference)
    )


def test_unknown_id_lists_valid_ids():
    with pytest.raises(ScenarioError) as err:
        builtin("no_such")
    for sid in BUILTIN_IDS:
        assert sid in str(err.value)


def test_preference_intervention_examples():
    iv = PreferenceIntervention(("financial_energy_focus",), 2012, 1.5)
    prefs = SimpleNamespace(financial_energy_focus=0.4)
    apply_preference_intervention(prefs, iv)
    assert prefs.financial_energy_focus == pytest.approx(0.6)
    prefs = SimpleNamespace(financial_energy_focus=0.8)
    apply_preference_intervention(prefs, iv)
    assert prefs.financial_energy_focus == 1.0


def test_multiplier_one_is_identity_on_columns():
    cols = SimpleNamespace(financial_energy_focus=np.linspace(0, 1, 11), environmental_energy_focus=np.linspace(1, 0, 11))
    before = (cols.financial_energy_focus.copy(), cols.environmental_energy_focus.copy())
    iv = with_campaign_multiplier(builtin("info_campaign"), 1.0).preference[0]
    apply_preference_intervention(cols, iv)
    assert np.array_equal(cols.financial_energy_focus, before[0])
    assert np.array_equal(cols.environmental_energy_focus, before[1])


def test_apply_to_population_clamps_every_agent():
    agents = [
        SimpleNamespace(preferences=AgentPreferences(10, 0.5, 0.5, f, 0.9, 0.5, 0.5, 0.8, 0.4, 0.2, 0.5))
        for f in (0.1, 0.5, 0.9)
    ]
    apply_to_population(agents, builtin("info_campaign").preference[0])
    assert [a.preferences.financial_energy_focus for a in agents] == pytest.approx([0.15, 0.75, 1.0])
    assert all(a.preferences.environmental_energy_focus == 1.0 for a in agents)


@pytest.mark.parametrize("sid", BUILTIN_IDS)
def test_shipped_files_match_builtins(sid):
    text = shipped(sid).read_text(encoding="utf-8")
    assert parse_scenario_text(text) == builtin(sid)
    assert serialize(builtin(sid)) == text


def test_resolve_path_and_id(tmp_path):
    p = tmp_path / "mine.json"
    p.write_text(serialize(builtin("hard_ban")).replace('"hard_ban"', '"mine"'))
    assert resolve(str(p)).ban == builtin("hard_ban").ban
    assert resolve("soft_ban") == builtin("soft_ban")
    assert parse_scenario_file(p).id == "mine"


def test_negative_led_rate_is_valid():
    doc = {"id": "cheap_led", "price": [{"type": "LED", "from": 2010, "to": 2012, "rate": -0.1}]}
    s = parse_scenario_text(json.dumps(doc))
    assert s.price[0].rate == -0.1


def test_halogen_rejected_with_field_path():
    doc = {"id": "x", "ban": [{"type": "halogen", "year": 2015}]}
    with pytest.raises(ScenarioError, match="ban/0/type"):
        parse_scenario_text(json.dumps(doc), "x.json")


def test_unknown_keys_and_bad_json_rejected():
    with pytest.raises(ScenarioError, match="colour"):
        parse_scenario_text(json.dumps({"id": "x", "colour": 1}))
    with pytest.raises(ScenarioError, match="line 2"):
        parse_scenario_text('{"id": "x",\n oops}')
    with pytest.raises(ScenarioError, match="precedes"):
        parse_scenario_text(json.dumps({"id": "x", "price": [{"type": "CFL", "from": 2015, "to": 2012, "rate": 0.1}]}))


_types = st.sampled_from(list(LampType))
_years = st.integers(2006, 2025)
_price = st.builds(
    lambda t, a, b, r: PriceIntervention(t, min(a, b), max(a, b), r),
    _types,
    _years,
    _years,
    st.floats(-0.99, 5, allow_nan=False),
)
_ban = st.builds(Ban, _types, _years)
_pref = st.builds(
    PreferenceIntervention,
    st.lists(st.sampled_from(PREFERENCE_FIELDS), min_size=1, max_size=3).map(tuple),
    _years,
    st.floats(0, 10, allow_nan=False),
)
_scenario = st.builds(
    Scenario,
    st.text(min_size=1, max_size=12),
    st.lists(_price, max_size=3).map(tuple),
    st.lists(_ban, max_size=2).map(tuple),
    st.lists(_pref, max_size=2).map(tuple),
)


@settings(max_examples=200, deadline=None)
@given(_scenario)
def test_round_trip_random_scenarios(s):
    assert parse_scenario_text(serialize(s)) == s
