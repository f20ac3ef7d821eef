import math
from dataclasses import astuple, replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lightadopt.agents import (
    ARCHETYPE_CSV_HEADER,
    Agent,
    AgentPreferences,
    Archetype,
    ConfigurationError,
    DynamicsParams,
    LampInstance,
    SatisfactionParams,
    archetypes_to_csv,
    draw_lifetime,
    generate_archetypes,
    instantiate_population,
    jitter,
    parse_archetypes,
    peer_distance,
    personal_scores,
    preference_columns,
    satisfaction,
    satisfaction_matrix,
    social_shares,
    update_after_replacement,
)
from lightadopt.market import LampType, default_catalog, market_state, parse_catalog

CAT = default_catalog()
STATE0 = market_state(CAT, 0)
TYPES = tuple(m.lamp_type for m in CAT)
UNCALIBRATED = SatisfactionParams(
    w_price=0.35, w_efficiency=0.20, w_colour=0.20, w_ramp=0.15, w_lifetime=0.10, price_reference=30.0,
    experience_weight=0.3, social_scale=0.5,
)


def make_agent(prefs=None, experience=(0.8, 0.45, 0.25), certainty=0.7):
    prefs = prefs or AgentPreferences(20, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.8, 0.45, 0.25, 0.5)
    return Agent(
        id=0,
        archetype=0,
        preferences=prefs,
        inventory=[LampInstance(18, 4.0)],
        experience=list(experience),
        certainty=certainty,
        lamp_types=TYPES,
    )


def hand_satisfaction(prefs, exp, model, price, eff, shares, p):
    """Spreadsheet-style evaluation, one line per term."""
    s_price = min(1.0, max(0.0, 1 - price / p.price_reference))
    s_eff = eff
    s_col = 1 - model.colour_discrepancy
    s_ramp = 1 - min(model.ramp_up, p.ramp_reference) / p.ramp_reference
    s_life = min(model.mean_lifetime, p.lifetime_reference) / p.lifetime_reference
    w_price = p.w_price * (1 + prefs.financial_energy_focus)
    w_eff = p.w_efficiency * (prefs.financial_energy_focus + prefs.environmental_energy_focus)
    w_col = p.w_colour * (1 - prefs.colour_tolerance)
    w_ramp = p.w_ramp * (1 - prefs.functional_tolerance)
    w_life = p.w_lifetime
    num = w_price * s_price + w_eff * s_eff + w_col * s_col + w_ramp * s_ramp + w_life * s_life
    personal = num / (w_price + w_eff + w_col + w_ramp + w_life)
    t = model.lamp_type.index
    blend = p.experience_weight * exp[t] + (1 - p.experience_weight) * personal
    sigma = p.social_scale * prefs.social_mindedness
    return min(1.0, max(0.0, (1 - sigma) * blend + sigma * shares[t]))


# --------------------------------------------------------------------------- archetypes


def test_generated_archetypes_follow_stated_ranges():
    arch = generate_archetypes(rng=np.random.default_rng(5))
    assert len(arch) == 87
    for a in arch:
        assert 10 <= a.lamps_needed <= 40
        assert 0.6 <= a.baseline_satisfaction_incandescent <= 1.0
        assert 0.2 <= a.baseline_satisfaction_cfl <= 0.7
        assert 0.0 <= a.baseline_satisfaction_led <= 0.5
        assert all(0 <= v <= 1 for v in astuple(a)[1:])


def test_archetype_csv_round_trip_and_validation():
    arch = generate_archetypes(5, np.random.default_rng(1))
    text = archetypes_to_csv(arch)
    assert text.splitlines()[0] == ",".join(ARCHETYPE_CSV_HEADER)
    assert parse_archetypes(text) == arch
    bad = text.replace(text.splitlines()[1], "0," + ",".join(text.splitlines()[1].split(",")[1:]))
    with pytest.raises(ConfigurationError):
        parse_archetypes(bad)
    with pytest.raises(ConfigurationError):
        parse_archetypes("lamps,x\n1,2\n")


def test_single_archetype_row():
    arch = generate_archetypes(1, np.random.default_rng(0))
    assert len(parse_archetypes(archetypes_to_csv(arch))) == 1


# --------------------------------------------------------------------------- instantiation


def test_jitter_example_and_zero_field():
    a = Archetype(20, 0.8, 0.0, 0.5, 0.5, 0.5, 0.5, 0.8, 0.4, 0.2, 0.5)
    rng = np.random.default_rng(0)
    for _ in range(2000):
        p = jitter(a, rng)
        assert 0.76 < p.functional_tolerance < 0.84
        assert p.colour_tolerance == 0.0
        assert 19 <= p.lamps_needed <= 21


def test_jitter_bounds_over_many_draws():
    rng = np.random.default_rng(11)
    arch = generate_archetypes(87, np.random.default_rng(2))
    violations = 0
    for k in range(100_000 // 50):
        a = arch[k % len(arch)]
        src = np.array(astuple(a)[1:])
        for _ in range(50):
            v = np.array(astuple(jitter(a, rng))[1:])
            upper = np.minimum(1.0, 1.05 * src)
            inside = (v > 0.95 * src) & ((v < upper) | (upper == 1.0) & (v <= 1.0))
            violations += int((~inside[src > 0]).sum())
    assert violations == 0


def test_population_shape_and_initial_state():
    agents = instantiate_population(generate_archetypes(rng=np.random.default_rng(0)), 1000, np.random.default_rng(1), STATE0)
    assert len(agents) == 1000
    assert all(0 <= a.archetype < 87 for a in agents)
    for a in agents[:200]:
        assert len(a.inventory) == a.preferences.lamps_needed
        # experience starts at the baselines
        assert a.experience == [
            a.preferences.baseline_satisfaction_incandescent,
            a.preferences.baseline_satisfaction_cfl,
            a.preferences.baseline_satisfaction_led,
        ]
        counts = a.type_counts()
        majority = int(np.argmax(counts))
        assert a.certainty == pytest.approx(min(1.0, 0.5 + 0.5 * a.experience[majority]))
        # only stocked ("Y") models at the start
        assert all(CAT[l.model_id].initially_available for l in a.inventory)
        assert all(0 < l.remaining_lifetime for l in a.inventory)


def test_initial_type_mix_follows_baselines():
    # one archetype, so the expected type shares are its normalised baselines (LED not stocked)
    a = Archetype(40, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.9, 0.3, 0.4, 0.5)
    agents = instantiate_population([a], 2000, np.random.default_rng(4), STATE0)
    counts = np.sum([ag.type_counts() for ag in agents], axis=0)
    shares = counts / counts.sum()
    assert shares[2] == 0
    assert shares[0] == pytest.approx(0.9 / 1.2, abs=0.01)


def test_empty_archetypes_rejected():
    with pytest.raises(ConfigurationError):
        instantiate_population([], 10, np.random.default_rng(0), STATE0)


def test_lifetime_mean_and_std():
    z = np.random.default_rng(123).standard_normal(100_000)
    draws = np.array([draw_lifetime(125.0, x) for x in z])
    assert abs(draws.mean() - 125) < 1
    assert abs(draws.std() - 25) < 1
    assert draw_lifetime(8.0, -10.0) == 0.5


# --------------------------------------------------------------------------- satisfaction


def test_satisfaction_matches_hand_evaluation():
    rng = np.random.default_rng(9)
    for params in (UNCALIBRATED, SatisfactionParams()):
        for _ in range(20):
            prefs = AgentPreferences(20, *rng.random(10))
            exp = rng.random(3)
            agent = make_agent(prefs, exp)
            context = [LampType.INCANDESCENT] * 3 + [LampType.LED]
            shares = [0.75, 0.0, 0.25]
            for m in CAT:
                got = satisfaction(agent, m.id, STATE0, context, params)
                want = hand_satisfaction(prefs, exp, m, STATE0.price[m.id], STATE0.efficiency[m.id], shares, params)
                assert got == pytest.approx(want, abs=1e-12)


def test_cheap_incandescent_beats_expensive_led_at_start():
    agent = make_agent()
    for params in (UNCALIBRATED, SatisfactionParams()):
        assert satisfaction(agent, 18, STATE0, None, params) > satisfaction(agent, 0, STATE0, None, params)
        mid = agent.preferences
        by_hand_inc = hand_satisfaction(mid, agent.experience, CAT[18], 1.40, 0.50, [0, 0, 0], params)
        by_hand_led = hand_satisfaction(mid, agent.experience, CAT[0], 30.0, 0.63, [0, 0, 0], params)
        assert by_hand_inc > by_hand_led


def test_full_tolerance_zeroes_colour_and_ramp():
    cat = parse_catalog(
        "type,price_eur,efficiency_pct,colour_pct,rampup_s,lifetime_months,available\n"
        "CFL,5.00,70,5,1,50,Y\n"
        "CFL,5.00,70,40,90,50,Y\n"
    )
    state = market_state(cat, 0)
    prefs = AgentPreferences(10, 1.0, 1.0, 0.5, 0.5, 0.3, 0.5, 0.5, 0.5, 0.5, 0.5)
    agent = make_agent(prefs, (0.5, 0.5, 0.5))
    agent.lamp_types = tuple(m.lamp_type for m in cat)
    assert satisfaction(agent, 0, state) == satisfaction(agent, 1, state)
    fussy = make_agent(replace(prefs, colour_tolerance=0.0), (0.5, 0.5, 0.5))
    assert satisfaction(fussy, 0, state) > satisfaction(fussy, 1, state)


def test_convex_combination_identity():
    prefs = AgentPreferences(10, 0.3, 0.6, 0.2, 0.7, 0.0, 0.5, 0.5, 0.5, 0.5, 0.5)
    cols = preference_columns([make_agent(prefs)])
    for c in (0.0, 0.37, 1.0):
        scores = np.full((19, 5), c)
        assert np.allclose(personal_scores(cols, scores, SatisfactionParams()), c)


def test_unknown_model_is_lookup_error():
    with pytest.raises(LookupError):
        satisfaction(make_agent(), 19, STATE0)


def test_matrix_agrees_with_scalar():
    agents = instantiate_population(generate_archetypes(10, np.random.default_rng(0)), 30, np.random.default_rng(0), STATE0)
    cols = preference_columns(agents)
    exp = np.array([a.experience for a in agents])
    context = [LampType.CFL, LampType.INCANDESCENT, LampType.INCANDESCENT]
    shares = np.tile(social_shares(context), (len(agents), 1))
    state = market_state(CAT, 100)
    S = satisfaction_matrix(cols, exp, shares, state)
    for i, a in enumerate(agents):
        for m in range(19):
            assert S[i, m] == pytest.approx(satisfaction(a, m, state, context), abs=1e-12)


# --------------------------------------------------------------------------- peers and learning


def test_peer_distance_examples():
    a = AgentPreferences(20, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5)
    assert peer_distance(a, a) == 0
    b = replace(a, colour_tolerance=0.6, social_mindedness=0.4)
    assert peer_distance(a, b) == pytest.approx(0.2)
    c = replace(a, lamps_needed=30)
    assert peer_distance(a, c, lamps_scale=40) == pytest.approx(0.25)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=10, max_size=10),
    st.lists(st.floats(0, 1), min_size=10, max_size=10),
    st.integers(1, 40),
    st.integers(1, 40),
)
def test_peer_distance_symmetric(x, y, la, lb):
    a, b = AgentPreferences(la, *x), AgentPreferences(lb, *y)
    assert peer_distance(a, b, 40) == peer_distance(b, a, 40) >= 0


def test_update_examples():
    agent = make_agent(experience=(0.5, 0.5, 0.5), certainty=0.8)
    update_after_replacement(agent, LampType.INCANDESCENT, 1.0, 1.0)
    assert agent.experience[0] == pytest.approx(0.6)
    assert agent.certainty == pytest.approx(0.8 * 0.8 + 0.2)

    agent = make_agent(certainty=0.8)
    update_after_replacement(agent, LampType.LED, 0.55, 0.55, repetition_blocked=True)
    assert agent.certainty == pytest.approx(0.712)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(
        st.tuples(st.sampled_from(list(LampType)), st.floats(0, 1), st.floats(0, 1), st.booleans()),
        max_size=30,
    ),
    st.floats(0, 1),
)
def test_experience_and_certainty_stay_in_range(updates, c0):
    agent = make_agent(certainty=c0)
    for t, realized, expected, blocked in updates:
        update_after_replacement(agent, t, realized, expected, blocked, DynamicsParams())
        assert 0 <= agent.certainty <= 1
        assert all(0 <= e <= 1 for e in agent.experience)
    assert not math.isnan(agent.certainty)
