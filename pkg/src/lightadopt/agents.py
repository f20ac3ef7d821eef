"""Consumer agents: archetypes, instantiation, satisfaction and learning."""

from __future__ import annotations

import csv
import io
from dataclasses import astuple, dataclass, field, fields
from pathlib import Path
from types import SimpleNamespace
from typing import Sequence

import numpy as np

from .market import LAMP_TYPES, LampModel, LampType, MarketState

ARCHETYPE_CSV_HEADER = (
    "lamps",
    "func_tol",
    "colour_tol",
    "fin_focus",
    "env_focus",
    "soc_mind",
    "soc_agree",
    "base_inc",
    "base_cfl",
    "base_led",
    "reserved",
)
DEFAULT_ARCHETYPE_COUNT = 87


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Archetype:
    lamps_needed: int
    functional_tolerance: float
    colour_tolerance: float
    financial_energy_focus: float
    environmental_energy_focus: float
    social_mindedness: float
    social_agreeability: float
    baseline_satisfaction_incandescent: float
    baseline_satisfaction_cfl: float
    baseline_satisfaction_led: float
    reserved_11th: float

    def baseline(self, lamp_type: LampType) -> float:
        return (
            self.baseline_satisfaction_incandescent,
            self.baseline_satisfaction_cfl,
            self.baseline_satisfaction_led,
        )[lamp_type.index]


@dataclass
class AgentPreferences:
    """A jittered copy of an archetype; mutable so campaigns can shift it."""

    lamps_needed: int
    functional_tolerance: float
    colour_tolerance: float
    financial_energy_focus: float
    environmental_energy_focus: float
    social_mindedness: float
    social_agreeability: float
    baseline_satisfaction_incandescent: float
    baseline_satisfaction_cfl: float
    baseline_satisfaction_led: float
    reserved_11th: float

    baseline = Archetype.baseline

    def vector(self, lamps_scale: float = 1.0) -> np.ndarray:
        v = np.array(astuple(self), dtype=float)
        v[0] /= lamps_scale
        return v


FIELD_NAMES = tuple(f.name for f in fields(Archetype))


@dataclass(frozen=True)
class SatisfactionParams:
    """Global property weights and the blending constants of the satisfaction score.

    The weights are calibration constants. ``*_reference`` values normalise raw
    properties into [0, 1] scores.
    """

    w_price: float = 0.5616
    w_efficiency: float = 0.788
    w_colour: float = 0.119
    w_ramp: float = 0.1384
    w_lifetime: float = 0.1034
    use_lifetime: bool = True
    price_reference: float = 10.3688
    ramp_reference: float = 120.0
    lifetime_reference: float = 208.0
    experience_weight: float = 0.0694
    social_scale: float = 0.3501


@dataclass(frozen=True)
class DynamicsParams:
    experience_rate: float = 0.2
    certainty_rate: float = 0.2
    unavailable_penalty: float = 0.8


@dataclass
class LampInstance:
    model_id: int
    remaining_lifetime: float


@dataclass
class Agent:
    id: int
    archetype: int
    preferences: AgentPreferences
    inventory: list[LampInstance]
    experience: list[float]
    certainty: float
    last_strategy: object = None
    # model id -> lamp type, filled in at instantiation
    lamp_types: tuple[LampType, ...] = field(default=(), repr=False)

    def type_counts(self) -> list[int]:
        counts = [0, 0, 0]
        for lamp in self.inventory:
            counts[self.lamp_types[lamp.model_id].index] += 1
        return counts

    def modal_type(self) -> LampType:
        counts = self.type_counts()
        return LAMP_TYPES[int(np.argmax(counts))]


# --------------------------------------------------------------------------- archetypes


def generate_archetypes(count: int = DEFAULT_ARCHETYPE_COUNT, rng: np.random.Generator | None = None) -> list[Archetype]:
    """Synthetic stand-ins for the unpublished survey archetypes.

    Lamps needed ~ U{10..40}; tolerances, foci, social fields and the reserved
    field ~ U(0, 1); baselines ~ U(0.6, 1.0), U(0.2, 0.7), U(0.0, 0.5) for
    incandescent, CFL and LED.
    """
    if count < 1:
        raise ConfigurationError("archetype count must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    out = []
    for _ in range(count):
        lamps = int(rng.integers(10, 41))
        tol_func, tol_col, fin, env, mind, agree = rng.uniform(0.0, 1.0, size=6)
        base_inc = rng.uniform(0.6, 1.0)
        base_cfl = rng.uniform(0.2, 0.7)
        base_led = rng.uniform(0.0, 0.5)
        reserved = rng.uniform(0.0, 1.0)
        out.append(
            Archetype(
                lamps,
                *(float(x) for x in (tol_func, tol_col, fin, env, mind, agree, base_inc, base_cfl, base_led, reserved)),
            )
        )
    return out


def archetypes_to_csv(archetypes: Sequence[Archetype]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ARCHETYPE_CSV_HEADER)
    for a in archetypes:
        writer.writerow([a.lamps_needed, *(repr(float(x)) for x in astuple(a)[1:])])
    return buf.getvalue()


def parse_archetypes(text: str, source: str = "<archetypes>") -> list[Archetype]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != ARCHETYPE_CSV_HEADER:
        raise ConfigurationError(f"{source}: header must be {','.join(ARCHETYPE_CSV_HEADER)}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(ARCHETYPE_CSV_HEADER):
            raise ConfigurationError(f"{source}: line {lineno}: expected 11 values, got {len(row)}")
        try:
            lamps = int(round(float(row[0])))
            rest = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise ConfigurationError(f"{source}: line {lineno}: {exc}") from None
        if lamps < 1 or any(not 0.0 <= x <= 1.0 for x in rest):
            raise ConfigurationError(f"{source}: line {lineno}: lamps must be >= 1 and fractions in [0, 1]")
        out.append(Archetype(lamps, *rest))
    if not out:
        raise ConfigurationError(f"{source}: no archetypes")
    return out


def load_archetypes(path: str | Path) -> list[Archetype]:
    path = Path(path)
    return parse_archetypes(path.read_text(encoding="utf-8"), str(path))


# --------------------------------------------------------------------------- instantiation


def jitter(archetype: Archetype, rng: np.random.Generator, width: float = 0.05) -> AgentPreferences:
    """Draw each field uniformly from ((1-width)v, (1+width)v), kept in its legal range."""
    values = np.array(astuple(archetype), dtype=float)
    drawn = rng.uniform((1 - width) * values, (1 + width) * values)
    lamps = max(1, int(round(drawn[0])))
    rest = np.clip(drawn[1:], 0.0, 1.0)
    return AgentPreferences(lamps, *(float(x) for x in rest))


def draw_lifetime(mean_lifetime: float, z: float) -> float:
    """Lifetime from a standard normal deviate: N(l, l/5), floored at half a month."""
    return max(0.5, mean_lifetime + mean_lifetime / 5.0 * z)


@dataclass
class PopulationDraw:
    """Column arrays of a freshly instantiated population."""

    archetype: np.ndarray  # (n,)
    values: np.ndarray  # (n, 11) jittered preferences, lamps in column 0
    n_lamps: np.ndarray  # (n,)
    inv_model: np.ndarray  # (n, width), padded with model 0
    inv_life: np.ndarray  # (n, width), padded with +inf
    experience: np.ndarray  # (n, 3)
    certainty: np.ndarray  # (n,)


def draw_population(
    archetypes: Sequence[Archetype],
    n: int,
    rng: np.random.Generator,
    state: MarketState,
    params: SatisfactionParams = SatisfactionParams(),
    jitter_width: float = 0.05,
) -> PopulationDraw:
    if not archetypes:
        raise ConfigurationError("archetype list is empty")
    if n < 1:
        raise ConfigurationError("population size must be >= 1")
    catalog = state.catalog
    table = np.array([astuple(a) for a in archetypes], dtype=float)
    arch = rng.integers(len(archetypes), size=n)
    base = table[arch]
    drawn = rng.uniform((1 - jitter_width) * base, (1 + jitter_width) * base)
    values = np.empty_like(drawn)
    values[:, 0] = np.maximum(1, np.rint(drawn[:, 0]))
    values[:, 1:] = np.clip(drawn[:, 1:], 0.0, 1.0)
    n_lamps = values[:, 0].astype(np.int64)

    cols = SimpleNamespace(**{name: values[:, k] for k, name in enumerate(FIELD_NAMES)})
    personal = personal_scores(cols, property_scores(state, params), params)
    baselines = values[:, 7:10]
    best = np.full((n, 3), -1, dtype=np.int64)
    weights = np.zeros((n, 3))
    for t in LAMP_TYPES:
        ids = [m.id for m in catalog if m.initially_available and m.lamp_type is t]
        if not ids:
            continue
        ids = sorted(ids, key=lambda m: (state.price[m], m))
        # stable argmax over (price, id)-sorted ids gives the tie-break order
        best[:, t.index] = np.array(ids)[np.argmax(personal[:, ids], axis=1)]
        weights[:, t.index] = baselines[:, t.index]
    stocked = best[0] >= 0
    if not stocked.any():
        raise ConfigurationError("catalog has no initially available models")
    weights[(weights.sum(axis=1) <= 0)] = stocked.astype(float)
    cum = np.cumsum(weights / weights.sum(axis=1, keepdims=True), axis=1)

    total = int(n_lamps.sum())
    owner = np.repeat(np.arange(n), n_lamps)
    u = rng.random(total)
    lamp_type = np.minimum((u[:, None] >= cum[owner]).sum(axis=1), 2)
    # never land on an unstocked type through rounding at the top of cum
    lamp_type = np.where(stocked[lamp_type], lamp_type, np.argmax(stocked))
    model = best[owner, lamp_type]
    mean_life = np.array([m.mean_lifetime for m in catalog])[model]
    z = rng.standard_normal(total)
    age = rng.random(total)
    life = np.maximum(0.5, mean_life + mean_life / 5.0 * z) * age

    width = int(n_lamps.max())
    slot = np.arange(total) - np.repeat(np.cumsum(n_lamps) - n_lamps, n_lamps)
    inv_model = np.zeros((n, width), dtype=np.int64)
    inv_life = np.full((n, width), np.inf)
    inv_model[owner, slot] = model
    inv_life[owner, slot] = life

    counts = np.zeros((n, 3), dtype=np.int64)
    np.add.at(counts, (owner, lamp_type), 1)
    majority = counts.argmax(axis=1)
    certainty = np.clip(0.5 + 0.5 * baselines[np.arange(n), majority], 0.0, 1.0)
    return PopulationDraw(arch, values, n_lamps, inv_model, inv_life, baselines.copy(), certainty)


def instantiate_population(
    archetypes: Sequence[Archetype],
    n: int,
    rng: np.random.Generator,
    state: MarketState,
    params: SatisfactionParams = SatisfactionParams(),
) -> list[Agent]:
    """Build ``n`` agents from uniformly chosen archetypes.

    Each lamp's type is drawn with probability proportional to the agent's
    baseline satisfaction for the types stocked at the start (catalog flag
    "Y"); the model within a type is the one the agent rates highest on lamp
    properties alone. Remaining lifetimes start at a uniformly random fraction
    of a fresh draw so lamps do not all fail together.
    """
    return agents_from_draw(draw_population(archetypes, n, rng, state, params), state.catalog)


def agents_from_draw(draw: PopulationDraw, catalog: Sequence[LampModel]) -> list[Agent]:
    lamp_types = tuple(m.lamp_type for m in catalog)
    agents = []
    for i in range(len(draw.n_lamps)):
        v = draw.values[i]
        prefs = AgentPreferences(int(v[0]), *(float(x) for x in v[1:]))
        inventory = [
            LampInstance(int(draw.inv_model[i, k]), float(draw.inv_life[i, k])) for k in range(draw.n_lamps[i])
        ]
        agents.append(
            Agent(
                id=i,
                archetype=int(draw.archetype[i]),
                preferences=prefs,
                inventory=inventory,
                experience=[float(x) for x in draw.experience[i]],
                certainty=float(draw.certainty[i]),
                lamp_types=lamp_types,
            )
        )
    return agents


# --------------------------------------------------------------------------- satisfaction

N_PROPERTIES = 5


def property_scores(state: MarketState, params: SatisfactionParams = SatisfactionParams()) -> np.ndarray:
    """Per-model property scores in [0, 1]: price, efficiency, colour, ramp-up, lifetime."""
    colour = np.array([m.colour_discrepancy for m in state.catalog])
    ramp = np.array([m.ramp_up for m in state.catalog])
    life = np.array([m.mean_lifetime for m in state.catalog])
    out = np.empty((len(state.catalog), N_PROPERTIES))
    out[:, 0] = np.clip(1.0 - state.price / params.price_reference, 0.0, 1.0)
    out[:, 1] = np.clip(state.efficiency, 0.0, 1.0)
    out[:, 2] = np.clip(1.0 - colour, 0.0, 1.0)
    out[:, 3] = 1.0 - np.minimum(ramp, params.ramp_reference) / params.ramp_reference
    out[:, 4] = np.minimum(life, params.lifetime_reference) / params.lifetime_reference
    return out


def property_weights(prefs, params: SatisfactionParams = SatisfactionParams()) -> np.ndarray:
    """Agent-modulated weights; ``prefs`` fields may be scalars or column arrays."""
    fin = np.asarray(prefs.financial_energy_focus, dtype=float)
    env = np.asarray(prefs.environmental_energy_focus, dtype=float)
    return np.stack(
        np.broadcast_arrays(
            params.w_price * (1.0 + fin),
            params.w_efficiency * (fin + env),
            params.w_colour * (1.0 - np.asarray(prefs.colour_tolerance, dtype=float)),
            params.w_ramp * (1.0 - np.asarray(prefs.functional_tolerance, dtype=float)),
            np.full_like(fin, params.w_lifetime if params.use_lifetime else 0.0),
        ),
        axis=-1,
    )


def personal_scores(prefs, scores: np.ndarray, params: SatisfactionParams = SatisfactionParams()) -> np.ndarray:
    """Weighted mean property score of every model (last axis = models)."""
    w = property_weights(prefs, params)
    total = w.sum(axis=-1, keepdims=True)
    # all-zero weights (possible only with degenerate preferences) -> neutral 0.5
    safe = np.where(total > 0, total, 1.0)
    out = (w @ scores.T) / safe
    return np.where(total > 0, out, 0.5)


def social_shares(context: Sequence[LampType] | None) -> np.ndarray:
    shares = np.zeros(3)
    if context:
        for t in context:
            shares[LampType(t).index] += 1
        shares /= len(context)
    return shares


def satisfaction(
    agent: Agent,
    model_id: int,
    state: MarketState,
    social_context: Sequence[LampType] | None = None,
    params: SatisfactionParams = SatisfactionParams(),
) -> float:
    """Satisfaction of ``agent`` with one catalog model under current conditions.

    ``social_context`` is the modal lamp type of each sampled peer.
    """
    if not 0 <= model_id < len(state.catalog):
        raise LookupError(f"unknown model id {model_id}")
    model = state.catalog[model_id]
    prefs = agent.preferences
    price = min(1.0, max(0.0, 1.0 - state.price[model_id] / params.price_reference))
    eff = min(1.0, max(0.0, state.efficiency[model_id]))
    colour = 1.0 - model.colour_discrepancy
    ramp = 1.0 - min(model.ramp_up, params.ramp_reference) / params.ramp_reference
    life = min(model.mean_lifetime, params.lifetime_reference) / params.lifetime_reference
    w = [
        params.w_price * (1.0 + prefs.financial_energy_focus),
        params.w_efficiency * (prefs.financial_energy_focus + prefs.environmental_energy_focus),
        params.w_colour * (1.0 - prefs.colour_tolerance),
        params.w_ramp * (1.0 - prefs.functional_tolerance),
        params.w_lifetime if params.use_lifetime else 0.0,
    ]
    total = sum(w)
    s = [price, eff, colour, ramp, life]
    personal = sum(wi * si for wi, si in zip(w, s)) / total if total > 0 else 0.5

    t = model.lamp_type.index
    beta = params.experience_weight
    blend = beta * agent.experience[t] + (1.0 - beta) * personal
    sigma = params.social_scale * prefs.social_mindedness
    social = social_shares(social_context)[t]
    return min(1.0, max(0.0, (1.0 - sigma) * blend + sigma * social))


def satisfaction_matrix(
    prefs,
    experience: np.ndarray,
    shares: np.ndarray,
    state: MarketState,
    params: SatisfactionParams = SatisfactionParams(),
    personal: np.ndarray | None = None,
) -> np.ndarray:
    """Satisfaction of every agent with every model, shape (agents, models).

    ``prefs`` exposes preference columns as arrays, ``experience`` and
    ``shares`` are (agents, 3) arrays indexed by lamp type. ``personal`` may
    carry precomputed :func:`personal_scores` for this state.
    """
    if personal is None:
        personal = personal_scores(prefs, property_scores(state, params), params)
    types = state.type_index
    beta = params.experience_weight
    blend = beta * experience[:, types] + (1.0 - beta) * personal
    sigma = (params.social_scale * np.asarray(prefs.social_mindedness, dtype=float))[:, None]
    return np.clip((1.0 - sigma) * blend + sigma * shares[:, types], 0.0, 1.0)


# --------------------------------------------------------------------------- peers and learning


def peer_distance(a: AgentPreferences, b: AgentPreferences, lamps_scale: float = 1.0) -> float:
    """L1 distance between preference vectors; lamp counts are divided by ``lamps_scale``."""
    return float(np.abs(a.vector(lamps_scale) - b.vector(lamps_scale)).sum())


def update_after_replacement(
    agent: Agent,
    lamp_type: LampType,
    realized: float,
    expected: float,
    repetition_blocked: bool = False,
    dynamics: DynamicsParams = DynamicsParams(),
) -> Agent:
    t = LampType(lamp_type).index
    eta, gamma = dynamics.experience_rate, dynamics.certainty_rate
    agent.experience[t] = (1.0 - eta) * agent.experience[t] + eta * realized
    certainty = agent.certainty
    if repetition_blocked:
        certainty *= dynamics.unavailable_penalty
    agent.certainty = min(1.0, max(0.0, (1.0 - gamma) * certainty + gamma * (1.0 - abs(realized - expected))))
    return agent


def preference_columns(agents: Sequence[Agent]):
    """Column view (one array per field) of a list of agents' preferences."""
    cols = {name: np.array([getattr(a.preferences, name) for a in agents], dtype=float) for name in FIELD_NAMES}
    return SimpleNamespace(**cols)
