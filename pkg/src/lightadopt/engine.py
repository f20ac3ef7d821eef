"""Monthly scheduler and Monte Carlo ensemble runner."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from types import SimpleNamespace
from typing import Callable, Sequence

import numpy as np

from . import _kernel
from .agents import (
    FIELD_NAMES,
    Agent,
    Archetype,
    ConfigurationError,
    DynamicsParams,
    SatisfactionParams,
    PopulationDraw,
    agents_from_draw,
    draw_population,
    generate_archetypes,
    personal_scores,
    property_scores,
)
from .behavior import BehaviorThresholds, SimulationFault, Strategy
from .market import (
    DEFAULT_TRENDS,
    START_YEAR,
    LampModel,
    MarketState,
    MarketTrends,
    RunFactors,
    default_catalog,
    market_trace,
    year_to_month,
)
from .scenarios import Scenario

log = logging.getLogger(__name__)

N_STRATEGIES = len(Strategy)


def parse_month(text: str) -> int:
    """'YYYY-MM' -> months since January 2006."""
    try:
        year, month = (int(x) for x in text.split("-"))
    except ValueError:
        raise ConfigurationError(f"expected YYYY-MM, got {text!r}") from None
    if not 1 <= month <= 12:
        raise ConfigurationError(f"month out of range in {text!r}")
    return year_to_month(year) + month - 1


def format_month(index: int) -> str:
    return f"{START_YEAR + index // 12:04d}-{index % 12 + 1:02d}"


@dataclass(frozen=True)
class SimulationConfig:
    n_agents: int = 1000
    start: str = "2006-01"
    end: str = "2025-12"
    runs: int = 50
    master_seed: int = 42
    thresholds: BehaviorThresholds = field(default_factory=BehaviorThresholds)
    satisfaction: SatisfactionParams = field(default_factory=SatisfactionParams)
    dynamics: DynamicsParams = field(default_factory=DynamicsParams)
    trends: MarketTrends = DEFAULT_TRENDS
    social_sample_size: int = 20
    archetype_count: int = 87
    archetype_seed: int = 0
    archetypes: tuple[Archetype, ...] | None = None
    catalog: tuple[LampModel, ...] | None = None

    def __post_init__(self) -> None:
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if self.n_agents < 2:
            raise ConfigurationError("n_agents must be >= 2")
        if self.social_sample_size < 0:
            raise ConfigurationError("social_sample_size must be >= 0")
        if self.end_month < self.start_month:
            raise ConfigurationError(f"end {self.end} precedes start {self.start}")
        if self.start_month < 0:
            raise ConfigurationError("simulation cannot start before 2006-01")

    @property
    def start_month(self) -> int:
        return parse_month(self.start)

    @property
    def end_month(self) -> int:
        return parse_month(self.end)

    @property
    def months(self) -> int:
        return self.end_month - self.start_month + 1

    def archetype_list(self) -> list[Archetype]:
        if self.archetypes is not None:
            return list(self.archetypes)
        return generate_archetypes(self.archetype_count, np.random.default_rng(self.archetype_seed))

    def catalog_list(self) -> list[LampModel]:
        return list(self.catalog) if self.catalog is not None else default_catalog()

    def with_overrides(self, **changes) -> "SimulationConfig":
        return replace(self, **changes)


@dataclass
class RunResult:
    scenario_id: str
    run_index: int
    seed: tuple[int, int]
    factors: RunFactors
    adoption: np.ndarray  # (months,) non-incandescent share at the end of each month
    strategy_counts: np.ndarray  # (months, 4) replacement events by executed behaviour
    start_month: int = 0
    events: list[np.ndarray] | None = None  # per month: (n_events, 3) agent, strategy, model

    @property
    def months(self) -> int:
        return len(self.adoption)


class RunFault(RuntimeError):
    def __init__(self, run_index: int, cause: Exception):
        super().__init__(f"run {run_index}: {cause}")
        self.run_index = run_index
        self.cause = cause


def run_streams(master_seed: int, run_index: int) -> dict[str, np.random.Generator]:
    """Independent generators of one run.

    Seeds depend on the master seed and run index only, so every scenario sees
    the same factors and population for a given run (paired comparisons).
    """
    seq = np.random.SeedSequence(master_seed, spawn_key=(run_index,))
    names = ("factors", "population", "lifetimes", "peers", "shuffle")
    return {name: np.random.default_rng(child) for name, child in zip(names, seq.spawn(len(names)))}


class Population:
    """Column-oriented population state, as the kernels want it."""

    def __init__(self, draw: PopulationDraw, catalog: Sequence[LampModel]):
        self.n = len(draw.n_lamps)
        self.archetype = draw.archetype
        self.prefs = SimpleNamespace(**{name: draw.values[:, k].copy() for k, name in enumerate(FIELD_NAMES)})
        self.n_lamps = draw.n_lamps
        self.inv_model = draw.inv_model
        self.inv_life = draw.inv_life
        width = self.inv_model.shape[1]
        self.valid = np.arange(width)[None, :] < self.n_lamps[:, None]
        self.experience = draw.experience
        self.certainty = draw.certainty
        self.last_strategy = np.full(self.n, -1, dtype=np.int64)
        self.model_type = np.array([m.lamp_type.index for m in catalog], dtype=np.int64)
        self.lamps_scale = float(self.prefs.lamps_needed.max())

    def preference_vectors(self) -> np.ndarray:
        v = np.column_stack([getattr(self.prefs, name) for name in FIELD_NAMES])
        v[:, 0] /= self.lamps_scale
        return np.ascontiguousarray(v)

    def type_counts(self) -> np.ndarray:
        """(n, 3) lamps owned per type."""
        return _kernel.type_counts(self.inv_model, self.n_lamps, self.model_type)

    def modal_types(self, counts: np.ndarray | None = None) -> np.ndarray:
        return (self.type_counts() if counts is None else counts).argmax(axis=1)

    def adoption_share(self, counts: np.ndarray | None = None) -> float:
        counts = self.type_counts() if counts is None else counts
        return float(counts[:, 1:].sum() / counts.sum())

    def to_agents(self, catalog: Sequence[LampModel]) -> list[Agent]:
        values = np.column_stack([getattr(self.prefs, name) for name in FIELD_NAMES])
        draw = PopulationDraw(
            self.archetype, values, self.n_lamps, self.inv_model, self.inv_life, self.experience, self.certainty
        )
        agents = agents_from_draw(draw, catalog)
        for a, s in zip(agents, self.last_strategy):
            a.last_strategy = Strategy(int(s)) if s >= 0 else None
        return agents


def social_context_shares(modal: np.ndarray, sample_size: int, rng: np.random.Generator) -> np.ndarray:
    """Share of each lamp type among the modal types of ``sample_size`` random other agents."""
    n = modal.shape[0]
    peers = rng.integers(0, n - 1, size=(n, sample_size))
    peers += peers >= np.arange(n)[:, None]
    return _kernel.peer_type_shares(modal, peers)


Observer = Callable[[int, Population, MarketState], None]


def run_simulation(
    scenario: Scenario,
    config: SimulationConfig,
    run_index: int,
    observer: Observer | None = None,
    record_events: bool = False,
) -> RunResult:
    """One Monte Carlo run; a pure function of (scenario, config, run_index).

    Month 0 is the instantiation month and records the initial state. Every
    later month: market update, scenario preference shocks, deferred learning
    from last month's purchases, lamp ageing, then replacement of every broken
    lamp, agents in shuffled order.
    """
    rng = run_streams(config.master_seed, run_index)
    factors = RunFactors.draw(rng["factors"])
    catalog = config.catalog_list()
    offset = config.start_month
    months = config.months
    trace = market_trace(catalog, scenario, factors, offset + months, config.trends)
    sat_params = config.satisfaction
    th = config.thresholds
    dyn = config.dynamics

    draw = draw_population(config.archetype_list(), config.n_agents, rng["population"], trace[offset], sat_params)
    pop = Population(draw, catalog)
    mean_life = np.array([m.mean_lifetime for m in catalog])

    shocks: dict[int, list] = {}
    for iv in scenario.preference:
        shocks.setdefault(max(year_to_month(iv.year), offset), []).append(iv)

    def apply_shocks(month: int) -> None:
        for iv in shocks.get(month, ()):
            for name in iv.fields:
                col = getattr(pop.prefs, name)
                np.minimum(1.0, col * iv.multiplier, out=col)

    apply_shocks(offset)
    prefvec = pop.preference_vectors()

    adoption = np.zeros(months)
    counts = np.zeros((months, N_STRATEGIES), dtype=np.int64)
    events_log: list[np.ndarray] | None = [] if record_events else None
    counts_now = pop.type_counts()
    adoption[0] = pop.adoption_share(counts_now)
    if record_events:
        events_log.append(np.zeros((0, 3), dtype=np.int64))
    if observer is not None:
        observer(0, pop, trace[offset])

    pending = None
    cap = pop.inv_model.size
    ev_agent = np.empty(cap, dtype=np.int64)
    ev_strategy = np.empty(cap, dtype=np.int64)
    ev_model = np.empty(cap, dtype=np.int64)
    ev_expected = np.empty(cap)
    ev_blocked = np.empty(cap, dtype=np.bool_)
    draws_per_event = th.max_peer_attempts + 2
    beta = sat_params.experience_weight

    for k in range(1, months):
        month = offset + k
        state = trace[month]
        if month in shocks:
            apply_shocks(month)
            prefvec = pop.preference_vectors()
        personal = personal_scores(pop.prefs, property_scores(state, sat_params), sat_params)
        sigma = sat_params.social_scale * pop.prefs.social_mindedness
        shares = social_context_shares(pop.modal_types(counts_now), config.social_sample_size, rng["peers"])
        if pending is not None:
            s_now = _kernel.blend_satisfaction(personal, pop.experience, shares, pop.model_type, beta, sigma)
            _kernel.apply_updates(
                *pending,
                pop.model_type,
                s_now,
                pop.experience,
                pop.certainty,
                dyn.experience_rate,
                dyn.certainty_rate,
                dyn.unavailable_penalty,
            )
        S = _kernel.blend_satisfaction(personal, pop.experience, shares, pop.model_type, beta, sigma)

        pop.inv_life -= 1.0
        n_broken = int(np.count_nonzero(pop.inv_life <= 0.0))
        order = rng["shuffle"].permutation(pop.n)
        U = rng["peers"].random(n_broken * draws_per_event + 1)
        Z = rng["lifetimes"].standard_normal(n_broken)
        snapshot = pop.inv_model.copy()
        status, ne, _ = _kernel.process_month(
            order,
            pop.inv_model,
            pop.inv_life,
            pop.n_lamps,
            snapshot,
            S,
            state.price,
            state.available,
            mean_life,
            pop.certainty,
            prefvec,
            pop.prefs.social_agreeability,
            th.satisfaction_threshold,
            th.certainty_threshold,
            th.initial_similarity_threshold,
            th.loosening_factor,
            th.max_peer_attempts,
            U,
            Z,
            ev_agent,
            ev_strategy,
            ev_model,
            ev_expected,
            ev_blocked,
            pop.last_strategy,
        )
        if status == _kernel.EMPTY_MARKET:
            raise SimulationFault(f"no lamp model available in {format_month(month)} ({scenario.id})")
        if status != _kernel.OK:
            raise RuntimeError(f"random pool exhausted in {format_month(month)}")

        pending = (ev_agent[:ne].copy(), ev_model[:ne].copy(), ev_expected[:ne].copy(), ev_blocked[:ne].copy())
        counts[k] = np.bincount(ev_strategy[:ne], minlength=N_STRATEGIES)
        counts_now = pop.type_counts()
        adoption[k] = pop.adoption_share(counts_now)
        if record_events:
            events_log.append(np.column_stack([ev_agent[:ne], ev_strategy[:ne], ev_model[:ne]]))
        if observer is not None:
            observer(k, pop, state)

    return RunResult(
        scenario_id=scenario.id,
        run_index=run_index,
        seed=(config.master_seed, run_index),
        factors=factors,
        adoption=adoption,
        strategy_counts=counts,
        start_month=offset,
        events=events_log,
    )


def _run_one(args) -> RunResult:
    scenario, config, run_index = args
    try:
        return run_simulation(scenario, config, run_index)
    except Exception as exc:  # noqa: BLE001 - re-raised with the run index
        raise RunFault(run_index, exc) from exc


def run_ensemble(scenario: Scenario, config: SimulationConfig, jobs: int = 1) -> list[RunResult]:
    """``config.runs`` independent runs, ordered by run index whatever ``jobs`` is."""
    tasks = [(scenario, config, i) for i in range(config.runs)]
    if jobs <= 1 or config.runs == 1:
        results = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    log.info("scenario %s: %d runs done", scenario.id, len(results))
    return sorted(results, key=lambda r: r.run_index)
