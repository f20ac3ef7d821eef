"""Consumat strategy selection and the four replacement behaviours.

These are the reference, one-decision-at-a-time versions. The engine runs a
compiled equivalent (``_kernel``) that must make the same choices from the
same random draws.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Protocol, Sequence

from .agents import Agent, LampInstance, SatisfactionParams, peer_distance, satisfaction
from .market import LampType, MarketState, available_models


class Strategy(IntEnum):
    REPETITION = 0
    IMITATION = 1
    DELIBERATION = 2
    SOCIAL_COMPARISON = 3


class SimulationFault(RuntimeError):
    """Nothing can be bought: the market has no available model."""


class NoPeerError(LookupError):
    pass


class UniformSource(Protocol):
    def random(self) -> float: ...


@dataclass(frozen=True)
class BehaviorThresholds:
    satisfaction_threshold: float = 0.694
    certainty_threshold: float = 0.93
    initial_similarity_threshold: float = 1.0
    loosening_factor: float = 1.5
    max_peer_attempts: int = 10

    def __post_init__(self) -> None:
        if not (0 <= self.satisfaction_threshold <= 1 and 0 <= self.certainty_threshold <= 1):
            raise ValueError("satisfaction/certainty thresholds must lie in [0, 1]")
        if self.initial_similarity_threshold < 0 or self.loosening_factor <= 1 or self.max_peer_attempts < 0:
            raise ValueError("need similarity threshold >= 0, loosening factor > 1, max attempts >= 0")


@dataclass(frozen=True)
class Decision:
    model_id: int
    strategy: Strategy  # behaviour actually executed
    expected: float
    repetition_blocked: bool = False


def select_strategy(satisfaction: float, certainty: float, t: BehaviorThresholds = BehaviorThresholds()) -> Strategy:
    satisfied = satisfaction >= t.satisfaction_threshold
    certain = certainty >= t.certainty_threshold
    if satisfied:
        return Strategy.REPETITION if certain else Strategy.IMITATION
    return Strategy.DELIBERATION if certain else Strategy.SOCIAL_COMPARISON


def _best(agent: Agent, candidates: Sequence[int], state: MarketState, social_context, params) -> tuple[int, float]:
    scored = [(satisfaction(agent, m, state, social_context, params), m) for m in candidates]
    s, m = min(scored, key=lambda sm: (-sm[0], state.price[sm[1]], sm[1]))
    return m, s


def deliberation(
    agent: Agent,
    state: MarketState,
    social_context: Sequence[LampType] | None = None,
    params: SatisfactionParams = SatisfactionParams(),
) -> Decision:
    """Best available model; ties go to the cheaper, then the lower id."""
    candidates = available_models(state)
    if not candidates:
        raise SimulationFault(f"no lamp model available in month {state.month}")
    m, s = _best(agent, candidates, state, social_context, params)
    return Decision(m, Strategy.DELIBERATION, s)


def repetition(
    agent: Agent,
    broken: LampInstance,
    state: MarketState,
    social_context: Sequence[LampType] | None = None,
    params: SatisfactionParams = SatisfactionParams(),
) -> Decision:
    m = broken.model_id
    if state.available[m]:
        return Decision(m, Strategy.REPETITION, satisfaction(agent, m, state, social_context, params))
    d = deliberation(agent, state, social_context, params)
    return Decision(d.model_id, Strategy.DELIBERATION, d.expected, repetition_blocked=True)


def select_similar_peer(
    agent: Agent,
    population: Sequence[Agent],
    rng: UniformSource,
    t: BehaviorThresholds = BehaviorThresholds(),
    lamps_scale: float | None = None,
) -> Agent:
    """Draw random other agents until one is close enough in preference space.

    Agents are addressed by position, so ``population[k].id == k`` is assumed.
    The acceptance radius starts at ``initial_similarity_threshold`` scaled by
    ``1 + social_agreeability`` and widens by ``loosening_factor`` after every
    rejection; after ``max_peer_attempts`` rejections the next draw is taken.
    """
    n = len(population)
    if n < 2:
        raise NoPeerError("population has no other agent")
    if lamps_scale is None:
        lamps_scale = float(max(a.preferences.lamps_needed for a in population))
    radius = t.initial_similarity_threshold * (1.0 + agent.preferences.social_agreeability)
    attempts = 0
    while True:
        j = int(rng.random() * (n - 1))
        if j >= agent.id:
            j += 1
        peer = population[j]
        if attempts >= t.max_peer_attempts:
            return peer
        if peer_distance(agent.preferences, peer.preferences, lamps_scale) <= radius:
            return peer
        radius *= t.loosening_factor
        attempts += 1


def _peer_models(peer: Agent, state: MarketState) -> list[int]:
    return sorted({lamp.model_id for lamp in peer.inventory if state.available[lamp.model_id]})


def imitation(
    agent: Agent,
    peer: Agent,
    state: MarketState,
    rng: UniformSource,
    social_context: Sequence[LampType] | None = None,
    params: SatisfactionParams = SatisfactionParams(),
) -> Decision:
    """A random available model from the peer's lamps, else from the whole catalog."""
    candidates = _peer_models(peer, state) or available_models(state)
    if not candidates:
        raise SimulationFault(f"no lamp model available in month {state.month}")
    m = candidates[int(rng.random() * len(candidates))]
    return Decision(m, Strategy.IMITATION, satisfaction(agent, m, state, social_context, params))


def social_comparison(
    agent: Agent,
    peer: Agent,
    state: MarketState,
    social_context: Sequence[LampType] | None = None,
    params: SatisfactionParams = SatisfactionParams(),
    broken: LampInstance | None = None,
) -> Decision:
    """Copy the peer's best lamp only if it beats simply rebuying the broken one."""
    candidates = _peer_models(peer, state)
    if not candidates:
        d = deliberation(agent, state, social_context, params)
        return d
    m, s = _best(agent, candidates, state, social_context, params)
    if broken is not None and state.available[broken.model_id]:
        keep = satisfaction(agent, broken.model_id, state, social_context, params)
        if s < keep:
            return Decision(broken.model_id, Strategy.SOCIAL_COMPARISON, keep)
    return Decision(m, Strategy.SOCIAL_COMPARISON, s)
