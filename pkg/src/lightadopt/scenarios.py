"""Policy scenarios: built-in definitions and the JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .market import LampType

PREFERENCE_FIELDS = (
    "functional_tolerance",
    "colour_tolerance",
    "financial_energy_focus",
    "environmental_energy_focus",
    "social_mindedness",
    "social_agreeability",
    "baseline_satisfaction_incandescent",
    "baseline_satisfaction_cfl",
    "baseline_satisfaction_led",
    "reserved_11th",
)

BUILTIN_IDS = ("no_regulation", "soft_ban", "hard_ban", "info_campaign", "soft_ban_info")


class ScenarioError(ValueError):
    """Raised for unknown scenario ids and malformed scenario files."""


@dataclass(frozen=True)
class PriceIntervention:
    lamp_type: LampType
    start: int
    end: int
    rate: float


@dataclass(frozen=True)
class Ban:
    lamp_type: LampType
    year: int


@dataclass(frozen=True)
class PreferenceIntervention:
    fields: tuple[str, ...]
    year: int
    multiplier: float


@dataclass(frozen=True)
class Scenario:
    id: str
    price: tuple[PriceIntervention, ...] = field(default_factory=tuple)
    ban: tuple[Ban, ...] = field(default_factory=tuple)
    preference: tuple[PreferenceIntervention, ...] = field(default_factory=tuple)


_SOFT_BAN_PRICE = PriceIntervention(LampType.INCANDESCENT, 2013, 2018, 0.10)
_HARD_BAN_PRICE = PriceIntervention(LampType.INCANDESCENT, 2012, 2014, 0.20)
_CAMPAIGN = PreferenceIntervention(("financial_energy_focus", "environmental_energy_focus"), 2012, 1.5)


def builtin(scenario_id: str) -> Scenario:
    if scenario_id == "no_regulation":
        return Scenario("no_regulation")
    if scenario_id == "soft_ban":
        return Scenario("soft_ban", price=(_SOFT_BAN_PRICE,))
    if scenario_id == "hard_ban":
        return Scenario("hard_ban", price=(_HARD_BAN_PRICE,), ban=(Ban(LampType.INCANDESCENT, 2015),))
    if scenario_id == "info_campaign":
        return Scenario("info_campaign", preference=(_CAMPAIGN,))
    if scenario_id == "soft_ban_info":
        soft, info = builtin("soft_ban"), builtin("info_campaign")
        return Scenario(
            "soft_ban_info",
            price=soft.price + info.price,
            ban=soft.ban + info.ban,
            preference=soft.preference + info.preference,
        )
    raise ScenarioError(f"unknown scenario {scenario_id!r}; valid ids: {', '.join(BUILTIN_IDS)}")


def with_campaign_multiplier(scenario: Scenario, multiplier: float) -> Scenario:
    """Copy of ``scenario`` with every preference multiplier replaced."""
    prefs = tuple(PreferenceIntervention(p.fields, p.year, multiplier) for p in scenario.preference)
    return Scenario(scenario.id, scenario.price, scenario.ban, prefs)


def apply_preference_intervention(preferences: Any, intervention: PreferenceIntervention) -> None:
    """Multiply the named fields in place, capped at 1.0.

    ``preferences`` is anything exposing the fields as attributes: a single
    :class:`~lightadopt.agents.AgentPreferences`, or a population's column
    arrays. Lists of agents are handled by :func:`apply_to_population`.
    """
    for name in intervention.fields:
        value = getattr(preferences, name)
        setattr(preferences, name, _scale(value, intervention.multiplier))


def _scale(value, multiplier):
    if isinstance(value, np.ndarray):
        np.minimum(1.0, value * multiplier, out=value)
        return value
    return min(1.0, value * multiplier)


def apply_to_population(agents, intervention: PreferenceIntervention):
    for agent in agents:
        apply_preference_intervention(agent.preferences, intervention)
    return agents


# --------------------------------------------------------------------------- JSON

_TYPE_ENUM = [t.value for t in LampType]

SCENARIO_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["id"],
    "properties": {
        "id": {"type": "string", "minLength": 1},
        "price": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["type", "from", "to", "rate"],
                "properties": {
                    "type": {"enum": _TYPE_ENUM},
                    "from": {"type": "integer"},
                    "to": {"type": "integer"},
                    "rate": {"type": "number", "exclusiveMinimum": -1},
                },
            },
        },
        "ban": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["type", "year"],
                "properties": {"type": {"enum": _TYPE_ENUM}, "year": {"type": "integer"}},
            },
        },
        "preference": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["fields", "year", "multiplier"],
                "properties": {
                    "fields": {"type": "array", "minItems": 1, "items": {"enum": list(PREFERENCE_FIELDS)}},
                    "year": {"type": "integer"},
                    "multiplier": {"type": "number", "minimum": 0},
                },
            },
        },
    },
}


def validate_document(doc: Any, source: str = "<scenario>") -> None:
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors:
            where = "/".join(str(p) for p in err.absolute_path) or "(root)"
            lines.append(f"{source}: field {where}: {err.message}")
        raise ScenarioError("\n".join(lines))
    for i, iv in enumerate(doc.get("price", [])):
        if iv["to"] < iv["from"]:
            raise ScenarioError(f"{source}: field price/{i}: 'to' ({iv['to']}) precedes 'from' ({iv['from']})")


def scenario_from_dict(doc: Any, source: str = "<scenario>") -> Scenario:
    validate_document(doc, source)
    return Scenario(
        id=doc["id"],
        price=tuple(
            PriceIntervention(LampType(p["type"]), p["from"], p["to"], float(p["rate"])) for p in doc.get("price", [])
        ),
        ban=tuple(Ban(LampType(b["type"]), b["year"]) for b in doc.get("ban", [])),
        preference=tuple(
            PreferenceIntervention(tuple(p["fields"]), p["year"], float(p["multiplier"]))
            for p in doc.get("preference", [])
        ),
    )


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    return {
        "id": scenario.id,
        "price": [
            {"type": p.lamp_type.value, "from": p.start, "to": p.end, "rate": p.rate} for p in scenario.price
        ],
        "ban": [{"type": b.lamp_type.value, "year": b.year} for b in scenario.ban],
        "preference": [
            {"fields": list(p.fields), "year": p.year, "multiplier": p.multiplier} for p in scenario.preference
        ],
    }


def serialize(scenario: Scenario) -> str:
    """Canonical JSON text (two-space indent, trailing newline)."""
    return json.dumps(scenario_to_dict(scenario), indent=2) + "\n"


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(doc, source)


def parse_scenario_file(path: str | Path) -> Scenario:
    path = Path(path)
    return parse_scenario_text(path.read_text(encoding="utf-8"), str(path))


def resolve(ref: str) -> Scenario:
    """A built-in id, or a path to a scenario JSON file."""
    if ref in BUILTIN_IDS:
        return builtin(ref)
    if ref.endswith(".json") or Path(ref).is_file():
        return parse_scenario_file(ref)
    return builtin(ref)
