"""Command-line entry point: ``lightadopt run|compare|sensitivity|gen-archetypes|plot``.

Exit codes: 0 success, 1 runtime fault (simulation or I/O), 2 usage or
configuration error. Every flag can also be given in a JSON ``--config`` file;
flags win over the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, fields
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from . import __version__
from .agents import (
    DEFAULT_ARCHETYPE_COUNT,
    ConfigurationError,
    DynamicsParams,
    SatisfactionParams,
    archetypes_to_csv,
    generate_archetypes,
    load_archetypes,
)
from .behavior import BehaviorThresholds, SimulationFault
from .engine import RunFault, SimulationConfig, run_ensemble
from .market import MarketTrends, load_catalog
from .metrics import (
    EnsembleStats,
    ExportError,
    efficacy_ranking,
    export,
    read_csv,
    sensitivity_report,
    write_json,
    write_plots,
)
from .scenarios import BUILTIN_IDS, Scenario, ScenarioError, resolve, scenario_from_dict, scenario_to_dict

log = logging.getLogger("lightadopt")

OUT_ENV = "LIGHTADOPT_OUT"
DEFAULT_OUT = "lightadopt-out"

EXIT_OK, EXIT_FAULT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _section(cls) -> dict:
    return {
        "type": "object",
        "additionalProperties": False,
        "properties": {f.name: {"type": ["number", "boolean"]} for f in fields(cls)},
    }


_SCENARIO_REF = {"oneOf": [{"type": "string"}, {"type": "object"}]}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": _SCENARIO_REF,
        "scenarios": {"type": "array", "items": _SCENARIO_REF},
        "runs": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "agents": {"type": "integer", "minimum": 2},
        "jobs": {"type": "integer", "minimum": 1},
        "out": {"type": "string"},
        "start": {"type": "string"},
        "end": {"type": "string"},
        "plots": {"type": "boolean"},
        "count": {"type": "integer", "minimum": 1},
        "input": {"type": "string"},
        "social_sample_size": {"type": "integer", "minimum": 0},
        "archetype_count": {"type": "integer", "minimum": 1},
        "archetype_seed": {"type": "integer", "minimum": 0},
        "archetypes": {"type": "string"},
        "catalog": {"type": "string"},
        "thresholds": _section(BehaviorThresholds),
        "satisfaction": _section(SatisfactionParams),
        "dynamics": _section(DynamicsParams),
        "trends": _section(MarketTrends),
    },
}


# --------------------------------------------------------------------------- configuration


def load_config_file(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    errors = sorted(jsonschema.Draft202012Validator(CONFIG_SCHEMA).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.path) or "<root>"
        raise UsageError(f"{path}: {where}: {e.message}")
    return doc


def _pick(args: argparse.Namespace, doc: dict, flag: str, key: str | None = None, default=None):
    value = getattr(args, flag, None)
    if value is not None:
        return value
    return doc.get(key or flag, default)


def _scenario(ref: Any) -> Scenario:
    if isinstance(ref, dict):
        return scenario_from_dict(ref, "<config>")
    try:
        return resolve(ref)
    except OSError as exc:
        raise UsageError(f"cannot read scenario {ref}: {exc.strerror or exc}") from None


def build_config(args: argparse.Namespace, doc: dict) -> SimulationConfig:
    kw: dict[str, Any] = {}
    for flag, key, name in (
        ("runs", "runs", "runs"),
        ("seed", "seed", "master_seed"),
        ("agents", "agents", "n_agents"),
        ("start", "start", "start"),
        ("end", "end", "end"),
    ):
        value = _pick(args, doc, flag, key)
        if value is not None:
            kw[name] = value
    for key in ("social_sample_size", "archetype_count", "archetype_seed"):
        if key in doc:
            kw[key] = doc[key]
    for key, cls in (
        ("thresholds", BehaviorThresholds),
        ("satisfaction", SatisfactionParams),
        ("dynamics", DynamicsParams),
        ("trends", MarketTrends),
    ):
        if key in doc:
            try:
                kw[key] = cls(**doc[key])
            except (TypeError, ValueError) as exc:
                raise UsageError(f"config section {key!r}: {exc}") from None
    arche = _pick(args, doc, "archetypes")
    if arche is not None:
        kw["archetypes"] = tuple(load_archetypes(arche))
    catalog = _pick(args, doc, "catalog")
    if catalog is not None:
        try:
            kw["catalog"] = tuple(load_catalog(catalog))
        except OSError as exc:
            raise UsageError(f"cannot read catalog {catalog}: {exc.strerror or exc}") from None
    return SimulationConfig(**kw)


def config_record(config: SimulationConfig, scenarios: Sequence[Scenario]) -> dict[str, Any]:
    """Effective model configuration for provenance (execution settings like --jobs excluded)."""
    return {
        "version": __version__,
        "scenarios": [scenario_to_dict(s) for s in scenarios],
        "runs": config.runs,
        "seed": config.master_seed,
        "agents": config.n_agents,
        "start": config.start,
        "end": config.end,
        "social_sample_size": config.social_sample_size,
        "archetype_count": len(config.archetype_list()),
        "archetype_seed": None if config.archetypes is not None else config.archetype_seed,
        "archetypes": "custom" if config.archetypes is not None else "generated",
        "catalog": "custom" if config.catalog is not None else "default",
        "thresholds": asdict(config.thresholds),
        "satisfaction": asdict(config.satisfaction),
        "dynamics": asdict(config.dynamics),
        "trends": asdict(config.trends),
    }


def _out_dir(args: argparse.Namespace, doc: dict) -> Path:
    out = Path(_pick(args, doc, "out", default=None) or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ExportError(f"cannot create output directory {out}: {exc.strerror or exc}") from None
    if not os.access(out, os.W_OK):
        raise ExportError(f"output directory {out} is not writable")
    return out


def _run_all(scenarios: Sequence[Scenario], config: SimulationConfig, jobs: int) -> dict[str, EnsembleStats]:
    stats = {}
    for sc in scenarios:
        log.info("running %s: %d runs x %d agents", sc.id, config.runs, config.n_agents)
        stats[sc.id] = EnsembleStats.from_runs(run_ensemble(sc, config, jobs=jobs))
    return stats


# --------------------------------------------------------------------------- subcommands


def cmd_run(args: argparse.Namespace, doc: dict) -> int:
    ref = _pick(args, doc, "scenario")
    if ref is None:
        raise UsageError("run needs --scenario (or 'scenario' in the config file)")
    scenario = _scenario(ref)
    config = build_config(args, doc)
    out = _out_dir(args, doc)
    jobs = _pick(args, doc, "jobs", default=1)
    stats = _run_all([scenario], config, jobs)
    export(stats, out, config_record(config, [scenario]), plots=_pick(args, doc, "plots", default=True))
    s = stats[scenario.id]
    print(f"{scenario.id}: final adoption {s.mean[-1]:.3f} +- {s.std[-1]:.3f} over {s.runs} runs -> {out}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, doc: dict) -> int:
    refs = _pick(args, doc, "scenarios")
    if not refs or len(refs) < 2:
        raise UsageError("compare needs at least two scenarios")
    scenarios = [_scenario(r) for r in refs]
    ids = [s.id for s in scenarios]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise UsageError(f"duplicate scenario(s): {', '.join(dupes)}")
    config = build_config(args, doc)
    out = _out_dir(args, doc)
    jobs = _pick(args, doc, "jobs", default=1)
    stats = _run_all(scenarios, config, jobs)
    export(stats, out, config_record(config, scenarios), plots=_pick(args, doc, "plots", default=True))
    print(f"efficacy ranking at {config.end} (mean adoption over {config.runs} runs):")
    for rank, (sid, value) in enumerate(efficacy_ranking(stats), start=1):
        print(f"  {rank}. {sid:<16} {value:.3f}")
    return EXIT_OK


def cmd_sensitivity(args: argparse.Namespace, doc: dict) -> int:
    scenario = _scenario(_pick(args, doc, "scenario", default="soft_ban"))
    config = build_config(args, doc)
    out = _out_dir(args, doc)
    jobs = _pick(args, doc, "jobs", default=1)
    stats = _run_all([scenario], config, jobs)
    try:
        report = sensitivity_report(stats[scenario.id])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    export(stats, out, config_record(config, [scenario]), {scenario.id: report}, plots=_pick(args, doc, "plots", default=True))
    write_json({"scenario": scenario.id, "runs": report.runs, "spearman": report.correlations}, out / "sensitivity.json")
    print(f"{scenario.id}: Spearman rank correlation with final adoption ({report.runs} runs)")
    for name, rho in report.correlations.items():
        print(f"  {name:<28} {'undefined' if rho is None else f'{rho:+.3f}'}")
    return EXIT_OK


def cmd_gen_archetypes(args: argparse.Namespace, doc: dict) -> int:
    count = _pick(args, doc, "count", default=DEFAULT_ARCHETYPE_COUNT)
    if count < 1:
        raise UsageError("--count must be >= 1")
    seed = _pick(args, doc, "seed", default=0)
    text = archetypes_to_csv(generate_archetypes(count, np.random.default_rng(seed)))
    out = _pick(args, doc, "out")
    if out is None:
        sys.stdout.write(text)
        return EXIT_OK
    path = Path(out)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from None
    print(f"wrote {count} archetypes to {path}")
    return EXIT_OK


def cmd_plot(args: argparse.Namespace, doc: dict) -> int:
    src = _pick(args, doc, "input")
    if src is None:
        raise UsageError("plot needs --input runs.csv")
    try:
        stats = read_csv(src)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out_dir(args, doc)
    for path in write_plots(stats, out):
        print(path)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def _common(p: argparse.ArgumentParser, runs: bool = True) -> None:
    p.add_argument("--config", help="JSON file with defaults for any flag and model constants")
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    if runs:
        p.add_argument("--runs", type=int, help="Monte Carlo runs per scenario (default 50)")
        p.add_argument("--seed", type=int, help="master seed (default 42)")
        p.add_argument("--agents", type=int, help="agents per run (default 1000)")
        p.add_argument("--jobs", type=int, help="worker processes; results do not depend on it (default 1)")
        p.add_argument("--start", help="first month, YYYY-MM (default 2006-01)")
        p.add_argument("--end", help="last month, YYYY-MM (default 2025-12)")
        p.add_argument("--archetypes", help="archetype CSV to use instead of the generated set")
        p.add_argument("--catalog", help="lamp catalog CSV to use instead of the built-in one")
        p.add_argument("--no-plots", dest="plots", action="store_const", const=False, help="skip SVG output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lightadopt", description="Household lighting adoption simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario ensemble")
    p.add_argument("--scenario", help=f"built-in id ({', '.join(BUILTIN_IDS)}) or scenario JSON file")
    _common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several scenarios and rank them")
    p.add_argument("--scenarios", nargs="+", help="two or more scenario ids or files")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sensitivity", help="rank correlation of run factors with final adoption")
    p.add_argument("--scenario", help="scenario id or file (default soft_ban)")
    _common(p)
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("gen-archetypes", help="write a synthetic archetype CSV")
    p.add_argument("--count", type=int, help=f"number of archetypes (default {DEFAULT_ARCHETYPE_COUNT})")
    p.add_argument("--seed", type=int, help="generator seed (default 0)")
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--config", help="JSON file with defaults for the flags")
    p.set_defaults(func=cmd_gen_archetypes)

    p = sub.add_parser("plot", help="redraw SVG plots from a runs.csv")
    p.add_argument("--input", help="long-format CSV written by run/compare")
    _common(p, runs=False)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        doc = load_config_file(getattr(args, "config", None))
        return args.func(args, doc)
    except (UsageError, ScenarioError, ConfigurationError) as exc:
        print(f"lightadopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationFault, RunFault, ExportError, OSError) as exc:
        print(f"lightadopt: {exc}", file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
