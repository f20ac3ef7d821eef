"""Aggregation of finished runs: ensemble statistics, sensitivity, exports.

The long CSV is the canonical output. Floats are written with ``repr`` so a
re-import reproduces every statistic exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import jsonschema
import numpy as np
from scipy.stats import spearmanr

from .agents import Agent
from .behavior import Strategy
from .engine import RunResult, format_month, parse_month
from .market import LampType, MarketState

CSV_HEADER = ("scenario", "run", "month", "adoption", "rep", "imi", "del", "soc")
FACTOR_NAMES = ("led_price_factor", "incandescent_price_factor", "led_innovation_factor")
PRICE_PRODUCT = "led_x_incandescent_price"
MIN_SENSITIVITY_RUNS = 10
N_STRATEGIES = len(Strategy)


class ExportError(OSError):
    """File output failed; the message carries the offending path."""


# --------------------------------------------------------------------------- per-run quantities


def adoption_share(population: Sequence[Agent]) -> float:
    """Fraction of all lamps in all households that are not incandescent."""
    total = 0
    inc = 0
    for agent in population:
        total += len(agent.inventory)
        inc += sum(1 for lamp in agent.inventory if agent.lamp_types[lamp.model_id] is LampType.INCANDESCENT)
    if total == 0:
        raise ValueError("adoption share of an empty population is undefined")
    return (total - inc) / total


def strategy_shares(events: Iterable[int]) -> tuple[np.ndarray, bool]:
    """Shares of (repetition, imitation, deliberation, social comparison).

    ``events`` holds one executed strategy per replacement. With no events the
    all-zero sentinel is returned and the second value (``missing``) is True.
    """
    counts = np.bincount(np.asarray(list(events), dtype=np.int64), minlength=N_STRATEGIES).astype(float)
    if len(counts) > N_STRATEGIES:
        raise ValueError("strategy codes must lie in 0..3")
    total = counts.sum()
    if total == 0:
        return np.zeros(N_STRATEGIES), True
    return counts / total, False


def share_series(counts: np.ndarray) -> np.ndarray:
    """(months, 4) event counts -> shares, with NaN rows for months without events."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum(axis=1, keepdims=True)
    out = np.full(counts.shape, np.nan)
    np.divide(counts, total, out=out, where=total > 0)
    return out


def tipping_point(run: RunResult, trace: Sequence[MarketState]) -> int | None:
    """First month of the run whose cheapest available model is not incandescent.

    ``trace`` is indexed by absolute month (as from ``market_trace``). Price ties
    go to the lower catalog id. Returns an absolute month index or None.
    """
    for k in range(run.months):
        state = trace[run.start_month + k]
        ids = np.flatnonzero(state.available)
        if len(ids) == 0:
            continue
        cheapest = ids[np.argmin(state.price[ids])]  # argmin keeps the first (lowest id) tie
        if state.catalog[cheapest].lamp_type is not LampType.INCANDESCENT:
            return run.start_month + k
    return None


# --------------------------------------------------------------------------- ensemble


class _Welford:
    """Streaming mean / population variance, vectorised over months."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def push(self, x: np.ndarray) -> None:
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.m2 / self.n, 0.0))


@dataclass
class EnsembleStats:
    scenario_id: str
    start_month: int
    adoption: np.ndarray  # (runs, months)
    shares: np.ndarray  # (runs, months, 4), NaN where a run had no events
    mean: np.ndarray
    std: np.ndarray
    strategy_mean: np.ndarray  # (months, 4), NaN where no run had events
    factors: np.ndarray | None = None  # (runs, 3)

    @property
    def runs(self) -> int:
        return self.adoption.shape[0]

    @property
    def months(self) -> int:
        return self.adoption.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.adoption[:, -1]

    @classmethod
    def from_series(
        cls,
        scenario_id: str,
        adoption: np.ndarray,
        shares: np.ndarray,
        factors: np.ndarray | None = None,
        start_month: int = 0,
    ) -> "EnsembleStats":
        adoption = np.asarray(adoption, dtype=float)
        shares = np.asarray(shares, dtype=float)
        if adoption.ndim != 2 or adoption.shape[0] == 0:
            raise ValueError("need at least one run")
        acc = _Welford(adoption.shape[1])
        for row in adoption:
            acc.push(row)
        valid = ~np.isnan(shares)
        n_valid = valid.sum(axis=0)
        summed = np.where(valid, shares, 0.0).sum(axis=0)
        strategy_mean = np.full(summed.shape, np.nan)
        np.divide(summed, n_valid, out=strategy_mean, where=n_valid > 0)
        return cls(
            scenario_id=scenario_id,
            start_month=start_month,
            adoption=adoption,
            shares=shares,
            mean=acc.mean,
            std=acc.std,
            strategy_mean=strategy_mean,
            factors=None if factors is None else np.asarray(factors, dtype=float),
        )

    @classmethod
    def from_runs(cls, results: Sequence[RunResult]) -> "EnsembleStats":
        if not results:
            raise ValueError("need at least one run")
        ids = {r.scenario_id for r in results}
        if len(ids) != 1:
            raise ValueError(f"runs from several scenarios: {sorted(ids)}")
        results = sorted(results, key=lambda r: r.run_index)
        factors = np.array(
            [[getattr(r.factors, name) for name in FACTOR_NAMES] for r in results],
            dtype=float,
        )
        return cls.from_series(
            results[0].scenario_id,
            np.stack([r.adoption for r in results]),
            np.stack([share_series(r.strategy_counts) for r in results]),
            factors,
            results[0].start_month,
        )


def efficacy_ranking(stats: Mapping[str, EnsembleStats]) -> list[tuple[str, float]]:
    """Scenarios by mean final adoption, highest first (ties by id)."""
    return sorted(((sid, float(s.mean[-1])) for sid, s in stats.items()), key=lambda x: (-x[1], x[0]))


# --------------------------------------------------------------------------- sensitivity


@dataclass(frozen=True)
class SensitivityReport:
    scenario_id: str
    runs: int
    correlations: dict[str, float | None]  # Spearman rho; None when undefined


def _rank_corr(x: np.ndarray, y: np.ndarray) -> float | None:
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    rho = spearmanr(x, y).statistic
    return None if not np.isfinite(rho) else float(rho)


def sensitivity_report(stats: EnsembleStats) -> SensitivityReport:
    """Rank correlation of each run factor, and of the LED x incandescent price product, with final adoption."""
    if stats.factors is None:
        raise ValueError("ensemble carries no factor table")
    if stats.runs < MIN_SENSITIVITY_RUNS:
        raise ValueError(f"sensitivity needs at least {MIN_SENSITIVITY_RUNS} runs, got {stats.runs}")
    y = stats.final
    corr = {name: _rank_corr(stats.factors[:, k], y) for k, name in enumerate(FACTOR_NAMES)}
    corr[PRICE_PRODUCT] = _rank_corr(stats.factors[:, 0] * stats.factors[:, 1], y)
    return SensitivityReport(stats.scenario_id, stats.runs, corr)


# --------------------------------------------------------------------------- CSV


def _open_for_write(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", encoding="utf-8", newline="")
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_csv(stats: Mapping[str, EnsembleStats] | Sequence[EnsembleStats], path: str | Path) -> Path:
    """Long format, one row per (scenario, run, month). Missing strategy months are written as 0,0,0,0."""
    path = Path(path)
    items = list(stats.values()) if isinstance(stats, Mapping) else list(stats)
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for s in items:
            labels = [format_month(s.start_month + k) for k in range(s.months)]
            for run in range(s.runs):
                for k in range(s.months):
                    sh = s.shares[run, k]
                    sh = np.zeros(N_STRATEGIES) if np.isnan(sh).any() else sh
                    writer.writerow([s.scenario_id, run, labels[k], repr(float(s.adoption[run, k]))] + [repr(float(v)) for v in sh])
    return path


def read_csv(path: str | Path) -> dict[str, EnsembleStats]:
    """Rebuild per-scenario statistics from a long CSV (factor tables are not stored there)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc.strerror or exc}") from exc
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"{path}: header must be {','.join(CSV_HEADER)}")
    rows: dict[str, dict[int, list[tuple[int, float, list[float]]]]] = {}
    for line_no, row in enumerate(reader, start=2):
        if len(row) != len(CSV_HEADER):
            raise ValueError(f"{path}:{line_no}: expected {len(CSV_HEADER)} fields")
        month = parse_month(row[2])
        rows.setdefault(row[0], {}).setdefault(int(row[1]), []).append((month, float(row[3]), [float(v) for v in row[4:]]))
    out = {}
    for sid, runs in rows.items():
        adoption, shares = [], []
        start = None
        for run in sorted(runs):
            series = sorted(runs[run])
            start = series[0][0] if start is None else start
            adoption.append([a for _, a, _ in series])
            shares.append([[math.nan] * N_STRATEGIES if not any(sh) else sh for _, _, sh in series])
        out[sid] = EnsembleStats.from_series(sid, np.array(adoption), np.array(shares), None, start)
    return out


# --------------------------------------------------------------------------- JSON summary


def _nullable_number_array() -> dict:
    return {"type": "array", "items": {"type": ["number", "null"]}}


SUMMARY_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["config", "scenarios"],
    "properties": {
        "config": {"type": "object"},
        "ranking": {
            "type": "array",
            "items": {"type": "array", "prefixItems": [{"type": "string"}, {"type": "number"}], "minItems": 2, "maxItems": 2},
        },
        "scenarios": {
            "type": "object",
            "additionalProperties": {
                "type": "object",
                "required": ["runs", "start", "months", "mean", "std", "strategy_mean", "final_adoption"],
                "properties": {
                    "runs": {"type": "integer", "minimum": 1},
                    "start": {"type": "string", "pattern": "^[0-9]{4}-[0-9]{2}$"},
                    "months": {"type": "integer", "minimum": 1},
                    "mean": {"type": "array", "items": {"type": "number", "minimum": 0, "maximum": 1}},
                    "std": {"type": "array", "items": {"type": "number", "minimum": 0}},
                    "strategy_mean": {
                        "type": "object",
                        "required": ["rep", "imi", "del", "soc"],
                        "additionalProperties": _nullable_number_array(),
                    },
                    "final_adoption": {"type": "array", "items": {"type": "number"}},
                    "factors": {
                        "type": ["object", "null"],
                        "additionalProperties": {"type": "array", "items": {"type": "number"}},
                    },
                    "sensitivity": {"type": ["object", "null"], "additionalProperties": {"type": ["number", "null"]}},
                },
            },
        },
    },
}


def _floats(a: np.ndarray) -> list[float | None]:
    return [None if math.isnan(v) else float(v) for v in np.asarray(a, dtype=float)]


def summary_dict(
    stats: Mapping[str, EnsembleStats],
    config: Mapping[str, Any],
    sensitivity: Mapping[str, SensitivityReport] | None = None,
) -> dict[str, Any]:
    scenarios = {}
    for sid, s in stats.items():
        entry: dict[str, Any] = {
            "runs": s.runs,
            "start": format_month(s.start_month),
            "months": s.months,
            "mean": _floats(s.mean),
            "std": _floats(s.std),
            "strategy_mean": {key: _floats(s.strategy_mean[:, k]) for k, key in enumerate(CSV_HEADER[4:])},
            "final_adoption": _floats(s.final),
            "factors": None
            if s.factors is None
            else {name: _floats(s.factors[:, k]) for k, name in enumerate(FACTOR_NAMES)},
        }
        if sensitivity and sid in sensitivity:
            entry["sensitivity"] = dict(sensitivity[sid].correlations)
        scenarios[sid] = entry
    return {
        "config": dict(config),
        "ranking": [list(x) for x in efficacy_ranking(stats)],
        "scenarios": scenarios,
    }


def validate_summary(doc: Any) -> None:
    jsonschema.Draft202012Validator(SUMMARY_SCHEMA).validate(doc)


def write_json(doc: Any, path: str | Path) -> Path:
    path = Path(path)
    with _open_for_write(path) as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return path


# --------------------------------------------------------------------------- SVG

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_W, _H = 720, 420
_L, _R, _T, _B = 60, 170, 40, 45


def svg_plot(
    series: Sequence[tuple[str, np.ndarray, np.ndarray | None]],
    start_month: int,
    title: str,
    y_label: str = "non-incandescent share",
) -> str:
    """Self-contained line chart; each series is (label, mean, std or None for no band)."""
    months = max(len(m) for _, m, _ in series)
    pw, ph = _W - _L - _R, _H - _T - _B

    def x(k: float) -> float:
        return _L + pw * (k / max(months - 1, 1))

    def y(v: float) -> float:
        return _T + ph * (1.0 - min(1.0, max(0.0, v)))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="11">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_L}" y="22" font-size="14">{_escape(title)}</text>',
        f'<rect x="{_L}" y="{_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<line x1="{_L - 4}" x2="{_L + pw}" y1="{y(tick):.1f}" y2="{y(tick):.1f}" stroke="#ddd"/>')
        parts.append(f'<text x="{_L - 8}" y="{y(tick) + 4:.1f}" text-anchor="end">{int(tick * 100)}%</text>')
    for k in range(0, months, 24):
        label = format_month(start_month + k)[:4]
        parts.append(f'<text x="{x(k):.1f}" y="{_T + ph + 16}" text-anchor="middle">{label}</text>')
    parts.append(
        f'<text x="16" y="{_T + ph / 2:.1f}" transform="rotate(-90 16 {_T + ph / 2:.1f})" text-anchor="middle">{_escape(y_label)}</text>'
    )
    for i, (label, mean, std) in enumerate(series):
        colour = _COLOURS[i % len(_COLOURS)]
        mean = np.asarray(mean, dtype=float)
        ok = ~np.isnan(mean)
        if std is not None:
            std = np.asarray(std, dtype=float)
            upper = [f"{x(k):.1f},{y(mean[k] + std[k]):.1f}" for k in range(len(mean)) if ok[k]]
            lower = [f"{x(k):.1f},{y(mean[k] - std[k]):.1f}" for k in reversed(range(len(mean))) if ok[k]]
            parts.append(f'<polygon points="{" ".join(upper + lower)}" fill="{colour}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{x(k):.1f},{y(mean[k]):.1f}" for k in range(len(mean)) if ok[k])
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="1.6"/>')
        ly = _T + 14 + 16 * i
        parts.append(f'<line x1="{_W - _R + 12}" x2="{_W - _R + 30}" y1="{ly - 4}" y2="{ly - 4}" stroke="{colour}" stroke-width="2"/>')
        parts.append(f'<text x="{_W - _R + 36}" y="{ly}">{_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _write_text(path: Path, text: str) -> Path:
    with _open_for_write(path) as fh:
        fh.write(text)
    return path


def write_plots(stats: Mapping[str, EnsembleStats], out_dir: str | Path) -> list[Path]:
    """One adoption plot per scenario with a +-1 std band, and strategy-share plots per behaviour.

    With more than one scenario a combined mean plot (legend sorted by final
    adoption) is written too.
    """
    out_dir = Path(out_dir)
    written = []
    for sid, s in stats.items():
        written.append(
            _write_text(
                out_dir / f"adoption_{sid}.svg",
                svg_plot([(sid, s.mean, s.std)], s.start_month, f"{sid}: mean of {s.runs} runs, +-1 std"),
            )
        )
    if len(stats) > 1:
        ranked = [sid for sid, _ in efficacy_ranking(stats)]
        first = stats[ranked[0]]
        written.append(
            _write_text(
                out_dir / "adoption_compare.svg",
                svg_plot([(sid, stats[sid].mean, None) for sid in ranked], first.start_month, "mean adoption by scenario"),
            )
        )
    any_stats = next(iter(stats.values()))
    for k, strat in enumerate(Strategy):
        name = strat.name.lower()
        written.append(
            _write_text(
                out_dir / f"strategy_{name}.svg",
                svg_plot(
                    [(sid, s.strategy_mean[:, k], None) for sid, s in stats.items()],
                    any_stats.start_month,
                    f"{name.replace('_', ' ')} share of replacements",
                    y_label="share of replacements",
                ),
            )
        )
    return written


def export(
    stats: Mapping[str, EnsembleStats],
    out_dir: str | Path,
    config: Mapping[str, Any],
    sensitivity: Mapping[str, SensitivityReport] | None = None,
    plots: bool = True,
) -> dict[str, Any]:
    """Write runs.csv, summary.json and the SVG plots into ``out_dir``; returns the summary."""
    out_dir = Path(out_dir)
    write_csv(stats, out_dir / "runs.csv")
    doc = summary_dict(stats, config, sensitivity)
    validate_summary(doc)
    write_json(doc, out_dir / "summary.json")
    if plots:
        write_plots(stats, out_dir)
    return doc
