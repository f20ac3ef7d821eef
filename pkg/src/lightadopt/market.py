"""Lamp catalog and the time-evolving market it lives in.

All effective quantities are pure functions of (catalog, scenario, run factors,
month). Prices and efficiencies move once a year, in January.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

if TYPE_CHECKING:
    from .scenarios import Scenario

START_YEAR = 2006
END_YEAR = 2025
MONTHS = (END_YEAR - START_YEAR + 1) * 12

CATALOG_HEADER = (
    "type",
    "price_eur",
    "efficiency_pct",
    "colour_pct",
    "rampup_s",
    "lifetime_months",
    "available",
)


class LampType(str, Enum):
    INCANDESCENT = "Incandescent"
    CFL = "CFL"
    LED = "LED"

    @property
    def index(self) -> int:
        return _TYPE_ORDER[self]


_TYPE_ORDER = {LampType.INCANDESCENT: 0, LampType.CFL: 1, LampType.LED: 2}
LAMP_TYPES = tuple(_TYPE_ORDER)


@dataclass(frozen=True)
class LampModel:
    id: int
    lamp_type: LampType
    base_price: float
    base_efficiency: float
    colour_discrepancy: float
    ramp_up: float
    mean_lifetime: float
    initially_available: bool


@dataclass(frozen=True)
class MarketTrends:
    """Scenario-independent LED progress.

    Price falls in each of the years ``led_price_from..led_price_to`` and
    efficiency grows in each of ``led_efficiency_from..led_efficiency_to``;
    both rates are scaled by the run's random factors.
    """

    led_price_rate: float = -0.10
    led_price_from: int = 2007
    led_price_to: int = 2019
    led_efficiency_rate: float = 0.05
    led_efficiency_from: int = 2007
    led_efficiency_to: int = 2020
    efficiency_cap: float = 0.99
    introduction_year: int = 2006


DEFAULT_TRENDS = MarketTrends()


@dataclass(frozen=True)
class RunFactors:
    led_price_factor: float = 1.0
    incandescent_price_factor: float = 1.0
    led_innovation_factor: float = 1.0

    @classmethod
    def draw(cls, rng: np.random.Generator, low: float = 0.5, high: float = 2.0) -> "RunFactors":
        led, inc, innov = rng.uniform(low, high, size=3)
        return cls(float(led), float(inc), float(innov))

    def price_factor(self, lamp_type: LampType) -> float:
        if lamp_type is LampType.LED:
            return self.led_price_factor
        if lamp_type is LampType.INCANDESCENT:
            return self.incandescent_price_factor
        return 1.0


NEUTRAL_FACTORS = RunFactors()


# --------------------------------------------------------------------------- catalog


def parse_catalog(text: str) -> list[LampModel]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CATALOG_HEADER:
        raise ValueError(f"catalog header must be {','.join(CATALOG_HEADER)}, got {reader.fieldnames}")
    models = []
    for i, row in enumerate(reader):
        try:
            lamp_type = LampType(row["type"])
        except ValueError:
            raise ValueError(f"catalog row {i + 2}: unknown lamp type {row['type']!r}") from None
        flag = row["available"].strip().upper()
        if flag not in ("Y", "N"):
            raise ValueError(f"catalog row {i + 2}: available must be Y or N")
        models.append(
            LampModel(
                id=i,
                lamp_type=lamp_type,
                base_price=float(row["price_eur"]),
                base_efficiency=float(row["efficiency_pct"]) / 100,
                colour_discrepancy=float(row["colour_pct"]) / 100,
                ramp_up=float(row["rampup_s"]),
                mean_lifetime=float(row["lifetime_months"]),
                initially_available=flag == "Y",
            )
        )
    return models


def _num(x: float) -> str:
    return format(round(x, 6), "g")


def catalog_to_csv(models: Iterable[LampModel]) -> str:
    lines = [",".join(CATALOG_HEADER)]
    for m in models:
        lines.append(
            ",".join(
                [
                    m.lamp_type.value,
                    f"{m.base_price:.2f}",
                    _num(m.base_efficiency * 100),
                    _num(m.colour_discrepancy * 100),
                    _num(m.ramp_up),
                    _num(m.mean_lifetime),
                    "Y" if m.initially_available else "N",
                ]
            )
        )
    return "\n".join(lines) + "\n"


def default_catalog_text() -> str:
    return resources.files("lightadopt").joinpath("data/catalog.csv").read_text(encoding="utf-8")


def default_catalog() -> list[LampModel]:
    return parse_catalog(default_catalog_text())


def load_catalog(path: str | Path | None = None) -> list[LampModel]:
    if path is None:
        return default_catalog()
    return parse_catalog(Path(path).read_text(encoding="utf-8"))


# --------------------------------------------------------------------------- dynamics


def month_to_year(month: int) -> int:
    return START_YEAR + month // 12


def year_to_month(year: int) -> int:
    return (year - START_YEAR) * 12


def _steps(year: int, first: int, last: int) -> int:
    """Number of January changes that have happened by ``year`` in first..last."""
    return min(max(year - first + 1, 0), last - first + 1)


def effective_price(
    model: LampModel,
    year: int,
    scenario: "Scenario | None" = None,
    factors: RunFactors = NEUTRAL_FACTORS,
    trends: MarketTrends = DEFAULT_TRENDS,
) -> float:
    price = model.base_price
    m = factors.price_factor(model.lamp_type)
    if model.lamp_type is LampType.LED:
        k = _steps(year, trends.led_price_from, trends.led_price_to)
        price *= (1.0 + trends.led_price_rate * m) ** k
    if scenario is not None:
        for iv in scenario.price:
            if iv.lamp_type is model.lamp_type:
                price *= (1.0 + iv.rate * m) ** _steps(year, iv.start, iv.end)
    return price


def effective_efficiency(
    model: LampModel,
    year: int,
    factors: RunFactors = NEUTRAL_FACTORS,
    trends: MarketTrends = DEFAULT_TRENDS,
) -> float:
    if model.lamp_type is not LampType.LED:
        return model.base_efficiency
    k = _steps(year, trends.led_efficiency_from, trends.led_efficiency_to)
    grown = model.base_efficiency * (1.0 + trends.led_efficiency_rate * factors.led_innovation_factor) ** k
    return min(trends.efficiency_cap, grown)


def is_available(
    model: LampModel,
    year: int,
    scenario: "Scenario | None" = None,
    trends: MarketTrends = DEFAULT_TRENDS,
) -> bool:
    # Models flagged "N" in the catalog are not yet in households but can be
    # bought from the introduction year on (LEDs: 2006).
    if not model.initially_available and year < trends.introduction_year:
        return False
    if scenario is not None:
        for ban in scenario.ban:
            if ban.lamp_type is model.lamp_type and year >= ban.year:
                return False
    return True


@dataclass(frozen=True)
class MarketState:
    """Effective market at one month; arrays are indexed by catalog id and read-only."""

    month: int
    year: int
    price: np.ndarray
    efficiency: np.ndarray
    available: np.ndarray
    catalog: tuple[LampModel, ...] = ()

    @property
    def type_index(self) -> np.ndarray:
        return np.array([m.lamp_type.index for m in self.catalog], dtype=np.int64)

    def __post_init__(self) -> None:
        for arr in (self.price, self.efficiency, self.available):
            arr.setflags(write=False)


def market_state(
    catalog: Sequence[LampModel],
    month: int,
    scenario: "Scenario | None" = None,
    factors: RunFactors = NEUTRAL_FACTORS,
    trends: MarketTrends = DEFAULT_TRENDS,
) -> MarketState:
    year = month_to_year(month)
    price = np.array([effective_price(m, year, scenario, factors, trends) for m in catalog], dtype=float)
    eff = np.array([effective_efficiency(m, year, factors, trends) for m in catalog], dtype=float)
    avail = np.array([is_available(m, year, scenario, trends) for m in catalog], dtype=bool)
    return MarketState(month=month, year=year, price=price, efficiency=eff, available=avail, catalog=tuple(catalog))


def market_trace(
    catalog: Sequence[LampModel],
    scenario: "Scenario | None",
    factors: RunFactors,
    months: int = MONTHS,
    trends: MarketTrends = DEFAULT_TRENDS,
) -> list[MarketState]:
    # Values only change in January, so states are shared within a year.
    by_year: dict[int, MarketState] = {}
    trace = []
    for month in range(months):
        year = month_to_year(month)
        if year not in by_year:
            by_year[year] = market_state(catalog, month, scenario, factors, trends)
        s = by_year[year]
        trace.append(MarketState(month, year, s.price, s.efficiency, s.available, s.catalog))
    return trace


def available_models(state: MarketState) -> list[int]:
    return [int(i) for i in np.flatnonzero(state.available)]
