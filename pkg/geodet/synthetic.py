"""Synthetic data with known answers.

:func:`generate` draws a stratified sample whose q-statistic is known
exactly (it is computed from the realized values, not the population
parameters).  :func:`generate_seasonal` emulates the surveillance setting:
seven seasonal weather series and a monthly positive rate driven by a
weighted combination of them.  :func:`write_workspace` turns a seasonal
spec into stations/cases/cities CSVs that go through the normal pipeline.

All output is a pure function of the SeasonalSpec and the seed.
"""

from __future__ import annotations

import datetime
import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import expit

from geodet._csv_io import write_cases, write_cities, write_stations
from geodet.common import (
    FACTORS,
    SUM_FACTORS,
    VIRUSES,
    BadSpecError,
    CaseCount,
    City,
    GroupKey,
    OutcomeSeries,
    StationDay,
    StratumAssignment,
    YearMonth,
)
from geodet.pipeline import FactorPanel

# ---------------------------------------------------------------------------
# Stratified samples
# ---------------------------------------------------------------------------


def generate(
    n: int,
    l: int,  # noqa: E741
    stratum_means: Sequence[float],
    within_sd: float,
    seed: int,
) -> tuple[np.ndarray, StratumAssignment, float]:
    """Draw ``y_i = mu[h(i)] + e_i`` over *l* balanced strata.

    Observation ``i`` belongs to stratum ``i % l + 1``, so stratum sizes
    differ by at most one.  Returns ``(y, strata, q_true)`` where ``q_true``
    is the between-strata share of the realized sum of squares.

    Raises:
        BadSpecError: ``n < 2 * l``, a negative *within_sd*, a mean per
            stratum missing, or a sample with no variance at all.
    """
    if l < 1:
        raise BadSpecError(f"l must be >= 1, got {l}")
    if n < 2 * l:
        raise BadSpecError(f"need n >= 2 * l, got n={n}, l={l}")
    if within_sd < 0:
        raise BadSpecError(f"within_sd must be >= 0, got {within_sd}")
    means = np.asarray(stratum_means, dtype=np.float64)
    if means.shape != (l,):
        raise BadSpecError(f"expected {l} stratum means, got {means.size}")

    rng = np.random.default_rng(seed)
    labels = np.arange(n) % l
    y = means[labels] + rng.normal(0.0, within_sd, size=n) if within_sd > 0 else means[labels].copy()

    grand = y.mean()
    group_means = np.array([y[labels == h].mean() for h in range(l)])
    sizes = np.bincount(labels, minlength=l)
    ssb = float(np.sum(sizes * (group_means - grand) ** 2))
    ssw = float(np.sum((y - group_means[labels]) ** 2))
    if ssb + ssw == 0.0:
        raise BadSpecError("generated sample has no variance; use distinct means or within_sd > 0")
    strata = StratumAssignment(tuple(labels + 1), l, method="synthetic")
    return y, strata, ssb / (ssb + ssw)


# ---------------------------------------------------------------------------
# Seasonal surveillance series
# ---------------------------------------------------------------------------

#: (level, seasonal amplitude, lower bound, upper bound) of each factor's monthly value.
_CLIMATE: dict[str, tuple[float, float, float, float]] = {
    "temp": (15.0, 12.0, -60.0, 50.0),
    "pressure": (1010.0, 10.0, 800.0, 1100.0),
    "vapour": (15.0, 8.0, 0.1, 60.0),
    "rain": (100.0, 80.0, 0.0, 1000.0),
    "sun": (180.0, 60.0, 0.0, 400.0),
    "rh": (70.0, 15.0, 1.0, 100.0),
    "wind": (3.0, 1.0, 0.1, 30.0),
}


@dataclass(frozen=True)
class SeasonalSpec:
    """Parameters of a synthetic surveillance study.

    Attributes:
        years: Whole years of monthly data (at least 2).
        start_year: First calendar year.
        weights: Factor -> weight on its standardized series in the logit
            of the positive rate; unlisted factors weigh 0.
        baseline: Logit of the positive rate when every factor is at its mean.
        noise: Standard deviation of additive noise on the rate.
        factor_noise: Month-to-month noise on each factor, as a share of its
            seasonal amplitude; keeps the seasonal factors from being collinear.
        tested_per_month: Patients tested per month (per city in a workspace).
        viruses: Viruses to simulate; each gets its own rate noise.
        n_cities: Cities in a workspace, split evenly between north and south.
        n_stations: Weather stations in a workspace.
        missing_days: Share of station-days left blank in a workspace.
    """

    years: int = 5
    start_year: int = 2009
    weights: Mapping[str, float] = field(default_factory=lambda: {"temp": 1.0})
    baseline: float = -1.0
    noise: float = 0.02
    factor_noise: float = 0.5
    tested_per_month: int = 500
    viruses: tuple[str, ...] = ("RSV",)
    n_cities: int = 6
    n_stations: int = 12
    missing_days: float = 0.02

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", dict(self.weights))
        object.__setattr__(self, "viruses", tuple(self.viruses))
        if self.years < 2:
            raise BadSpecError(f"years must be >= 2, got {self.years}")
        unknown = sorted(set(self.weights) - set(FACTORS))
        if unknown:
            raise BadSpecError(f"weights for unknown factor(s): {', '.join(unknown)}")
        if self.noise < 0 or self.factor_noise < 0:
            raise BadSpecError("noise and factor_noise must be >= 0")
        if self.tested_per_month < 1:
            raise BadSpecError(f"tested_per_month must be >= 1, got {self.tested_per_month}")
        if not self.viruses or any(v not in VIRUSES for v in self.viruses):
            raise BadSpecError(f"viruses must be a non-empty subset of {', '.join(VIRUSES)}")
        if self.n_cities < 2 or self.n_stations < 1:
            raise BadSpecError("need at least 2 cities and 1 station")
        if not 0.0 <= self.missing_days < 0.2:
            raise BadSpecError(f"missing_days must be in [0, 0.2), got {self.missing_days}")

    @property
    def months(self) -> tuple[YearMonth, ...]:
        return tuple(YearMonth(self.start_year + i // 12, i % 12 + 1) for i in range(12 * self.years))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SeasonalSpec:
        unknown = sorted(set(data) - {f.name for f in fields(cls)})
        if unknown:
            raise BadSpecError(f"unknown spec key(s): {', '.join(unknown)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise BadSpecError(f"bad spec: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> SeasonalSpec:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise BadSpecError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise BadSpecError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data)


def _seasonal_factors(spec: SeasonalSpec, rng: np.random.Generator) -> np.ndarray:
    """Monthly factor values, shape ``(months, 7)``, columns in :data:`FACTORS` order."""
    n = 12 * spec.years
    season = 2 * np.pi * (np.arange(n) % 12) / 12
    columns = []
    for j, name in enumerate(FACTORS):
        level, amplitude, lo, hi = _CLIMATE[name]
        phase = 2 * np.pi * j / len(FACTORS)
        wobble = rng.normal(0.0, spec.factor_noise * amplitude, size=n)
        columns.append(np.clip(level + amplitude * np.sin(season + phase) + wobble, lo, hi))
    return np.column_stack(columns)


def _seasonal_rates(spec: SeasonalSpec, factors: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sd = factors.std(axis=0)
    z = (factors - factors.mean(axis=0)) / np.where(sd > 0, sd, 1.0)
    w = np.array([spec.weights.get(name, 0.0) for name in FACTORS])
    rate = expit(spec.baseline + z @ w) + rng.normal(0.0, spec.noise, size=len(factors))
    return np.clip(rate, 0.0, 1.0)


def generate_seasonal(spec: SeasonalSpec, seed: int) -> tuple[OutcomeSeries, FactorPanel]:
    """One outcome series (first virus, all regions) and its factor panel.

    Factors are sinusoids with phase offsets plus noise; the positive rate
    is ``logistic(baseline + sum(weight * standardized factor)) + noise``,
    clamped to [0, 1], and positives are drawn binomially from
    ``tested_per_month`` tests.
    """
    rng = np.random.default_rng(seed)
    factors = _seasonal_factors(spec, rng)
    rates = _seasonal_rates(spec, factors, rng)
    tested = np.full(len(rates), spec.tested_per_month)
    positive = rng.binomial(tested, rates)
    months = spec.months
    series = OutcomeSeries(
        GroupKey(spec.viruses[0], "all"),
        months,
        tuple(int(t) for t in tested),
        tuple(int(p) for p in positive),
    )
    panel = FactorPanel(
        "all",
        months,
        {name: tuple(float(v) for v in factors[:, j]) for j, name in enumerate(FACTORS)},
    )
    return series, panel


# ---------------------------------------------------------------------------
# CSV workspaces
# ---------------------------------------------------------------------------


def _sites(spec: SeasonalSpec, rng: np.random.Generator) -> tuple[list[City], list[tuple[str, float, float]]]:
    half = spec.n_cities // 2
    cities = []
    for i in range(spec.n_cities):
        north = i < half
        lat = rng.uniform(34.0, 45.0) if north else rng.uniform(22.0, 31.0)
        cities.append(City(f"C{i + 1:02d}", round(lat, 4), round(rng.uniform(105.0, 122.0), 4), "north" if north else "south"))
    stations = [
        (f"S{i + 1:03d}", round(rng.uniform(21.0, 46.0), 4), round(rng.uniform(103.0, 124.0), 4))
        for i in range(spec.n_stations)
    ]
    return cities, stations


def write_workspace(spec: SeasonalSpec, seed: int, out_dir: str | os.PathLike[str]) -> dict[str, Path]:
    """Write ``stations.csv``, ``cases.csv`` and ``cities.csv`` for *spec*.

    Every station sees the same monthly climate, spread over its days with
    a little per-day noise and a share of blank days; every city reports
    ``tested_per_month`` tests per virus per month.  Returns the paths
    keyed by table name.
    """
    rng = np.random.default_rng(seed)
    factors = _seasonal_factors(spec, rng)
    cities, stations = _sites(spec, rng)
    months = spec.months

    days: list[StationDay] = []
    for station_id, lat, lon in stations:
        for m, month in enumerate(months):
            for d in range(1, month.days + 1):
                reading: dict[str, float | None] = {}
                for j, name in enumerate(FACTORS):
                    if rng.random() < spec.missing_days:
                        reading[name] = None
                        continue
                    level, amplitude, lo, hi = _CLIMATE[name]
                    if name in SUM_FACTORS:
                        value = factors[m, j] / month.days
                        hi = 24.0 if name == "sun" else hi
                    else:
                        value = factors[m, j] + rng.normal(0.0, 0.01 * amplitude)
                    reading[name] = round(float(np.clip(value, lo, hi)), 4)
                days.append(StationDay(station_id, lat, lon, datetime.date(month.year, month.month, d), **reading))

    cases: list[CaseCount] = []
    for virus in spec.viruses:
        rates = _seasonal_rates(spec, factors, rng)
        for m, month in enumerate(months):
            for city in cities:
                positive = int(rng.binomial(spec.tested_per_month, rates[m]))
                cases.append(CaseCount(month, city.city_id, virus, None, None, spec.tested_per_month, positive))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"stations": out / "stations.csv", "cases": out / "cases.csv", "cities": out / "cities.csv"}
    write_stations(days, paths["stations"])
    write_cases(cases, paths["cases"])
    write_cities(cities, paths["cities"])
    return paths
