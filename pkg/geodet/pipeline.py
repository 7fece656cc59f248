"""From daily station readings and monthly counts to a report bundle.

The stages, each usable on its own:

1. :func:`aggregate_monthly` / :func:`aggregate_stations` --- daily station
   readings to station-months (means, except rainfall and sunlight which are
   summed and scaled up to the full month).
2. :func:`interpolate_cities` --- station-months onto city points by IDW.
3. :func:`build_factor_panels` --- city values averaged into the north,
   south and all-cities regions.
4. :func:`build_outcomes` --- monthly positive rates per virus, region and
   subgroup.
5. :func:`run_analysis` --- factor and interaction detectors for every
   group, fanned out over a thread pool and merged in a fixed order.
"""

from __future__ import annotations

import datetime
import logging
import math
import zlib
from collections import defaultdict
from collections.abc import Callable, Iterable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any

import numpy as np
import pandas as pd
from scipy import stats

from geodet._csv_io import STATION_MONTH_COLUMNS
from geodet.common import (
    FACTORS,
    REGIONS,
    SUM_FACTORS,
    CaseCount,
    City,
    CityMonthPanel,
    EmptyInputError,
    EmptyRegionError,
    GeodetError,
    GroupKey,
    InteractionResult,
    MixedMonthsError,
    OutcomeSeries,
    PositiveExceedsTestedError,
    QResult,
    StratumAssignment,
    TooFewObservationsError,
    YearMonth,
    ZeroVarianceError,
)
from geodet.config import AnalysisConfig
from geodet.detector import describe_interaction, factor_detector, interaction
from geodet.geo_interp import IdwInterpolator

logger = logging.getLogger(__name__)

#: Station-months below this share of present days are treated as missing.
MIN_COVERAGE = 0.8

#: Valid months a group needs before the detector is run on it.
MIN_MONTHS = 12

STATUS_OK = "ok"
STATUS_INSUFFICIENT = "insufficient-data"
STATUS_ERROR = "error"


# ---------------------------------------------------------------------------
# Monthly aggregation
# ---------------------------------------------------------------------------


def aggregation_kind(factor: str) -> str:
    """``"sum"`` for rainfall and sunlight, ``"mean"`` for everything else."""
    return "sum" if factor in SUM_FACTORS else "mean"


def aggregate_monthly(
    daily: Sequence[tuple[datetime.date, float | None]],
    kind: str,
    *,
    min_coverage: float = MIN_COVERAGE,
) -> tuple[float | None, float]:
    """Aggregate one station's daily values for one calendar month.

    ``kind="mean"`` averages the present days.  ``kind="sum"`` sums them and
    scales by ``days_in_month / days_present``, so a month with a few
    missing days is not biased low.  Returns ``(value, coverage)`` where
    coverage is ``days_present / days_in_month``; value is ``None`` when
    coverage falls below *min_coverage*.

    Raises:
        EmptyInputError: *daily* is empty.
        MixedMonthsError: The dates span more than one calendar month.
    """
    if kind not in ("mean", "sum"):
        raise ValueError(f"kind must be 'mean' or 'sum', got {kind!r}")
    if not daily:
        raise EmptyInputError("no daily values to aggregate")
    months = {YearMonth.of(day) for day, _ in daily}
    if len(months) > 1:
        raise MixedMonthsError(f"daily values span {len(months)} months: {', '.join(map(str, sorted(months)))}")
    month = months.pop()
    present = {day: float(v) for day, v in daily if v is not None and math.isfinite(v)}
    coverage = len(present) / month.days
    if not present or coverage < min_coverage:
        return None, coverage
    total = math.fsum(present.values())
    if kind == "mean":
        return total / len(present), coverage
    return total * month.days / len(present), coverage


def aggregate_stations(stations: pd.DataFrame, *, min_coverage: float = MIN_COVERAGE) -> pd.DataFrame:
    """Aggregate a daily station frame (as read from stations.csv) to station-months.

    Applies the :func:`aggregate_monthly` rules to every station, month and
    factor at once.  The result has one row per (station, month) with a
    value column and a ``<factor>_coverage`` column per factor, sorted by
    station id then month.
    """
    if stations.empty:
        raise EmptyInputError("no station readings to aggregate")
    frame = stations.copy()
    period = frame["date"].dt.to_period("M")
    frame["month"] = period.astype(str)
    frame["days"] = period.dt.days_in_month
    keys = ["station_id", "month"]
    grouped = frame.groupby(keys, sort=True)
    out = grouped.agg(lat=("lat", "first"), lon=("lon", "first"), days=("days", "first"))
    for name in FACTORS:
        present = grouped[name].count()
        total = grouped[name].sum(min_count=1)
        coverage = present / out["days"]
        if aggregation_kind(name) == "sum":
            value = total * out["days"] / present
        else:
            value = total / present
        out[name] = value.where(coverage >= min_coverage)
        out[f"{name}_coverage"] = coverage
    out = out.reset_index().drop(columns="days")
    dropped = int(sum(out[f"{name}_coverage"].lt(min_coverage).sum() for name in FACTORS))
    if dropped:
        logger.info("%d station-month value(s) below %.0f%% coverage set to missing", dropped, 100 * min_coverage)
    return out[list(STATION_MONTH_COLUMNS)]


# ---------------------------------------------------------------------------
# Interpolation onto cities
# ---------------------------------------------------------------------------


def interpolate_cities(
    station_months: pd.DataFrame,
    cities: Sequence[City],
    *,
    power: float = 2.0,
    k: int = 12,
) -> list[CityMonthPanel]:
    """IDW-interpolate every station-month factor onto every city.

    A station without a row for a month, or with a missing value, is not a
    neighbour for that month.  Panels are returned sorted by city id then
    month.
    """
    if not cities:
        return []
    sites = station_months.groupby("station_id", sort=True)[["lat", "lon"]].first()
    ordered = sorted(cities, key=lambda c: c.city_id)
    interp = IdwInterpolator(
        sites.index.tolist(),
        sites["lat"].tolist(),
        sites["lon"].tolist(),
        [c.lat for c in ordered],
        [c.lon for c in ordered],
        power=power,
        k=k,
    )
    months = sorted(set(station_months["month"]), key=YearMonth.parse)
    value_grids = {
        name: station_months.pivot(index="month", columns="station_id", values=name).reindex(
            index=months, columns=sites.index
        )
        for name in FACTORS
    }
    coverage_grids = {
        name: station_months.pivot(index="month", columns="station_id", values=f"{name}_coverage")
        .reindex(index=months, columns=sites.index)
        .fillna(0.0)
        for name in FACTORS
    }

    estimates: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
    for month in months:
        for name in FACTORS:
            estimates[month, name] = interp.interpolate(
                value_grids[name].loc[month].to_numpy(), coverage_grids[name].loc[month].to_numpy()
            )

    panels = []
    for t, city in enumerate(ordered):
        for month in months:
            values: dict[str, float | None] = {}
            coverage: dict[str, float] = {}
            for name in FACTORS:
                est, cov = estimates[month, name]
                values[name] = None if math.isnan(est[t]) else float(est[t])
                coverage[name] = 0.0 if math.isnan(cov[t]) else float(cov[t])
            panels.append(CityMonthPanel(city.city_id, city.lat, city.lon, YearMonth.parse(month), values, coverage))
    return panels


# ---------------------------------------------------------------------------
# Outcomes
# ---------------------------------------------------------------------------


def positive_rate(tested: int, positive: int) -> float | None:
    """``positive / tested``, or ``None`` when nobody was tested.

    Raises:
        PositiveExceedsTestedError: More positives than tests.
    """
    if tested < 0 or positive < 0:
        raise ValueError(f"counts must be >= 0, got tested={tested}, positive={positive}")
    if positive > tested:
        raise PositiveExceedsTestedError(f"positive ({positive}) exceeds tested ({tested})")
    if tested == 0:
        return None
    return positive / tested


def region_membership(cities: Iterable[City], overrides: Mapping[str, str] | None = None) -> dict[str, str]:
    """City id -> ``north``/``south``, with *overrides* taking precedence."""
    membership = {c.city_id: c.region for c in cities}
    for city_id, region in (overrides or {}).items():
        if city_id not in membership:
            logger.warning("region override for unknown city %r ignored", city_id)
            continue
        membership[city_id] = region
    return membership


def build_outcomes(cases: Iterable[CaseCount], membership: Mapping[str, str]) -> list[OutcomeSeries]:
    """Monthly positive-rate series for every (virus, region, age band, sex).

    City rows are summed into their region and into ``all``.  Rows given
    directly for a region take precedence over the sum of its cities for
    the same month and group; ``all`` falls back to north plus south.
    Series are returned in :meth:`GroupKey.sort_key` order.
    """
    explicit: dict[tuple[GroupKey, YearMonth], tuple[int, int]] = {}
    summed: dict[tuple[GroupKey, YearMonth], list[int]] = defaultdict(lambda: [0, 0])
    for case in cases:
        if case.place in REGIONS:
            explicit[GroupKey(case.virus, case.place, case.age_band, case.sex), case.month] = (
                case.tested,
                case.positive,
            )
            continue
        region = membership.get(case.place)
        if region is None:
            logger.warning("cases for unknown city %r skipped", case.place)
            continue
        for target in (region, "all"):
            cell = summed[GroupKey(case.virus, target, case.age_band, case.sex), case.month]
            cell[0] += case.tested
            cell[1] += case.positive

    counts: dict[tuple[GroupKey, YearMonth], tuple[int, int]] = {k: (v[0], v[1]) for k, v in summed.items()}
    counts.update(explicit)
    # An explicit north or south row also changes the derived all-region total.
    for (key, month), (tested, positive) in explicit.items():
        if key.region == "all":
            continue
        all_key = GroupKey(key.virus, "all", key.age_band, key.sex)
        if (all_key, month) in explicit:
            continue
        other = GroupKey(key.virus, "south" if key.region == "north" else "north", key.age_band, key.sex)
        o_tested, o_positive = counts.get((other, month), (0, 0))
        counts[all_key, month] = (tested + o_tested, positive + o_positive)

    by_key: dict[GroupKey, list[tuple[YearMonth, int, int]]] = defaultdict(list)
    for (key, month), (tested, positive) in counts.items():
        by_key[key].append((month, tested, positive))
    series = []
    for key in sorted(by_key, key=GroupKey.sort_key):
        rows = sorted(by_key[key])
        series.append(OutcomeSeries(key, tuple(r[0] for r in rows), tuple(r[1] for r in rows), tuple(r[2] for r in rows)))
    return series


# ---------------------------------------------------------------------------
# Region panels
# ---------------------------------------------------------------------------


def region_average(
    city_values: Iterable[tuple[str, float | None]],
    membership: Mapping[str, str],
    region: str,
) -> float:
    """Unweighted mean of the present values of *region*'s cities.

    ``region="all"`` takes every city in *membership*.

    Raises:
        EmptyRegionError: No member city has a value.
    """
    picked = [
        float(v)
        for city, v in city_values
        if city in membership
        and (region == "all" or membership[city] == region)
        and v is not None
        and math.isfinite(v)
    ]
    if not picked:
        raise EmptyRegionError(f"no city in region {region!r} has a value")
    return math.fsum(picked) / len(picked)


@dataclass(frozen=True)
class AlignedSample:
    """An outcome series and the seven factor series over the months they share."""

    key: GroupKey
    months: tuple[str, ...]
    y: np.ndarray
    factors: Mapping[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.months)


@dataclass(frozen=True)
class FactorPanel:
    """Monthly region-averaged factor values.

    Attributes:
        region: ``north``, ``south`` or ``all``.
        months: Months covered, ascending.
        values: Factor name -> one value per month (``None`` = missing).
    """

    region: str
    months: tuple[YearMonth, ...]
    values: Mapping[str, tuple[float | None, ...]]

    def __post_init__(self) -> None:
        for name, column in self.values.items():
            if len(column) != len(self.months):
                raise ValueError(f"factor {name!r} has {len(column)} values for {len(self.months)} months")

    def align(self, outcome: OutcomeSeries, *, pool_calendar_months: bool = False) -> AlignedSample:
        """Join with *outcome*, keeping months where the rate and all factors are present.

        With *pool_calendar_months*, the kept months are then averaged per
        calendar month across years, leaving at most 12 observations.
        """
        index = {m: i for i, m in enumerate(self.months)}
        rows: list[tuple[YearMonth, float, list[float]]] = []
        for month, rate in zip(outcome.months, outcome.rates):
            i = index.get(month)
            if rate is None or i is None:
                continue
            row = [self.values[name][i] for name in FACTORS]
            if any(v is None for v in row):
                continue
            rows.append((month, rate, [float(v) for v in row if v is not None]))

        if pool_calendar_months:
            pooled: dict[int, list[tuple[float, list[float]]]] = defaultdict(list)
            for month, rate, row in rows:
                pooled[month.month].append((rate, row))
            labels = tuple(f"{m:02d}" for m in sorted(pooled))
            y = np.array([np.mean([r for r, _ in pooled[m]]) for m in sorted(pooled)], dtype=np.float64)
            matrix = np.array([np.mean([row for _, row in pooled[m]], axis=0) for m in sorted(pooled)])
        else:
            labels = tuple(str(m) for m, _, _ in rows)
            y = np.array([r for _, r, _ in rows], dtype=np.float64)
            matrix = np.array([row for _, _, row in rows], dtype=np.float64)
        matrix = matrix.reshape(len(labels), len(FACTORS))
        return AlignedSample(outcome.key, labels, y, {name: matrix[:, j] for j, name in enumerate(FACTORS)})


def build_factor_panels(panels: Sequence[CityMonthPanel], membership: Mapping[str, str]) -> dict[str, FactorPanel]:
    """Average city panels into one :class:`FactorPanel` per region (north, south, all).

    A region-month where no member city has a value for a factor is left
    missing; it is dropped when the panel is aligned with an outcome.
    """
    by_month: dict[YearMonth, list[CityMonthPanel]] = defaultdict(list)
    for panel in panels:
        by_month[panel.month].append(panel)
    months = tuple(sorted(by_month))
    result = {}
    for region in REGIONS:
        columns: dict[str, tuple[float | None, ...]] = {}
        for name in FACTORS:
            column: list[float | None] = []
            for month in months:
                try:
                    column.append(
                        region_average(((p.city_id, p.values.get(name)) for p in by_month[month]), membership, region)
                    )
                except EmptyRegionError:
                    column.append(None)
            columns[name] = tuple(column)
        result[region] = FactorPanel(region, months, columns)
    return result


# ---------------------------------------------------------------------------
# Two-sample t test
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class TTestResult:
    t: float
    df: float
    p: float


def t_test(a: Sequence[float], b: Sequence[float], variant: str = "pooled") -> TTestResult:
    """Two-sample Student (``pooled``) or Welch (``welch``) t test, two-sided.

    Raises:
        TooFewObservationsError: Either sample has fewer than 2 values.
        ZeroVarianceError: Both samples have zero variance.
    """
    if variant not in ("pooled", "welch"):
        raise ValueError(f"variant must be 'pooled' or 'welch', got {variant!r}")
    x = np.asarray(a, dtype=np.float64)
    z = np.asarray(b, dtype=np.float64)
    if x.size < 2 or z.size < 2:
        raise TooFewObservationsError(f"need at least 2 values per sample, got {x.size} and {z.size}")
    vx, vz = x.var(ddof=1), z.var(ddof=1)
    if vx == 0.0 and vz == 0.0:
        raise ZeroVarianceError("both samples have zero variance")
    result = stats.ttest_ind(x, z, equal_var=variant == "pooled")
    if variant == "pooled":
        df = float(x.size + z.size - 2)
    else:
        sx, sz = vx / x.size, vz / z.size
        df = float((sx + sz) ** 2 / (sx**2 / (x.size - 1) + sz**2 / (z.size - 1)))
    return TTestResult(float(result.statistic), df, float(result.pvalue))


@dataclass(frozen=True, slots=True)
class RegionComparison:
    """North versus south t test for one virus/subgroup and one measure."""

    virus: str
    age_band: str | None
    sex: str | None
    measure: str
    north_mean: float | None
    south_mean: float | None
    result: TTestResult | None
    status: str = STATUS_OK
    message: str = ""


def compare_regions(outcomes: Iterable[OutcomeSeries], *, variant: str = "pooled") -> list[RegionComparison]:
    """t tests of monthly positive rate and monthly tested count, north vs south."""
    by_group: dict[tuple[str, str, str], dict[str, OutcomeSeries]] = defaultdict(dict)
    for series in outcomes:
        k = series.key
        by_group[k.virus, k.age_band or "", k.sex or ""][k.region] = series

    comparisons = []
    for (virus, age, sex), regions in sorted(by_group.items()):
        north, south = regions.get("north"), regions.get("south")
        if north is None or south is None:
            continue
        samples = {
            "rate": (north.valid()[1], south.valid()[1]),
            "tested": (np.asarray(north.tested, dtype=np.float64), np.asarray(south.tested, dtype=np.float64)),
        }
        for measure, (a, b) in samples.items():
            means = (float(a.mean()) if a.size else None, float(b.mean()) if b.size else None)
            try:
                comparisons.append(
                    RegionComparison(virus, age or None, sex or None, measure, *means, t_test(a, b, variant))
                )
            except GeodetError as exc:
                comparisons.append(
                    RegionComparison(virus, age or None, sex or None, measure, *means, None, STATUS_ERROR, str(exc))
                )
    return comparisons


# ---------------------------------------------------------------------------
# Batch detection
# ---------------------------------------------------------------------------


def significance_mark(p: float | None) -> str:
    """``*`` for p < 0.01, ``†`` for p < 0.05, otherwise empty."""
    if p is None:
        return ""
    if p < 0.01:
        return "*"
    if p < 0.05:
        return "†"
    return ""


@dataclass(frozen=True)
class FactorCell:
    """Factor-detector outcome for one (group, factor)."""

    key: GroupKey
    factor: str
    status: str
    result: QResult | None = None
    strategy: str = ""
    n: int = 0
    message: str = ""

    @property
    def q(self) -> float | None:
        return None if self.result is None else self.result.q

    @property
    def p(self) -> float | None:
        return None if self.result is None else self.result.p_value

    def text(self) -> str:
        """Table cell text: q to 3 decimals plus significance mark, or ``NA``."""
        if self.result is None:
            return "NA"
        return f"{self.result.q:.3f}{significance_mark(self.result.p_value)}"

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.key.to_dict(),
            "factor": self.factor,
            "status": self.status,
            "strategy": self.strategy,
            "n": self.n,
            "message": self.message,
            "result": None if self.result is None else self.result.to_dict(),
        }


@dataclass(frozen=True)
class PairCell:
    """Interaction-detector outcome for one (group, factor pair)."""

    key: GroupKey
    factor_a: str
    factor_b: str
    status: str
    result: InteractionResult | None = None
    effects: tuple[str, str] = ("", "")
    message: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            **self.key.to_dict(),
            "factor_a": self.factor_a,
            "factor_b": self.factor_b,
            "status": self.status,
            "message": self.message,
            "effects": list(self.effects),
            "result": None if self.result is None else self.result.to_dict(),
        }


@dataclass(frozen=True)
class DominantEffect:
    """Strongest significant factor and strongest interaction of one group."""

    key: GroupKey
    factor: str | None
    q: float | None
    p: float | None
    pair: tuple[str, str] | None
    q12: float | None


@dataclass(frozen=True)
class ReportBundle:
    """Everything :func:`run_analysis` produced, in deterministic order."""

    groups: tuple[GroupKey, ...]
    cells: tuple[FactorCell, ...]
    pairs: tuple[PairCell, ...]
    comparisons: tuple[RegionComparison, ...] = ()
    _index: dict[tuple[GroupKey, str], FactorCell] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_index", {(c.key, c.factor): c for c in self.cells})

    def cell(self, key: GroupKey, factor: str) -> FactorCell:
        return self._index[key, factor]

    def failures(self) -> list[FactorCell | PairCell]:
        return [c for c in (*self.cells, *self.pairs) if c.status == STATUS_ERROR]

    def matrix(self, key: GroupKey) -> np.ndarray:
        """Symmetric factor-by-factor matrix: q on the diagonal, q12 off it, NaN if unavailable."""
        size = len(FACTORS)
        out = np.full((size, size), np.nan)
        pos = {name: i for i, name in enumerate(FACTORS)}
        for name in FACTORS:
            q = self.cell(key, name).q
            if q is not None:
                out[pos[name], pos[name]] = q
        for pair in self.pairs:
            if pair.key == key and pair.result is not None:
                i, j = pos[pair.factor_a], pos[pair.factor_b]
                out[i, j] = out[j, i] = pair.result.q12
        return out


def cell_seed(seed: int, key: GroupKey, factor: str) -> int:
    """Per-cell permutation seed, stable under group filtering and worker count."""
    tag = zlib.crc32(f"{key.slug}/{factor}".encode())
    return int(np.random.SeedSequence([seed, tag]).generate_state(1)[0])


def _factor_task(
    config: AnalysisConfig,
    sample: AlignedSample,
    factor: str,
    seed: int,
) -> tuple[FactorCell, StratumAssignment | None]:
    strategy = config.strategy_for(factor)
    try:
        strata = strategy.apply(sample.factors[factor])
        result = factor_detector(
            sample.y,
            strata,
            significance=config.significance,
            n_perm=config.n_perm,
            seed=cell_seed(seed, sample.key, factor),
        )
    except GeodetError as exc:
        logger.warning("%s / %s: %s", sample.key.slug, factor, exc)
        return FactorCell(sample.key, factor, STATUS_ERROR, strategy=str(strategy), n=len(sample), message=str(exc)), None
    return FactorCell(sample.key, factor, STATUS_OK, result, str(strategy), len(sample)), strata


def _pair_task(
    sample: AlignedSample,
    a: str,
    b: str,
    strata_a: StratumAssignment,
    strata_b: StratumAssignment,
) -> PairCell:
    try:
        result = interaction(sample.y, strata_a, strata_b)
    except GeodetError as exc:
        logger.warning("%s / %s x %s: %s", sample.key.slug, a, b, exc)
        return PairCell(sample.key, a, b, STATUS_ERROR, message=str(exc))
    return PairCell(sample.key, a, b, STATUS_OK, result, describe_interaction(result.q1, result.q2, result.q12))


def run_analysis(
    config: AnalysisConfig,
    outcomes: Iterable[OutcomeSeries],
    panels: Mapping[str, FactorPanel],
) -> ReportBundle:
    """Run the factor and interaction detectors for every selected group.

    Groups are filtered by the config's virus, age band and sex lists.  A
    group with fewer than ``config.min_months`` aligned months gets
    ``insufficient-data`` cells; any other per-cell failure is logged and
    recorded as an ``error`` cell without stopping the run.  Cells run on
    ``config.jobs`` threads; results are merged in (group, factor) order so
    the bundle does not depend on scheduling.

    Raises:
        ConfigError: Permutation significance requested without a seed.
    """
    seed = config.require_seed() if config.significance == "permutation" else (config.seed or 0)
    selected = sorted(
        (s for s in outcomes if config.wants_group(s.key.virus, s.key.age_band, s.key.sex)),
        key=lambda s: s.key.sort_key(),
    )
    cells: list[FactorCell] = []
    pairs: list[PairCell] = []
    samples: list[AlignedSample] = []
    for series in selected:
        key = series.key
        panel = panels.get(key.region)
        if panel is None:
            message = f"no factor panel for region {key.region!r}"
            logger.warning("%s: %s", key.slug, message)
            cells += [FactorCell(key, f, STATUS_ERROR, message=message) for f in FACTORS]
            pairs += [PairCell(key, a, b, STATUS_ERROR, message=message) for a, b in combinations(FACTORS, 2)]
            continue
        sample = panel.align(series, pool_calendar_months=config.pool_calendar_months)
        if len(sample) < config.min_months:
            message = f"{len(sample)} valid month(s), need {config.min_months}"
            logger.info("%s: %s", key.slug, message)
            cells += [FactorCell(key, f, STATUS_INSUFFICIENT, n=len(sample), message=message) for f in FACTORS]
            pairs += [PairCell(key, a, b, STATUS_INSUFFICIENT, message=message) for a, b in combinations(FACTORS, 2)]
            continue
        samples.append(sample)

    logger.info("running detectors for %d group(s) on %d thread(s)", len(samples), config.jobs)
    factor_jobs = [(s, f) for s in samples for f in FACTORS]
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        factor_out = list(pool.map(lambda job: _factor_task(config, job[0], job[1], seed), factor_jobs))
        strata = {(s.key, f): out[1] for (s, f), out in zip(factor_jobs, factor_out)}
        pair_jobs: list[tuple[AlignedSample, str, str]] = [
            (s, a, b) for s in samples for a, b in combinations(FACTORS, 2)
        ]

        def run_pair(job: tuple[AlignedSample, str, str]) -> PairCell:
            s, a, b = job
            sa, sb = strata[s.key, a], strata[s.key, b]
            if sa is None or sb is None:
                return PairCell(s.key, a, b, STATUS_ERROR, message="a factor of this pair could not be stratified")
            return _pair_task(s, a, b, sa, sb)

        pair_out = list(pool.map(run_pair, pair_jobs))

    cells += [cell for cell, _ in factor_out]
    pairs += pair_out
    order = {name: i for i, name in enumerate(FACTORS)}
    cells.sort(key=lambda c: (c.key.sort_key(), order[c.factor]))
    pairs.sort(key=lambda c: (c.key.sort_key(), order[c.factor_a], order[c.factor_b]))
    bundle = ReportBundle(tuple(s.key for s in selected), tuple(cells), tuple(pairs), tuple(compare_regions(selected)))
    failed = len(bundle.failures())
    if failed:
        logger.warning("%d cell(s) failed; see the report for details", failed)
    return bundle


def dominant_effects(bundle: ReportBundle, *, alpha: float = 0.05) -> list[DominantEffect]:
    """Per group: the significant factor with the largest q and the pair with the largest q12."""
    effects = []
    for key in bundle.groups:
        significant = [
            c
            for c in (bundle.cell(key, f) for f in FACTORS)
            if c.result is not None and c.p is not None and c.p < alpha
        ]
        best = max(significant, key=lambda c: c.result.q if c.result else -1.0, default=None)
        candidates = [p for p in bundle.pairs if p.key == key and p.result is not None]
        top = max(candidates, key=lambda p: p.result.q12 if p.result else -1.0, default=None)
        effects.append(
            DominantEffect(
                key,
                None if best is None else best.factor,
                None if best is None else best.q,
                None if best is None else best.p,
                None if top is None else (top.factor_a, top.factor_b),
                None if top is None or top.result is None else top.result.q12,
            )
        )
    return effects


# ---------------------------------------------------------------------------
# Whole-workspace preparation
# ---------------------------------------------------------------------------


def prepare_inputs(
    config: AnalysisConfig,
    stations: pd.DataFrame,
    cases: Sequence[CaseCount],
    cities: Sequence[City],
    *,
    on_stage: Callable[[str, Any], None] | None = None,
) -> tuple[list[OutcomeSeries], dict[str, FactorPanel]]:
    """Run stages 1-4 on validated input tables.

    *on_stage*, if given, is called with ``("station_months", frame)``,
    ``("city_months", panels)`` and ``("rates", outcomes)`` as each stage
    finishes.
    """
    membership = region_membership(cities, config.regions)
    station_months = aggregate_stations(stations, min_coverage=config.min_coverage)
    if on_stage:
        on_stage("station_months", station_months)
    city_panels = interpolate_cities(station_months, cities, power=config.idw_power, k=config.idw_neighbors)
    if on_stage:
        on_stage("city_months", city_panels)
    outcomes = build_outcomes(cases, membership)
    if on_stage:
        on_stage("rates", outcomes)
    return outcomes, build_factor_panels(city_panels, membership)
