"""Shared data structures and errors for geodet.

Every type here is an immutable value: frozen dataclasses holding tuples, so
results can be handed between worker threads without copying.  Each type
validates itself on construction and round-trips through ``to_dict`` /
``from_dict`` (plain JSON-compatible values).
"""

from __future__ import annotations

import calendar
import datetime
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any

import numpy as np

# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

#: The seven meteorological factors, in report column order.
FACTORS: tuple[str, ...] = ("temp", "pressure", "vapour", "rain", "sun", "rh", "wind")

#: Factors aggregated to months by summation; the rest are averaged.
SUM_FACTORS: frozenset[str] = frozenset({"rain", "sun"})

FACTOR_LABELS: dict[str, str] = {
    "temp": "Temperature",
    "pressure": "Atmospheric pressure",
    "vapour": "Vapour pressure",
    "rain": "Rainfall",
    "sun": "Hours of sunlight",
    "rh": "Relative humidity",
    "wind": "Wind speed",
}

VIRUSES: tuple[str, ...] = ("RSV", "influenza", "hPIV", "ADV", "hMPV", "hBoV", "hCoV", "ANY")
REGIONS: tuple[str, ...] = ("north", "south", "all")
CITY_REGIONS: tuple[str, ...] = ("north", "south")
AGE_BANDS: tuple[str, ...] = ("0-4", "5-64", "65+")
SEXES: tuple[str, ...] = ("male", "female")


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class GeodetError(Exception):
    """Root of every error raised by geodet."""


class FieldError(GeodetError, ValueError):
    """A domain value violates one of its field invariants."""

    def __init__(self, field_name: str, reason: str) -> None:
        super().__init__(f"{field_name}: {reason}")
        self.field_name = field_name
        self.reason = reason


class SampleError(GeodetError):
    """An outcome/stratification pair is not usable by the detector."""


class LengthMismatchError(SampleError):
    pass


class MissingOutcomeError(SampleError):
    pass


class EmptyInputError(SampleError):
    pass


class StratifyError(GeodetError):
    """A factor series cannot be discretized as requested."""


class DegenerateRangeError(StratifyError):
    pass


class BadStrataCountError(StratifyError):
    """Requested stratum count L is out of range for the data."""


class UnsortedBreaksError(StratifyError):
    pass


class DetectorError(GeodetError):
    pass


class ZeroVarianceError(DetectorError):
    pass


class BadPermCountError(DetectorError):
    pass


class BadDegreesOfFreedomError(DetectorError):
    pass


class OutOfRangeError(DetectorError):
    pass


class InterpolationError(GeodetError):
    pass


class OutOfRangeCoordinateError(InterpolationError):
    pass


class NoStationsError(InterpolationError):
    pass


class PipelineError(GeodetError):
    pass


class MixedMonthsError(PipelineError):
    pass


class PositiveExceedsTestedError(PipelineError):
    pass


class EmptyRegionError(PipelineError):
    pass


class TooFewObservationsError(PipelineError):
    pass


class BadSpecError(GeodetError):
    """A synthetic-data spec is malformed."""


class ConfigError(GeodetError):
    """An analysis configuration is malformed or references unknown names."""


@dataclass(frozen=True, slots=True)
class SchemaIssue:
    """One problem found while reading an input table.

    Attributes:
        line: 1-based line in the source file (the header is line 1).
        column: Offending column name, or ``""`` for whole-row problems.
        reason: Human-readable rule that was broken.
    """

    line: int
    column: str
    reason: str

    def __str__(self) -> str:
        where = f"line {self.line}"
        if self.column:
            where += f", column {self.column!r}"
        return f"{where}: {self.reason}"


class SchemaError(GeodetError):
    """An input table failed validation; ``issues`` lists every problem."""

    def __init__(self, source: str, issues: Sequence[SchemaIssue]) -> None:
        self.source = source
        self.issues = list(issues)
        shown = "\n".join(f"  {source}: {issue}" for issue in self.issues[:50])
        more = f"\n  ... {len(self.issues) - 50} more" if len(self.issues) > 50 else ""
        super().__init__(f"{len(self.issues)} schema error(s) in {source}:\n{shown}{more}")


# ---------------------------------------------------------------------------
# Field helpers
# ---------------------------------------------------------------------------


def _optional_float(value: Any) -> float | None:
    if value is None:
        return None
    out = float(value)
    if math.isnan(out):
        return None
    return out


def _check_range(name: str, value: float | None, lo: float | None = None, hi: float | None = None) -> None:
    if value is None:
        return
    if not math.isfinite(value):
        raise FieldError(name, f"must be finite, got {value!r}")
    if lo is not None and value < lo:
        raise FieldError(name, f"must be >= {lo:g}, got {value:g}")
    if hi is not None and value > hi:
        raise FieldError(name, f"must be <= {hi:g}, got {value:g}")


def check_lat_lon(lat: float, lon: float) -> None:
    """Raise :class:`FieldError` unless ``lat``/``lon`` are valid degrees."""
    _check_range("lat", lat, -90.0, 90.0)
    _check_range("lon", lon, -180.0, 180.0)


# ---------------------------------------------------------------------------
# Calendar months
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True, order=True)
class YearMonth:
    """A calendar month, ordered chronologically; formats as ``YYYY-MM``."""

    year: int
    month: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise FieldError("month", f"must be in 1..12, got {self.month}")

    @classmethod
    def parse(cls, text: str) -> YearMonth:
        parts = text.strip().split("-")
        if len(parts) != 2 or len(parts[0]) != 4 or len(parts[1]) != 2:
            raise FieldError("month", f"expected YYYY-MM, got {text!r}")
        try:
            return cls(int(parts[0]), int(parts[1]))
        except ValueError:
            raise FieldError("month", f"expected YYYY-MM, got {text!r}") from None

    @classmethod
    def of(cls, day: datetime.date) -> YearMonth:
        return cls(day.year, day.month)

    @property
    def days(self) -> int:
        return calendar.monthrange(self.year, self.month)[1]

    @property
    def ordinal(self) -> int:
        """Months since year 0; consecutive months differ by one."""
        return self.year * 12 + self.month - 1

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


# ---------------------------------------------------------------------------
# Input records
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StationDay:
    """One weather station's readings for one day.

    Any of the seven factor values may be ``None`` (missing).
    """

    station_id: str
    lat: float
    lon: float
    date: datetime.date
    temp: float | None = None
    pressure: float | None = None
    vapour: float | None = None
    rain: float | None = None
    sun: float | None = None
    rh: float | None = None
    wind: float | None = None

    def __post_init__(self) -> None:
        if not self.station_id:
            raise FieldError("station_id", "must not be empty")
        check_lat_lon(self.lat, self.lon)
        for name in FACTORS:
            object.__setattr__(self, name, _optional_float(getattr(self, name)))
        _check_range("temp", self.temp)
        _check_range("pressure", self.pressure, 0.0)
        _check_range("vapour", self.vapour, 0.0)
        _check_range("rain", self.rain, 0.0)
        _check_range("sun", self.sun, 0.0, 24.0)
        _check_range("rh", self.rh, 0.0, 100.0)
        _check_range("wind", self.wind, 0.0)

    def values(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in FACTORS}

    def to_dict(self) -> dict[str, Any]:
        return {
            "station_id": self.station_id,
            "lat": self.lat,
            "lon": self.lon,
            "date": self.date.isoformat(),
            **self.values(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StationDay:
        return cls(
            station_id=str(data["station_id"]),
            lat=float(data["lat"]),
            lon=float(data["lon"]),
            date=datetime.date.fromisoformat(data["date"]),
            **{name: data.get(name) for name in FACTORS},
        )


@dataclass(frozen=True, slots=True)
class City:
    """A study city and the region it is averaged into."""

    city_id: str
    lat: float
    lon: float
    region: str

    def __post_init__(self) -> None:
        if not self.city_id:
            raise FieldError("city_id", "must not be empty")
        check_lat_lon(self.lat, self.lon)
        if self.region not in CITY_REGIONS:
            raise FieldError("region", f"must be one of {', '.join(CITY_REGIONS)}, got {self.region!r}")


@dataclass(frozen=True, slots=True)
class CaseCount:
    """One row of surveillance counts: tests and positives for a month and group."""

    month: YearMonth
    place: str
    virus: str
    age_band: str | None
    sex: str | None
    tested: int
    positive: int

    def __post_init__(self) -> None:
        if not self.place:
            raise FieldError("city_or_region", "must not be empty")
        if self.virus not in VIRUSES:
            raise FieldError("virus", f"unknown virus {self.virus!r}")
        if self.age_band is not None and self.age_band not in AGE_BANDS:
            raise FieldError("age_band", f"unknown age band {self.age_band!r}")
        if self.sex is not None and self.sex not in SEXES:
            raise FieldError("sex", f"unknown sex {self.sex!r}")
        if self.tested < 0:
            raise FieldError("tested", f"must be >= 0, got {self.tested}")
        if self.positive < 0:
            raise FieldError("positive", f"must be >= 0, got {self.positive}")
        if self.positive > self.tested:
            raise FieldError("positive", f"positive ({self.positive}) exceeds tested ({self.tested})")


# ---------------------------------------------------------------------------
# Interpolated panels and outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class CityMonthPanel:
    """Interpolated monthly factor values for one city.

    Attributes:
        values: Factor name -> monthly value (``None`` when missing).
        coverage: Factor name -> fraction of days present, in [0, 1].
    """

    city_id: str
    lat: float
    lon: float
    month: YearMonth
    values: Mapping[str, float | None]
    coverage: Mapping[str, float]

    def __post_init__(self) -> None:
        check_lat_lon(self.lat, self.lon)
        object.__setattr__(self, "values", {k: _optional_float(v) for k, v in self.values.items()})
        object.__setattr__(self, "coverage", {k: float(v) for k, v in self.coverage.items()})
        for name, cov in self.coverage.items():
            _check_range(f"coverage[{name}]", cov, 0.0, 1.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "city_id": self.city_id,
            "lat": self.lat,
            "lon": self.lon,
            "month": str(self.month),
            "values": dict(self.values),
            "coverage": dict(self.coverage),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CityMonthPanel:
        return cls(
            city_id=str(data["city_id"]),
            lat=float(data["lat"]),
            lon=float(data["lon"]),
            month=YearMonth.parse(data["month"]),
            values=dict(data["values"]),
            coverage=dict(data["coverage"]),
        )


def check_unique_city_months(panels: Iterable[CityMonthPanel]) -> None:
    """Raise :class:`FieldError` if any (city, month) appears twice."""
    seen: set[tuple[str, YearMonth]] = set()
    for panel in panels:
        key = (panel.city_id, panel.month)
        if key in seen:
            raise FieldError("city_id", f"duplicate record for {panel.city_id} {panel.month}")
        seen.add(key)


@dataclass(frozen=True, slots=True, order=True)
class GroupKey:
    """Identifies one outcome series: virus, region, and optional subgroup."""

    virus: str
    region: str
    age_band: str | None = None
    sex: str | None = None

    def __post_init__(self) -> None:
        if self.virus not in VIRUSES:
            raise FieldError("virus", f"unknown virus {self.virus!r}")
        if self.region not in REGIONS:
            raise FieldError("region", f"unknown region {self.region!r}")
        if self.age_band is not None and self.age_band not in AGE_BANDS:
            raise FieldError("age_band", f"unknown age band {self.age_band!r}")
        if self.sex is not None and self.sex not in SEXES:
            raise FieldError("sex", f"unknown sex {self.sex!r}")

    @property
    def slug(self) -> str:
        """Filesystem-safe name, e.g. ``RSV_north_all-ages_all-sexes``."""
        age = self.age_band.replace("+", "plus") if self.age_band else "all-ages"
        sex = self.sex or "all-sexes"
        return f"{self.virus}_{self.region}_{age}_{sex}"

    def sort_key(self) -> tuple[str, str, str, str]:
        return (self.virus, self.region, self.age_band or "", self.sex or "")

    def to_dict(self) -> dict[str, Any]:
        return {"virus": self.virus, "region": self.region, "age_band": self.age_band, "sex": self.sex}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> GroupKey:
        return cls(data["virus"], data["region"], data.get("age_band") or None, data.get("sex") or None)


@dataclass(frozen=True, slots=True)
class OutcomeSeries:
    """Monthly test counts and positive rates for one group.

    ``rates[k]`` is ``positive[k] / tested[k]``, or ``None`` when no patient
    was tested that month.  Missing months are dropped from detector input
    rather than imputed.
    """

    key: GroupKey
    months: tuple[YearMonth, ...]
    tested: tuple[int, ...]
    positive: tuple[int, ...]
    rates: tuple[float | None, ...] = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.months)
        if len(self.tested) != n or len(self.positive) != n:
            raise FieldError("months", "months, tested and positive must have equal length")
        if any(b <= a for a, b in zip(self.months, self.months[1:])):
            raise FieldError("months", "months must be strictly increasing")
        rates: list[float | None] = []
        for month, t, p in zip(self.months, self.tested, self.positive):
            if t < 0 or p < 0:
                raise FieldError("tested", f"{month}: counts must be >= 0")
            if p > t:
                raise FieldError("positive", f"{month}: positive ({p}) exceeds tested ({t})")
            rates.append(p / t if t > 0 else None)
        object.__setattr__(self, "rates", tuple(rates))

    def valid(self) -> tuple[tuple[YearMonth, ...], np.ndarray]:
        """Months with a defined rate, and those rates as a float array."""
        kept = [(m, r) for m, r in zip(self.months, self.rates) if r is not None]
        return tuple(m for m, _ in kept), np.array([r for _, r in kept], dtype=np.float64)

    def to_dict(self) -> dict[str, Any]:
        return {
            "key": self.key.to_dict(),
            "months": [str(m) for m in self.months],
            "tested": list(self.tested),
            "positive": list(self.positive),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> OutcomeSeries:
        return cls(
            key=GroupKey.from_dict(data["key"]),
            months=tuple(YearMonth.parse(m) for m in data["months"]),
            tested=tuple(int(t) for t in data["tested"]),
            positive=tuple(int(p) for p in data["positive"]),
        )


# ---------------------------------------------------------------------------
# Stratifications and detector results
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class StratumAssignment:
    """A stratum label (1..l) for every observation of one factor.

    Attributes:
        labels: One label per observation.
        l: Number of strata; every label in 1..l is used at least once.
        breaks: Boundary values used (empty for categorical or overlay input).
        method: Which discretization produced the labels.
        compacted: True if empty strata were dropped and labels renumbered.
    """

    labels: tuple[int, ...]
    l: int  # noqa: E741
    breaks: tuple[float, ...] = ()
    method: str = "manual"
    compacted: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))
        object.__setattr__(self, "breaks", tuple(float(b) for b in self.breaks))
        if self.l < 1:
            raise FieldError("l", f"must be >= 1, got {self.l}")
        used = set(self.labels)
        if any(not 1 <= x <= self.l for x in used):
            raise FieldError("labels", f"labels must lie in 1..{self.l}")
        if self.labels and len(used) != self.l:
            raise FieldError("labels", f"{self.l - len(used)} of {self.l} strata are empty")

    @classmethod
    def from_labels(
        cls,
        labels: Iterable[int],
        *,
        breaks: Sequence[float] = (),
        method: str = "manual",
    ) -> StratumAssignment:
        """Build an assignment from raw labels, compacting unused strata.

        Labels keep their relative order: the smallest used label becomes 1.
        """
        raw = [int(x) for x in labels]
        used = sorted(set(raw))
        if not used:
            return cls((), 1, tuple(breaks), method)
        expected = max(used)
        renumber = {old: new for new, old in enumerate(used, start=1)}
        return cls(
            tuple(renumber[x] for x in raw),
            len(used),
            tuple(breaks),
            method,
            compacted=len(used) < expected,
        )

    def __len__(self) -> int:
        return len(self.labels)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.intp)

    def counts(self) -> tuple[int, ...]:
        """Observations per stratum, indexed by ``label - 1``."""
        return tuple(int(c) for c in np.bincount(self.as_array(), minlength=self.l + 1)[1:])

    def to_dict(self) -> dict[str, Any]:
        return {
            "labels": list(self.labels),
            "l": self.l,
            "breaks": list(self.breaks),
            "method": self.method,
            "compacted": self.compacted,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> StratumAssignment:
        return cls(
            tuple(data["labels"]),
            int(data["l"]),
            tuple(data.get("breaks", ())),
            str(data.get("method", "manual")),
            bool(data.get("compacted", False)),
        )


@dataclass(frozen=True, slots=True)
class StratumStats:
    """Count N_h, mean and population variance of the outcome in one stratum."""

    label: int
    count: int
    mean: float
    variance: float


@dataclass(frozen=True, slots=True)
class QResult:
    """Factor-detector result: q = 1 - SSW/SST with per-stratum statistics.

    ``p_value`` and ``p_method`` are ``None`` until a significance test has
    been attached with :meth:`with_p`.
    """

    q: float
    ssw: float
    sst: float
    n: int
    l: int  # noqa: E741
    strata: tuple[StratumStats, ...]
    p_value: float | None = None
    p_method: str | None = None

    def __post_init__(self) -> None:
        _check_range("q", self.q, 0.0, 1.0)
        _check_range("ssw", self.ssw, 0.0)
        _check_range("sst", self.sst, 0.0)
        if self.sst > 0 and abs(self.q - (1.0 - self.ssw / self.sst)) > 1e-12:
            raise FieldError("q", "must equal 1 - ssw/sst")
        if sum(s.count for s in self.strata) != self.n:
            raise FieldError("strata", "stratum counts must sum to n")
        if self.p_value is not None:
            _check_range("p_value", self.p_value, 0.0, 1.0)

    def with_p(self, p_value: float, method: str) -> QResult:
        return replace(self, p_value=p_value, p_method=method)

    @property
    def singletons(self) -> int:
        return sum(1 for s in self.strata if s.count == 1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "q": self.q,
            "ssw": self.ssw,
            "sst": self.sst,
            "n": self.n,
            "l": self.l,
            "strata": [
                {"label": s.label, "count": s.count, "mean": s.mean, "variance": s.variance} for s in self.strata
            ],
            "p_value": self.p_value,
            "p_method": self.p_method,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> QResult:
        return cls(
            q=float(data["q"]),
            ssw=float(data["ssw"]),
            sst=float(data["sst"]),
            n=int(data["n"]),
            l=int(data["l"]),
            strata=tuple(
                StratumStats(int(s["label"]), int(s["count"]), float(s["mean"]), float(s["variance"]))
                for s in data["strata"]
            ),
            p_value=None if data.get("p_value") is None else float(data["p_value"]),
            p_method=data.get("p_method"),
        )


class InteractionCategory(str, Enum):
    """How two factors combine, judged from q1, q2 and q12."""

    NONLINEAR_ENHANCE = "nonlinear-enhance"
    BIVARIATE_ENHANCE = "bivariate-enhance"
    UNI_WEAKEN = "uni-weaken"
    NONLINEAR_WEAKEN = "nonlinear-weaken"
    INDEPENDENT = "independent"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class InteractionResult:
    """Interaction-detector result for one pair of stratifications."""

    q1: float
    q2: float
    q12: float
    category: InteractionCategory
    overlay_l: int
    singleton_strata: int = 0

    def __post_init__(self) -> None:
        for name in ("q1", "q2", "q12"):
            _check_range(name, getattr(self, name), 0.0, 1.0)
        object.__setattr__(self, "category", InteractionCategory(self.category))

    def to_dict(self) -> dict[str, Any]:
        return {
            "q1": self.q1,
            "q2": self.q2,
            "q12": self.q12,
            "category": self.category.value,
            "overlay_l": self.overlay_l,
            "singleton_strata": self.singleton_strata,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> InteractionResult:
        return cls(
            float(data["q1"]),
            float(data["q2"]),
            float(data["q12"]),
            InteractionCategory(data["category"]),
            int(data["overlay_l"]),
            int(data.get("singleton_strata", 0)),
        )


# ---------------------------------------------------------------------------
# Sample validation
# ---------------------------------------------------------------------------


def validate_sample(
    y: Sequence[float | None] | np.ndarray,
    strata: StratumAssignment | Sequence[int],
) -> tuple[np.ndarray, StratumAssignment]:
    """Check that an outcome series and its stratification line up.

    Returns the outcome as a float array together with a compacted
    :class:`StratumAssignment`.

    Raises:
        LengthMismatchError: ``y`` and the labels differ in length.
        EmptyInputError: Both are empty.
        MissingOutcomeError: ``y`` contains ``None`` or NaN.
    """
    labels = strata.labels if isinstance(strata, StratumAssignment) else tuple(strata)
    if len(y) != len(labels):
        raise LengthMismatchError(f"outcome has {len(y)} values but stratification has {len(labels)} labels")
    if len(y) == 0:
        raise EmptyInputError("outcome series is empty")
    if any(v is None for v in y):
        raise MissingOutcomeError("outcome contains missing values")
    arr = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise MissingOutcomeError("outcome contains missing or non-finite values")
    if isinstance(strata, StratumAssignment):
        return arr, strata
    return arr, StratumAssignment.from_labels(labels)
