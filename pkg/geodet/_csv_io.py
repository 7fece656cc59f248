"""Reading and writing the flat-file tables.

Input schemas (UTF-8, header row required, empty cell = missing):

- ``stations.csv``: ``station_id,lat,lon,date,temp,pressure,vapour,rain,sun,rh,wind``
- ``cases.csv``: ``month,city_or_region,virus,age_band,sex,tested,positive``
- ``cities.csv``: ``city_id,lat,lon,region``

Every row is validated by constructing the matching domain type; a
:class:`~geodet.common.FieldError` becomes a :class:`~geodet.common.SchemaIssue`
carrying the file line, and all issues of a file are raised together in one
:class:`~geodet.common.SchemaError`.

Intermediate tables written by the stage commands (``station_months.csv``,
``city_months.csv``, ``rates.csv``) have readers here too, so every CSV
geodet emits can be read back.
"""

from __future__ import annotations

import datetime
import hashlib
import math
import os
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from geodet.common import (
    FACTORS,
    REGIONS,
    CaseCount,
    City,
    CityMonthPanel,
    FieldError,
    GroupKey,
    OutcomeSeries,
    SchemaError,
    SchemaIssue,
    StationDay,
    YearMonth,
)

STATION_COLUMNS = ("station_id", "lat", "lon", "date", *FACTORS)
CASE_COLUMNS = ("month", "city_or_region", "virus", "age_band", "sex", "tested", "positive")
CITY_COLUMNS = ("city_id", "lat", "lon", "region")
STATION_MONTH_COLUMNS = ("station_id", "lat", "lon", "month", *FACTORS, *(f"{f}_coverage" for f in FACTORS))
CITY_MONTH_COLUMNS = ("city_id", "lat", "lon", "month", *FACTORS, *(f"{f}_coverage" for f in FACTORS))
RATE_COLUMNS = ("month", "virus", "region", "age_band", "sex", "tested", "positive", "rate")

#: Float formatting for every CSV written; fixed so reruns are byte-identical.
FLOAT_FORMAT = "%.10g"

PathLike = str | os.PathLike[str]


# ---------------------------------------------------------------------------
# Generic reading
# ---------------------------------------------------------------------------


def _read_raw(path: PathLike, columns: Sequence[str]) -> pd.DataFrame:
    """Read *path* as all-string cells, checking the header and every row's field count.

    Rows are read with one spare column so that a row with an extra field
    shows up in it instead of shifting the others; short rows come back
    padded with NaN, which no present cell can be.
    """
    source = str(path)
    try:
        header = [str(c) for c in pd.read_csv(path, nrows=0, encoding="utf-8").columns]
    except pd.errors.EmptyDataError:
        raise SchemaError(source, [SchemaIssue(1, "", "file is empty; a header row is required")]) from None
    except UnicodeDecodeError as exc:
        raise SchemaError(source, [SchemaIssue(1, "", f"not valid UTF-8: {exc.reason}")]) from None
    missing = [c for c in columns if c not in header]
    extra = [c for c in header if c not in columns]
    issues = [SchemaIssue(1, c, "required column missing") for c in missing]
    issues += [SchemaIssue(1, c, "unexpected column") for c in extra]
    if issues:
        raise SchemaError(source, issues)

    width = len(header)
    spare = list(range(width + 1))
    try:
        cells = pd.read_csv(
            path,
            header=None,
            skiprows=1,
            names=spare,
            index_col=False,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        cells = pd.DataFrame(columns=spare, dtype=str)
    except pd.errors.ParserError as exc:
        raise SchemaError(source, [SchemaIssue(1, "", f"rows with too many fields: {exc}")]) from None
    except UnicodeDecodeError as exc:
        raise SchemaError(source, [SchemaIssue(1, "", f"not valid UTF-8: {exc.reason}")]) from None

    for offset, present in enumerate(cells.notna().sum(axis=1).tolist()):
        if present > width:
            issues.append(SchemaIssue(offset + 2, "", f"expected {width} fields, got more"))
        elif present < width:
            issues.append(SchemaIssue(offset + 2, "", f"expected {width} fields, got {present}"))
    if issues:
        raise SchemaError(source, issues)
    return cells.iloc[:, :width].set_axis(header, axis=1)


def _rows(frame: pd.DataFrame) -> Iterable[tuple[int, dict[str, str]]]:
    """(file line, row) pairs; data starts on line 2."""
    for offset, row in enumerate(frame.to_dict(orient="records")):
        yield offset + 2, {k: str(v).strip() for k, v in row.items()}


def _float(column: str, text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise FieldError(column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise FieldError(column, f"not a finite number: {text!r}")
    return value


def _optional(column: str, text: str) -> float | None:
    return None if text == "" else _float(column, text)


def _count(column: str, text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise FieldError(column, f"not a whole number: {text!r}") from None
    if value < 0:
        raise FieldError(column, f"must be >= 0, got {value}")
    return value


def _collect(
    source: str,
    frame: pd.DataFrame,
    build: Callable[[dict[str, str]], Any],
) -> list[Any]:
    records: list[Any] = []
    issues: list[SchemaIssue] = []
    for line, row in _rows(frame):
        try:
            records.append(build(row))
        except FieldError as exc:
            issues.append(SchemaIssue(line, exc.field_name, exc.reason))
    if issues:
        raise SchemaError(source, issues)
    return records


def file_digest(path: PathLike) -> str:
    """SHA-256 hex digest of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_frame(frame: pd.DataFrame, path: PathLike) -> None:
    """Write a table the same way everywhere: no index, LF endings, fixed float format."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n", float_format=FLOAT_FORMAT, na_rep="", encoding="utf-8")


# ---------------------------------------------------------------------------
# Input tables
# ---------------------------------------------------------------------------


def _station_day(row: dict[str, str]) -> StationDay:
    try:
        day = datetime.date.fromisoformat(row["date"])
    except ValueError:
        raise FieldError("date", f"expected YYYY-MM-DD, got {row['date']!r}") from None
    return StationDay(
        station_id=row["station_id"],
        lat=_float("lat", row["lat"]),
        lon=_float("lon", row["lon"]),
        date=day,
        **{name: _optional(name, row[name]) for name in FACTORS},
    )


def read_stations(path: PathLike) -> pd.DataFrame:
    """Read and validate daily station readings.

    Returns a frame with ``station_id`` (str), ``lat``/``lon`` (float),
    ``date`` (datetime64) and one float column per factor (NaN = missing).

    Raises:
        SchemaError: Listing every bad cell, duplicate (station, date) row,
            and station whose coordinates change between rows.
    """
    source = str(path)
    frame = _read_raw(path, STATION_COLUMNS)
    days: list[StationDay] = _collect(source, frame, _station_day)

    issues: list[SchemaIssue] = []
    seen: set[tuple[str, datetime.date]] = set()
    where: dict[str, tuple[float, float]] = {}
    for line, day in enumerate(days, start=2):
        key = (day.station_id, day.date)
        if key in seen:
            issues.append(SchemaIssue(line, "date", f"duplicate reading for station {day.station_id} on {day.date}"))
        seen.add(key)
        loc = where.setdefault(day.station_id, (day.lat, day.lon))
        if loc != (day.lat, day.lon):
            issues.append(SchemaIssue(line, "lat", f"station {day.station_id} moved from {loc}"))
    if issues:
        raise SchemaError(source, issues)

    out = pd.DataFrame.from_records([d.to_dict() for d in days], columns=list(STATION_COLUMNS))
    out["date"] = pd.to_datetime(out["date"])
    for name in ("lat", "lon", *FACTORS):
        out[name] = out[name].astype(np.float64)
    return out


def write_stations(days: Iterable[StationDay], path: PathLike) -> None:
    frame = pd.DataFrame.from_records([d.to_dict() for d in days], columns=list(STATION_COLUMNS))
    write_frame(frame, path)


def _city(row: dict[str, str]) -> City:
    return City(row["city_id"], _float("lat", row["lat"]), _float("lon", row["lon"]), row["region"])


def read_cities(path: PathLike) -> list[City]:
    """Read and validate the study cities.

    Raises:
        SchemaError: Bad cells or duplicate city ids.
    """
    source = str(path)
    cities: list[City] = _collect(source, _read_raw(path, CITY_COLUMNS), _city)
    issues: list[SchemaIssue] = []
    seen: set[str] = set()
    for line, city in enumerate(cities, start=2):
        if city.city_id in seen:
            issues.append(SchemaIssue(line, "city_id", f"duplicate city {city.city_id!r}"))
        seen.add(city.city_id)
    if issues:
        raise SchemaError(source, issues)
    return cities


def write_cities(cities: Iterable[City], path: PathLike) -> None:
    frame = pd.DataFrame.from_records(
        [{"city_id": c.city_id, "lat": c.lat, "lon": c.lon, "region": c.region} for c in cities],
        columns=list(CITY_COLUMNS),
    )
    write_frame(frame, path)


def _case(row: dict[str, str]) -> CaseCount:
    return CaseCount(
        month=YearMonth.parse(row["month"]),
        place=row["city_or_region"],
        virus=row["virus"],
        age_band=row["age_band"] or None,
        sex=row["sex"] or None,
        tested=_count("tested", row["tested"]),
        positive=_count("positive", row["positive"]),
    )


def read_cases(path: PathLike, cities: Sequence[City] | None = None) -> list[CaseCount]:
    """Read and validate surveillance counts.

    When *cities* is given, every ``city_or_region`` must be a known city id
    or a region name.

    Raises:
        SchemaError: Bad cells (including positive > tested), unknown places,
            or duplicate (month, place, virus, age_band, sex) rows.
    """
    source = str(path)
    cases: list[CaseCount] = _collect(source, _read_raw(path, CASE_COLUMNS), _case)
    known = None if cities is None else {c.city_id for c in cities} | set(REGIONS)
    issues: list[SchemaIssue] = []
    seen: set[tuple[Any, ...]] = set()
    for line, case in enumerate(cases, start=2):
        if known is not None and case.place not in known:
            issues.append(SchemaIssue(line, "city_or_region", f"unknown city or region {case.place!r}"))
        key = (case.month, case.place, case.virus, case.age_band, case.sex)
        if key in seen:
            issues.append(SchemaIssue(line, "", "duplicate row for month, place, virus, age band and sex"))
        seen.add(key)
    if issues:
        raise SchemaError(source, issues)
    return cases


def write_cases(cases: Iterable[CaseCount], path: PathLike) -> None:
    frame = pd.DataFrame.from_records(
        [
            {
                "month": str(c.month),
                "city_or_region": c.place,
                "virus": c.virus,
                "age_band": c.age_band or "",
                "sex": c.sex or "",
                "tested": c.tested,
                "positive": c.positive,
            }
            for c in cases
        ],
        columns=list(CASE_COLUMNS),
    )
    write_frame(frame, path)


# ---------------------------------------------------------------------------
# Intermediate tables
# ---------------------------------------------------------------------------


def read_station_months(path: PathLike) -> pd.DataFrame:
    """Read a ``station_months.csv`` written by :func:`geodet.pipeline.aggregate_stations`."""
    source = str(path)
    frame = _read_raw(path, STATION_MONTH_COLUMNS)
    issues: list[SchemaIssue] = []
    for line, row in _rows(frame):
        try:
            YearMonth.parse(row["month"])
            City(row["station_id"] or "?", _float("lat", row["lat"]), _float("lon", row["lon"]), "north")
            for name in FACTORS:
                _optional(name, row[name])
                cov = _float(f"{name}_coverage", row[f"{name}_coverage"])
                if not 0.0 <= cov <= 1.0:
                    raise FieldError(f"{name}_coverage", f"must be in [0, 1], got {cov:g}")
        except FieldError as exc:
            issues.append(SchemaIssue(line, exc.field_name, exc.reason))
    if issues:
        raise SchemaError(source, issues)
    numeric = [c for c in STATION_MONTH_COLUMNS if c not in ("station_id", "month")]
    for name in numeric:
        frame[name] = pd.to_numeric(frame[name].replace("", np.nan)).astype(np.float64)
    return frame


def city_panels_frame(panels: Iterable[CityMonthPanel]) -> pd.DataFrame:
    rows = []
    for panel in panels:
        row: dict[str, Any] = {"city_id": panel.city_id, "lat": panel.lat, "lon": panel.lon, "month": str(panel.month)}
        for name in FACTORS:
            value = panel.values.get(name)
            row[name] = np.nan if value is None else value
        for name in FACTORS:
            row[f"{name}_coverage"] = panel.coverage.get(name, 0.0)
        rows.append(row)
    return pd.DataFrame.from_records(rows, columns=list(CITY_MONTH_COLUMNS))


def _city_panel(row: dict[str, str]) -> CityMonthPanel:
    return CityMonthPanel(
        city_id=row["city_id"],
        lat=_float("lat", row["lat"]),
        lon=_float("lon", row["lon"]),
        month=YearMonth.parse(row["month"]),
        values={name: _optional(name, row[name]) for name in FACTORS},
        coverage={name: _float(f"{name}_coverage", row[f"{name}_coverage"]) for name in FACTORS},
    )


def read_city_months(path: PathLike) -> list[CityMonthPanel]:
    """Read a ``city_months.csv`` written by the ``interpolate`` command."""
    return _collect(str(path), _read_raw(path, CITY_MONTH_COLUMNS), _city_panel)


def outcomes_frame(outcomes: Iterable[OutcomeSeries]) -> pd.DataFrame:
    rows = []
    for series in outcomes:
        for month, tested, positive, rate in zip(series.months, series.tested, series.positive, series.rates):
            rows.append(
                {
                    "month": str(month),
                    "virus": series.key.virus,
                    "region": series.key.region,
                    "age_band": series.key.age_band or "",
                    "sex": series.key.sex or "",
                    "tested": tested,
                    "positive": positive,
                    "rate": np.nan if rate is None else rate,
                }
            )
    return pd.DataFrame.from_records(rows, columns=list(RATE_COLUMNS))


def read_rates(path: PathLike) -> list[OutcomeSeries]:
    """Read a ``rates.csv`` back into outcome series (rates are recomputed from counts)."""
    source = str(path)
    frame = _read_raw(path, RATE_COLUMNS)

    def parse(row: dict[str, str]) -> tuple[GroupKey, YearMonth, int, int]:
        key = GroupKey(row["virus"], row["region"], row["age_band"] or None, row["sex"] or None)
        return key, YearMonth.parse(row["month"]), _count("tested", row["tested"]), _count("positive", row["positive"])

    parsed: list[tuple[GroupKey, YearMonth, int, int]] = _collect(source, frame, parse)
    grouped: dict[GroupKey, list[tuple[YearMonth, int, int]]] = {}
    for key, month, tested, positive in parsed:
        grouped.setdefault(key, []).append((month, tested, positive))
    series = []
    for key in sorted(grouped, key=GroupKey.sort_key):
        rows = sorted(grouped[key])
        try:
            series.append(
                OutcomeSeries(
                    key, tuple(r[0] for r in rows), tuple(r[1] for r in rows), tuple(r[2] for r in rows)
                )
            )
        except FieldError as exc:
            raise SchemaError(source, [SchemaIssue(0, exc.field_name, f"{key.slug}: {exc.reason}")]) from None
    return series


# ---------------------------------------------------------------------------
# Workspace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Workspace:
    """The three validated input tables of one study."""

    stations: pd.DataFrame
    cases: list[CaseCount]
    cities: list[City]

    def summary(self) -> dict[str, Any]:
        """Row counts, missing-value rates and date range, for the ``ingest`` command."""
        dates = self.stations["date"]
        months = sorted({c.month for c in self.cases})
        return {
            "stations": int(self.stations["station_id"].nunique()),
            "station_days": len(self.stations),
            "date_range": (
                f"{dates.min():%Y-%m-%d} .. {dates.max():%Y-%m-%d}" if len(dates) else "-"
            ),
            "missing": {name: float(self.stations[name].isna().mean()) if len(dates) else 0.0 for name in FACTORS},
            "cities": len(self.cities),
            "case_rows": len(self.cases),
            "case_months": f"{months[0]} .. {months[-1]}" if months else "-",
            "viruses": sorted({c.virus for c in self.cases}),
        }


def load_workspace(stations: PathLike, cases: PathLike, cities: PathLike) -> Workspace:
    """Read all three input tables.

    Raises:
        SchemaError: From the first table that fails validation.
    """
    city_list = read_cities(cities)
    return Workspace(read_stations(stations), read_cases(cases, city_list), city_list)
