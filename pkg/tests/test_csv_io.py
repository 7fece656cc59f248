"""Tests for reading and writing the CSV tables."""

from __future__ import annotations

from pathlib import Path

import pytest

from geodet._csv_io import (
    CASE_COLUMNS,
    CITY_COLUMNS,
    STATION_COLUMNS,
    city_panels_frame,
    file_digest,
    load_workspace,
    outcomes_frame,
    read_cases,
    read_cities,
    read_city_months,
    read_rates,
    read_station_months,
    read_stations,
    write_frame,
)
from geodet.common import City, SchemaError
from geodet.pipeline import aggregate_stations, build_outcomes, interpolate_cities, region_membership

STATION_HEADER = ",".join(STATION_COLUMNS)
CITY_HEADER = ",".join(CITY_COLUMNS)
CASE_HEADER = ",".join(CASE_COLUMNS)


def write(path: Path, *lines: str) -> Path:
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestHeaders:
    def test_missing_column(self, tmp_path: Path) -> None:
        path = write(tmp_path / "cities.csv", "city_id,lat,lon", "C1,30,110")
        with pytest.raises(SchemaError) as info:
            read_cities(path)
        (issue,) = info.value.issues
        assert (issue.line, issue.column) == (1, "region")

    def test_unexpected_column(self, tmp_path: Path) -> None:
        path = write(tmp_path / "cities.csv", f"{CITY_HEADER},population", "C1,30,110,north,9")
        with pytest.raises(SchemaError, match="unexpected column"):
            read_cities(path)

    def test_empty_file(self, tmp_path: Path) -> None:
        path = tmp_path / "cities.csv"
        path.write_text("", encoding="utf-8")
        with pytest.raises(SchemaError, match="header row"):
            read_cities(path)


class TestStations:
    def test_types(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / "stations.csv",
            STATION_HEADER,
            "S1,30,110,2010-01-01,3.5,1012,8,0,5.5,70,2",
            "S1,30,110,2010-01-02,,1011,8,,5.0,71,2",
        )
        frame = read_stations(path)
        assert str(frame["date"].dtype).startswith("datetime64")
        assert frame["temp"].isna().tolist() == [False, True]
        assert frame["rain"].tolist()[0] == 0.0

    def test_every_bad_cell_listed(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / "stations.csv",
            STATION_HEADER,
            "S1,30,110,2010-01-01,3.5,1012,8,0,5.5,70,2",
            "S1,30,110,2010-01-02,warm,1011,8,0,5.0,71,2",
            "S1,30,110,2010-01-03,3.5,1011,8,0,5.0,140,2",
        )
        with pytest.raises(SchemaError) as info:
            read_stations(path)
        assert [(i.line, i.column) for i in info.value.issues] == [(3, "temp"), (4, "rh")]

    def test_short_row(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / "stations.csv",
            STATION_HEADER,
            "S1,30,110,2010-01-01,3.5,1012,8,0,5.5,70,2",
            "S1,30,110,2010-01-02,3.5,1012",
        )
        with pytest.raises(SchemaError) as info:
            read_stations(path)
        (issue,) = info.value.issues
        assert (issue.line, issue.column) == (3, "")
        assert issue.reason == "expected 11 fields, got 6"

    def test_extra_field_does_not_shift_columns(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / "stations.csv",
            STATION_HEADER,
            "S1,30,110,2010-01-01,3.5,1012,8,0,5.5,70,2,1",
            "S1,30,110,2010-01-02,3.5,1012,8,0,5.5,70,2",
        )
        with pytest.raises(SchemaError) as info:
            read_stations(path)
        (issue,) = info.value.issues
        assert (issue.line, issue.column) == (2, "")
        assert issue.reason == "expected 11 fields, got more"

    @pytest.mark.parametrize(("cells", "column"), [("nan,110", "lat"), ("30,inf", "lon")])
    def test_non_finite_coordinates(self, tmp_path: Path, cells: str, column: str) -> None:
        path = write(tmp_path / "stations.csv", STATION_HEADER, f"S1,{cells},2010-01-01,3.5,1012,8,0,5.5,70,2")
        with pytest.raises(SchemaError, match="not a finite number") as info:
            read_stations(path)
        assert [(i.line, i.column) for i in info.value.issues] == [(2, column)]

    def test_nan_reading_rejected(self, tmp_path: Path) -> None:
        path = write(tmp_path / "stations.csv", STATION_HEADER, "S1,30,110,2010-01-01,NaN,1012,8,0,5.5,70,2")
        with pytest.raises(SchemaError) as info:
            read_stations(path)
        assert [(i.line, i.column) for i in info.value.issues] == [(2, "temp")]

    def test_duplicate_day(self, tmp_path: Path) -> None:
        row = "S1,30,110,2010-01-01,3.5,1012,8,0,5.5,70,2"
        with pytest.raises(SchemaError, match="duplicate reading"):
            read_stations(write(tmp_path / "stations.csv", STATION_HEADER, row, row))

    def test_station_moves(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / "stations.csv",
            STATION_HEADER,
            "S1,30,110,2010-01-01,3.5,1012,8,0,5.5,70,2",
            "S1,31,110,2010-01-02,3.5,1012,8,0,5.5,70,2",
        )
        with pytest.raises(SchemaError, match="moved"):
            read_stations(path)


class TestCases:
    cities = [City("C1", 40.0, 116.0, "north")]

    def test_region_rows_and_subgroups(self, tmp_path: Path) -> None:
        path = write(
            tmp_path / "cases.csv",
            CASE_HEADER,
            "2010-01,C1,RSV,,,100,20",
            "2010-01,south,RSV,0-4,female,50,5",
        )
        first, second = read_cases(path, self.cities)
        assert (first.age_band, first.sex) == (None, None)
        assert (second.place, second.age_band, second.sex) == ("south", "0-4", "female")

    def test_unknown_place(self, tmp_path: Path) -> None:
        path = write(tmp_path / "cases.csv", CASE_HEADER, "2010-01,C7,RSV,,,100,20")
        with pytest.raises(SchemaError, match="unknown city or region"):
            read_cases(path, self.cities)
        assert len(read_cases(path)) == 1

    def test_duplicate_row(self, tmp_path: Path) -> None:
        row = "2010-01,C1,RSV,,,100,20"
        with pytest.raises(SchemaError, match="duplicate row"):
            read_cases(write(tmp_path / "cases.csv", CASE_HEADER, row, row), self.cities)

    @pytest.mark.parametrize(("cells", "column"), [("10.5,2", "tested"), ("10,-1", "positive"), ("10,11", "positive")])
    def test_bad_counts(self, tmp_path: Path, cells: str, column: str) -> None:
        path = write(tmp_path / "cases.csv", CASE_HEADER, f"2010-01,C1,RSV,,,{cells}")
        with pytest.raises(SchemaError) as info:
            read_cases(path, self.cities)
        assert info.value.issues[0].column == column


def test_duplicate_city(tmp_path: Path) -> None:
    path = write(tmp_path / "cities.csv", CITY_HEADER, "C1,30,110,north", "C1,31,111,south")
    with pytest.raises(SchemaError) as info:
        read_cities(path)
    assert info.value.issues[0].line == 3


def test_intermediate_tables_read_back(workspace: dict[str, Path], tmp_path: Path) -> None:
    ws = load_workspace(workspace["stations"], workspace["cases"], workspace["cities"])
    station_months = aggregate_stations(ws.stations)
    write_frame(station_months, tmp_path / "station_months.csv")
    reread = read_station_months(tmp_path / "station_months.csv")
    assert reread.shape == station_months.shape

    panels = interpolate_cities(reread, ws.cities)
    write_frame(city_panels_frame(panels), tmp_path / "city_months.csv")
    assert [(p.city_id, p.month) for p in read_city_months(tmp_path / "city_months.csv")] == [
        (p.city_id, p.month) for p in panels
    ]

    outcomes = build_outcomes(ws.cases, region_membership(ws.cities))
    write_frame(outcomes_frame(outcomes), tmp_path / "rates.csv")
    assert read_rates(tmp_path / "rates.csv") == outcomes


def test_file_digest(tmp_path: Path) -> None:
    path = write(tmp_path / "a.txt", "abc")
    assert file_digest(path) == "edeaaff3f1774ad2888673770c6d64097e391bc362d7d6fb34982ddf0efd18cb"
