"""End-to-end tests of the ``geodet`` command line."""

from __future__ import annotations

import json
from pathlib import Path

import pandas as pd
import pytest

from geodet.cli import EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main
from geodet.common import FACTORS


def edit_cell(path: Path, line: int, column: str, value: str) -> None:
    """Overwrite one cell of a CSV file, addressed by file line number."""
    lines = path.read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    fields = lines[line - 1].split(",")
    fields[header.index(column)] = value
    lines[line - 1] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def q_value(text: str) -> float:
    return float(text.rstrip("*†"))


@pytest.fixture
def study(tmp_path: Path) -> Path:
    """A synthetic workspace written by ``geodet synth``; returns its config.json."""
    spec = tmp_path / "spec.json"
    spec.write_text(
        json.dumps({"years": 3, "n_cities": 4, "n_stations": 5, "tested_per_month": 400, "weights": {"temp": 1.5}}),
        encoding="utf-8",
    )
    out = tmp_path / "ws"
    assert main(["synth", str(spec), "--seed", "21", "--out", str(out), "-q"]) == EXIT_OK
    return out / "config.json"


class TestIngest:
    def test_summary(self, workspace: dict[str, Path], capsys: pytest.CaptureFixture[str]) -> None:
        argv = ["ingest", str(workspace["stations"]), str(workspace["cases"]), str(workspace["cities"])]
        assert main(argv) == EXIT_OK
        out = capsys.readouterr().out
        assert "stations:      5 (3650 station-days, 2009-01-01 .. 2010-12-31)" in out
        assert "cities:        4" in out
        assert "case rows:     96 (2009-01 .. 2010-12; RSV)" in out

    def test_paths_from_config(self, study: Path) -> None:
        assert main(["ingest", "--config", str(study), "-q"]) == EXIT_OK

    def test_bad_latitude_reported_with_line(
        self, workspace: dict[str, Path], capsys: pytest.CaptureFixture[str]
    ) -> None:
        edit_cell(workspace["stations"], 7, "lat", "95")
        argv = ["ingest", str(workspace["stations"]), str(workspace["cases"]), str(workspace["cities"])]
        assert main(argv) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "stations.csv" in err
        assert "line 7, column 'lat'" in err

    def test_positive_exceeds_tested(self, workspace: dict[str, Path], capsys: pytest.CaptureFixture[str]) -> None:
        edit_cell(workspace["cases"], 2, "positive", "401")
        argv = ["ingest", str(workspace["stations"]), str(workspace["cases"]), str(workspace["cities"])]
        assert main(argv) == EXIT_USAGE
        assert "exceeds tested" in capsys.readouterr().err

    def test_every_bad_file_reported(self, workspace: dict[str, Path], capsys: pytest.CaptureFixture[str]) -> None:
        edit_cell(workspace["stations"], 3, "date", "2009-02-30")
        edit_cell(workspace["cities"], 2, "region", "east")
        argv = ["ingest", str(workspace["stations"]), str(workspace["cases"]), str(workspace["cities"])]
        assert main(argv) == EXIT_USAGE
        err = capsys.readouterr().err
        assert "stations.csv" in err
        assert "cities.csv" in err

    def test_short_row_rejected(self, workspace: dict[str, Path], capsys: pytest.CaptureFixture[str]) -> None:
        lines = workspace["stations"].read_text(encoding="utf-8").splitlines()
        lines[4] = ",".join(lines[4].split(",")[:6])
        workspace["stations"].write_text("\n".join(lines) + "\n", encoding="utf-8")
        argv = ["ingest", str(workspace["stations"]), str(workspace["cases"]), str(workspace["cities"])]
        assert main(argv) == EXIT_USAGE
        assert "line 5: expected 11 fields, got 6" in capsys.readouterr().err

    def test_missing_file(self, workspace: dict[str, Path]) -> None:
        argv = ["ingest", str(workspace["stations"]), "nope.csv", str(workspace["cities"])]
        assert main(argv) == EXIT_RUNTIME


class TestStages:
    def test_aggregate_interpolate_rates(self, workspace: dict[str, Path], tmp_path: Path) -> None:
        out = tmp_path / "stages"
        assert main(["aggregate", str(workspace["stations"]), "--out", str(out), "-q"]) == EXIT_OK
        station_months = pd.read_csv(out / "station_months.csv")
        assert len(station_months) == 5 * 24

        argv = ["interpolate", str(out / "station_months.csv"), str(workspace["cities"]), "--out", str(out), "-q"]
        assert main([*argv, "--power", "1.5", "--neighbors", "3"]) == EXIT_OK
        city_months = pd.read_csv(out / "city_months.csv")
        assert len(city_months) == 4 * 24
        assert city_months[list(FACTORS)].notna().all().all()

        assert main(["rates", str(workspace["cases"]), str(workspace["cities"]), "--out", str(out), "-q"]) == EXIT_OK
        rates = pd.read_csv(out / "rates.csv", keep_default_na=False)
        assert sorted(set(rates["region"])) == ["all", "north", "south"]
        assert len(rates) == 3 * 24

    def test_missing_input(self, tmp_path: Path) -> None:
        assert main(["aggregate", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == EXIT_RUNTIME

    def test_no_input_given(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["aggregate", "--out", str(tmp_path)]) == EXIT_USAGE
        assert "no stations file" in capsys.readouterr().err


class TestRun:
    def test_report_files_and_planted_factor(self, study: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["run", str(study), "-q"]) == EXIT_OK
        report = study.parent / "report"
        names = {p.name for p in report.iterdir()}
        assert {"q_table.csv", "q_table.json", "dominant.csv", "region_comparison.csv", "run_manifest.json"} <= names
        assert "interaction_RSV_all_all-ages_all-sexes.svg" in names

        table = pd.read_csv(report / "q_table.csv", dtype=str, keep_default_na=False)
        assert len(table) == 3
        row = table[table["region"] == "all"].iloc[0]
        qs = {name: q_value(row[name]) for name in FACTORS}
        assert max(qs, key=qs.__getitem__) == "temp"

        printed = capsys.readouterr().out
        assert "Region: all" in printed
        assert "* p<0.01. † p<0.05." in printed

        manifest = json.loads((report / "run_manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["seed"] == 21
        assert set(manifest["inputs"]) == {"stations", "cases", "cities"}

    def test_rerun_is_byte_identical(self, study: Path) -> None:
        assert main(["run", str(study), "-q"]) == EXIT_OK
        report = study.parent / "report"
        first = {p.name: p.read_bytes() for p in report.iterdir()}
        assert main(["run", str(study), "-q"]) == EXIT_OK
        assert {p.name: p.read_bytes() for p in report.iterdir()} == first

    def test_flags_override_config(self, study: Path, tmp_path: Path) -> None:
        out = tmp_path / "alt"
        assert main(["run", str(study), "--out", str(out), "--strata", "equal:4", "--seed", "3", "-q"]) == EXIT_OK
        manifest = json.loads((out / "run_manifest.json").read_text(encoding="utf-8"))
        assert manifest["config"]["strata"] == "equal:4"
        assert manifest["config"]["seed"] == 3

    def test_unknown_virus(self, study: Path, capsys: pytest.CaptureFixture[str]) -> None:
        data = json.loads(study.read_text(encoding="utf-8"))
        data["viruses"] = ["measles"]
        study.write_text(json.dumps(data), encoding="utf-8")
        assert main(["run", str(study)]) == EXIT_USAGE
        assert "measles" in capsys.readouterr().err

    def test_bad_strategy_flag(self, study: Path) -> None:
        assert main(["run", str(study), "--strata", "kmeans:4"]) == EXIT_USAGE

    def test_config_given_twice(self, study: Path) -> None:
        assert main(["run", str(study), "--config", str(study)]) == EXIT_USAGE

    def test_report_command(self, study: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["run", str(study), "-q"]) == EXIT_OK
        report = study.parent / "report"
        svg = report / "interaction_RSV_north_all-ages_all-sexes.svg"
        svg.unlink()
        capsys.readouterr()
        assert main(["report", str(report), "-q"]) == EXIT_OK
        assert "Region: north" in capsys.readouterr().out
        assert svg.exists()


class TestSynth:
    def test_bad_spec(self, tmp_path: Path) -> None:
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"years": 1}), encoding="utf-8")
        assert main(["synth", str(spec), "--seed", "1", "--out", str(tmp_path / "ws")]) == EXIT_USAGE

    def test_seed_required(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        assert main(["synth", "--out", str(tmp_path / "ws")]) == EXIT_USAGE
        assert "GEODET_SEED" in capsys.readouterr().err

    def test_seed_from_environment(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("GEODET_SEED", "7")
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"years": 2, "n_cities": 2, "n_stations": 2}), encoding="utf-8")
        out = tmp_path / "ws"
        assert main(["synth", str(spec), "--out", str(out), "-q"]) == EXIT_OK
        config = json.loads((out / "config.json").read_text(encoding="utf-8"))
        assert config["seed"] == 7

    def test_bad_environment_seed(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("GEODET_SEED", "seven")
        assert main(["synth", "--out", str(tmp_path / "ws")]) == EXIT_USAGE


def test_usage_error() -> None:
    assert main(["frobnicate"]) == EXIT_USAGE
