"""Tests for AnalysisConfig loading, validation and precedence."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from geodet.common import ConfigError
from geodet.config import AnalysisConfig
from geodet.stratify import Strategy


def test_defaults() -> None:
    config = AnalysisConfig()
    assert config.strategy_for("temp") == Strategy("quantile", l=6)
    assert config.significance == "permutation"
    assert config.n_perm == 999
    assert config.min_months == 12


def test_load_resolves_paths_against_config_dir(tmp_path: Path) -> None:
    path = tmp_path / "study" / "config.json"
    path.parent.mkdir()
    path.write_text(json.dumps({"stations": "data/stations.csv", "out": "report", "seed": 4}), encoding="utf-8")
    config = AnalysisConfig.load(path)
    assert config.stations == str(path.parent / "data" / "stations.csv")
    assert config.out == str(path.parent / "report")
    assert config.cases is None


def test_per_factor_strategy() -> None:
    config = AnalysisConfig(factor_strata={"rain": "jenks:5"})
    assert config.strategy_for("rain") == Strategy("jenks", l=5)
    assert config.strategy_for("wind") == Strategy("quantile", l=6)


@pytest.mark.parametrize(
    "data",
    [
        {"strata": "kmeans:3"},
        {"factor_strata": {"snow": "quantile:4"}},
        {"significance": "bootstrap"},
        {"n_perm": 0},
        {"idw_power": 0},
        {"regions": {"C1": "east"}},
        {"viruses": ["measles"]},
        {"age_bands": ["teen"]},
        {"min_months": 1},
        {"jobs": 0},
        {"colour": "red"},
    ],
)
def test_invalid(data: dict[str, object]) -> None:
    with pytest.raises(ConfigError):
        AnalysisConfig.from_dict(data)


def test_bad_json(tmp_path: Path) -> None:
    path = tmp_path / "config.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        AnalysisConfig.load(path)


class TestSeed:
    def test_required_for_permutation(self) -> None:
        with pytest.raises(ConfigError, match="GEODET_SEED"):
            AnalysisConfig().require_seed()

    def test_environment_fallback(self) -> None:
        assert AnalysisConfig().with_env_seed({"GEODET_SEED": " 12 "}).seed == 12

    def test_config_beats_environment(self) -> None:
        assert AnalysisConfig(seed=3).with_env_seed({"GEODET_SEED": "12"}).seed == 3

    def test_flag_beats_config(self) -> None:
        assert AnalysisConfig(seed=3).with_overrides(seed=9, strata=None).seed == 9

    def test_bad_environment_value(self) -> None:
        with pytest.raises(ConfigError):
            AnalysisConfig().with_env_seed({"GEODET_SEED": "x"})


def test_group_filter() -> None:
    config = AnalysisConfig(viruses=("RSV",), age_bands=("0-4", "all"))
    assert config.wants_group("RSV", None, None)
    assert config.wants_group("RSV", "0-4", "male")
    assert not config.wants_group("RSV", "65+", None)
    assert not config.wants_group("ADV", None, None)


def test_dict_round_trip() -> None:
    config = AnalysisConfig(seed=1, viruses=("RSV", "ADV"), factor_strata={"rain": "manual:0,50"}, jobs=2)
    assert AnalysisConfig.from_dict(config.to_dict()) == config
