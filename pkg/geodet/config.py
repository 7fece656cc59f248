"""Analysis configuration.

A run is described by one JSON document, e.g.::

    {
      "stations": "stations.csv",
      "cases": "cases.csv",
      "cities": "cities.csv",
      "strata": "quantile:6",
      "factor_strata": {"rain": "jenks:5"},
      "significance": "permutation",
      "n_perm": 999,
      "seed": 20090101,
      "viruses": ["RSV", "influenza"],
      "out": "report"
    }

Relative paths are resolved against the directory holding the config file.
Values are taken, highest precedence first, from command-line flags, the
config file, the ``GEODET_SEED`` environment variable (seed only), and the
defaults below.
"""

from __future__ import annotations

import json
import os
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from geodet.common import AGE_BANDS, CITY_REGIONS, FACTORS, SEXES, VIRUSES, ConfigError
from geodet.detector import SIGNIFICANCE_METHODS
from geodet.stratify import Strategy, parse_strategy

#: Environment variable consulted for the seed when neither flag nor config sets one.
SEED_ENV = "GEODET_SEED"


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything that determines a run's output.

    Attributes:
        stations: Path to stations.csv (daily station readings).
        cases: Path to cases.csv (monthly test counts).
        cities: Path to cities.csv (study cities and their region).
        strata: Default stratification strategy for every factor.
        factor_strata: Per-factor strategy overrides.
        significance: ``permutation``, ``noncentral-f`` or ``f``.
        n_perm: Permutations per factor cell.
        seed: Base seed; every cell derives its own seed from it.
        idw_power: Inverse-distance exponent.
        idw_neighbors: Nearest stations used per city.
        regions: City id -> region overrides applied on top of cities.csv.
        viruses: Viruses to analyse (empty = all present in the data).
        age_bands: Age bands to analyse; ``"all"`` means the all-ages series.
        sexes: Sexes to analyse; ``"all"`` means the both-sexes series.
        out: Output directory.
        pool_calendar_months: Average each calendar month across years first.
        min_months: Valid months required before a group is analysed.
        min_coverage: Daily coverage a station-month needs to count.
        jobs: Worker threads for detector cells.
    """

    stations: str | None = None
    cases: str | None = None
    cities: str | None = None
    strata: str = "quantile:6"
    factor_strata: Mapping[str, str] = field(default_factory=dict)
    significance: str = "permutation"
    n_perm: int = 999
    seed: int | None = None
    idw_power: float = 2.0
    idw_neighbors: int = 12
    regions: Mapping[str, str] = field(default_factory=dict)
    viruses: tuple[str, ...] = ()
    age_bands: tuple[str, ...] = ()
    sexes: tuple[str, ...] = ()
    out: str = "geodet-out"
    pool_calendar_months: bool = False
    min_months: int = 12
    min_coverage: float = 0.8
    jobs: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "viruses", tuple(self.viruses))
        object.__setattr__(self, "age_bands", tuple(self.age_bands))
        object.__setattr__(self, "sexes", tuple(self.sexes))
        object.__setattr__(self, "factor_strata", dict(self.factor_strata))
        object.__setattr__(self, "regions", dict(self.regions))
        self.validate()

    def validate(self) -> None:
        """Raise :class:`ConfigError` on any malformed field."""
        parse_strategy(self.strata)
        for factor, text in self.factor_strata.items():
            if factor not in FACTORS:
                raise ConfigError(f"factor_strata: unknown factor {factor!r}; expected one of {', '.join(FACTORS)}")
            parse_strategy(text)
        if self.significance not in SIGNIFICANCE_METHODS:
            raise ConfigError(
                f"significance must be one of {', '.join(SIGNIFICANCE_METHODS)}, got {self.significance!r}"
            )
        if self.n_perm < 1:
            raise ConfigError(f"n_perm must be >= 1, got {self.n_perm}")
        if not self.idw_power > 0:
            raise ConfigError(f"idw_power must be > 0, got {self.idw_power}")
        if self.idw_neighbors < 1:
            raise ConfigError(f"idw_neighbors must be >= 1, got {self.idw_neighbors}")
        for city, region in self.regions.items():
            if region not in CITY_REGIONS:
                raise ConfigError(f"regions: city {city!r} mapped to unknown region {region!r}")
        _check_names("viruses", self.viruses, VIRUSES)
        _check_names("age_bands", self.age_bands, (*AGE_BANDS, "all"))
        _check_names("sexes", self.sexes, (*SEXES, "all"))
        if self.min_months < 2:
            raise ConfigError(f"min_months must be >= 2, got {self.min_months}")
        if not 0.0 <= self.min_coverage <= 1.0:
            raise ConfigError(f"min_coverage must be in [0, 1], got {self.min_coverage}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")

    def strategy_for(self, factor: str) -> Strategy:
        return parse_strategy(self.factor_strata.get(factor, self.strata))

    def require_seed(self) -> int:
        """The seed, which permutation significance cannot run without."""
        if self.seed is None:
            raise ConfigError(f"permutation significance needs a seed: set 'seed', pass --seed, or export {SEED_ENV}")
        return self.seed

    def wants_group(self, virus: str, age_band: str | None, sex: str | None) -> bool:
        if self.viruses and virus not in self.viruses:
            return False
        if self.age_bands and (age_band or "all") not in self.age_bands:
            return False
        return not (self.sexes and (sex or "all") not in self.sexes)

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["viruses"] = list(self.viruses)
        data["age_bands"] = list(self.age_bands)
        data["sexes"] = list(self.sexes)
        data["factor_strata"] = dict(sorted(self.factor_strata.items()))
        data["regions"] = dict(sorted(self.regions.items()))
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], *, base_dir: Path | None = None) -> AnalysisConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
        values = dict(data)
        if base_dir is not None:
            for key in ("stations", "cases", "cities", "out"):
                if values.get(key):
                    values[key] = str(base_dir / values[key])
        try:
            return cls(**values)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path: str | os.PathLike[str]) -> AnalysisConfig:
        """Read a JSON config file; relative paths resolve against its directory."""
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    def with_overrides(self, **overrides: Any) -> AnalysisConfig:
        """Copy with every non-``None`` override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes) if changes else self

    def with_env_seed(self, environ: Mapping[str, str] | None = None) -> AnalysisConfig:
        """Fill a missing seed from ``GEODET_SEED``."""
        if self.seed is not None:
            return self
        env = os.environ if environ is None else environ
        raw = env.get(SEED_ENV, "").strip()
        if not raw:
            return self
        try:
            return replace(self, seed=int(raw))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _check_names(key: str, names: tuple[str, ...], allowed: tuple[str, ...]) -> None:
    for name in names:
        if name not in allowed:
            raise ConfigError(f"{key}: unknown name {name!r}; expected one of {', '.join(allowed)}")


