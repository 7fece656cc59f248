"""Shared fixtures for the geodet test suite.

- ``rng``: a seeded numpy Generator so randomized tests are reproducible.
- ``workspace``: a small synthetic stations/cases/cities trio in ``tmp_path``.
"""

import logging
import os
import sys
from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

# Add parent directory to path so we can import geodet without installing it
_geodet_path = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if _geodet_path not in sys.path:
    sys.path.insert(0, _geodet_path)

from geodet.synthetic import SeasonalSpec, write_workspace

SMALL_SPEC = SeasonalSpec(years=2, n_cities=4, n_stations=5, tested_per_month=400)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240501)


@pytest.fixture
def workspace(tmp_path: Path) -> dict[str, Path]:
    """Paths of a freshly written synthetic workspace (keys: stations, cases, cities)."""
    return write_workspace(SMALL_SPEC, 11, tmp_path / "ws")


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("GEODET_SEED", raising=False)


@pytest.fixture(autouse=True)
def _reset_cli_logging() -> Iterator[None]:
    """Undo the handler and propagation changes ``geodet.cli.main`` makes."""
    yield
    logger = logging.getLogger("geodet")
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True
