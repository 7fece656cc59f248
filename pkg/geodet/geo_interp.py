"""Inverse distance weighting of station observations onto city points.

Distances are great-circle (haversine) kilometres.  For each target the k
nearest stations *with a present value* are used; ties in distance are
broken by station id so neighbour selection does not depend on input order.
A station closer than :data:`EXACT_MATCH_KM` is returned verbatim.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from geodet.common import NoStationsError, OutOfRangeCoordinateError

EARTH_RADIUS_KM = 6371.0088
EXACT_MATCH_KM = 1e-6

DEFAULT_POWER = 2.0
DEFAULT_NEIGHBOURS = 12

LatLon = tuple[float, float]


def _check_coordinate(lat: float, lon: float) -> None:
    if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
        raise OutOfRangeCoordinateError(f"coordinate ({lat}, {lon}) out of range")


def haversine_km(a: LatLon, b: LatLon) -> float:
    """Great-circle distance in kilometres between two (lat, lon) points.

    Raises:
        OutOfRangeCoordinateError: A latitude or longitude is out of range.
    """
    _check_coordinate(*a)
    _check_coordinate(*b)
    lat1, lon1, lat2, lon2 = map(math.radians, (a[0], a[1], b[0], b[1]))
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix(
    lats_a: np.ndarray,
    lons_a: np.ndarray,
    lats_b: np.ndarray,
    lons_b: np.ndarray,
) -> np.ndarray:
    """Pairwise great-circle distances, shape ``(len(a), len(b))``, in km."""
    lat1 = np.radians(np.asarray(lats_a, dtype=np.float64))[:, None]
    lon1 = np.radians(np.asarray(lons_a, dtype=np.float64))[:, None]
    lat2 = np.radians(np.asarray(lats_b, dtype=np.float64))[None, :]
    lon2 = np.radians(np.asarray(lons_b, dtype=np.float64))[None, :]
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _weighted(distances: np.ndarray, values: np.ndarray, power: float) -> float:
    """IDW estimate from neighbours already sorted by (distance, station id)."""
    if distances[0] < EXACT_MATCH_KM:
        return float(values[0])
    weights = distances ** (-power)
    return float(np.dot(weights, values) / weights.sum())


def _check_params(power: float, k: int) -> None:
    if not power > 0:
        raise ValueError(f"power must be > 0, got {power}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")


@dataclass(frozen=True, slots=True)
class StationPoint:
    """A station location with one (possibly missing) value."""

    station_id: str
    lat: float
    lon: float
    value: float | None


def idw(
    target: LatLon,
    stations: Sequence[StationPoint],
    power: float = DEFAULT_POWER,
    k: int = DEFAULT_NEIGHBOURS,
) -> float:
    """Inverse-distance-weighted estimate at *target*.

    Stations with a missing value are dropped first; the *k* nearest of the
    rest are weighted by ``distance ** -power``.

    Raises:
        NoStationsError: No station has a present value.
        OutOfRangeCoordinateError: A coordinate is out of range.
    """
    _check_params(power, k)
    present = [s for s in stations if s.value is not None and math.isfinite(s.value)]
    if not present:
        raise NoStationsError(f"no station with a value near {target}")
    ranked = sorted(((haversine_km(target, (s.lat, s.lon)), s.station_id, s.value) for s in present))[:k]
    distances = np.array([d for d, _, _ in ranked])
    values = np.array([v for _, _, v in ranked], dtype=np.float64)
    return _weighted(distances, values, power)


class IdwInterpolator:
    """Interpolates many station-value vectors onto a fixed set of targets.

    Distances and per-target neighbour order are computed once; each call
    to :meth:`interpolate` then only filters out missing stations.
    """

    def __init__(
        self,
        station_ids: Sequence[str],
        station_lats: Sequence[float],
        station_lons: Sequence[float],
        target_lats: Sequence[float],
        target_lons: Sequence[float],
        *,
        power: float = DEFAULT_POWER,
        k: int = DEFAULT_NEIGHBOURS,
    ) -> None:
        _check_params(power, k)
        for lat, lon in zip(station_lats, station_lons):
            _check_coordinate(lat, lon)
        for lat, lon in zip(target_lats, target_lons):
            _check_coordinate(lat, lon)
        self.power = power
        self.k = k
        self.station_ids = list(station_ids)
        self.distances = haversine_matrix(
            np.asarray(target_lats), np.asarray(target_lons), np.asarray(station_lats), np.asarray(station_lons)
        )
        id_rank = np.argsort(np.argsort(np.array(self.station_ids, dtype=object), kind="stable"), kind="stable")
        # lexsort: last key is primary.
        self.order = np.stack([np.lexsort((id_rank, row)) for row in self.distances]) if len(self.distances) else None

    def interpolate(
        self,
        values: np.ndarray,
        coverage: np.ndarray | None = None,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Estimate every target from station *values* (NaN = missing).

        Returns ``(estimates, coverage)``: coverage is the mean of the input
        *coverage* over the neighbours actually used.  Targets with no
        present station get NaN for both.
        """
        values = np.asarray(values, dtype=np.float64)
        cov = np.ones_like(values) if coverage is None else np.asarray(coverage, dtype=np.float64)
        n_targets = self.distances.shape[0]
        estimates = np.full(n_targets, np.nan)
        used_cov = np.full(n_targets, np.nan)
        present = np.isfinite(values)
        if self.order is None or not present.any():
            return estimates, used_cov
        for t in range(n_targets):
            ranked = self.order[t][present[self.order[t]]][: self.k]
            dist = self.distances[t, ranked]
            estimates[t] = _weighted(dist, values[ranked], self.power)
            used_cov[t] = cov[ranked[0]] if dist[0] < EXACT_MATCH_KM else float(cov[ranked].mean())
        return estimates, used_cov
