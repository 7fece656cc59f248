"""Tests for great-circle distances and inverse distance weighting."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geodet.common import NoStationsError, OutOfRangeCoordinateError
from geodet.geo_interp import (
    EARTH_RADIUS_KM,
    IdwInterpolator,
    StationPoint,
    haversine_km,
    haversine_matrix,
    idw,
)


def law_of_cosines_km(a: tuple[float, float], b: tuple[float, float]) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (*a, *b))
    cos_c = math.sin(lat1) * math.sin(lat2) + math.cos(lat1) * math.cos(lat2) * math.cos(lon2 - lon1)
    return EARTH_RADIUS_KM * math.acos(max(-1.0, min(1.0, cos_c)))


def on_equator(station_id: str, km: float, value: float | None) -> StationPoint:
    """A station *km* east of (0, 0) along the equator."""
    return StationPoint(station_id, 0.0, math.degrees(km / EARTH_RADIUS_KM), value)


station_lists = st.lists(
    st.tuples(
        st.floats(-60, 60),
        st.floats(-170, 170),
        st.floats(-50, 50),
    ),
    min_size=1,
    max_size=8,
)


class TestHaversine:
    def test_same_point(self) -> None:
        assert haversine_km((31.2, 121.5), (31.2, 121.5)) == 0.0

    def test_half_circumference(self) -> None:
        assert haversine_km((0, 0), (0, 180)) == pytest.approx(20015.1, abs=0.1)

    def test_beijing_shanghai(self) -> None:
        beijing, shanghai = (39.9, 116.4), (31.2, 121.5)
        d = haversine_km(beijing, shanghai)
        assert d == pytest.approx(law_of_cosines_km(beijing, shanghai), rel=0.005)
        assert d == pytest.approx(1068, rel=0.005)
        assert haversine_km(shanghai, beijing) == pytest.approx(d, rel=1e-12)

    @pytest.mark.parametrize("point", [(91.0, 0.0), (0.0, -181.0), (math.nan, 0.0)])
    def test_out_of_range(self, point: tuple[float, float]) -> None:
        with pytest.raises(OutOfRangeCoordinateError):
            haversine_km(point, (0.0, 0.0))

    def test_matrix_agrees_with_scalar(self, rng: np.random.Generator) -> None:
        lats_a, lons_a = rng.uniform(-80, 80, 5), rng.uniform(-180, 180, 5)
        lats_b, lons_b = rng.uniform(-80, 80, 3), rng.uniform(-180, 180, 3)
        matrix = haversine_matrix(lats_a, lons_a, lats_b, lons_b)
        assert matrix.shape == (5, 3)
        for i in range(5):
            for j in range(3):
                expected = haversine_km((lats_a[i], lons_a[i]), (lats_b[j], lons_b[j]))
                assert matrix[i, j] == pytest.approx(expected, rel=1e-12)


class TestIdw:
    def test_exact_station(self) -> None:
        stations = [StationPoint("a", 30.0, 110.0, 12.5), StationPoint("b", 31.0, 111.0, 99.0)]
        assert idw((30.0, 110.0), stations) == 12.5

    @pytest.mark.parametrize("power", [0.5, 1.0, 2.0, 3.0])
    def test_equidistant_pair(self, power: float) -> None:
        stations = [StationPoint("a", 0.0, 1.0, 10.0), StationPoint("b", 0.0, -1.0, 20.0)]
        assert idw((0.0, 0.0), stations, power=power) == pytest.approx(15.0, abs=1e-12)

    def test_hand_computed_weights(self) -> None:
        stations = [on_equator("a", 1.0, 0.0), on_equator("b", 2.0, 10.0), on_equator("c", 4.0, 20.0)]
        # weights 1, 0.25, 0.0625
        assert idw((0.0, 0.0), stations, power=2, k=3) == pytest.approx(3.75 / 1.3125, abs=1e-9)

    def test_k_limits_neighbours(self) -> None:
        stations = [on_equator("a", 1.0, 0.0), on_equator("b", 2.0, 10.0), on_equator("c", 4.0, 20.0)]
        assert idw((0.0, 0.0), stations, power=2, k=1) == pytest.approx(0.0)
        assert idw((0.0, 0.0), stations, power=2, k=2) == pytest.approx(2.5 / 1.25)

    def test_missing_values_skipped(self) -> None:
        stations = [on_equator("a", 1.0, None), on_equator("b", 2.0, 10.0), on_equator("c", 4.0, math.nan)]
        assert idw((0.0, 0.0), stations, k=1) == 10.0

    def test_no_present_station(self) -> None:
        with pytest.raises(NoStationsError):
            idw((0.0, 0.0), [on_equator("a", 1.0, None)])
        with pytest.raises(NoStationsError):
            idw((0.0, 0.0), [])

    def test_tie_broken_by_station_id(self) -> None:
        stations = [StationPoint("z", 0.0, 1.0, 1.0), StationPoint("a", 0.0, -1.0, 2.0)]
        assert idw((0.0, 0.0), stations, k=1) == 2.0
        assert idw((0.0, 0.0), list(reversed(stations)), k=1) == 2.0

    @pytest.mark.parametrize(("power", "k"), [(0.0, 3), (-1.0, 3), (2.0, 0)])
    def test_bad_parameters(self, power: float, k: int) -> None:
        with pytest.raises(ValueError):
            idw((0.0, 0.0), [on_equator("a", 1.0, 1.0)], power=power, k=k)

    def test_continuous_near_station(self) -> None:
        stations = [StationPoint("a", 0.0, 0.0, 10.0), StationPoint("b", 0.0, 1.0, 20.0)]
        assert idw((0.0, 1e-7), stations) == pytest.approx(10.0, abs=1e-5)

    @given(points=station_lists, target=st.tuples(st.floats(-60, 60), st.floats(-170, 170)))
    @settings(max_examples=200, deadline=None)
    def test_estimate_is_convex_and_order_free(
        self, points: list[tuple[float, float, float]], target: tuple[float, float]
    ) -> None:
        stations = [StationPoint(f"S{i:03d}", lat, lon, value) for i, (lat, lon, value) in enumerate(points)]
        estimate = idw(target, stations, k=4)
        values = [p[2] for p in points]
        assert min(values) - 1e-9 <= estimate <= max(values) + 1e-9
        assert idw(target, list(reversed(stations)), k=4) == estimate


class TestIdwInterpolator:
    def test_agrees_with_idw(self, rng: np.random.Generator) -> None:
        ids = [f"S{i:03d}" for i in range(10)]
        lats, lons = rng.uniform(20, 45, 10), rng.uniform(100, 125, 10)
        targets = list(zip(rng.uniform(20, 45, 4), rng.uniform(100, 125, 4)))
        interp = IdwInterpolator(ids, lats, lons, [t[0] for t in targets], [t[1] for t in targets], power=2.0, k=3)
        for _ in range(5):
            values = rng.normal(size=10)
            values[rng.random(10) < 0.3] = np.nan
            estimates, _ = interp.interpolate(values)
            points = [
                StationPoint(sid, lat, lon, None if math.isnan(v) else float(v))
                for sid, lat, lon, v in zip(ids, lats, lons, values)
            ]
            expected = [idw(t, points, power=2.0, k=3) for t in targets]
            np.testing.assert_allclose(estimates, expected, rtol=1e-12)

    def test_coverage_of_used_neighbours(self) -> None:
        lons = [math.degrees(km / EARTH_RADIUS_KM) for km in (1.0, 2.0, 4.0)]
        interp = IdwInterpolator(["a", "b", "c"], [0.0] * 3, lons, [0.0], [0.0], k=2)
        estimates, coverage = interp.interpolate(np.array([np.nan, 10.0, 20.0]), np.array([1.0, 0.9, 0.7]))
        assert coverage[0] == pytest.approx(0.8)
        assert 10.0 < estimates[0] < 20.0

    def test_exact_match_takes_station_coverage(self) -> None:
        interp = IdwInterpolator(["a", "b"], [0.0, 0.0], [0.0, 1.0], [0.0], [0.0])
        estimates, coverage = interp.interpolate(np.array([5.0, 7.0]), np.array([0.85, 1.0]))
        assert estimates[0] == 5.0
        assert coverage[0] == 0.85

    def test_all_missing(self) -> None:
        interp = IdwInterpolator(["a"], [0.0], [0.0], [1.0, 2.0], [1.0, 2.0])
        estimates, coverage = interp.interpolate(np.array([np.nan]))
        assert np.isnan(estimates).all()
        assert np.isnan(coverage).all()
