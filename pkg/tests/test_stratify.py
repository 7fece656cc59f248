"""Tests for the stratification strategies and strategy strings."""

from __future__ import annotations

import itertools
import logging

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from geodet.common import (
    BadStrataCountError,
    ConfigError,
    DegenerateRangeError,
    EmptyInputError,
    UnsortedBreaksError,
)
from geodet.stratify import (
    Strategy,
    parse_strategy,
    stratify_equal_interval,
    stratify_manual,
    stratify_natural_breaks,
    stratify_quantile,
    within_ss,
)

values_lists = st.lists(st.integers(-40, 40).map(float), min_size=3, max_size=12)


def brute_force_ssw(values: list[float], l: int) -> float:  # noqa: E741
    """Smallest within-SS over every split of the sorted distinct values into l runs."""
    distinct = sorted(set(values))
    arr = np.asarray(values)
    best = np.inf
    for cuts in itertools.combinations(range(1, len(distinct)), l - 1):
        edges = [distinct[c] for c in cuts]
        labels = np.searchsorted(edges, arr, side="right")
        total = sum(float(np.sum((arr[labels == h] - arr[labels == h].mean()) ** 2)) for h in range(l))
        best = min(best, total)
    return best


class TestEqualInterval:
    def test_midpoint_split(self) -> None:
        strata = stratify_equal_interval(list(range(11)), 2)
        assert strata.labels == (1,) * 5 + (2,) * 6
        assert strata.breaks == (5.0,)
        assert strata.method == "equal"

    def test_all_equal(self) -> None:
        with pytest.raises(DegenerateRangeError):
            stratify_equal_interval([3, 3, 3], 2)

    @pytest.mark.parametrize("l", [1, 4])
    def test_bad_strata_count(self, l: int) -> None:  # noqa: E741
        with pytest.raises(BadStrataCountError):
            stratify_equal_interval([1, 2, 3], l)

    def test_empty(self) -> None:
        with pytest.raises(EmptyInputError):
            stratify_equal_interval([], 2)

    def test_matches_histogram(self) -> None:
        temps = np.linspace(-5.0, 30.0, 57)
        strata = stratify_equal_interval(temps, 6)
        counts, _ = np.histogram(temps, bins=6)
        assert strata.l == 6
        assert strata.counts() == tuple(int(c) for c in counts)
        np.testing.assert_allclose(np.diff([-5.0, *strata.breaks, 30.0]), 35.0 / 6)

    def test_empty_bins_compacted(self, caplog: pytest.LogCaptureFixture) -> None:
        with caplog.at_level(logging.WARNING, logger="geodet.stratify"):
            strata = stratify_equal_interval([0, 0, 1, 1, 2, 9, 10], 5)
        assert strata.compacted
        assert strata.l == 3
        assert "compacted" in caplog.text


class TestQuantile:
    def test_median_split(self) -> None:
        assert stratify_quantile([1, 2, 3, 4], 2).labels == (1, 1, 2, 2)

    def test_ties_go_to_lower_stratum(self) -> None:
        assert stratify_quantile([1, 1, 1, 2], 2).labels == (1, 1, 1, 2)

    def test_rank_thirds(self) -> None:
        assert stratify_quantile([5, 1, 3, 2, 4, 6], 3).labels == (3, 1, 2, 1, 2, 3)

    def test_duplicate_breaks_collapse(self, caplog: pytest.LogCaptureFixture) -> None:
        with caplog.at_level(logging.WARNING, logger="geodet.stratify"):
            strata = stratify_quantile([1, 1, 1, 1, 1, 2, 3], 3)
        assert strata.l == 2
        assert strata.labels == (1, 1, 1, 1, 1, 2, 2)
        assert "collapsed" in caplog.text


class TestNaturalBreaks:
    def test_two_clusters(self) -> None:
        assert stratify_natural_breaks([1, 2, 10, 11], 2).labels == (1, 1, 2, 2)

    def test_one_value_per_stratum(self) -> None:
        strata = stratify_natural_breaks([1, 2, 3], 3)
        assert strata.labels == (1, 2, 3)
        assert within_ss([1, 2, 3], strata) == 0.0

    def test_three_clusters(self) -> None:
        values = [0, 0.1, 0.2, 5, 5.1, 9, 9.2]
        assert stratify_natural_breaks(values, 3).labels == (1, 1, 1, 2, 2, 3, 3)

    def test_ties_prefer_earliest_break(self) -> None:
        # {0} | {1, 2} and {0, 1} | {2} cost the same.
        assert stratify_natural_breaks([0, 1, 2], 2).labels == (1, 2, 2)

    def test_singleton_warning(self, caplog: pytest.LogCaptureFixture) -> None:
        with caplog.at_level(logging.WARNING, logger="geodet.stratify"):
            stratify_natural_breaks([1, 2, 10, 11, 50], 3)
        assert "below 2 observations" in caplog.text

    @given(values=values_lists, l=st.integers(2, 4))
    @settings(max_examples=150, deadline=None)
    def test_matches_exhaustive_search(self, values: list[float], l: int) -> None:  # noqa: E741
        assume(len(set(values)) >= l)
        strata = stratify_natural_breaks(values, l)
        assert within_ss(values, strata) == pytest.approx(brute_force_ssw(values, l), abs=1e-7)

    @given(values=values_lists, l=st.integers(2, 5))
    @settings(max_examples=100, deadline=None)
    def test_no_worse_than_other_methods(self, values: list[float], l: int) -> None:  # noqa: E741
        assume(len(set(values)) >= l)
        best = within_ss(values, stratify_natural_breaks(values, l))
        assert best <= within_ss(values, stratify_quantile(values, l)) + 1e-7
        assert best <= within_ss(values, stratify_equal_interval(values, l)) + 1e-7

    @given(values=values_lists)
    @settings(max_examples=100, deadline=None)
    def test_more_strata_never_worse(self, values: list[float]) -> None:
        distinct = len(set(values))
        assume(distinct >= 3)
        costs = [within_ss(values, stratify_natural_breaks(values, l)) for l in range(2, min(distinct, 6) + 1)]
        assert all(b <= a + 1e-7 for a, b in itertools.pairwise(costs))


class TestManual:
    def test_three_bins(self) -> None:
        assert stratify_manual([1, 5, 9], [4, 8]).labels == (1, 2, 3)

    def test_boundary_goes_to_upper_stratum(self) -> None:
        assert stratify_manual([3, 4], [4]).labels == (1, 2)

    def test_lone_boundary_value_compacted(self) -> None:
        strata = stratify_manual([4], [4])
        assert strata.labels == (1,)
        assert strata.compacted

    def test_all_below_single_break(self) -> None:
        strata = stratify_manual([1, 2, 3], [10])
        assert strata.l == 1
        assert strata.labels == (1, 1, 1)

    @pytest.mark.parametrize("breaks", [[8, 4], [4, 4]])
    def test_unsorted(self, breaks: list[float]) -> None:
        with pytest.raises(UnsortedBreaksError):
            stratify_manual([1, 2], breaks)


@given(values=values_lists, method=st.sampled_from(["equal", "quantile", "jenks"]), l=st.integers(2, 4))
@settings(max_examples=150, deadline=None)
def test_labels_depend_only_on_value(values: list[float], method: str, l: int) -> None:  # noqa: E741
    assume(len(set(values)) >= l)
    strata = Strategy(method, l=l).apply(values)
    seen: dict[float, int] = {}
    for value, label in zip(values, strata.labels):
        assert seen.setdefault(value, label) == label


class TestStrategyStrings:
    @pytest.mark.parametrize(
        ("text", "expected"),
        [
            ("quantile:6", Strategy("quantile", l=6)),
            ("equal:5", Strategy("equal", l=5)),
            ("jenks:4", Strategy("jenks", l=4)),
            ("natural:4", Strategy("jenks", l=4)),
            ("manual:0,10,20", Strategy("manual", breaks=(0.0, 10.0, 20.0))),
        ],
    )
    def test_parse(self, text: str, expected: Strategy) -> None:
        assert parse_strategy(text) == expected

    @pytest.mark.parametrize("text", ["quantile", "kmeans:4", "quantile:x", "equal:1", "manual:", "manual:3,1"])
    def test_bad(self, text: str) -> None:
        with pytest.raises(ConfigError):
            parse_strategy(text)

    def test_str_round_trip(self) -> None:
        for text in ("quantile:6", "jenks:3", "manual:-1.5,2"):
            assert str(parse_strategy(text)) == text
