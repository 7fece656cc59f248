"""Discretize a continuous factor series into strata.

Four strategies are provided, all pure functions of the input values:

- :func:`stratify_equal_interval` --- L equal-width bins over [min, max].
- :func:`stratify_quantile` --- breaks at the k/L empirical quantiles.
- :func:`stratify_natural_breaks` --- exact Fisher optimal partition
  (minimum within-stratum sum of squares) by dynamic programming.
- :func:`stratify_manual` --- caller-supplied break values.

Whatever the method, equal values always receive equal labels, and strata
that end up empty are dropped with labels renumbered (``compacted=True``).

Strategies can also be written as strings (``"quantile:6"``, ``"equal:5"``,
``"jenks:4"``, ``"manual:0,10,20"``) and parsed with :func:`parse_strategy`.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from geodet.common import (
    BadStrataCountError,
    ConfigError,
    DegenerateRangeError,
    EmptyInputError,
    StratumAssignment,
    UnsortedBreaksError,
)

logger = logging.getLogger(__name__)

#: Strata smaller than this are reported; a singleton has zero variance and inflates q.
MIN_STRATUM_SIZE = 2


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _as_values(values: Sequence[float] | np.ndarray) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("values must be one-dimensional")
    if arr.size == 0:
        raise EmptyInputError("no values to stratify")
    if not np.all(np.isfinite(arr)):
        raise ValueError("values must be finite")
    return arr


def _check_l(arr: np.ndarray, l: int) -> None:  # noqa: E741
    if arr.max() <= arr.min():
        raise DegenerateRangeError(f"all {arr.size} values equal {arr[0]:g}; cannot stratify")
    distinct = np.unique(arr).size
    if l < 2 or l > distinct:
        raise BadStrataCountError(f"stratum count must be in 2..{distinct} for this data, got {l}")


def _finish(labels: np.ndarray, breaks: Sequence[float], method: str) -> StratumAssignment:
    result = StratumAssignment.from_labels(labels.tolist(), breaks=breaks, method=method)
    if result.compacted:
        logger.warning("%s stratification left empty strata; compacted to %d strata", method, result.l)
    small = [label for label, count in enumerate(result.counts(), start=1) if count < MIN_STRATUM_SIZE]
    if small:
        logger.warning(
            "%s stratification has %d stratum(s) below %d observations: %s",
            method,
            len(small),
            MIN_STRATUM_SIZE,
            small,
        )
    return result


def within_ss(values: Sequence[float] | np.ndarray, strata: StratumAssignment) -> float:
    """Total within-stratum sum of squared deviations of *values* themselves.

    This is the quantity natural breaks minimizes; it lets the strategies be
    compared on the same data.
    """
    arr = np.asarray(values, dtype=np.float64)
    labels = strata.as_array()
    counts = np.bincount(labels, minlength=strata.l + 1)[1:]
    sums = np.bincount(labels, weights=arr, minlength=strata.l + 1)[1:]
    means = sums / counts
    return float(np.sum((arr - means[labels - 1]) ** 2))


# ---------------------------------------------------------------------------
# Strategies
# ---------------------------------------------------------------------------


def stratify_equal_interval(values: Sequence[float] | np.ndarray, l: int) -> StratumAssignment:  # noqa: E741
    """Split [min, max] into *l* equal-width bins.

    Bins are right-open except the last, which is closed, so the maximum
    falls in stratum *l*.

    Raises:
        DegenerateRangeError: All values are equal.
        BadStrataCountError: ``l < 2`` or ``l`` exceeds the distinct-value count.
    """
    arr = _as_values(values)
    _check_l(arr, l)
    breaks = np.linspace(arr.min(), arr.max(), l + 1)[1:-1]
    labels = np.searchsorted(breaks, arr, side="right") + 1
    return _finish(labels, breaks.tolist(), "equal")


def stratify_quantile(values: Sequence[float] | np.ndarray, l: int) -> StratumAssignment:  # noqa: E741
    """Split at the k/l empirical quantiles (linear interpolation), k = 1..l-1.

    A value equal to a break goes to the lower stratum.  Duplicate breaks
    (heavy ties) collapse strata, which are then compacted.

    Raises:
        DegenerateRangeError: All values are equal.
        BadStrataCountError: ``l < 2`` or ``l`` exceeds the distinct-value count.
    """
    arr = _as_values(values)
    _check_l(arr, l)
    raw = np.quantile(arr, np.arange(1, l) / l)
    breaks = np.unique(raw)
    if breaks.size < raw.size:
        logger.warning("quantile breaks collapsed from %d to %d by ties", raw.size, breaks.size)
    labels = np.searchsorted(breaks, arr, side="left") + 1
    return _finish(labels, breaks.tolist(), "quantile")


class _PrefixSums:
    """Prefix sums over weighted distinct values for O(1) segment costs."""

    __slots__ = ("w", "s", "s2")

    def __init__(self, values: np.ndarray, weights: np.ndarray) -> None:
        self.w = np.concatenate(([0.0], np.cumsum(weights, dtype=np.float64)))
        self.s = np.concatenate(([0.0], np.cumsum(weights * values)))
        self.s2 = np.concatenate(([0.0], np.cumsum(weights * values * values)))

    def cost(self, start: int, ends: np.ndarray) -> np.ndarray:
        """Weighted sum of squares of segments ``[start, end)`` for each end."""
        w = self.w[ends] - self.w[start]
        s = self.s[ends] - self.s[start]
        s2 = self.s2[ends] - self.s2[start]
        return np.maximum(s2 - s * s / w, 0.0)


def stratify_natural_breaks(values: Sequence[float] | np.ndarray, l: int) -> StratumAssignment:  # noqa: E741
    """Exact optimal 1-D partition into *l* contiguous strata (Fisher / Jenks).

    Minimizes the total within-stratum sum of squared deviations.  The
    search runs over distinct values (weighted by multiplicity), so ties are
    never split.  Among equally good partitions the one whose first break is
    smallest wins, then the second, and so on.

    Raises:
        DegenerateRangeError: All values are equal.
        BadStrataCountError: ``l < 2`` or ``l`` exceeds the distinct-value count.
    """
    arr = _as_values(values)
    _check_l(arr, l)
    distinct, weights = np.unique(arr, return_counts=True)
    m = distinct.size
    sums = _PrefixSums(distinct - arr.mean(), weights)

    # suffix[k, i]: best cost of splitting distinct[i:] into k strata.
    suffix = np.full((l + 1, m + 1), np.inf)
    suffix[1, :m] = [sums.cost(i, np.array([m]))[0] for i in range(m)]
    for k in range(2, l + 1):
        for i in range(m - k + 1):
            ends = np.arange(i + 1, m - k + 2)
            suffix[k, i] = np.min(sums.cost(i, ends) + suffix[k - 1, ends])

    # Walk forward taking the earliest break that stays optimal.
    tol = 1e-12 * max(1.0, float(sums.s2[-1]))
    starts: list[int] = []
    start = 0
    for k in range(l, 1, -1):
        ends = np.arange(start + 1, m - k + 2)
        totals = sums.cost(start, ends) + suffix[k - 1, ends]
        start = int(ends[np.flatnonzero(totals <= totals.min() + tol)[0]])
        starts.append(start)

    breaks = distinct[starts]
    labels = np.searchsorted(breaks, arr, side="right") + 1
    return _finish(labels, breaks.tolist(), "jenks")


def stratify_manual(values: Sequence[float] | np.ndarray, breaks: Sequence[float]) -> StratumAssignment:
    """Assign values to (-inf, b1), [b1, b2), ..., [bk, inf).

    A value equal to a break goes to the upper stratum.  Empty strata are
    compacted.

    Raises:
        UnsortedBreaksError: *breaks* are not strictly ascending.
    """
    arr = _as_values(values)
    edges = np.asarray(breaks, dtype=np.float64)
    if edges.size and (not np.all(np.isfinite(edges)) or np.any(np.diff(edges) <= 0)):
        raise UnsortedBreaksError(f"breaks must be finite and strictly ascending, got {list(breaks)}")
    labels = np.searchsorted(edges, arr, side="right") + 1
    return _finish(labels, edges.tolist(), "manual")


# ---------------------------------------------------------------------------
# Strategy strings
# ---------------------------------------------------------------------------

_METHOD_ALIASES = {"quantile": "quantile", "equal": "equal", "jenks": "jenks", "natural": "jenks", "manual": "manual"}


@dataclass(frozen=True, slots=True)
class Strategy:
    """A parsed stratification strategy such as ``quantile:6``."""

    method: str
    l: int = 0  # noqa: E741
    breaks: tuple[float, ...] = ()

    def apply(self, values: Sequence[float] | np.ndarray) -> StratumAssignment:
        if self.method == "quantile":
            return stratify_quantile(values, self.l)
        if self.method == "equal":
            return stratify_equal_interval(values, self.l)
        if self.method == "jenks":
            return stratify_natural_breaks(values, self.l)
        return stratify_manual(values, self.breaks)

    def __str__(self) -> str:
        if self.method == "manual":
            return "manual:" + ",".join(f"{b:g}" for b in self.breaks)
        return f"{self.method}:{self.l}"


def parse_strategy(text: str) -> Strategy:
    """Parse ``"<method>:<arg>"`` into a :class:`Strategy`.

    Raises:
        ConfigError: Unknown method or malformed argument.
    """
    method, sep, arg = text.strip().partition(":")
    method = _METHOD_ALIASES.get(method.strip().lower(), "")
    if not sep or not method:
        raise ConfigError(f"bad strata strategy {text!r}; expected quantile:L, equal:L, jenks:L or manual:b1,b2,...")
    if method == "manual":
        try:
            breaks = tuple(float(b) for b in arg.split(",") if b.strip())
        except ValueError:
            raise ConfigError(f"bad manual breaks in {text!r}") from None
        if not breaks:
            raise ConfigError(f"manual strategy needs at least one break: {text!r}")
        if any(later <= earlier for earlier, later in zip(breaks, breaks[1:])):
            raise ConfigError(f"manual breaks must be strictly ascending: {text!r}")
        return Strategy("manual", breaks=breaks)
    try:
        count = int(arg)
    except ValueError:
        raise ConfigError(f"bad stratum count in {text!r}") from None
    if count < 2:
        raise ConfigError(f"stratum count must be >= 2: {text!r}")
    return Strategy(method, l=count)
