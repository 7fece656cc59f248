"""Geographical-detector core: factor q-statistic, significance and interactions.

The factor detector measures how much of an outcome's variance a
stratification explains::

    q = 1 - SSW / SST

where SST is the total sum of squared deviations of the outcome and SSW the
sum, over strata, of squared deviations from each stratum's mean.  Both are
raw sums of squares (population-variance convention), so ``q`` is exactly
the between-strata share of the variance and always lies in [0, 1].

Example::

    >>> from geodet.common import StratumAssignment
    >>> from geodet.detector import q_statistic
    >>> round(q_statistic([1, 2, 3, 4, 5, 6], StratumAssignment((1, 1, 1, 2, 2, 2), 2)).q, 5)
    0.77143

The interaction detector overlays two stratifications, computes q for the
resulting common refinement and classifies the pair by comparing q12 with
q1, q2 and q1 + q2.  Because an overlay refines both inputs, q12 is never
below max(q1, q2) when all three come from the same sample; the weakening
categories are reachable only for q triples supplied from elsewhere.  q12
equal to max(q1, q2) within tolerance (identical or nested stratifications)
is bivariate-enhance.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy import stats

from geodet.common import (
    BadDegreesOfFreedomError,
    BadPermCountError,
    InteractionCategory,
    InteractionResult,
    LengthMismatchError,
    OutOfRangeError,
    QResult,
    StratumAssignment,
    StratumStats,
    ZeroVarianceError,
    validate_sample,
)

logger = logging.getLogger(__name__)

#: Absolute tolerance for every q12 comparison (against q1 + q2, max and min).
INDEPENDENCE_TOL = 1e-9

#: Permutations drawn per generator; each block is seeded from (seed, block index).
PERMUTATION_BLOCK = 256

#: Slack when comparing permuted q against observed q, absorbing rounding noise.
_Q_TIE_TOL = 1e-12

#: Smallest p-value the analytic tests report; p is kept in (0, 1].
SMALLEST_P = float(np.nextafter(0.0, 1.0))

SIGNIFICANCE_METHODS = ("permutation", "noncentral-f", "f")


# ---------------------------------------------------------------------------
# Factor detector
# ---------------------------------------------------------------------------


def q_statistic(y: Sequence[float] | np.ndarray, strata: StratumAssignment | Sequence[int]) -> QResult:
    """Compute the q-statistic of *strata* for outcome *y* (no p-value).

    Raises:
        LengthMismatchError, EmptyInputError, MissingOutcomeError: Bad input pair.
        ZeroVarianceError: All outcome values are equal, so q is undefined.
    """
    arr, assignment = validate_sample(y, strata)
    if arr.size < 2 or np.ptp(arr) == 0.0:
        raise ZeroVarianceError(f"outcome has no variance over {arr.size} observation(s)")

    labels = assignment.as_array() - 1
    l = assignment.l  # noqa: E741
    centred = arr - arr.mean()
    sst = float(np.dot(centred, centred))

    counts = np.bincount(labels, minlength=l)
    means = np.bincount(labels, weights=arr, minlength=l) / counts
    resid = arr - means[labels]
    ss_h = np.bincount(labels, weights=resid * resid, minlength=l)
    ssw = float(ss_h.sum())

    q = min(1.0, max(0.0, 1.0 - ssw / sst))
    strata_stats = tuple(
        StratumStats(label=h + 1, count=int(counts[h]), mean=float(means[h]), variance=float(ss_h[h] / counts[h]))
        for h in range(l)
    )
    return QResult(q=q, ssw=ssw, sst=sst, n=int(arr.size), l=l, strata=strata_stats)


def _block_q(centred: np.ndarray, counts: np.ndarray, sst: float, perms: np.ndarray) -> np.ndarray:
    """q for each row of *perms* (a matrix of zero-based label vectors)."""
    rows = perms.shape[0]
    l = counts.size  # noqa: E741
    index = perms + (np.arange(rows)[:, None] * l)
    sums = np.bincount(index.ravel(), weights=np.tile(centred, rows), minlength=rows * l).reshape(rows, l)
    return np.sum(sums * sums / counts, axis=1) / sst


def permutation_p(
    y: Sequence[float] | np.ndarray,
    strata: StratumAssignment | Sequence[int],
    n_perm: int = 999,
    seed: int = 0,
    *,
    jobs: int = 1,
) -> float:
    """Permutation p-value for the q-statistic.

    Shuffles the stratum labels *n_perm* times and returns
    ``(1 + #{q_perm >= q_obs}) / (1 + n_perm)``.

    Permutations are drawn in blocks of :data:`PERMUTATION_BLOCK`, each from
    a generator seeded with ``(seed, block index)``, so the result depends
    only on the inputs, *seed* and *n_perm*; ``jobs > 1`` evaluates blocks
    on a thread pool and returns the same value.

    Raises:
        BadPermCountError: ``n_perm < 1``.
        ZeroVarianceError: Propagated from :func:`q_statistic`.
    """
    if n_perm < 1:
        raise BadPermCountError(f"n_perm must be >= 1, got {n_perm}")
    observed = q_statistic(y, strata)
    arr, assignment = validate_sample(y, strata)
    labels = assignment.as_array() - 1
    counts = np.bincount(labels, minlength=assignment.l).astype(np.float64)
    centred = arr - arr.mean()
    sst = observed.sst
    q_obs = float(_block_q(centred, counts, sst, labels[None, :])[0])

    def count_block(block: int) -> int:
        size = min(PERMUTATION_BLOCK, n_perm - block * PERMUTATION_BLOCK)
        rng = np.random.default_rng([seed, block])
        perms = rng.permuted(np.tile(labels, (size, 1)), axis=1)
        q_perm = _block_q(centred, counts, sst, perms)
        return int(np.count_nonzero(q_perm >= q_obs - _Q_TIE_TOL))

    blocks = range(math.ceil(n_perm / PERMUTATION_BLOCK))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            exceed = sum(pool.map(count_block, blocks))
    else:
        exceed = sum(count_block(b) for b in blocks)
    return (1 + exceed) / (1 + n_perm)


def _check_df(qr: QResult) -> tuple[int, int]:
    if qr.l < 2 or qr.n <= qr.l:
        raise BadDegreesOfFreedomError(f"need n > l >= 2 for an F test, got n={qr.n}, l={qr.l}")
    return qr.l - 1, qr.n - qr.l


def _f_value(qr: QResult, dfn: int, dfd: int) -> float:
    if qr.q >= 1.0:
        return math.inf
    return (dfd / dfn) * (qr.q / (1.0 - qr.q))


def noncentrality(qr: QResult) -> float:
    """Noncentrality parameter of the transformed q under the noncentral F.

    ``(sum_h N_h * mean_h**2 - (sum_h sqrt(N_h) * mean_h)**2 / n) / variance``
    with the population variance of the outcome.
    """
    variance = qr.sst / qr.n
    weighted = sum(s.count * s.mean * s.mean for s in qr.strata)
    root_weighted = sum(math.sqrt(s.count) * s.mean for s in qr.strata)
    return max(0.0, (weighted - root_weighted * root_weighted / qr.n) / variance)


def noncentral_f_p(qr: QResult) -> float:
    """p-value of q from the noncentral F distribution.

    ``F = ((n - l) / (l - 1)) * q / (1 - q)`` is referred to the noncentral
    F with ``(l - 1, n - l)`` degrees of freedom and the noncentrality from
    :func:`noncentrality`; the survival function is returned.
    A perfect stratification (q = 1) or an underflowing tail gives
    :data:`SMALLEST_P`, never 0.

    Raises:
        BadDegreesOfFreedomError: ``l < 2`` or ``n <= l``.
    """
    dfn, dfd = _check_df(qr)
    f_value = _f_value(qr, dfn, dfd)
    if math.isinf(f_value):
        return SMALLEST_P
    nc = noncentrality(qr)
    if nc == 0.0:
        return max(SMALLEST_P, float(stats.f.sf(f_value, dfn, dfd)))
    return max(SMALLEST_P, float(stats.ncf.sf(f_value, dfn, dfd, nc)))


def f_test_p(qr: QResult) -> float:
    """p-value of q from the central F distribution (one-way ANOVA F test).

    Floored at :data:`SMALLEST_P` like :func:`noncentral_f_p`.

    Raises:
        BadDegreesOfFreedomError: ``l < 2`` or ``n <= l``.
    """
    dfn, dfd = _check_df(qr)
    f_value = _f_value(qr, dfn, dfd)
    if math.isinf(f_value):
        return SMALLEST_P
    return max(SMALLEST_P, float(stats.f.sf(f_value, dfn, dfd)))


def factor_detector(
    y: Sequence[float] | np.ndarray,
    strata: StratumAssignment | Sequence[int],
    *,
    significance: str = "permutation",
    n_perm: int = 999,
    seed: int = 0,
    jobs: int = 1,
) -> QResult:
    """q-statistic with a p-value attached by the chosen *significance* method."""
    qr = q_statistic(y, strata)
    if significance == "permutation":
        return qr.with_p(permutation_p(y, strata, n_perm, seed, jobs=jobs), "permutation")
    if significance == "noncentral-f":
        return qr.with_p(noncentral_f_p(qr), "noncentral-f")
    if significance == "f":
        return qr.with_p(f_test_p(qr), "f")
    raise ValueError(f"unknown significance method {significance!r}; expected one of {SIGNIFICANCE_METHODS}")


# ---------------------------------------------------------------------------
# Interaction detector
# ---------------------------------------------------------------------------


def overlay(strata_a: StratumAssignment, strata_b: StratumAssignment) -> StratumAssignment:
    """Intersect two stratifications.

    Each distinct (a, b) label pair becomes one stratum, numbered 1..L12 in
    order of first appearance.

    Raises:
        LengthMismatchError: The stratifications cover different numbers of observations.
    """
    if len(strata_a) != len(strata_b):
        raise LengthMismatchError(f"cannot overlay {len(strata_a)} labels with {len(strata_b)} labels")
    numbering: dict[tuple[int, int], int] = {}
    labels = [numbering.setdefault(pair, len(numbering) + 1) for pair in zip(strata_a.labels, strata_b.labels)]
    return StratumAssignment(tuple(labels), max(1, len(numbering)), method="overlay")


def classify_interaction(q1: float, q2: float, q12: float, *, tol: float = INDEPENDENCE_TOL) -> InteractionCategory:
    """Classify a factor pair from its individual and overlay q values.

    - ``independent``: q12 == q1 + q2 (within *tol*)
    - ``nonlinear-enhance``: q12 > q1 + q2
    - ``bivariate-enhance``: max(q1, q2) <= q12 < q1 + q2
    - ``uni-weaken``: min(q1, q2) <= q12 < max(q1, q2)
    - ``nonlinear-weaken``: q12 < min(q1, q2)

    Every comparison allows *tol*, so q12 equal to max(q1, q2) up to
    rounding is always bivariate-enhance, including q1 == q2.

    Raises:
        OutOfRangeError: Any argument outside [0, 1].
    """
    for name, value in (("q1", q1), ("q2", q2), ("q12", q12)):
        if not 0.0 <= value <= 1.0:
            raise OutOfRangeError(f"{name} must be in [0, 1], got {value!r}")
    total = q1 + q2
    if abs(q12 - total) <= tol:
        return InteractionCategory.INDEPENDENT
    if q12 > total:
        return InteractionCategory.NONLINEAR_ENHANCE
    if q12 >= max(q1, q2) - tol:
        return InteractionCategory.BIVARIATE_ENHANCE
    if q12 < min(q1, q2) - tol:
        return InteractionCategory.NONLINEAR_WEAKEN
    return InteractionCategory.UNI_WEAKEN


def describe_interaction(q1: float, q2: float, q12: float) -> tuple[str, str]:
    """Directional reading of an interaction: (effect of X2 on X1, effect of X1 on X2).

    Each entry is ``"enhances"`` when q12 exceeds that factor's own q,
    ``"weakens"`` when it falls below, otherwise ``"neutral"``.
    """

    def effect(own: float) -> str:
        if q12 > own + INDEPENDENCE_TOL:
            return "enhances"
        if q12 < own - INDEPENDENCE_TOL:
            return "weakens"
        return "neutral"

    return effect(q1), effect(q2)


def interaction(
    y: Sequence[float] | np.ndarray,
    strata_a: StratumAssignment,
    strata_b: StratumAssignment,
) -> InteractionResult:
    """Interaction detector for one pair of stratifications of the same sample.

    The overlay refines both inputs, so q12 is reported as at least
    max(q1, q2); only rounding noise is removed.
    """
    q1 = q_statistic(y, strata_a).q
    q2 = q_statistic(y, strata_b).q
    combined = overlay(strata_a, strata_b)
    overlay_q = q_statistic(y, combined)
    singletons = overlay_q.singletons
    if singletons:
        logger.debug("overlay has %d singleton strata out of %d", singletons, combined.l)
    q12 = max(overlay_q.q, q1, q2)
    return InteractionResult(
        q1=q1,
        q2=q2,
        q12=q12,
        category=classify_interaction(q1, q2, q12),
        overlay_l=combined.l,
        singleton_strata=singletons,
    )
