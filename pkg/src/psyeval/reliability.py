"""Reliability coefficients, inter-rater agreement and the standard error of measurement."""

from __future__ import annotations

from collections import Counter
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .data import ScoredTest
from .errors import AlignmentError, DataError, DegenerateInputError, InsufficientDataError
from .stats import PEARSON, correlate

TEST_RETEST = "test_retest"
SPLIT_HALF = "split_half"
CRONBACH_ALPHA = "cronbach_alpha"
COHEN_KAPPA = "cohen_kappa"
FLEISS_KAPPA = "fleiss_kappa"
KRIPPENDORFF_ALPHA = "krippendorff_alpha"

CONVENTIONAL = "conventional"
PAPER_LITERAL = "paper_literal"
Z_95 = 1.96


@dataclass(frozen=True)
class ReliabilityReport:
    """A reliability coefficient with its raw (unfloored) value and extras."""

    kind: str
    value: float
    n: int
    raw_value: float | None = None
    auxiliary: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.raw_value is None:
            object.__setattr__(self, "raw_value", self.value)


def _aligned_totals(t1: ScoredTest, t2: ScoredTest):
    ids1, ids2 = set(t1.participants), set(t2.participants)
    if ids1 != ids2:
        only1 = sorted(ids1 - ids2)
        only2 = sorted(ids2 - ids1)
        parts = []
        if only1:
            parts.append(f"only in first: {', '.join(map(str, only1[:10]))}")
        if only2:
            parts.append(f"only in second: {', '.join(map(str, only2[:10]))}")
        raise AlignmentError("participant sets differ; " + "; ".join(parts))
    position = {pid: i for i, pid in enumerate(t2.participants)}
    order = [position[pid] for pid in t1.participants]
    return t1.totals, t2.totals[order]


def test_retest(t1: ScoredTest, t2: ScoredTest, method: str = PEARSON) -> ReliabilityReport:
    """Correlation of paired totals from two administrations, matched by participant ID.

    Also serves parallel-forms reliability when the two tests are distinct
    forms. Negative correlations are reported as 0; the raw value is kept.
    """
    x, y = _aligned_totals(t1, t2)
    r = correlate(x, y, method)
    return ReliabilityReport(TEST_RETEST, max(r, 0.0), n=len(x), raw_value=r, auxiliary={"method": method})


test_retest.__test__ = False  # not a pytest test despite the name


def spearman_brown(r_half: float) -> float:
    """Full-length reliability from the correlation between two halves."""
    if r_half <= -1:
        raise DegenerateInputError("Spearman-Brown is undefined at r_half = -1")
    # exact rational arithmetic on the binary input, so the result is correctly rounded
    r = Fraction(float(r_half))
    return float(2 * r / (1 + r))


def split_half(scored: ScoredTest, split: str = "odd_even", method: str = PEARSON) -> ReliabilityReport:
    """Odd/even split of the items, stepped up with Spearman-Brown.

    The first half holds items 1, 3, 5, ... (1-based position).
    """
    if split != "odd_even":
        raise ValueError(f"unsupported split {split!r}")
    if scored.n_items < 2:
        raise DataError("split-half needs at least 2 items")
    odd = scored.values[:, 0::2].sum(axis=1)
    even = scored.values[:, 1::2].sum(axis=1)
    if np.ptp(odd) == 0 or np.ptp(even) == 0:
        raise DegenerateInputError("a half-test score is constant")
    r_half = correlate(odd, even, method)
    return ReliabilityReport(
        SPLIT_HALF,
        spearman_brown(r_half),
        n=scored.n_participants,
        auxiliary={
            "r_half": r_half,
            "odd_items": list(scored.items[0::2]),
            "even_items": list(scored.items[1::2]),
        },
    )


def _alpha(values: np.ndarray) -> float:
    k = values.shape[1]
    total_var = np.var(values.sum(axis=1), ddof=1)
    if total_var == 0:
        raise DegenerateInputError("total score variance is zero")
    item_var = np.var(values, axis=0, ddof=1).sum()
    return k / (k - 1) * (1.0 - item_var / total_var)


def alpha_from_covariance(cov) -> float:
    """Cronbach's alpha from an item covariance matrix."""
    cov = np.asarray(cov, dtype=float)
    k = cov.shape[0]
    total = cov.sum()
    if total == 0:
        raise DegenerateInputError("total score variance is zero")
    return k / (k - 1) * (1.0 - np.trace(cov) / total)


def cronbach_alpha(scored: ScoredTest) -> ReliabilityReport:
    """Cronbach's alpha with alpha-if-item-deleted for each item.

    Alpha-if-deleted needs at least two remaining items and is None otherwise.
    """
    values = scored.values
    n, k = values.shape
    if k < 2:
        raise DataError("Cronbach's alpha needs at least 2 items")
    if n < 3:
        raise DataError("Cronbach's alpha needs at least 3 participants")
    alpha = _alpha(values)
    if_deleted = {}
    for j, item in enumerate(scored.items):
        if k - 1 < 2:
            if_deleted[item] = None
            continue
        try:
            if_deleted[item] = _alpha(np.delete(values, j, axis=1))
        except DegenerateInputError:
            if_deleted[item] = None
    return ReliabilityReport(CRONBACH_ALPHA, alpha, n=n, auxiliary={"alpha_if_deleted": if_deleted})


def cohen_kappa(r1, r2) -> float:
    """Cohen's kappa for two raters over the same subjects."""
    r1, r2 = list(r1), list(r2)
    if len(r1) != len(r2):
        raise DataError("rating vectors differ in length")
    n = len(r1)
    if n == 0:
        raise InsufficientDataError("no ratings")
    observed = sum(a == b for a, b in zip(r1, r2)) / n
    c1, c2 = Counter(r1), Counter(r2)
    expected = sum(c1[c] * c2[c] for c in set(c1) | set(c2)) / (n * n)
    if expected >= 1.0:
        raise DegenerateInputError("both raters used one identical category; kappa undefined")
    return (observed - expected) / (1.0 - expected)


def fleiss_kappa_from_counts(counts) -> float:
    """Fleiss' kappa from a subjects x categories table of rating counts."""
    counts = np.asarray(counts, dtype=float)
    per_subject = counts.sum(axis=1)
    if counts.shape[0] == 0:
        raise InsufficientDataError("no subjects")
    m = per_subject[0]
    if not np.all(per_subject == m):
        raise DataError("every subject must be rated by the same number of raters")
    if m < 2:
        raise DataError("Fleiss' kappa needs at least 2 raters per subject")
    p_subject = (np.sum(counts**2, axis=1) - m) / (m * (m - 1))
    p_bar = p_subject.mean()
    p_cat = counts.sum(axis=0) / counts.sum()
    p_e = float(np.sum(p_cat**2))
    if p_e >= 1.0:
        raise DegenerateInputError("only one category used; Fleiss' kappa undefined")
    return float((p_bar - p_e) / (1.0 - p_e))


def fleiss_kappa(ratings) -> float:
    """Fleiss' kappa for a subjects x raters matrix of category labels."""
    ratings = np.asarray(ratings, dtype=object)
    if ratings.ndim != 2 or ratings.shape[1] < 2:
        raise DataError("ratings must be subjects x raters with at least 2 raters")
    categories = sorted(set(ratings.ravel().tolist()), key=str)
    index = {c: j for j, c in enumerate(categories)}
    counts = np.zeros((ratings.shape[0], len(categories)))
    for i, row in enumerate(ratings):
        for value in row:
            counts[i, index[value]] += 1
    return fleiss_kappa_from_counts(counts)


def _is_missing(v) -> bool:
    return v is None or (isinstance(v, float) and np.isnan(v))


def coincidence_matrix(ratings):
    """Krippendorff coincidence matrix for a units x coders table.

    Missing ratings are None or NaN. Units with fewer than two ratings are
    not pairable and are skipped. Returns ``(values, matrix)``.
    """
    units = [[v for v in row if not _is_missing(v)] for row in ratings]
    units = [u for u in units if len(u) >= 2]
    values = sorted({v for u in units for v in u})
    index = {v: i for i, v in enumerate(values)}
    o = np.zeros((len(values), len(values)))
    for u in units:
        m = len(u)
        for a in range(m):
            for b in range(m):
                if a != b:
                    o[index[u[a]], index[u[b]]] += 1.0 / (m - 1)
    return values, o


def krippendorff_alpha(ratings, level: str = "nominal") -> float:
    """Krippendorff's alpha, ``1 - D_o / D_e``, for nominal or interval data.

    ``ratings`` is units x coders (one row per rated unit) and may contain
    None/NaN for missing ratings.
    """
    if level not in ("nominal", "interval"):
        raise ValueError(f"unsupported level {level!r}")
    values, o = coincidence_matrix(ratings)
    n_c = o.sum(axis=1)
    n = n_c.sum()
    if n < 2:
        raise InsufficientDataError("fewer than 2 pairable ratings")
    if level == "nominal":
        delta = 1.0 - np.eye(len(values))
    else:
        v = np.asarray(values, dtype=float)
        delta = (v[:, None] - v[None, :]) ** 2
    d_o = np.sum(o * delta) / n
    d_e = np.sum(np.outer(n_c, n_c) * delta) / (n * (n - 1))
    if d_e == 0:
        raise DegenerateInputError("all pairable ratings share one value; alpha undefined")
    return float(1.0 - d_o / d_e)


@dataclass(frozen=True)
class StandardError:
    sem: float
    ci_half_width: float
    form: str
    reliability: float

    def interval(self, observed):
        return observed - self.ci_half_width, observed + self.ci_half_width


def sem(scored, reliability: float, form: str = CONVENTIONAL) -> StandardError:
    """Standard error of measurement and the 95% interval half-width.

    ``conventional`` is ``sd * sqrt(1 - r)``; ``paper_literal`` is
    ``variance * (1 - r)``. ``scored`` is a ScoredTest or a vector of totals.
    """
    if not 0.0 <= reliability <= 1.0:
        raise ValueError(f"reliability must lie in [0, 1], got {reliability}")
    totals = scored.totals if isinstance(scored, ScoredTest) else np.asarray(scored, dtype=float)
    var = float(np.var(totals, ddof=1))
    if form == CONVENTIONAL:
        value = float(np.sqrt(var) * np.sqrt(1.0 - reliability))
    elif form == PAPER_LITERAL:
        value = var * (1.0 - reliability)
    else:
        raise ValueError(f"unknown SEM form {form!r}")
    return StandardError(value, Z_95 * value, form, reliability)
