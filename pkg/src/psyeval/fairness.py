"""Item-bias screening: group facilities, Mantel-Haenszel and logistic-regression DIF."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .data import ScoredTest
from .errors import DataError, InsufficientDataError, SeparationError
from .stats import logistic_fit

MH = "mh"
LOGISTIC_UNIFORM = "logistic_uniform"
LOGISTIC_NONUNIFORM = "logistic_nonuniform"

DTF_THRESHOLD = 0.25


@dataclass(frozen=True)
class DifResult:
    item: str
    method: str
    statistic: float
    p_value: float
    effect: float
    flagged: bool
    details: dict | None = None


def _group_codes(groups, n):
    groups = np.asarray(groups)
    if groups.shape != (n,):
        raise DataError(f"expected {n} group labels, got {groups.size}")
    # order of first appearance, so the first group seen is the default reference
    levels = list(dict.fromkeys(groups.tolist()))
    return groups, levels


def facility_by_group(scored: ScoredTest, groups) -> dict:
    """Item means per group and the largest pairwise difference per item."""
    groups, levels = _group_codes(groups, scored.n_participants)
    if len(levels) < 2:
        raise DataError("at least two groups are required")
    facilities = {}
    for level in levels:
        mask = groups == level
        if not mask.any():
            raise DataError(f"group {level!r} is empty")
        facilities[level] = scored.values[mask].mean(axis=0)
    out = {}
    for j, item in enumerate(scored.items):
        per_group = {str(level): float(facilities[level][j]) for level in levels}
        diff = max(
            abs(facilities[a][j] - facilities[b][j]) for a, b in itertools.combinations(levels, 2)
        )
        out[item] = {"facility": per_group, "max_difference": float(diff)}
    return out


def _binary_groups(groups, n, reference=None):
    groups, levels = _group_codes(groups, n)
    if len(levels) != 2:
        raise DataError(f"DIF needs exactly 2 groups, found {len(levels)}")
    ref = levels[0] if reference is None else reference
    if ref not in levels:
        raise DataError(f"reference group {ref!r} not present")
    return (groups != ref).astype(int)


def _dichotomous(scored: ScoredTest, item: str) -> np.ndarray:
    col = scored.column(item)
    if not np.isin(col, (0.0, 1.0)).all():
        raise DataError(f"item {item!r} is not dichotomous (0/1); dichotomize it explicitly")
    return col


def strata(matching, n_strata: int = 5) -> np.ndarray:
    """Quantile bands of the matching score; tied edges merge bands.

    Bands are closed above, so a score equal to a cut point stays in the lower band.
    """
    matching = np.asarray(matching, dtype=float)
    edges = np.unique(np.quantile(matching, np.linspace(0, 1, n_strata + 1)[1:-1]))
    return np.searchsorted(edges, matching, side="left")


def mantel_haenszel(tables):
    """Mantel-Haenszel common odds ratio and continuity-corrected chi-square.

    ``tables`` is a sequence of 2x2 tables ``[[A, B], [C, D]]`` with rows
    (reference, focal) and columns (correct, incorrect). Tables with an
    empty row or column margin carry no information and are dropped.

    Returns ``(odds_ratio, chi_square, p_value, n_used, n_dropped)``.
    """
    num = den = sum_a = sum_ea = sum_var = 0.0
    used = dropped = 0
    for table in tables:
        (a, b), (c, d) = np.asarray(table, dtype=float)
        t = a + b + c + d
        n_ref, n_foc = a + b, c + d
        m1, m0 = a + c, b + d
        if t < 2 or min(n_ref, n_foc, m1, m0) == 0:
            dropped += 1
            continue
        used += 1
        num += a * d / t
        den += b * c / t
        sum_a += a
        sum_ea += n_ref * m1 / t
        sum_var += n_ref * n_foc * m1 * m0 / (t * t * (t - 1))
    if used == 0 or sum_var == 0:
        raise InsufficientDataError("every stratum is degenerate; MH statistic undefined")
    if den == 0 or num == 0:
        odds = np.inf if den == 0 else 0.0
    else:
        odds = num / den
    stat = max(abs(sum_a - sum_ea) - 0.5, 0.0) ** 2 / sum_var
    return odds, stat, float(chi2.sf(stat, 1)), used, dropped


def mantel_haenszel_dif(
    scored: ScoredTest, groups, item: str, n_strata: int = 5, alpha: float = 0.05, reference=None
) -> DifResult:
    """Mantel-Haenszel DIF for a dichotomous item.

    Participants are matched on their rest score (total minus the studied
    item) cut into ``n_strata`` quantile bands. The odds ratio is reference
    over focal: values above 1 favour the reference group.
    """
    y = _dichotomous(scored, item)
    g = _binary_groups(groups, scored.n_participants, reference)
    band = strata(scored.rest_score(item), n_strata)
    tables = []
    for s in np.unique(band):
        mask = band == s
        ref, foc = mask & (g == 0), mask & (g == 1)
        tables.append(
            [[y[ref].sum(), (1 - y[ref]).sum()], [y[foc].sum(), (1 - y[foc]).sum()]]
        )
    odds, stat, p, used, dropped = mantel_haenszel(tables)
    return DifResult(
        item, MH, stat, p, odds, p < alpha,
        details={"strata_used": used, "strata_dropped": dropped},
    )


def _lr_test(full, reduced):
    stat = max(2.0 * (full.log_likelihood - reduced.log_likelihood), 0.0)
    return stat, float(chi2.sf(stat, 1))


def logistic_dif(scored: ScoredTest, groups, item: str, alpha: float = 0.05, reference=None):
    """Uniform and non-uniform DIF by nested logistic regressions.

    Models: item ~ total, + group, + group x total. Uniform DIF compares the
    second against the first, non-uniform the third against the second,
    each by a 1-df likelihood-ratio chi-square.
    """
    y = _dichotomous(scored, item)
    g = _binary_groups(groups, scored.n_participants, reference).astype(float)
    total = scored.totals
    total = (total - total.mean()) / (total.std() or 1.0)
    ones = np.ones_like(total)
    designs = [
        np.column_stack([ones, total]),
        np.column_stack([ones, total, g]),
        np.column_stack([ones, total, g, g * total]),
    ]
    try:
        fits = [logistic_fit(x, y) for x in designs]
    except SeparationError as exc:
        raise SeparationError(f"item {item!r}: {exc}") from None
    u_stat, u_p = _lr_test(fits[1], fits[0])
    n_stat, n_p = _lr_test(fits[2], fits[1])
    return (
        DifResult(item, LOGISTIC_UNIFORM, u_stat, u_p, float(fits[1].coef[2]), u_p < alpha),
        DifResult(item, LOGISTIC_NONUNIFORM, n_stat, n_p, float(fits[2].coef[3]), n_p < alpha),
    )


@dataclass(frozen=True)
class DtfSummary:
    per_method: dict
    warning: bool
    threshold: float


def dtf_summary(results, alpha: float | None = None, threshold: float = DTF_THRESHOLD) -> DtfSummary:
    """Count flagged items per method and warn when the flagged share exceeds ``threshold``.

    With ``alpha`` given, flags are recomputed as ``p < alpha``.
    """
    per_method = {}
    for res in results:
        flagged = res.p_value < alpha if alpha is not None else res.flagged
        entry = per_method.setdefault(res.method, {"n_items": 0, "n_flagged": 0, "flagged_items": []})
        entry["n_items"] += 1
        if flagged:
            entry["n_flagged"] += 1
            entry["flagged_items"].append(res.item)
    for entry in per_method.values():
        entry["proportion_flagged"] = entry["n_flagged"] / entry["n_items"]
    warning = any(e["proportion_flagged"] > threshold for e in per_method.values())
    return DtfSummary(per_method=per_method, warning=warning, threshold=threshold)
