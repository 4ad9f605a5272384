"""Item facility, item variance and item-total discrimination."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import KNOWLEDGE, ScoredTest
from .errors import DegenerateInputError, EmptyDatasetError
from .stats import pearson

LOW_VARIANCE = "low_variance"
NONPOSITIVE_DISCRIMINATION = "nonpositive_discrimination"

# Advisory thresholds; both are overridable from the config file.
KNOWLEDGE_LOW_VARIANCE = 0.05
LIKERT_LOW_VARIANCE = 0.5


@dataclass(frozen=True)
class ItemStats:
    item: str
    facility: float
    variance: float
    discrimination: float
    discrimination_uncorrected: float
    flags: frozenset = field(default_factory=frozenset)


def _column(scored: ScoredTest, item: str) -> np.ndarray:
    if scored.n_participants == 0:
        raise EmptyDatasetError("no participants")
    return scored.column(item)


def item_facility(scored: ScoredTest, item: str) -> float:
    """Proportion correct (knowledge) or mean item score (person tests).

    Both reduce to the column mean once knowledge items are scored 0/1.
    """
    return float(np.mean(_column(scored, item)))


def item_variance(scored: ScoredTest, item: str) -> float:
    """``facility * (1 - facility)`` for knowledge items, else the n-1 sample variance."""
    col = _column(scored, item)
    if scored.test_type == KNOWLEDGE:
        f = float(np.mean(col))
        return f * (1.0 - f)
    if col.size < 2:
        return 0.0
    return float(np.var(col, ddof=1))


def item_discrimination(scored: ScoredTest, item: str, corrected: bool = True) -> float:
    """Correlation between the item and the total score.

    With ``corrected`` the item is left out of the total first.
    """
    col = _column(scored, item)
    total = scored.rest_score(item) if corrected else scored.totals
    if np.ptp(col) == 0:
        raise DegenerateInputError(f"item {item!r} is constant")
    if np.ptp(total) == 0:
        raise DegenerateInputError(f"total score is constant when correlating item {item!r}")
    return pearson(col, total)


def flag_item(
    test_type: str,
    variance: float,
    discrimination: float,
    knowledge_threshold: float = KNOWLEDGE_LOW_VARIANCE,
    likert_threshold: float = LIKERT_LOW_VARIANCE,
) -> frozenset:
    threshold = knowledge_threshold if test_type == KNOWLEDGE else likert_threshold
    flags = set()
    if variance < threshold:
        flags.add(LOW_VARIANCE)
    if not discrimination > 0:
        flags.add(NONPOSITIVE_DISCRIMINATION)
    return frozenset(flags)


def item_report(
    scored: ScoredTest,
    spec=None,
    knowledge_threshold: float = KNOWLEDGE_LOW_VARIANCE,
    likert_threshold: float = LIKERT_LOW_VARIANCE,
) -> list:
    """Per-item statistics with advisory flags.

    Flags mark candidates for review; nothing is removed. A constant item
    gets discrimination NaN and is flagged on both counts.
    """
    test_type = spec.test_type if spec is not None else scored.test_type
    report = []
    for item in scored.items:
        facility = item_facility(scored, item)
        variance = item_variance(scored, item)
        try:
            corrected = item_discrimination(scored, item, corrected=True)
        except DegenerateInputError:
            corrected = float("nan")
        try:
            raw = item_discrimination(scored, item, corrected=False)
        except DegenerateInputError:
            raw = float("nan")
        flags = flag_item(test_type, variance, corrected, knowledge_threshold, likert_threshold)
        report.append(ItemStats(item, facility, variance, corrected, raw, flags))
    return report
