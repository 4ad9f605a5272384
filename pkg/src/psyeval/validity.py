"""Statistical validity checks: predictive, concurrent, convergent/discriminant."""

from __future__ import annotations

from dataclasses import dataclass

from .stats import PEARSON, correlate

PREDICTIVE = "predictive"
CONCURRENT = "concurrent"
CONVERGENT = "convergent"
DISCRIMINANT = "discriminant"

PREDICTIVE_THRESHOLD = 0.5


@dataclass(frozen=True)
class ValidityReport:
    kind: str
    correlation: float
    n: int
    meets_threshold: bool | None = None


def predictive_validity(test_scores, criterion_scores, method: str = PEARSON) -> ValidityReport:
    """Correlation with a success criterion; advisory threshold r > 0.5."""
    r = correlate(test_scores, criterion_scores, method)
    return ValidityReport(PREDICTIVE, r, len(test_scores), meets_threshold=r > PREDICTIVE_THRESHOLD)


def concurrent_validity(new_test, existing_test, method: str = PEARSON) -> ValidityReport:
    r = correlate(new_test, existing_test, method)
    return ValidityReport(CONCURRENT, r, len(new_test))


@dataclass(frozen=True)
class DifferentialValidity:
    convergent: ValidityReport
    discriminant: ValidityReport
    margin: float = 0.0

    @property
    def discrepancy(self) -> float:
        return self.convergent.correlation - self.discriminant.correlation

    @property
    def concern(self) -> bool:
        return self.discrepancy <= self.margin


def differential_validity(
    test, convergent_measure, discriminant_measure, method: str = PEARSON, margin: float = 0.0
):
    """Convergent and discriminant correlations and their difference.

    ``concern`` is raised when the convergent correlation exceeds the
    discriminant one by no more than ``margin`` (default 0: it does not
    exceed it at all). No significance test is attached.
    """
    conv = correlate(test, convergent_measure, method)
    disc = correlate(test, discriminant_measure, method)
    return DifferentialValidity(
        ValidityReport(CONVERGENT, conv, len(test)),
        ValidityReport(DISCRIMINANT, disc, len(test)),
        margin=margin,
    )
