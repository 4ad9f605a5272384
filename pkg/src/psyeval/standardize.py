"""Norm-referenced score transformations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, DomainError

# Lower-inclusive cut points: z in [-1.25, -0.75) is stanine 3.
STANINE_EDGES = (-1.75, -1.25, -0.75, -0.25, 0.25, 0.75, 1.25, 1.75)
STEN_EDGES = (-2.0, -1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0)


@dataclass(frozen=True)
class NormReference:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DegenerateInputError(f"norm standard deviation must be positive, got {self.sd}")

    @classmethod
    def from_sample(cls, scores) -> "NormReference":
        scores = np.asarray(scores, dtype=float)
        if scores.size < 2:
            raise DegenerateInputError("at least two scores are needed to build a norm")
        return cls(float(scores.mean()), float(scores.std(ddof=1)))


def z_score(x, norm: NormReference):
    """Standard score ``(x - mean) / sd``."""
    z = (np.asarray(x, dtype=float) - norm.mean) / norm.sd
    return float(z) if z.ndim == 0 else z


def t_score(z):
    """T score: mean 50, standard deviation 10."""
    t = np.asarray(z, dtype=float) * 10.0 + 50.0
    return float(t) if t.ndim == 0 else t


def _bin(z, edges):
    idx = np.searchsorted(edges, np.asarray(z, dtype=float), side="right") + 1
    return int(idx) if idx.ndim == 0 else idx


def stanine(z):
    """Stanine band 1..9 for a z score (or array of z scores)."""
    return _bin(z, STANINE_EDGES)


def sten(z):
    """Sten band 1..10 for a z score (or array of z scores)."""
    return _bin(z, STEN_EDGES)


def normalize(values, transform: str):
    """Element-wise ``log`` or ``sqrt`` transform, rejecting out-of-domain values."""
    values = np.asarray(values, dtype=float)
    if transform == "log":
        bad = values[~(values > 0)]
        if bad.size:
            raise DomainError(f"log transform needs positive values, got {bad.flat[0]:g}")
        return np.log(values)
    if transform == "sqrt":
        bad = values[~(values >= 0)]
        if bad.size:
            raise DomainError(f"sqrt transform needs nonnegative values, got {bad.flat[0]:g}")
        return np.sqrt(values)
    raise ValueError(f"unknown transform {transform!r}; expected 'log' or 'sqrt'")


def standardize_scores(scores, norm: NormReference | None = None) -> dict:
    """All standard scores for a vector of raw totals."""
    scores = np.asarray(scores, dtype=float)
    norm = norm or NormReference.from_sample(scores)
    z = z_score(scores, norm)
    return {
        "norm": norm,
        "z": np.atleast_1d(z),
        "t": np.atleast_1d(t_score(z)),
        "stanine": np.atleast_1d(stanine(z)),
        "sten": np.atleast_1d(sten(z)),
    }
