"""Seeded synthetic data under the true-score and common-factor models.

All randomness flows from numpy's PCG64 generator. A spec's master seed
is expanded with ``SeedSequence.spawn`` into one child stream per latent
factor column and one per item error column, so each column's draws are
fixed by (seed, column index) alone.
"""

from __future__ import annotations

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from .data import PERSON, ResponseMatrix, ScoredTest
from .errors import ConfigError

UNIFORM = "uniform"
NONUNIFORM = "nonuniform"
GROUP_LABELS = ("reference", "focal")


def column_streams(seed: int, count: int) -> list:
    """Independent generators for ``count`` columns derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(child)) for child in children]


@dataclass(frozen=True, eq=False)
class FactorModelSpec:
    """Common-factor generating model.

    ``loadings`` is items x factors; ``factor_correlations`` defaults to the
    identity. ``likert`` is an optional ``(low, high)`` integer range for
    discretization; ``(0, 1)`` produces dichotomous items.
    """

    loadings: np.ndarray
    n: int
    seed: int = 0
    factor_correlations: np.ndarray | None = None
    likert: tuple | None = None
    items: tuple | None = None

    def __post_init__(self):
        lam = np.atleast_2d(np.array(self.loadings, dtype=float))
        if lam.shape[0] == 1 and np.ndim(self.loadings) == 1:
            lam = lam.T
        k = lam.shape[1]
        phi = np.eye(k) if self.factor_correlations is None else np.array(
            self.factor_correlations, dtype=float
        )
        if phi.shape != (k, k):
            raise ConfigError(f"factor correlation matrix must be {k}x{k}")
        if not np.allclose(phi, phi.T, atol=1e-12) or not np.allclose(np.diag(phi), 1.0):
            raise ConfigError("factor correlation matrix must be symmetric with unit diagonal")
        if np.linalg.eigvalsh(phi).min() <= 0:
            raise ConfigError("factor correlation matrix is not positive definite")
        h2 = np.einsum("ij,jk,ik->i", lam, phi, lam)
        if np.any(h2 > 1 + 1e-12):
            worst = int(np.argmax(h2))
            raise ConfigError(f"item {worst} has implied communality {h2[worst]:.4f} > 1")
        if self.n < 1:
            raise ConfigError("n must be positive")
        if self.likert is not None:
            lo, hi = self.likert
            if not (float(lo).is_integer() and float(hi).is_integer() and lo < hi):
                raise ConfigError("likert bounds must be integers with low < high")
        items = self.items or tuple(f"q{j + 1}" for j in range(lam.shape[0]))
        if len(items) != lam.shape[0]:
            raise ConfigError("item names do not match the loading matrix")
        object.__setattr__(self, "loadings", lam)
        object.__setattr__(self, "factor_correlations", phi)
        object.__setattr__(self, "items", tuple(items))

    @property
    def n_items(self) -> int:
        return self.loadings.shape[0]

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]

    @property
    def implied_correlation(self) -> np.ndarray:
        """Model correlation matrix: common part off the diagonal, ones on it."""
        r = self.loadings @ self.factor_correlations @ self.loadings.T
        np.fill_diagonal(r, 1.0)
        return r

    def to_dict(self) -> dict:
        return {
            "model": "common_factor",
            "loadings": self.loadings.tolist(),
            "factor_correlations": self.factor_correlations.tolist(),
            "n": int(self.n),
            "seed": int(self.seed),
            "likert": list(self.likert) if self.likert is not None else None,
            "items": list(self.items),
            "rng": "numpy PCG64 via SeedSequence.spawn (factor columns, then item error columns)",
        }


def simple_structure(n_factors: int, items_per_factor: int, loading: float) -> np.ndarray:
    """Block loading matrix where each item loads on exactly one factor."""
    lam = np.zeros((n_factors * items_per_factor, n_factors))
    for f in range(n_factors):
        lam[f * items_per_factor:(f + 1) * items_per_factor, f] = loading
    return lam


def _latent(spec: FactorModelSpec):
    streams = column_streams(spec.seed, spec.n_factors + spec.n_items)
    z = np.column_stack([g.standard_normal(spec.n) for g in streams[: spec.n_factors]])
    chol = np.linalg.cholesky(spec.factor_correlations)
    factors = z @ chol.T
    h2 = np.einsum("ij,jk,ik->i", spec.loadings, spec.factor_correlations, spec.loadings)
    unique_sd = np.sqrt(np.clip(1.0 - h2, 0.0, None))
    errors = np.column_stack([g.standard_normal(spec.n) for g in streams[spec.n_factors:]])
    return factors, factors @ spec.loadings.T + errors * unique_sd


def discretize(latent, low: int, high: int) -> np.ndarray:
    """Map unit-variance normal scores onto ``low..high`` with equal-probability
    thresholds taken from the standard normal distribution."""
    k = int(high) - int(low) + 1
    cuts = norm.ppf(np.arange(1, k) / k)
    return low + np.searchsorted(cuts, latent, side="right").astype(float)


def _to_matrix(spec: FactorModelSpec, x, labels=None) -> ResponseMatrix:
    if spec.likert is not None:
        x = discretize(x, *spec.likert)
    participants = tuple(f"s{i + 1:05d}" for i in range(spec.n))
    return ResponseMatrix(participants=participants, items=spec.items, values=x, labels=labels or {})


def generate_factor_data(spec: FactorModelSpec) -> ResponseMatrix:
    """Draw ``X = F L' + E`` with unit-variance items, optionally discretized."""
    _, x = _latent(spec)
    return _to_matrix(spec, x)


@dataclass(frozen=True)
class TrueScoreSpec:
    n: int
    true_variance: float
    error_variance: float
    seed: int = 0
    true_mean: float = 0.0

    def __post_init__(self):
        if self.true_variance <= 0 or self.error_variance < 0:
            raise ConfigError("true variance must be positive and error variance nonnegative")
        if self.n < 1:
            raise ConfigError("n must be positive")

    @property
    def reliability(self) -> float:
        return self.true_variance / (self.true_variance + self.error_variance)

    @classmethod
    def from_reliability(cls, n: int, reliability: float, seed: int = 0, total_variance: float = 1.0):
        if not 0 < reliability <= 1:
            raise ConfigError("reliability must lie in (0, 1]")
        return cls(
            n=n,
            true_variance=reliability * total_variance,
            error_variance=(1 - reliability) * total_variance,
            seed=seed,
        )

    def to_dict(self) -> dict:
        return {"model": "true_score", **asdict(self)}


def generate_retest_pair(spec: TrueScoreSpec):
    """Two administrations sharing true scores with independent errors.

    Each administration is returned as a one-item ScoredTest whose total is
    the observed score.
    """
    t_stream, e1_stream, e2_stream = column_streams(spec.seed, 3)
    true = spec.true_mean + np.sqrt(spec.true_variance) * t_stream.standard_normal(spec.n)
    err_sd = np.sqrt(spec.error_variance)
    participants = tuple(f"s{i + 1:05d}" for i in range(spec.n))
    out = []
    for stream in (e1_stream, e2_stream):
        observed = true + err_sd * stream.standard_normal(spec.n)
        out.append(
            ScoredTest(
                participants=participants,
                items=("score",),
                values=observed[:, None],
                test_type=PERSON,
                min_score=float(observed.min()),
                max_score=float(observed.max()),
            )
        )
    return tuple(out)


@dataclass(frozen=True, eq=False)
class DifData:
    matrix: ResponseMatrix
    groups: np.ndarray = field(repr=False)
    dif_items: tuple = ()


def generate_dif_data(
    base: FactorModelSpec,
    dif_items=(),
    dif_kind: str = UNIFORM,
    magnitude: float = 0.0,
    group_split: float = 0.5,
) -> DifData:
    """Two groups with the same latent distribution; selected items misbehave
    for the focal group.

    The last ``round(n * group_split)`` participants form the focal group
    (group code 1). Uniform DIF adds ``magnitude`` to the focal group's
    latent item response; non-uniform DIF adds ``magnitude`` times the
    score on the item's dominant factor, i.e. a steeper slope. Both happen
    before discretization, and with ``magnitude == 0`` the responses are
    identical to :func:`generate_factor_data` for the same spec.
    """
    dif_items = tuple(dif_items)
    unknown = set(dif_items) - set(base.items)
    if unknown:
        raise ConfigError(f"DIF items not in the model: {', '.join(sorted(unknown))}")
    if dif_kind not in (UNIFORM, NONUNIFORM):
        raise ConfigError(f"dif_kind must be {UNIFORM!r} or {NONUNIFORM!r}")
    if not 0 < group_split < 1:
        raise ConfigError("group_split must lie strictly between 0 and 1")
    if magnitude == 0 and dif_items:
        warnings.warn("DIF magnitude is 0: no DIF will be injected", stacklevel=2)

    n_focal = int(round(base.n * group_split))
    if n_focal in (0, base.n):
        raise ConfigError("group_split leaves one group empty")
    groups = np.zeros(base.n, dtype=int)
    groups[base.n - n_focal:] = 1
    focal = groups == 1

    factors, x = _latent(base)
    x = np.array(x)
    for item in dif_items:
        j = base.items.index(item)
        if dif_kind == UNIFORM:
            x[focal, j] += magnitude
        else:
            f = int(np.argmax(np.abs(base.loadings[j])))
            x[focal, j] += magnitude * factors[focal, f]
    labels = {"group": tuple(GROUP_LABELS[g] for g in groups)}
    return DifData(matrix=_to_matrix(base, x, labels), groups=groups, dif_items=dif_items)
