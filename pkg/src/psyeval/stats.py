"""Numerical kernels: correlation, symmetric eigen-decomposition, SMC, IRLS."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import rankdata

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateInputError,
    SeparationError,
    SingularMatrixError,
)

logger = logging.getLogger(__name__)

PEARSON = "pearson"
SPEARMAN = "spearman"
CORRELATION_METHODS = (PEARSON, SPEARMAN)

SMC_RIDGE = 1e-8


def _paired(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise DataError(f"vectors differ in length ({x.size} vs {y.size})")
    if x.size < 3:
        raise DataError(f"at least 3 paired observations required, got {x.size}")
    return x, y


def pearson(x, y) -> float:
    """Pearson product-moment correlation of two equal-length vectors."""
    x, y = _paired(x, y)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = dx @ dx
    syy = dy @ dy
    if sxx == 0 or syy == 0:
        raise DegenerateInputError("zero variance: cannot correlate a constant vector")
    r = (dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def spearman(x, y) -> float:
    """Spearman rank correlation; ties get their average rank."""
    x, y = _paired(x, y)
    return pearson(rankdata(x), rankdata(y))


def correlate(x, y, method: str = PEARSON) -> float:
    if method == PEARSON:
        return pearson(x, y)
    if method == SPEARMAN:
        return spearman(x, y)
    raise ValueError(f"unknown correlation method {method!r}")


@dataclass(frozen=True, eq=False)
class CorrelationMatrix:
    """Symmetric item intercorrelation matrix.

    ``reduced`` marks the PAF form whose diagonal holds communalities
    instead of ones.
    """

    items: tuple
    values: np.ndarray
    reduced: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("correlation matrix must be square")
        if values.shape[0] != len(self.items):
            raise ValueError("item labels do not match matrix size")
        _require_symmetric(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "items", tuple(self.items))

    @property
    def n_items(self) -> int:
        return len(self.items)

    def with_diagonal(self, diagonal) -> "CorrelationMatrix":
        values = np.array(self.values)
        np.fill_diagonal(values, diagonal)
        return CorrelationMatrix(self.items, values, reduced=True)

    def lower_triangle(self, decimals: int = 2) -> str:
        """Render the lower triangle as a plain-text table."""
        labels = [str(i) for i in self.items]
        cells = [["items", *labels]]
        for i, label in enumerate(labels):
            row = [label]
            for j in range(len(labels)):
                row.append(f"{self.values[i, j]:.{decimals}f}" if j <= i else "")
            cells.append(row)
        widths = [max(len(r[c]) for r in cells) for c in range(len(cells[0]))]
        return "\n".join(
            "  ".join(cell.rjust(w) for cell, w in zip(r, widths)).rstrip() for r in cells
        )


def _require_symmetric(a: np.ndarray, tol: float = 1e-12):
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    asym = float(np.max(np.abs(a - np.swapaxes(a, -1, -2)), initial=0.0))
    if asym > tol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3g})")


def correlation_matrix(scored, method: str = PEARSON) -> CorrelationMatrix:
    """Item intercorrelations of a ScoredTest (or a bare 2-D array)."""
    values = np.asarray(getattr(scored, "values", scored), dtype=float)
    items = getattr(scored, "items", None) or tuple(f"q{j + 1}" for j in range(values.shape[1]))
    n = values.shape[0]
    if n < 3:
        raise DataError(f"at least 3 participants required, got {n}")
    if np.isnan(values).any():
        raise DataError("missing cells present; run listwise_delete first")
    if method == SPEARMAN:
        values = np.apply_along_axis(rankdata, 0, values)
    elif method != PEARSON:
        raise ValueError(f"unknown correlation method {method!r}")
    sd = values.std(axis=0)
    constant = [items[j] for j in np.flatnonzero(sd == 0)]
    if constant:
        raise DegenerateInputError(f"constant item(s): {', '.join(map(str, constant))}")
    r = _corr(values)
    return CorrelationMatrix(items, r)


def _corr(values: np.ndarray) -> np.ndarray:
    """Correlation of the columns of ``values`` (batched over leading axes)."""
    centered = values - values.mean(axis=-2, keepdims=True)
    cov = np.swapaxes(centered, -1, -2) @ centered
    d = np.sqrt(np.diagonal(cov, axis1=-2, axis2=-1))
    r = cov / d[..., :, None] / d[..., None, :]
    r = (r + np.swapaxes(r, -1, -2)) / 2
    idx = np.arange(r.shape[-1])
    r[..., idx, idx] = 1.0
    return np.clip(r, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues in descending order with orthonormal eigenvectors as columns."""

    values: np.ndarray
    vectors: np.ndarray
    sweeps: int = 0


@lru_cache(maxsize=None)
def _round_robin(n: int):
    """Round-robin pairing of ``n`` (even) indices into ``n - 1`` rounds of
    disjoint pairs; each unordered pair appears exactly once per sweep."""
    players = list(range(n))
    rounds = []
    for _ in range(n - 1):
        pairs = [(players[k], players[n - 1 - k]) for k in range(n // 2)]
        p = np.array([min(a, b) for a, b in pairs])
        q = np.array([max(a, b) for a, b in pairs])
        rounds.append((p, q))
        players = [players[0], players[-1], *players[1:-1]]
    return rounds


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 100, basis=None):
    """Cyclic Jacobi eigen-decomposition of symmetric matrices.

    Works on a single ``(n, n)`` matrix or a stack ``(..., n, n)``. Pairs are
    visited in round-robin order so that the ``n/2`` rotations of one round
    touch disjoint rows and columns and can be applied together. A rotation
    is skipped once ``|a_pq|`` falls to ``tol`` times the Frobenius norm of
    the input, which makes every matrix's trajectory independent of the
    others in the stack.

    ``basis`` (single matrix only) is an orthogonal starting guess for the
    eigenvectors, e.g. from a previous iteration on a nearby matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` with eigenvalues sorted
    in descending order.
    """
    a = np.array(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError("expected square matrices")
    _require_symmetric(a)
    a = (a + np.swapaxes(a, -1, -2)) / 2
    single = a.ndim == 2
    if single:
        a = a[None]
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    m = n + (n % 2)
    if m != n:
        padded = np.zeros((a.shape[0], m, m))
        padded[:, :n, :n] = a
        a = padded
    b = a.shape[0]
    threshold = tol * np.sqrt(np.sum(a * a, axis=(-2, -1)))
    v = np.broadcast_to(np.eye(m), (b, m, m)).copy()
    if basis is not None:
        if not single:
            raise ValueError("basis is only supported for a single matrix")
        v[0, :n, :n] = basis
        a = np.swapaxes(v, -1, -2) @ a @ v
        a = (a + np.swapaxes(a, -1, -2)) / 2
    threshold = np.maximum(threshold, np.finfo(float).tiny)[:, None]
    rounds = _round_robin(m) if m > 1 else []
    off_mask = ~np.eye(m, dtype=bool)

    sweeps = 0
    while True:
        off = np.max(np.abs(a[:, off_mask]), axis=-1, initial=0.0)
        if np.all(off <= threshold[:, 0]):
            break
        if sweeps >= max_sweeps:
            raise ConvergenceError(
                f"Jacobi did not converge in {max_sweeps} sweeps",
                last_iterate=(np.diagonal(a, axis1=-2, axis2=-1)[:, :n], v[:, :n, :n]),
                iterations=sweeps,
            )
        sweeps += 1
        for p, q in rounds:
            app = a[:, p, p]
            aqq = a[:, q, q]
            apq = a[:, p, q]
            active = np.abs(apq) > threshold
            safe = np.where(active, apq, 1.0)
            theta = (aqq - app) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            c = np.where(active, c, 1.0)
            s = np.where(active, s, 0.0)
            rot = np.broadcast_to(np.eye(m), (b, m, m)).copy()
            rot[:, p, p] = c
            rot[:, q, q] = c
            rot[:, p, q] = s
            rot[:, q, p] = -s
            a = np.swapaxes(rot, -1, -2) @ a @ rot
            # the rotated pair is annihilated analytically; drop the rounding residue
            a[:, p, q] = np.where(active, 0.0, a[:, p, q])
            a[:, q, p] = a[:, p, q]
            v = v @ rot

    values = np.diagonal(a, axis1=-2, axis2=-1)[:, :n]
    vectors = v[:, :n, :n]
    order = np.argsort(-values, axis=-1, kind="stable")
    values = np.take_along_axis(values, order, axis=-1)
    vectors = np.take_along_axis(vectors, order[:, None, :], axis=-1)
    values = values.reshape(*batch_shape, n)
    vectors = vectors.reshape(*batch_shape, n, n)
    if single:
        return values[0], vectors[0], sweeps
    return values, vectors, sweeps


def eigen_symmetric(c) -> EigenSystem:
    """Eigen-decomposition of a symmetric matrix (CorrelationMatrix or array)."""
    values, vectors, sweeps = jacobi_eigh(getattr(c, "values", c))
    return EigenSystem(values=values, vectors=vectors, sweeps=sweeps)


def smc(c, item=None, ridge: bool = False):
    """Squared multiple correlation of each item with all the others.

    Computed as ``1 - 1 / (R^-1)_ii`` and clamped to [0, 1]. When ``item``
    is given only that item's value is returned. A singular matrix raises
    :class:`SingularMatrixError` unless ``ridge`` is set, in which case
    ``SMC_RIDGE`` is added to the diagonal and a warning is logged.
    """
    r = np.asarray(getattr(c, "values", c), dtype=float)
    if ridge:
        logger.warning("SMC: ridge %g added to the correlation diagonal", SMC_RIDGE)
        r = r + SMC_RIDGE * np.eye(r.shape[0])
    if np.linalg.cond(r) > 1e12:
        raise SingularMatrixError(
            "correlation matrix is singular or nearly so; retry with ridge=True"
        )
    inv = np.linalg.inv(r)
    values = np.clip(1.0 - 1.0 / np.diag(inv), 0.0, 1.0)
    if item is None:
        return values
    items = getattr(c, "items", None)
    idx = items.index(item) if items is not None and not isinstance(item, int) else item
    return float(values[idx])


@dataclass(frozen=True, eq=False)
class LogisticFit:
    coef: np.ndarray
    se: np.ndarray
    log_likelihood: float
    iterations: int
    log_likelihood_trace: tuple


def _loglik(y, eta):
    # log(1 + exp(eta)) evaluated stably
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logistic_fit(design, response, tol: float = 1e-8, max_iter: int = 25) -> LogisticFit:
    """Binomial-logit maximum likelihood by iteratively reweighted least squares.

    ``design`` must already include the intercept column. Each Newton step
    is halved until the log-likelihood does not decrease. Iteration stops
    when ``max |delta beta| < tol``.

    Raises
    ------
    SeparationError
        When fitted probabilities are pinned at 0 or 1 (complete or
        quasi-complete separation).
    ConvergenceError
        When ``max_iter`` is reached without convergence; carries the last
        coefficient vector.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float).ravel()
    if x.ndim != 2 or x.shape[0] != y.size:
        raise DataError("design rows must match the response length")
    if not np.isin(y, (0.0, 1.0)).all():
        raise DataError("response must be coded 0/1")
    if np.linalg.matrix_rank(x) < x.shape[1]:
        raise SingularMatrixError("design matrix is rank deficient")

    beta = np.zeros(x.shape[1])
    eta = x @ beta
    ll = _loglik(y, eta)
    trace = [ll]
    for it in range(1, max_iter + 1):
        p = 1.0 / (1.0 + np.exp(-eta))
        w = p * (1.0 - p)
        hessian = x.T @ (w[:, None] * x)
        grad = x.T @ (y - p)
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            raise SeparationError("information matrix became singular (separation)") from None
        scale = 1.0
        while True:
            candidate = beta + scale * step
            cand_eta = x @ candidate
            cand_ll = _loglik(y, cand_eta)
            if cand_ll >= ll:
                break
            scale /= 2.0
            if scale < 1e-10:
                # no ascent left along the Newton direction: at the optimum
                candidate, cand_eta, cand_ll = beta, eta, ll
                break
        delta = candidate - beta
        beta, eta, ll = candidate, cand_eta, cand_ll
        trace.append(ll)
        p = 1.0 / (1.0 + np.exp(-eta))
        if np.max(np.abs(y - p)) < 1e-6:
            raise SeparationError("fitted probabilities reproduce the response exactly (separation)")
        if np.max(np.abs(delta)) < tol:
            break
    else:
        pinned = np.minimum(p, 1.0 - p) < 1e-8
        if pinned.any():
            raise SeparationError(
                f"{int(pinned.sum())} fitted probabilities pinned at 0/1 (quasi-complete separation)"
            )
        raise ConvergenceError(
            f"IRLS did not converge in {max_iter} iterations", last_iterate=beta, iterations=max_iter
        )

    p = 1.0 / (1.0 + np.exp(-eta))
    w = p * (1.0 - p)
    cov = np.linalg.inv(x.T @ (w[:, None] * x))
    return LogisticFit(
        coef=beta,
        se=np.sqrt(np.diag(cov)),
        log_likelihood=ll,
        iterations=it,
        log_likelihood_trace=tuple(trace),
    )
