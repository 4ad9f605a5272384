"""Exploratory factor analysis.

Loadings come from principal components or iterated principal axis
factoring; the number of factors is advised by the K1 rule, the scree
table, very simple structure and Horn's parallel analysis; loadings are
rotated with varimax or promax.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConvergenceError, SingularMatrixError
from .simulate import column_streams
from .stats import PEARSON, _corr, correlation_matrix, jacobi_eigh, smc

logger = logging.getLogger(__name__)

PCA = "pca"
PAF = "paf"
NONE = "none"
VARIMAX = "varimax"
PROMAX = "promax"

CROSSLOADING = "crossloading"
ORPHAN = "orphan"

MIN_ITEMS_PER_FACTOR = 3


@dataclass(frozen=True, eq=False)
class FactorSolution:
    """Loadings plus the variance decomposition of each item.

    ``loadings`` is items x factors (pattern loadings after an oblique
    rotation). ``eigenvalues`` holds every eigenvalue of the analysed
    matrix: the correlation matrix for PCA, the final reduced matrix for
    PAF.
    """

    items: tuple
    loadings: np.ndarray
    communalities: np.ndarray
    eigenvalues: np.ndarray
    method: str
    rotation: str = NONE
    factor_correlations: np.ndarray | None = None
    heywood: tuple = ()
    iterations: int = 0
    converged: bool = True
    rotation_matrix: np.ndarray | None = None
    criterion_trace: tuple = ()
    notices: tuple = ()

    def __post_init__(self):
        k = self.loadings.shape[1]
        if self.factor_correlations is None:
            object.__setattr__(self, "factor_correlations", np.eye(k))
        if not self.heywood:
            object.__setattr__(self, "heywood", (False,) * len(self.items))

    @property
    def uniquenesses(self) -> np.ndarray:
        return 1.0 - self.communalities

    @property
    def n_factors(self) -> int:
        return self.loadings.shape[1]

    @property
    def explained_variance(self) -> np.ndarray:
        """Sum of squared loadings per factor."""
        return np.sum(self.loadings**2, axis=0)

    def model_matrix(self) -> np.ndarray:
        """Common part of the correlation matrix implied by the solution."""
        return self.loadings @ self.factor_correlations @ self.loadings.T


def _values(c):
    return np.asarray(getattr(c, "values", c), dtype=float)


def _items(c, n):
    return tuple(getattr(c, "items", None) or (f"q{j + 1}" for j in range(n)))


def _check_count(n_factors, n_items):
    if not 1 <= n_factors <= n_items:
        raise ValueError(f"n_factors must lie in [1, {n_items}], got {n_factors}")


def canonicalize(loadings, factor_correlations=None, rotation_matrix=None):
    """Resolve sign and order indeterminacy.

    Columns are sorted by decreasing sum of squared loadings and flipped so
    that each column's largest-magnitude loading is positive.
    """
    loadings = np.asarray(loadings, dtype=float)
    k = loadings.shape[1]
    order = np.argsort(-np.sum(loadings**2, axis=0), kind="stable")
    loadings = loadings[:, order]
    peak = loadings[np.argmax(np.abs(loadings), axis=0), np.arange(k)]
    signs = np.where(peak < 0, -1.0, 1.0)
    loadings = loadings * signs
    phi = None
    if factor_correlations is not None:
        phi = np.asarray(factor_correlations)[np.ix_(order, order)] * np.outer(signs, signs)
    t = None
    if rotation_matrix is not None:
        t = np.asarray(rotation_matrix)[:, order] * signs
    return loadings, phi, t


def pca(c, n_factors: int) -> FactorSolution:
    """Principal components scaled to loadings: ``v_j * sqrt(lambda_j)``."""
    r = _values(c)
    items = _items(c, r.shape[0])
    _check_count(n_factors, len(items))
    values, vectors, _ = jacobi_eigh(r)
    loadings = vectors[:, :n_factors] * np.sqrt(np.clip(values[:n_factors], 0.0, None))
    loadings, _, _ = canonicalize(loadings)
    return FactorSolution(
        items=items,
        loadings=loadings,
        communalities=np.sum(loadings**2, axis=1),
        eigenvalues=values,
        method=PCA,
    )


def paf(c, n_factors: int, tol: float = 1e-6, max_iter: int = 100) -> FactorSolution:
    """Iterated principal axis factoring.

    Starts from squared multiple correlations on the diagonal (with a small
    ridge when the matrix is singular), then alternates eigen-decomposition
    of the reduced matrix and communality updates until the largest change
    drops below ``tol``. A communality that exceeds 1 (Heywood case) is
    clamped to 1, its loading row rescaled to unit length, and the item
    flagged.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations; ``last_iterate`` holds the current
        (unconverged) FactorSolution.
    """
    r = _values(c)
    items = _items(c, r.shape[0])
    _check_count(n_factors, len(items))
    notices = []
    try:
        h2 = smc(r)
    except SingularMatrixError:
        h2 = smc(r, ridge=True)
        notices.append("singular correlation matrix: SMC computed with ridge 1e-08")
    heywood = np.zeros(len(items), dtype=bool)
    basis = None
    converged = False
    for iteration in range(1, max_iter + 1):
        reduced = np.array(r)
        np.fill_diagonal(reduced, h2)
        values, vectors, _ = jacobi_eigh(reduced, basis=basis)
        basis = vectors
        loadings = vectors[:, :n_factors] * np.sqrt(np.clip(values[:n_factors], 0.0, None))
        new = np.sum(loadings**2, axis=1)
        over = new > 1.0
        heywood |= over
        new = np.minimum(new, 1.0)
        delta = float(np.max(np.abs(new - h2)))
        h2 = new
        if delta < tol:
            converged = True
            break

    row_norm = np.sqrt(np.sum(loadings**2, axis=1))
    scale = np.where(row_norm > 1.0, 1.0 / np.where(row_norm > 0, row_norm, 1.0), 1.0)
    loadings = loadings * scale[:, None]
    loadings, _, _ = canonicalize(loadings)
    if heywood.any():
        flagged = [items[i] for i in np.flatnonzero(heywood)]
        notices.append(f"Heywood case (communality > 1 clamped) for: {', '.join(flagged)}")
    solution = FactorSolution(
        items=items,
        loadings=loadings,
        communalities=np.sum(loadings**2, axis=1),
        eigenvalues=values,
        method=PAF,
        heywood=tuple(bool(x) for x in heywood),
        iterations=iteration,
        converged=converged,
        notices=tuple(notices),
    )
    if not converged:
        raise ConvergenceError(
            f"PAF did not converge in {max_iter} iterations (last change {delta:.3g})",
            last_iterate=solution,
            iterations=max_iter,
        )
    return solution


def paf_or_last(c, n_factors: int, **kwargs) -> FactorSolution:
    """PAF that returns the unconverged iterate (with a notice) instead of raising."""
    try:
        return paf(c, n_factors, **kwargs)
    except ConvergenceError as exc:
        sol = exc.last_iterate
        return replace(sol, notices=sol.notices + (str(exc),))


def extract_k1(eigenvalues) -> int:
    """Number of eigenvalues strictly greater than 1."""
    return int(np.sum(np.asarray(eigenvalues, dtype=float) > 1.0))


def scree_data(eigenvalues) -> list:
    """``(factor index, eigenvalue)`` pairs, 1-based and in descending order."""
    values = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    return [(i + 1, float(v)) for i, v in enumerate(values)]


def _varimax_criterion(a: np.ndarray) -> float:
    sq = a * a
    return float(np.sum(np.mean(sq * sq, axis=0) - np.mean(sq, axis=0) ** 2))


def _varimax_sweeps(a: np.ndarray, tol: float, max_sweeps: int):
    p, k = a.shape
    a = np.array(a)
    t = np.eye(k)
    trace = [_varimax_criterion(a)]
    for _ in range(max_sweeps):
        for i in range(k - 1):
            for j in range(i + 1, k):
                x, y = a[:, i], a[:, j]
                u = x * x - y * y
                v = 2.0 * x * y
                su, sv = u.sum(), v.sum()
                num = 2.0 * (u @ v) - 2.0 * su * sv / p
                den = (u @ u) - (v @ v) - (su * su - sv * sv) / p
                phi = np.arctan2(num, den) / 4.0
                if phi == 0.0:
                    continue
                cs, sn = np.cos(phi), np.sin(phi)
                plane = np.array([[cs, -sn], [sn, cs]])
                a[:, [i, j]] = a[:, [i, j]] @ plane
                t[:, [i, j]] = t[:, [i, j]] @ plane
        trace.append(_varimax_criterion(a))
        if trace[-1] - trace[-2] < tol:
            break
    return a, t, tuple(trace)


def rotate_varimax(
    sol: FactorSolution, kaiser_normalize: bool = True, tol: float = 1e-10, max_sweeps: int = 500
) -> FactorSolution:
    """Orthogonal varimax rotation by successive planar (pairwise) rotations.

    Each planar angle maximizes the criterion for its pair exactly, so the
    criterion never decreases; sweeps stop once a whole sweep gains less
    than ``tol``. Kaiser normalization rotates the row-normalized loadings
    and scales back afterwards.
    """
    if sol.n_factors < 2:
        logger.info("varimax: single-factor solution returned unchanged")
        return replace(sol, notices=sol.notices + ("rotation skipped: only one factor",))
    loadings = np.asarray(sol.loadings, dtype=float)
    if kaiser_normalize:
        h = np.sqrt(np.sum(loadings**2, axis=1))
        h = np.where(h > 0, h, 1.0)
    else:
        h = np.ones(loadings.shape[0])
    rotated, t, trace = _varimax_sweeps(loadings / h[:, None], tol, max_sweeps)
    rotated = rotated * h[:, None]
    rotated, _, t = canonicalize(rotated, rotation_matrix=t)
    return replace(
        sol,
        loadings=rotated,
        rotation=VARIMAX,
        factor_correlations=np.eye(sol.n_factors),
        rotation_matrix=t,
        criterion_trace=trace,
    )


def rotate_promax(sol: FactorSolution, power: int = 4, kaiser_normalize: bool = True) -> FactorSolution:
    """Oblique promax rotation.

    Varimax first; the target is the varimax loadings raised element-wise
    to ``power`` with their signs kept. A least-squares transform towards
    the target is column-normalized so the implied factor correlations have
    a unit diagonal.
    """
    if power < 2:
        raise ValueError(f"promax power must be >= 2, got {power}")
    if sol.n_factors < 2:
        return replace(sol, notices=sol.notices + ("rotation skipped: only one factor",))
    vm = rotate_varimax(sol, kaiser_normalize=kaiser_normalize)
    x = vm.loadings
    target = x * np.abs(x) ** (power - 1)
    u, *_ = np.linalg.lstsq(x, target, rcond=None)
    d = np.diag(np.linalg.inv(u.T @ u))
    u = u * np.sqrt(d)
    pattern = x @ u
    phi = np.linalg.inv(u.T @ u)
    phi = (phi + phi.T) / 2
    np.fill_diagonal(phi, 1.0)
    t = vm.rotation_matrix @ u
    pattern, phi, t = canonicalize(pattern, phi, t)
    return replace(
        vm,
        loadings=pattern,
        rotation=PROMAX,
        factor_correlations=phi,
        rotation_matrix=t,
    )


def rotate(sol: FactorSolution, rotation: str, **kwargs) -> FactorSolution:
    if rotation == NONE:
        return sol
    if rotation == VARIMAX:
        return rotate_varimax(sol, **kwargs)
    if rotation == PROMAX:
        return rotate_promax(sol, **kwargs)
    raise ValueError(f"unknown rotation {rotation!r}")


@dataclass(frozen=True)
class LoadingFlags:
    items: dict
    underidentified: tuple = ()

    @property
    def any(self) -> bool:
        return bool(self.underidentified) or any(self.items.values())


def crossloading_flags(sol: FactorSolution, threshold: float = 0.32) -> LoadingFlags:
    """Flag crossloading items, orphan items and underidentified factors.

    An item crossloads when two or more of its loadings reach ``threshold``
    in magnitude and is an orphan when none does. A factor with fewer than
    three items at threshold is underidentified (0-based factor indices).
    """
    strong = np.abs(sol.loadings) >= threshold
    per_item = strong.sum(axis=1)
    flags = {}
    for item, count in zip(sol.items, per_item):
        if count >= 2:
            flags[item] = frozenset({CROSSLOADING})
        elif count == 0:
            flags[item] = frozenset({ORPHAN})
        else:
            flags[item] = frozenset()
    per_factor = strong.sum(axis=0)
    under = tuple(int(f) for f in np.flatnonzero(per_factor < MIN_ITEMS_PER_FACTOR))
    return LoadingFlags(items=flags, underidentified=under)


def vss(c, max_k: int, rotation: str = VARIMAX, tol: float = 1e-6, max_iter: int = 100) -> dict:
    """Very simple structure criterion for 1..max_k factors.

    Each candidate solution (PAF, rotated for k >= 2) is reduced to each
    item's single largest loading; the criterion is one minus the ratio of
    the mean squared residual off-diagonal correlation to the mean squared
    observed off-diagonal correlation, clamped to [0, 1].
    """
    r = _values(c)
    n = r.shape[0]
    if not 1 <= max_k <= n / 2:
        raise ValueError(f"max_k must lie in [1, {n // 2}] for {n} items, got {max_k}")
    off = ~np.eye(n, dtype=bool)
    observed_ms = float(np.mean(r[off] ** 2))
    table = {}
    for k in range(1, max_k + 1):
        sol = paf_or_last(c, k, tol=tol, max_iter=max_iter)
        if k >= 2:
            sol = rotate(sol, rotation) if rotation != PROMAX else rotate_varimax(sol)
        lam = sol.loadings
        simple = np.zeros_like(lam)
        rows = np.arange(n)
        peak = np.argmax(np.abs(lam), axis=1)
        simple[rows, peak] = lam[rows, peak]
        residual = r - simple @ simple.T
        value = 1.0 - float(np.mean(residual[off] ** 2)) / observed_ms if observed_ms > 0 else 0.0
        table[k] = float(np.clip(value, 0.0, 1.0))
    return table


@dataclass(frozen=True, eq=False)
class ParallelAnalysis:
    count: int
    observed: np.ndarray
    random_mean: np.ndarray
    random_p95: np.ndarray
    criterion: str
    replicates: int
    seed: int


PA_CHUNK = 200


def random_eigenvalues(n: int, p: int, replicates: int, seed: int) -> np.ndarray:
    """Correlation-matrix eigenvalues of ``replicates`` standard-normal n x p datasets.

    Replicate ``i`` always draws from the ``i``-th child stream of ``seed``,
    and the Jacobi solver treats every matrix in a chunk independently, so
    the result does not depend on how replicates are chunked.
    """
    streams = column_streams(seed, replicates)
    out = np.empty((replicates, p))
    for start in range(0, replicates, PA_CHUNK):
        chunk = streams[start:start + PA_CHUNK]
        data = np.stack([g.standard_normal((n, p)) for g in chunk])
        values, _, _ = jacobi_eigh(_corr(data))
        out[start:start + len(chunk)] = values
    return out


def parallel_analysis(
    data, replicates: int = 1000, criterion: str = "mean", seed: int = 0, method: str = PEARSON
) -> ParallelAnalysis:
    """Horn's parallel analysis against standard-normal random data.

    Factors are retained from the first one onwards for as long as the
    observed eigenvalue exceeds the mean (or 95th percentile) of the
    corresponding random eigenvalue.
    """
    if replicates < 100:
        raise ValueError(f"parallel analysis needs at least 100 replicates, got {replicates}")
    if criterion not in ("mean", "p95"):
        raise ValueError(f"criterion must be 'mean' or 'p95', got {criterion!r}")
    values = np.asarray(getattr(data, "values", data), dtype=float)
    n, p = values.shape
    observed, _, _ = jacobi_eigh(correlation_matrix(data, method).values)
    rand = random_eigenvalues(n, p, replicates, seed)
    mean = rand.mean(axis=0)
    p95 = np.percentile(rand, 95, axis=0)
    cutoff = mean if criterion == "mean" else p95
    above = observed > cutoff
    count = p if above.all() else int(np.argmin(above))
    return ParallelAnalysis(
        count=count,
        observed=observed,
        random_mean=mean,
        random_p95=p95,
        criterion=criterion,
        replicates=replicates,
        seed=seed,
    )


@dataclass(frozen=True, eq=False)
class ExtractionAdvice:
    k1_count: int
    scree_table: list
    vss_table: dict
    parallel: ParallelAnalysis
    chosen_count: int
    provenance: str

    @property
    def parallel_count(self) -> int:
        return self.parallel.count

    @property
    def vss_count(self) -> int:
        if not self.vss_table:
            return 0
        return max(self.vss_table, key=lambda k: (self.vss_table[k], -k))


def advise_extraction(
    scored,
    max_k: int | None = None,
    replicates: int = 1000,
    criterion: str = "mean",
    seed: int = 0,
    method: str = PEARSON,
    n_factors: int | None = None,
) -> ExtractionAdvice:
    """Run all four extraction advisors.

    ``chosen_count`` is the parallel-analysis count unless ``n_factors``
    overrides it. It is raised to at least one so that a solution can be
    fitted.
    """
    c = correlation_matrix(scored, method)
    eig, _, _ = jacobi_eigh(c.values)
    n_items = c.n_items
    if max_k is None:
        max_k = min(8, n_items // 2)
    max_k = max(1, min(max_k, n_items // 2)) if n_items >= 2 else 1
    vss_table = vss(c, max_k) if n_items >= 2 else {}
    pa = parallel_analysis(scored, replicates=replicates, criterion=criterion, seed=seed, method=method)
    if n_factors is not None:
        chosen, provenance = int(n_factors), "config"
    else:
        chosen, provenance = pa.count, "parallel_analysis"
    if chosen < 1:
        chosen, provenance = 1, provenance + " (raised to 1)"
    return ExtractionAdvice(
        k1_count=extract_k1(eig),
        scree_table=scree_data(eig),
        vss_table=vss_table,
        parallel=pa,
        chosen_count=min(chosen, n_items),
        provenance=provenance,
    )


def tucker_congruence(a, b) -> np.ndarray:
    """Column-wise Tucker congruence coefficients of two loading matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.sum(a * b, axis=0) / np.sqrt(np.sum(a * a, axis=0) * np.sum(b * b, axis=0))
