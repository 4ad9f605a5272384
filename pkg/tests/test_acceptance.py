"""Acceptance criteria, each run at its stated tolerance.

Every test records a PASS/FAIL line through the ``acceptance_log``
fixture; the lines are repeated in the terminal summary.
"""

import itertools
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binom

from psyeval import cli
from psyeval.data import KNOWLEDGE, PERSON, ScoredTest, reverse_key
from psyeval.factor import (
    FactorSolution,
    PAF,
    paf,
    parallel_analysis,
    rotate_promax,
    rotate_varimax,
    tucker_congruence,
)
from psyeval.fairness import logistic_dif, mantel_haenszel_dif
from psyeval.items import LOW_VARIANCE, flag_item, item_discrimination, item_variance
from psyeval.reliability import cronbach_alpha, sem, spearman_brown, test_retest
from psyeval.simulate import (
    FactorModelSpec,
    TrueScoreSpec,
    generate_dif_data,
    generate_factor_data,
    generate_retest_pair,
    simple_structure,
)
from psyeval.standardize import stanine, sten, t_score
from psyeval.stats import correlation_matrix

SEEDS = range(50)
TRUE_LOADINGS = simple_structure(3, 4, 0.7)
GENERATING_FACTOR = np.argmax(TRUE_LOADINGS, axis=1)


def _efa_data(seed, n=300):
    return generate_factor_data(FactorModelSpec(TRUE_LOADINGS, n=n, seed=seed))


def _best_match(recovered, truth):
    """Column permutation and signs of ``recovered`` that best match ``truth``."""
    k = truth.shape[1]
    best = None
    for perm in itertools.permutations(range(k)):
        cand = recovered[:, perm]
        signs = np.sign(np.sum(cand * truth, axis=0))
        signs[signs == 0] = 1.0
        cand = cand * signs
        score = tucker_congruence(cand, truth).sum()
        if best is None or score > best[0]:
            best = (score, cand)
    return best[1]


# Band rows: (band, lower edge or None, upper edge or None)
STANINE_ROWS = [
    (1, None, -1.75), (2, -1.75, -1.25), (3, -1.25, -0.75), (4, -0.75, -0.25), (5, -0.25, 0.25),
    (6, 0.25, 0.75), (7, 0.75, 1.25), (8, 1.25, 1.75), (9, 1.75, None),
]
STEN_ROWS = [
    (1, None, -2.0), (2, -2.0, -1.5), (3, -1.5, -1.0), (4, -1.0, -0.5), (5, -0.5, 0.0),
    (6, 0.0, 0.5), (7, 0.5, 1.0), (8, 1.0, 1.5), (9, 1.5, 2.0), (10, 2.0, None),
]


def _row_points(lo, hi):
    """Interior points of a table row (edges are covered separately)."""
    lo_ = hi - 3.0 if lo is None else lo
    hi_ = lo + 3.0 if hi is None else hi
    return list(np.linspace(lo_, hi_, 9)[1:-1])


class TestCriterion1Standardization:
    def test_fixtures(self, acceptance_log):
        start = time.perf_counter()
        checks = []
        checks.append(abs(t_score(-0.89) - 41.1) <= 1e-10)
        checks.append(sten(-0.89) == 4)
        for rows, fn in ((STANINE_ROWS, stanine), (STEN_ROWS, sten)):
            for band, lo, hi in rows:
                checks.extend(fn(z) == band for z in _row_points(lo, hi))
                if lo is not None:
                    # lower edges are inclusive
                    checks.append(fn(lo) == band)
        # the worked comparison: -0.89 and -0.72 fall in stanines 3 and 4
        checks.append(stanine(-0.89) == 3 and stanine(-0.72) == 4)
        elapsed = time.perf_counter() - start
        ok = all(checks) and elapsed < 1.0
        acceptance_log(1, "standardization", ok, f"{sum(checks)}/{len(checks)} fixtures, {elapsed:.3f}s")
        assert ok


class TestCriterion2ItemAnalysis:
    def test_fixtures(self, acceptance_log):
        start = time.perf_counter()
        checks = []

        # facility 0..1 in steps of 0.05 on 20 participants
        for k in range(21):
            col = np.r_[np.ones(k), np.zeros(20 - k)]
            st = ScoredTest.from_array(np.column_stack([col, 1 - col]), test_type=KNOWLEDGE)
            f = k / 20
            checks.append(abs(item_variance(st, "q1") - f * (1 - f)) <= 1e-15)
        grid = np.linspace(0, 1, 1001)
        checks.append(np.argmax(grid * (1 - grid)) == 500 and abs(np.max(grid * (1 - grid)) - 0.25) <= 1e-15)

        # reverse keying one item negates its corrected discrimination exactly
        rng = np.random.default_rng(2)
        values = np.clip(np.round(3 + rng.standard_normal((200, 1)) + rng.standard_normal((200, 5))), 1, 5)
        before = ScoredTest.from_array(values, min_score=1, max_score=5)
        flipped = values.copy()
        flipped[:, 0] = reverse_key(values[:, 0], 1, 5)
        after = ScoredTest.from_array(flipped, min_score=1, max_score=5)
        d0 = item_discrimination(before, "q1")
        d1 = item_discrimination(after, "q1")
        checks.append(d0 > 0 and abs(d0 + d1) <= 1e-12)

        # the 0..5 Likert example: mean 4.8 / variance 0.09 is a candidate, 2.72 / 3.02 is not
        checks.append(LOW_VARIANCE in flag_item(PERSON, 0.09, 0.4))
        checks.append(LOW_VARIANCE not in flag_item(PERSON, 3.02, 0.4))

        elapsed = time.perf_counter() - start
        ok = all(checks) and elapsed < 1.0
        acceptance_log(2, "item analysis", ok, f"{sum(checks)}/{len(checks)} fixtures, {elapsed:.3f}s")
        assert ok


class TestCriterion3EfaRecovery:
    def test_paf_promax_recovery(self, acceptance_log):
        start = time.perf_counter()
        assigned = 0
        congruences = []
        for seed in SEEDS:
            data = _efa_data(seed)
            sol = rotate_promax(paf(correlation_matrix(data), 3))
            matched = _best_match(sol.loadings, TRUE_LOADINGS)
            if np.array_equal(np.argmax(np.abs(matched), axis=1), GENERATING_FACTOR):
                assigned += 1
            congruences.append(tucker_congruence(matched, TRUE_LOADINGS).mean())
        elapsed = time.perf_counter() - start
        rate = assigned / len(SEEDS)
        mean_cong = float(np.mean(congruences))
        ok = rate >= 0.95 and mean_cong >= 0.95 and elapsed < 30
        acceptance_log(
            3, "EFA recovery", ok,
            f"assignment {assigned}/{len(SEEDS)}, mean congruence {mean_cong:.4f}, {elapsed:.1f}s",
        )
        assert ok


class TestCriterion4ParallelAnalysis:
    def test_retention(self, acceptance_log):
        start = time.perf_counter()
        exact = sum(
            parallel_analysis(_efa_data(seed), replicates=1000, seed=seed).count == 3 for seed in SEEDS
        )
        noise_zero = 0
        for seed in SEEDS:
            noise = np.random.default_rng(1000 + seed).standard_normal((300, 12))
            noise_zero += parallel_analysis(noise, replicates=1000, criterion="p95", seed=seed).count == 0
        elapsed = time.perf_counter() - start

        a = parallel_analysis(_efa_data(7), replicates=1000, seed=7)
        b = parallel_analysis(_efa_data(7), replicates=1000, seed=7)
        deterministic = a.count == b.count and np.array_equal(a.random_mean, b.random_mean) and np.array_equal(
            a.random_p95, b.random_p95
        )
        ok = exact / 50 >= 0.95 and noise_zero / 50 >= 0.90 and deterministic and elapsed < 60
        acceptance_log(
            4, "parallel analysis", ok,
            f"3 retained {exact}/50, noise 0 retained {noise_zero}/50, deterministic {deterministic}, {elapsed:.1f}s",
        )
        assert ok


def _solution(loadings):
    loadings = np.asarray(loadings, dtype=float)
    return FactorSolution(
        items=tuple(f"q{j + 1}" for j in range(loadings.shape[0])),
        loadings=loadings,
        communalities=np.sum(loadings**2, axis=1),
        eigenvalues=np.zeros(loadings.shape[0]),
        method=PAF,
    )


class TestCriterion5Rotation:
    def test_invariants(self, acceptance_log):
        rng = np.random.default_rng(5)
        worst_h2 = 0.0
        for _ in range(20):
            lam = rng.uniform(-0.8, 0.8, size=(10, 3))
            rot = rotate_varimax(_solution(lam))
            worst_h2 = max(worst_h2, float(np.max(np.abs(np.sum(rot.loadings**2, axis=1) - np.sum(lam**2, axis=1)))))

        truth = simple_structure(2, 4, 0.7)
        angle = np.pi / 4
        spin = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        recovered = rotate_varimax(_solution(truth @ spin)).loadings
        structure_err = float(np.max(np.abs(_best_match(recovered, truth) - truth)))

        worst_phi = 0.0
        for seed in range(10):
            sol = rotate_promax(paf(correlation_matrix(_efa_data(seed, n=2000)), 3))
            off = sol.factor_correlations[~np.eye(3, dtype=bool)]
            worst_phi = max(worst_phi, float(np.max(np.abs(off))))

        ok = worst_h2 <= 1e-8 and structure_err <= 1e-6 and worst_phi < 0.1
        acceptance_log(
            5, "rotation invariants", ok,
            f"communality drift {worst_h2:.2e}, 45deg recovery error {structure_err:.2e}, "
            f"promax max |phi_off| {worst_phi:.3f} (n=2000, 10 seeds)",
        )
        assert ok


class TestCriterion6Reliability:
    def test_fixtures(self, acceptance_log):
        sb = spearman_brown(0.6)

        # two items with sample covariance exactly [[1, .5], [.5, 1]]
        rng = np.random.default_rng(6)
        x = rng.standard_normal((50, 2))
        x -= x.mean(axis=0)
        x = x @ np.linalg.inv(np.linalg.cholesky(np.cov(x, rowvar=False)).T)
        x = x @ np.linalg.cholesky(np.array([[1.0, 0.5], [0.5, 1.0]])).T
        alpha = cronbach_alpha(ScoredTest.from_array(x, min_score=-10, max_score=10)).value

        retest = []
        for seed in range(20):
            first, second = generate_retest_pair(TrueScoreSpec.from_reliability(2000, 0.8, seed=seed))
            retest.append(test_retest(first, second).value)
        worst_retest = float(np.max(np.abs(np.array(retest) - 0.8)))

        totals = np.random.default_rng(7).normal(50, 8, size=400)
        sd = float(np.std(totals, ddof=1))
        sem_ok = sem(totals, 0.0).sem == sd and sem(totals, 1.0).sem == 0.0

        ok = sb == 0.75 and abs(alpha - 2 / 3) <= 1e-10 and worst_retest <= 0.03 and sem_ok
        acceptance_log(
            6, "reliability", ok,
            f"SB(0.6)={sb!r}, alpha err {abs(alpha - 2 / 3):.1e}, "
            f"retest max |r-0.8| {worst_retest:.4f} (n=2000, 20 seeds), SEM endpoints {sem_ok}",
        )
        assert ok


def _dif_run(seed, magnitude):
    spec = FactorModelSpec(simple_structure(1, 10, 0.7), n=1000, seed=seed, likert=(0, 1))
    dif = generate_dif_data(spec, ("q1",) if magnitude else (), "uniform", magnitude)
    scored = ScoredTest.from_array(dif.matrix.values, items=dif.matrix.items)
    mh = mantel_haenszel_dif(scored, dif.groups, "q1")
    uniform, nonuniform = logistic_dif(scored, dif.groups, "q1")
    return mh, uniform, nonuniform


class TestCriterion7Dif:
    def test_null_rates_power_and_label_swap(self, acceptance_log):
        n_seeds = 200
        lo, hi = binom.interval(0.95, n_seeds, 0.05)
        null = np.zeros(3, dtype=int)
        power = np.zeros(2, dtype=int)
        for seed in range(n_seeds):
            null += [r.flagged for r in _dif_run(seed, 0.0)]
            mh, uniform, _ = _dif_run(seed, 0.5)
            power += [mh.flagged, uniform.flagged]
        in_band = bool(np.all((null >= lo) & (null <= hi)))
        powered = bool(np.all(power / n_seeds >= 0.8))

        spec = FactorModelSpec(simple_structure(1, 10, 0.7), n=1000, seed=3, likert=(0, 1))
        dif = generate_dif_data(spec, ("q1",), "uniform", 0.5)
        scored = ScoredTest.from_array(dif.matrix.values, items=dif.matrix.items)
        labels = np.asarray(dif.matrix.labels["group"], dtype=object)
        fwd = mantel_haenszel_dif(scored, labels, "q1", reference="reference")
        rev = mantel_haenszel_dif(scored, labels, "q1", reference="focal")
        swap_ok = abs(fwd.effect * rev.effect - 1.0) <= 1e-14 and abs(fwd.statistic - rev.statistic) <= 1e-12 * fwd.statistic

        ok = in_band and powered and swap_ok
        acceptance_log(
            7, "DIF", ok,
            f"null flags MH/LR-u/LR-nu {null.tolist()} of {n_seeds} (band {int(lo)}-{int(hi)}), "
            f"power MH/LR-u {power.tolist()}, label swap OR {fwd.effect:.4f} <-> {rev.effect:.4f}",
        )
        assert ok


CONFIG = """\
[scale]
min_score = 1
max_score = 5
group_column = group

[simulate]
n = 600
likert_min = 1
likert_max = 5
dif_items = q1
dif_magnitude = 0.5

[fairness]
dichotomize_threshold = 4
"""


class TestCriterion8EndToEnd:
    def _pipeline(self, root: Path, cfg: Path, capsys):
        out = root / "out"
        assert cli.run(["simulate", "--config", str(cfg), "--seed", "11", "--out-dir", str(out)]) == 0
        assert cli.run([
            "report", "--config", str(cfg), "--input", str(out / "simulated.csv"),
            "--seed", "11", "--out-dir", str(out), "--format", "json",
        ]) == 0
        capsys.readouterr()
        return (out / "report.json").read_bytes(), (out / "simulated.csv").read_bytes()

    @pytest.mark.slow
    def test_determinism_and_runtime(self, tmp_path, capsys, acceptance_log):
        cfg = tmp_path / "acceptance.ini"
        cfg.write_text(CONFIG, encoding="utf-8")
        start = time.perf_counter()
        first = self._pipeline(tmp_path / "run1", cfg, capsys)
        elapsed = time.perf_counter() - start
        second = self._pipeline(tmp_path / "run2", cfg, capsys)
        identical = first == second
        ok = identical and elapsed < 120
        acceptance_log(8, "end-to-end", ok, f"byte-identical {identical}, one pipeline run {elapsed:.1f}s")
        assert ok
