import numpy as np
import pytest

from psyeval.stats import SPEARMAN
from psyeval.validity import concurrent_validity, differential_validity, predictive_validity


def _pair_with_r(r, n=200, seed=0):
    """Two vectors whose sample correlation is exactly ``r``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 2))
    z -= z.mean(axis=0)
    z = z @ np.linalg.inv(np.linalg.cholesky(np.cov(z, rowvar=False)).T)
    z = z @ np.linalg.cholesky(np.array([[1, r], [r, 1]])).T
    return z[:, 0], z[:, 1]


class TestPredictive:
    @pytest.mark.parametrize("r, meets", [(0.7, True), (0.49, False), (0.3, False), (0.51, True)])
    def test_threshold_is_strict(self, r, meets):
        x, y = _pair_with_r(r)
        report = predictive_validity(x, y)
        assert report.correlation == pytest.approx(r, abs=1e-12)
        assert report.meets_threshold is meets

    def test_boundary_excluded(self, monkeypatch):
        monkeypatch.setattr("psyeval.validity.correlate", lambda *a, **k: 0.5)
        assert predictive_validity([1, 2, 3], [1, 2, 3]).meets_threshold is False

    def test_spearman_option(self):
        x = np.arange(10.0)
        assert predictive_validity(x, np.exp(x), method=SPEARMAN).correlation == pytest.approx(1.0)


def test_concurrent_is_plain_correlation():
    x, y = _pair_with_r(0.42)
    report = concurrent_validity(x, y)
    assert report.correlation == pytest.approx(0.42, abs=1e-12)
    assert report.meets_threshold is None
    assert report.n == 200


class TestDifferential:
    def test_discrepancy(self, rng):
        test = rng.standard_normal(300)
        conv = test + 0.5 * rng.standard_normal(300)
        disc = rng.standard_normal(300)
        result = differential_validity(test, conv, disc)
        assert result.discrepancy == pytest.approx(
            np.corrcoef(test, conv)[0, 1] - np.corrcoef(test, disc)[0, 1], abs=1e-14
        )
        assert not result.concern

    def test_concern_when_not_larger(self, rng):
        test = rng.standard_normal(100)
        other = test + rng.standard_normal(100)
        result = differential_validity(test, other, other)
        assert result.discrepancy == 0.0
        assert result.concern
