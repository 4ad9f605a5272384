import numpy as np
import pytest

from psyeval.data import KNOWLEDGE, PERSON, ScoredTest

_ACCEPTANCE = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion, echoed at session end."""

    def record(number, name, ok, detail=""):
        line = f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'}" + (f"  {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def likert_test(rng):
    """Six correlated 1..5 items for 80 participants."""
    latent = rng.standard_normal((80, 1))
    raw = latent + 0.8 * rng.standard_normal((80, 6))
    values = np.clip(np.round(3 + raw), 1, 5)
    return ScoredTest.from_array(values, test_type=PERSON, min_score=1, max_score=5)


@pytest.fixture
def knowledge_test(rng):
    ability = rng.standard_normal(120)
    difficulty = np.linspace(-1.5, 1.5, 8)
    p = 1 / (1 + np.exp(-(ability[:, None] - difficulty)))
    values = (rng.random((120, 8)) < p).astype(float)
    return ScoredTest.from_array(values, test_type=KNOWLEDGE, min_score=0, max_score=1)
