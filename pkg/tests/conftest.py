import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from surreptix import models  # noqa: E402
from surreptix.harness.corpus import generate_corpus  # noqa: E402


@pytest.fixture(scope="session")
def corpus():
    return generate_corpus(10, 100, 1.0, seed=0)


@pytest.fixture(scope="session")
def trained(corpus):
    """One model per pipeline kind, trained once per test session.

    Values are ``(model, report, seconds)``.
    """
    x, y = corpus.train
    xt, yt = corpus.test
    out = {}
    for kind in models.KINDS:
        start = time.perf_counter()
        m = models.build(kind, seed=0)
        report = models.train(m, x, y, models.default_config(kind), xt, yt)
        out[kind] = (m, report, time.perf_counter() - start)
    return out


_CRITERIA: list[str] = []


@pytest.fixture
def record():
    """Log one pass/fail line for an acceptance criterion, then assert it."""
    def _record(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        _CRITERIA.append(line)
        print(line)
        assert ok, line
    return _record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
