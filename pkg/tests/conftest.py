import pytest

from apeval.providers import GenerationCache
from apeval.stylometrics import MetricEngine
from apeval.synthetic import synthetic_corpus, text_sidecar
from apeval.tasks import TaskRunner


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(3, 10, seed=0)


@pytest.fixture(scope="session")
def sidecar(corpus):
    return text_sidecar(corpus)


@pytest.fixture(scope="session")
def engine(corpus):
    return MetricEngine.for_corpus(corpus)


@pytest.fixture
def cache(tmp_path):
    return GenerationCache(tmp_path / "cache")


@pytest.fixture
def runner(corpus, cache):
    return TaskRunner(corpus, cache, sleep=lambda s: None)


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, taken from the real test outcomes."""
    lines = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_ac" not in nodeid or rep.when not in ("call", "setup"):
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            num = int(name.split("_")[1][2:])
            ok = outcome == "passed"
            if not ok or num not in lines:
                lines[num] = (name, ok)
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            name, ok = lines[num]
            terminalreporter.write_line(f"AC{num:<2} {'PASS' if ok else 'FAIL'}  {name}")
