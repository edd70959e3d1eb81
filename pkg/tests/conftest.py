import pytest

from yeti.synth import ScenarioSpec, generate

_CRITERIA = []


class _Criterion:
    def __init__(self, number, text):
        self.number, self.text = number, text

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        _CRITERIA.append(f"[{status}] criterion {self.number}: {self.text}")
        return False


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


COOPERATIVE = ScenarioSpec(seed=1, duration_s=300, n_interventions=8, idle_fraction=0.8)


@pytest.fixture(scope="session")
def cooperative_session():
    return generate(COOPERATIVE)


@pytest.fixture(scope="session")
def short_session():
    return generate(ScenarioSpec(seed=1, duration_s=60, idle_fraction=0.8, n_interventions=3))
