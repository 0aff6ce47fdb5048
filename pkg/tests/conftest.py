import numpy as np
import pytest

from mvsubexp import scalar_laws as sl
from mvsubexp.mc_core import EngineConfig
from mvsubexp.rare_sets import make_halfspace_set, make_orthant_exceedance_set
from mvsubexp.vector_laws import Independent


@pytest.fixture
def pareto_pair():
    return Independent((sl.Pareto(2.0, 1.0), sl.Pareto(2.0, 1.0)))


@pytest.fixture
def half():
    return make_halfspace_set([0.5, 0.5], 1.0)


@pytest.fixture
def orthant11():
    return make_orthant_exceedance_set([1.0, 1.0])


@pytest.fixture
def small_engine():
    return EngineConfig(seed=4242, budget=60_000)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line; the lines are echoed again in the terminal summary."""

    def record(criterion: int, title: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'} [{criterion:2d}] {title}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
