import numpy as np
import pytest

from compactmarkov import funnel, lazy, paper_bd, paper_bd_truncated, swap


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def s2():
    return swap()


@pytest.fixture
def bd07():
    return paper_bd(0.7)


@pytest.fixture
def fun():
    return funnel(0.2, 50)


@pytest.fixture
def l_half():
    return lazy(0.5)


@pytest.fixture
def bd07_200():
    return paper_bd_truncated(0.7, 200)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
