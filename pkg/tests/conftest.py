import time

import pytest
from hypothesis import settings

from ljchain import iid, homogeneous, twelve_six

settings.register_profile("invariants", max_examples=1000, deadline=None, derandomize=True)

ACCEPTANCE_LINES = []
RUNTIME_BUDGET_S = 300.0
_START = time.perf_counter()


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    elapsed = time.perf_counter() - _START
    if ACCEPTANCE_LINES or elapsed > 0:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
        ok = elapsed < RUNTIME_BUDGET_S
        terminalreporter.write_line(
            f"ACCEPTANCE 9 (runtime): {'PASS' if ok else 'FAIL'} total test time {elapsed:.1f}s "
            f"(budget {RUNTIME_BUDGET_S:.0f}s)"
        )


def pytest_sessionfinish(session, exitstatus):
    if time.perf_counter() - _START > RUNTIME_BUDGET_S and exitstatus == 0:
        session.exitstatus = 1


@pytest.fixture(scope="session")
def lj():
    return twelve_six(1.0, 1.0, "lj")


@pytest.fixture(scope="session")
def homogeneous_lj(lj):
    return homogeneous(lj)


@pytest.fixture(scope="session")
def two_stiffness():
    return iid([twelve_six(1.0, 1.0, "stiff"), twelve_six(0.5, 1.0, "soft")], [0.5, 0.5])


@pytest.fixture(scope="session")
def strong_weak():
    return iid([twelve_six(1.0, 1.0, "strong"), twelve_six(0.4, 1.0, "weak")], [0.5, 0.5])
