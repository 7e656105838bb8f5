from __future__ import annotations

import pytest

from fluctlab import norming
from fluctlab.walk_core import lazy_walk, simple_walk, skewed_walk

NORMING_DEPTH = 200_000


@pytest.fixture(scope="session")
def simple():
    return simple_walk()


@pytest.fixture(scope="session")
def lazy():
    return lazy_walk()


@pytest.fixture(scope="session")
def skewed():
    return skewed_walk()


@pytest.fixture(scope="session", params=["simple", "lazy", "skewed"])
def shipped(request):
    return {"simple": simple_walk, "lazy": lazy_walk, "skewed": skewed_walk}[request.param]()


@pytest.fixture(scope="session")
def simple_norming(simple):
    return norming.build_norming(simple, NORMING_DEPTH)


@pytest.fixture(scope="session")
def simple_norming_extrap(simple_norming):
    return norming.with_tail(simple_norming, "extrapolate")


_ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Record (criterion, passed, detail); printed in the terminal summary."""

    def record(num: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE.append((num, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
