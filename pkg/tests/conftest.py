import random

import pytest

from pspos import ps


@pytest.fixture(scope="session")
def small_keys():
    """A key pair small enough to copy freely (l = 959, k = 7)."""
    return ps.setup(100, 0.01, rng=random.Random(1234))


@pytest.fixture
def keys(small_keys):
    sk, vk = small_keys
    return sk.copy(), vk


@pytest.fixture
def rng():
    return random.Random(99)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE].append(line)
        print(line)
        assert ok, line

    return record
