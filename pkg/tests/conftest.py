import pytest
from hypothesis import settings

from grantfree.params import ChannelParams, SystemParams

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES = []


def record_criterion(number, name, ok, detail):
    """Log one acceptance line; printed in the terminal summary."""
    ACCEPTANCE_LINES.append(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def ch():
    return ChannelParams()


@pytest.fixture
def base_sys():
    return SystemParams(40, 48, 5.0)
