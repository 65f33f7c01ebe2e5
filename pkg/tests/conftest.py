import math

import pytest

from hyperflow.spectral import Grid


@pytest.fixture
def torus1():
    return Grid(1, 64, 2 * math.pi)


@pytest.fixture
def torus3():
    return Grid(3, 16, 2 * math.pi)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
