import math

import numpy as np
import pytest

from inviscid_lab.fields import Grid


def observed_orders(errors):
    """log2 ratios of successive errors under grid halving."""
    return [math.log2(a / b) for a, b in zip(errors[:-1], errors[1:])]


@pytest.fixture
def unit_strip():
    return Grid(64, 65, height_x2=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    """Store the PASS/FAIL line for one acceptance criterion and echo it."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
