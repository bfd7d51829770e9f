import math
import sys

import pytest

from ltvcommute.model import LtvSystem, SwitchingSignal, apply_switching

SQRT2 = math.sqrt(2.0)


def example1():
    return LtvSystem.second_order("0.5*t^2", "t + 1", "1/(2*t^2)", name="A")


def example2_signal():
    return SwitchingSignal.from_starts([0, 1, 3, 4.5], [0, 10, 0, 10])


def example2():
    sig = example2_signal()
    return LtvSystem.second_order(1, apply_switching((-1, 1), sig), apply_switching((-2, 2), sig), name="A")


def example3():
    # sigma(t - 1) with sigma stepping 0 -> 3 at 0
    sig = SwitchingSignal.from_starts([0, 1], [0, 3])
    return LtvSystem.second_order(1, apply_switching((-1, 3), sig), apply_switching((-1, 6), sig), name="A")


@pytest.fixture
def ex1():
    return example1()


@pytest.fixture
def ex2():
    return example2()


@pytest.fixture
def ex3():
    return example3()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.result_lines():
        terminalreporter.write_line(line)
