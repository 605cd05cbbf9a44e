import sys

import numpy as np
import pytest

from flipgen.game import FlipItSpec, original_game


def one_node(rounds: int = 1) -> FlipItSpec:
    return FlipItSpec.original([4.0], [2.0], rounds, name="one-node")


def small_fixtures() -> list[FlipItSpec]:
    """Games with at most three nodes and two rounds."""
    g3 = np.array([[0, 0.6, 0.2], [0.6, 0, 0.9], [0.2, 0.9, 0]])
    g3_full = np.array([[0, 0.3, 0.5], [0.3, 0, 0.4], [0.5, 0.4, 0]])
    return [
        one_node(1),
        one_node(2),
        FlipItSpec.original([2.0, 2.0], [1.0, 1.0], 2, name="sym2"),
        FlipItSpec.original([3.0, 1.0, 2.0], [2.0, 0.5, 1.0], 2, name="orig3"),
        FlipItSpec.original([1.0, 5.0, 2.0], [0.0, 4.0, 1.5], 1, name="orig3-t1"),
        FlipItSpec.graph([[0, 0.7], [0.7, 0]], [0.0, 1.0], 0.5, 2, name="graph2"),
        FlipItSpec.graph(g3.tolist(), [0.0, 0.4, 0.6], 0.5, 2, name="graph3-sparse"),
        FlipItSpec.graph(g3_full.tolist(), [0.0, 0.7, 0.3], 0.0, 2, name="graph3-full"),
    ]


@pytest.fixture
def original():
    return original_game()


@pytest.fixture(params=small_fixtures(), ids=lambda s: s.name)
def small(request):
    return request.param


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(module.RESULTS):
        terminalreporter.write_line(module.format_line(number))
