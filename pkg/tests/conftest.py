import math

import numpy as np
import pytest

from metalattice import build_lattice, get_lattice

CATALOG = ("kagome", "rotating-squares", "square", "square-long-range")


def ghost_square_raw() -> dict:
    """Unit square lattice whose cell is split into four triangles around a ghost centre."""
    O, A, B, C = [0, [0, 0]], [0, [1, 0]], [0, [0, 1]], [0, [1, 1]]
    return {
        "name": "ghost-square",
        "dimension": 2,
        "cell_vectors": [[1.0, 0.0], [0.0, 1.0]],
        "nodes": [[0.0, 0.0]],
        "springs": [{"endpoints": [O, A]}, {"endpoints": [O, B]}],
        "ghosts": {"g": {"sources": [[O, 0.25], [A, 0.25], [B, 0.25], [C, 0.25]]}},
        "triangles": [[O, A, "g"], [A, C, "g"], [C, B, "g"], [B, O, "g"]],
        "penalty_triangles": [0, 1, 2, 3],
    }


@pytest.fixture(scope="session")
def ghost_square():
    return build_lattice(ghost_square_raw())


@pytest.fixture(params=CATALOG)
def catalog_spec(request):
    return get_lattice(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng) -> np.ndarray:
    t = rng.uniform(-math.pi, math.pi)
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
