import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def brute_cells(white):
    """Distinct closed-cell faces of the union of white cubes/squares.

    Each element at index p covers the doubled-lattice points 2p + {0,1,2}^d;
    a point's dimension is its number of odd coordinates. Returns counts by
    descending dimension, matching CellCounts ordering.
    """
    white = np.asarray(white, dtype=bool)
    d = white.ndim
    cells = set()
    for p in np.argwhere(white):
        for off in itertools.product((0, 1, 2), repeat=d):
            cells.add(tuple(2 * p + np.array(off)))
    counts = [0] * (d + 1)
    for c in cells:
        counts[d - sum(v % 2 for v in c)] += 1
    return tuple(counts)


def random_volume(rng, shape, fraction):
    return rng.random(shape) < fraction


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, name, seconds, limit, note = ACCEPTANCE[n]
        line = f"[{status}] criterion {n:2d}: {name} ({seconds:.2f} s, limit {limit:g} s)"
        terminalreporter.write_line(line + (f" {note}" if note else ""))
