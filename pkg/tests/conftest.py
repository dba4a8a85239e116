import csv

import numpy as np
import pytest

import hypersep
from hypersep.engine import SeparationConfig, SeparationState
from hypersep.geometry import Hyperplane, Point


def random_points(N, n, seed, lo=-1000, hi=1000, integer=True):
    rng = np.random.default_rng(seed)
    if integer:
        X = rng.integers(lo, hi, size=(N, n)).astype(float)
    else:
        X = rng.uniform(lo, hi, size=(N, n))
    return [Point(i, X[i]) for i in range(N)]


def worked_example():
    with hypersep.worked_example_path().open() as fh:
        rows = list(csv.DictReader(fh))
    return [Point(int(r["id"]), np.array([float(r["x1"]), float(r["x2"])]), r["label"]) for r in rows]


def stage_one():
    """Two axis-style start planes and three seed points, one per class."""
    planes = [Hyperplane(1.0, [-0.2, 0.0], index=0), Hyperplane(1.0, [0.0, -0.2], index=1)]
    seeds = [Point(1, [3.0, 2.0], "a"), Point(2, [2.0, 8.0], "b"), Point(3, [8.0, 2.0], "c")]
    state = SeparationState(2, SeparationConfig(seed=0))
    state.bootstrap(seeds, planes=planes)
    return state


@pytest.fixture
def stage1():
    return stage_one()


@pytest.fixture
def example_points():
    return worked_example()


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
