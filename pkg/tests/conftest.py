import math

import numpy as np
import pytest

from lorentzcv.grid import make_grid
from lorentzcv.states import StateParams, default_extent, regularized_eigenstate


@pytest.fixture(scope="session")
def grid512():
    return make_grid(512, 8.0)


@pytest.fixture(scope="session")
def grid256():
    return make_grid(256, 8.0)


@pytest.fixture(scope="session")
def eigen():
    """Cached regularized eigenstates on their default grids."""
    cache = {}

    def get(lam, a=1.0, branch="polar", n=512, mu=1.0, rotated=False):
        key = (lam, a, branch, n, mu, rotated)
        if key not in cache:
            g = make_grid(n, default_extent(a, mu, rotated))
            cache[key] = regularized_eigenstate(StateParams(lam, a, branch), g)
        return cache[key]

    return get


@pytest.fixture
def criterion(capsys):
    """Print one PASS/FAIL line per acceptance criterion, then assert it."""

    def check(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"

    return check


def gaussian_1d(q, q0=0.0):
    return np.pi**-0.25 * np.exp(-((q - q0) ** 2) / 2)


SQRT2 = math.sqrt(2.0)
