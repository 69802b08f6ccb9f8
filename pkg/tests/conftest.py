from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from mlzseries.model import MlzModel, couplings_from_upper, new_model

DATA = Path(__file__).parent / "data"

# criterion id -> (description, passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[str, tuple[str, bool, str]] = {}


def fig2_model(g: float = 1.0) -> MlzModel:
    return new_model([2.0, 0.0, -1.0], couplings_from_upper(3, [1.0, 1.5, 1.8]), g, "fig2")


def lz_model(lam: float = 1.0) -> MlzModel:
    """Two levels with slopes (1, -1) and lambda_12 = lam."""
    a = lam * math.sqrt(2 / math.pi)
    return new_model([1.0, -1.0], [[0.0, a], [a, 0.0]], 1.0, "lz")


def four_state_model() -> MlzModel:
    return new_model([3.0, 1.0, -0.5, -2.0], couplings_from_upper(4, [0.8, 0.5, 0.3, 0.9, 0.6, 0.7]), 1.0, "4-state")


def five_state_model(b1=1.0, b2=2.5, a12=0.7, a13=0.5, a14=0.4) -> MlzModel:
    """The chain model given with unsorted slopes (-b1, -b2, 0, b2, b1), b2 > b1 > 0."""
    A = np.array(
        [
            [0, a12, a13, a14, 0],
            [a12, 0, 0, 0, -a14],
            [a13, 0, 0, 0, -a13],
            [a14, 0, 0, 0, -a12],
            [0, -a14, -a13, -a12, 0],
        ],
        dtype=float,
    )
    return new_model([-b1, -b2, 0.0, b2, b1], A, 1.0, "5-state")


def random_model(rng: np.random.Generator, n: int, shuffle: bool = False) -> MlzModel:
    """Slopes at least 0.5 apart, couplings of order one."""
    gaps = rng.uniform(0.5, 1.5, n - 1)
    b = np.concatenate([[0.0], -np.cumsum(gaps)])
    b -= b.mean()
    A = np.triu(rng.uniform(-1, 1, (n, n)), 1)
    A = A + A.T
    if shuffle:
        p = rng.permutation(n)
        b, A = b[p], A[np.ix_(p, p)]
    return new_model(b, A, 1.0, f"random-{n}")


def random_lambda(rng: np.random.Generator, n: int) -> np.ndarray:
    L = np.triu(rng.normal(size=(n, n)), 1)
    return L + L.T


@pytest.fixture
def fig2():
    return fig2_model()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda s: (int(s.rstrip("abcd")), s)):
        desc, ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {desc} -- {detail}")
