"""Shared fixtures: seeded random models and cached case-study runs."""

from __future__ import annotations

import numpy as np
import pytest

from nullfdi import lti
from nullfdi.lti import StateSpaceModel
from nullfdi.verification import random_stable_matrix


def random_stable_model(seed: int, n: int, p: int, m: int, strictly_proper: bool = False
                        ) -> StateSpaceModel:
    rng = np.random.default_rng(seed)
    d = np.zeros((p, m)) if strictly_proper else rng.standard_normal((p, m))
    return StateSpaceModel(random_stable_matrix(rng, n), rng.standard_normal((n, m)),
                           rng.standard_normal((p, n)), d)


def grid_points(n_random: int = 10, seed: int = 3) -> np.ndarray:
    return lti.FrequencyGrid.standard(n_random=n_random, seed=seed).all()


@pytest.fixture(scope="session")
def case_study_1khz():
    from nullfdi.wafer import run_case_study
    return run_case_study(7, mismatch=0.0, rate_hz=1000.0)


@pytest.fixture(scope="session")
def case_study_1khz_mismatch():
    from nullfdi.wafer import run_case_study
    return run_case_study(7, mismatch=2.0, rate_hz=1000.0)


GATE_LINES: list[str] = []


def gate(criterion: int, passed: bool, detail: str) -> bool:
    """Record and print one acceptance line; returns ``passed`` for asserting."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {criterion}: {detail}"
    GATE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if GATE_LINES:
        terminalreporter.section("acceptance gate")
        for line in GATE_LINES:
            terminalreporter.write_line(line)
