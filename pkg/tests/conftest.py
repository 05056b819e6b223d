import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

from oracles import energy_densities  # noqa: E402

from anisoflow import flow as fl  # noqa: E402
from anisoflow import reference_frame as rf  # noqa: E402

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []

SMALL_SIDE = 0.15
RUN_N = 128
RUN_DT = 2e-4
RUN_STEPS = 1000


def small_triangle():
    return SMALL_SIDE * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])


@pytest.fixture(scope="session")
def densities():
    return energy_densities()


@pytest.fixture(scope="session")
def unit_frames(densities):
    from oracles import EQUILATERAL
    return {k: rf.minimize(EQUILATERAL, v) for k, v in densities.items()}


@pytest.fixture(scope="session")
def converging_runs(densities):
    """Parametric runs from a 2 percent sine perturbation of a small triangle."""
    out = {}
    for name, phi_polar in densities.items():
        frame = rf.minimize(small_triangle(), phi_polar)
        h0 = rf.sine_perturbation(frame, RUN_N, 0.02, (1, 2, 3), seed=0)
        state = fl.FlowState(0.0, rf.reconstruct(frame, h0), frame, None)
        traj = fl.run_flow(state, RUN_STEPS * RUN_DT, RUN_DT, mode="parametric",
                           snapshot_stride=1)
        out[name] = (frame, h0, traj)
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
