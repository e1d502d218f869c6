"""Shared fixtures, including the expensive closed-loop case-study runs.

The two bundled scenarios are executed once per session and shared by the
acceptance tests and any module test that wants a realistic trace.
"""

import time

import numpy as np
import pytest

from sacbf.scenario import load_bundled, parse_scenario
from sacbf.simulate import run_scenario

CASE1_HEADINGS = (0.0, np.pi / 12, np.pi / 6, np.pi / 2)


@pytest.fixture(scope="session")
def case1_config():
    return parse_scenario(load_bundled("case1.cfg"))


@pytest.fixture(scope="session")
def case2_config():
    return parse_scenario(load_bundled("case2.cfg"))


@pytest.fixture(scope="session")
def case1_matrix(case1_config):
    """All (controller, heading) closed-loop runs of the first case study.

    Maps (controller, heading) -> (trace, wall_seconds).
    """
    from dataclasses import replace

    runs = {}
    for controller in ("hocbf", "sacbf", "r_sacbf"):
        for heading in CASE1_HEADINGS:
            config = replace(case1_config,
                             controller=controller).with_heading(heading)
            start = time.perf_counter()
            trace = run_scenario(config)
            runs[(controller, heading)] = (trace,
                                           time.perf_counter() - start)
    return runs


@pytest.fixture(scope="session")
def case2_trace(case2_config):
    """The 22 s relaxed run of the second case study."""
    return run_scenario(case2_config)
