import numpy as np
import pytest

from fracsobolev import build_problem, build_spectrum, build_true_function
from fracsobolev import experiments as ex

# criterion id -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict = {}


@pytest.fixture(scope="session")
def fredholm500():
    return build_problem(500)


@pytest.fixture(scope="session")
def practical_setup():
    config = ex.PracticalConfig()
    problem, spec, tf = ex._practical_setup(config)
    return config, problem, spec, tf


@pytest.fixture(scope="session")
def exp_spectrum():
    return build_spectrum("exponential", 1.5, 200)


@pytest.fixture(scope="session")
def smooth_truth(exp_spectrum):
    return build_true_function(exp_spectrum, 1.2, signs=np.ones(exp_spectrum.N))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: (int(k.split("-")[0]), k)):
        passed, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
