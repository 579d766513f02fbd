import numpy as np
import pytest

from objaug.limb_dynamics import load_limb
from objaug.synth import load_grasp
from objaug.virtual_object import builtin_objects

PALM = 0.03

# acceptance lines collected by test_acceptance.py and echoed after the run
ACCEPTANCE = {}


def record_acceptance(key, ok, detail):
    ACCEPTANCE[key] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def limb():
    return load_limb("default_4dof")


@pytest.fixture(scope="session")
def grasp():
    return load_grasp("default")


@pytest.fixture(scope="session")
def objects():
    return builtin_objects(PALM)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
