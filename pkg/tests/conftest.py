import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from finslercomp import models, randers

settings.register_profile(
    "repo",
    deadline=None,
    max_examples=30,
    derandomize=True,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")


@pytest.fixture(scope="session")
def sphere():
    return models.round_sphere(2)


@pytest.fixture(scope="session")
def stereo():
    return models.stereographic_sphere(2)


@pytest.fixture(scope="session")
def euclid2():
    return models.euclidean(2)


@pytest.fixture(scope="session")
def wave():
    return randers.randers_wave(0.25)


@pytest.fixture(scope="session")
def flat_randers3():
    return randers.randers_flat([0.5, 0.0, 0.0])


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


# one summary line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {key}: {detail}")
