import numpy as np
import pytest

from ssadt.model import TestPlan, case_study_config


@pytest.fixture(scope="session")
def cfg():
    return case_study_config()


@pytest.fixture(scope="session")
def theta(cfg):
    return cfg.params


@pytest.fixture(scope="session")
def stress(cfg):
    return cfg.stress


@pytest.fixture(scope="session")
def opt_plan(cfg):
    return TestPlan(13, 52, 7, 0.0502, cfg.D)


@pytest.fixture(scope="session")
def stab_plans(cfg):
    return [TestPlan(13, 52, 7, 0.0502, cfg.D), TestPlan(13, 62, 6, 0.0818, cfg.D),
            TestPlan(13, 204, 2, 0.6181, cfg.D)]


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Per-criterion summary lines, printed at the end of the session."""
    return request.config.stash.setdefault(ACCEPTANCE, {})


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
