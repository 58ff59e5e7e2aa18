import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fuseqa.taxonomy import flat_nomenclature, load_nomenclature

settings.register_profile("repo", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def five():
    return flat_nomenclature(["pastures", "vineyards", "beaches", "water bodies", "arable land"])


@pytest.fixture
def tree():
    # two roots, one three-level branch
    return load_nomenclature([
        {"name": "wetlands", "level": 1, "parent_name": None},
        {"name": "inland wetlands", "level": 2, "parent_name": "wetlands"},
        {"name": "peatbogs", "level": 3, "parent_name": "inland wetlands"},
        {"name": "inland marshes", "level": 3, "parent_name": "inland wetlands"},
        {"name": "forests", "level": 1, "parent_name": None},
        {"name": "mixed forest", "level": 2, "parent_name": "forests"},
    ])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
