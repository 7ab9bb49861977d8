import pytest

from nlslab.field import RadialGrid
from nlslab.nonlinearity import NonlinearitySpec
from nlslab.variational import shoot_ground_state


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="acceptance-scale run; use --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def spec_d5():
    return NonlinearitySpec.from_terms(5, [(1.0, 2.0)])


@pytest.fixture(scope="session")
def spec_d4():
    return NonlinearitySpec.from_terms(4, [(1.0, 2.5)])


@pytest.fixture(scope="session")
def grid_d5():
    return RadialGrid.graded(5, 4096, 60.0, r_core=5.0, core_fraction=0.75)


@pytest.fixture(scope="session")
def ground_d5(spec_d5, grid_d5):
    return shoot_ground_state(spec_d5, 1.0, grid=grid_d5)


@pytest.fixture(scope="session")
def ground_d4(spec_d4):
    return shoot_ground_state(spec_d4, 1.0)
