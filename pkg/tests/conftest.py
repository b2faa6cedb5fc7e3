import pytest

from hjbhomog.control_model import make_problem
from hjbhomog.grid import PeriodicGrid


@pytest.fixture(scope="session")
def oned():
    return make_problem("oned_example")


@pytest.fixture(scope="session")
def identical():
    return make_problem("identical_sides")


@pytest.fixture(scope="session")
def cell_grid(oned):
    return PeriodicGrid.aligned(oned.partition, 400)
