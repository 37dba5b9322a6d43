import numpy as np
import pytest
from hypothesis import settings

from gdm.mesh import build_unit_square
from gdm.problem import BoundaryCondition, ProblemSpec

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def square8():
    return build_unit_square(8)


@pytest.fixture
def dirichlet_spec():
    return ProblemSpec(BoundaryCondition.dirichlet())
