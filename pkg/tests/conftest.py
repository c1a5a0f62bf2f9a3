import numpy as np
import pytest

from boltzgap.kernels import hard_sphere_kernel
from boltzgap.linearized import assemble_gaussian_operator
from boltzgap.spectral import eigendecompose_gaussian
from boltzgap.velocity_space import SphereQuadrature, VelocityGrid


@pytest.fixture(scope="session")
def kernel2():
    return hard_sphere_kernel(2)


@pytest.fixture(scope="session")
def grid2():
    return VelocityGrid(2, 5.0, 21)


@pytest.fixture(scope="session")
def circle32():
    return SphereQuadrature(2, n_azimuth=32)


@pytest.fixture(scope="session")
def op2(grid2, kernel2, circle32):
    return assemble_gaussian_operator(grid2, kernel2, circle32)


@pytest.fixture(scope="session")
def rep2(op2):
    return eigendecompose_gaussian(op2)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)
