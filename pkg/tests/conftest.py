import numpy as np
import pytest

from src.constitutive import ConstitutiveRelation
from src.hydrostatics import HalfSpaceGrid, ideal_gas_profile


@pytest.fixture
def ideal_gas():
    return ConstitutiveRelation.ideal_gas("ideal-gas-C", 1.0)


@pytest.fixture
def ideal_gas_2c():
    return ConstitutiveRelation.ideal_gas("ideal-gas-2C", 2.0)


@pytest.fixture
def quadratic():
    """h = 2 - 3 phi + phi^2, roots phi = 1 and phi = 2."""
    return ConstitutiveRelation.implicit_euler("quadratic", alpha1="2", alpha2="3", alpha4="1")


@pytest.fixture
def linear_phi():
    return ConstitutiveRelation.implicit_euler(
        "linear-phi", {"A": 1.0, "K": 1.0}, alpha1="A*phi*rho/K", alpha2="A*rho/K"
    )


@pytest.fixture
def quadratic_phi():
    return ConstitutiveRelation.implicit_euler(
        "quadratic-phi", {"A": 1.0, "K": 1.0}, alpha1="A*phi^2*rho/K", alpha2="A*phi*rho/K"
    )


@pytest.fixture
def kinked():
    """Matches the C = 1 ideal gas for rho >= 0.9 only."""
    return ConstitutiveRelation.implicit_euler("kinked", alpha1="rho + (abs(rho - 0.9) - (rho - 0.9))", alpha2="1")


@pytest.fixture
def four_candidates(ideal_gas, ideal_gas_2c, linear_phi, quadratic_phi):
    return [ideal_gas, ideal_gas_2c, linear_phi, quadratic_phi]


@pytest.fixture
def small_grid():
    return HalfSpaceGrid(-5.0, 1001, 1.0)


@pytest.fixture
def ideal_gas_solution(small_grid):
    return ideal_gas_profile(1.0, 1.0, small_grid)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
