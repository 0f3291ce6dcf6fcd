import pytest

from gaussmart import (
    brownian_family,
    calibrate,
    compound_family,
    gamma_family,
    poisson_family,
)


@pytest.fixture(scope="session")
def poisson_fam():
    return calibrate(poisson_family())


@pytest.fixture(scope="session")
def gamma_fam():
    return calibrate(gamma_family(b=1.0))


@pytest.fixture(scope="session")
def compound_fam():
    return calibrate(compound_family([(0.5, 1.0), (2.0, 0.25)]))


@pytest.fixture(scope="session")
def brownian_fam():
    return brownian_family()
