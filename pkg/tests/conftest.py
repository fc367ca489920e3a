import numpy as np
import pytest

from dddflow import elasticity as EL
from dddflow import kernels as KN
from dddflow import shapes as SH
from dddflow.energy_force import LineQuadratureRule


@pytest.fixture(scope="session")
def lat():
    return SH.cubic_lattice()


@pytest.fixture(scope="session")
def iso11():
    return EL.make_isotropic(1.0, 1.0)


@pytest.fixture(scope="session")
def ev_unit(iso11):
    """Default evaluator at eps = 1."""
    return KN.KernelEvaluator(iso11, KN.MollifierProfile(1.0))


@pytest.fixture(scope="session")
def ev_quarter(iso11):
    """Default evaluator at eps = 0.25."""
    return KN.KernelEvaluator(iso11, KN.MollifierProfile(0.25))


@pytest.fixture(scope="session")
def rule4():
    return LineQuadratureRule(4)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
