import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qmpc.model import ContinuousDynamics, DiscreteModel
from qmpc.polyalg import PolyVec, basis_build

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def poly_model(n_x, n_u, terms, T_d=1.0, degree=None):
    """Discrete model from ``(row, exponents, coeff)`` terms over ``(x, u)``."""
    degree = degree or max([sum(e) for _, e, _ in terms] + [1])
    f = PolyVec.from_terms(n_x, basis_build(n_x + n_u, degree), terms)
    return DiscreteModel(f, n_x, n_u, T_d)


def poly_field(n_x, n_u, terms):
    degree = max([sum(e) for _, e, _ in terms] + [1])
    return ContinuousDynamics(PolyVec.from_terms(n_x, basis_build(n_x + n_u, degree), terms), n_x, n_u)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
