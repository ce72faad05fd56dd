import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pdduq.models import Example1, SpringMassSystem
from pdduq.quadrature import FullGridEngine

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def ex1():
    return Example1(5)


@pytest.fixture(scope="session")
def ex1_engine(ex1):
    # 8 Gauss-Legendre points integrate degree 15 exactly: coefficients are exact up to order 8
    return FullGridEngine(ex1, ex1.random_input(), n_points=8, max_order=8)


@pytest.fixture(scope="session")
def spring_mass():
    return SpringMassSystem()


@pytest.fixture(scope="session")
def ex2_engine(spring_mass):
    return FullGridEngine(spring_mass, spring_mass.random_input(), n_points=5, max_order=8)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(12345))


@pytest.fixture(scope="session")
def ex2_runs(ex2_engine):
    """Trivariate adaptive runs per (ranking scheme, eigenvalue index)."""
    from pdduq.adaptive import AdaptiveConfig, run_adaptive

    runs = {}
    for ranking in ("full", "reduced"):
        cfg = AdaptiveConfig(S=3, eps1=1e-6, eps2=1e-6, eps3=0.7, ranking=ranking)
        for k in range(3):
            runs[ranking, k] = run_adaptive(ex2_engine, cfg, output=k)
    return runs
