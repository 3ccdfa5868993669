import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from netpricing.equilibrium import Market
from netpricing.network import Network, build_topology
from netpricing.utility import UtilityModel

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def lq_market(g, delta, a=3.0, b=1.0, domain=(0.0, 10.0)):
    return Market.homogeneous(Network(np.asarray(g, dtype=float), delta), UtilityModel.lq(), a, b, domain)


def random_market(rng, n=None, family=None, both=True):
    """Random small market where (by default) both uniqueness conditions hold."""
    n = n or int(rng.integers(2, 9))
    fams = [
        (UtilityModel.lq(), (0.0, 5.0)),
        (UtilityModel.discrete_choice(), (0.05, 0.95)),
        (UtilityModel.power(float(rng.uniform(0.3, 1.0))), (0.05, 1.0)),
        (UtilityModel.exponential(0.5), (0.0, 2.0)),
        (UtilityModel.stone_geary(1.0, 0.1), (0.5, 3.0)),
    ]
    model, dom = fams[int(rng.integers(len(fams)))] if family is None else family
    g = rng.uniform(-1, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    np.fill_diagonal(g, 0.0)
    mu = model.mu_floor(dom)
    scale = max(np.abs(g).sum(axis=1).max(), 1e-12)
    # Gershgorin-safe delta keeps both conditions
    delta = float(rng.uniform(0.1, 0.8)) * mu / scale if both else 1.0
    a = rng.uniform(0.5, 2.0, n)
    b = rng.uniform(0.5, 1.5, n)
    return Market.homogeneous(Network(g, delta), model, a, b, dom)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def circular20():
    return build_topology({"kind": "circular", "n": 20, "w": 0.08, "flip": 0.1, "delta": 0.5}, seed=0)


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
