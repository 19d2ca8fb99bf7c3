"""Shared fixtures and the ``--runslow`` switch."""

import pytest

from src.matrixfree import build_problem
from src.models import GeometryKind

# model parameters of a typical numerical weather prediction run
OMEGA2 = 6.71e-4
LAMBDA2 = 3.32e-2
H_ATMOS = 0.01


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run the full-size convergence tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size run, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def make_ctx():
    """Factory for operator contexts with the default model parameters."""

    def _make(m, n_z, kind=GeometryKind.CUBED_SPHERE, omega2=OMEGA2, lambda2=LAMBDA2,
              h_atmos=H_ATMOS, extent=2.0):
        return build_problem(kind, m, n_z, h_atmos, omega2, lambda2, extent)

    return _make


@pytest.fixture(params=list(GeometryKind), ids=lambda k: k.value)
def geometry_kind(request):
    return request.param
