import numpy as np
import pytest

from thinlayer.geometry import build_surface_mesh, make_chart

PI = np.pi


@pytest.fixture(scope="session")
def square_mesh():
    """[0, pi]^2, 32 x 32."""
    return build_surface_mesh(make_chart("plane", {"a1": 0, "b1": PI, "a2": 0, "b2": PI}, (32, 32)))


@pytest.fixture(scope="session")
def unit_plane():
    return build_surface_mesh(make_chart("plane", {}, (8, 8)))


@pytest.fixture(scope="session")
def sphere_band():
    return build_surface_mesh(make_chart("sphere_cap", {}, (32, 32)))


@pytest.fixture(scope="session")
def polar_cap():
    return build_surface_mesh(make_chart("sphere_cap", {"kind": "gnomonic"}, (32, 32)))


@pytest.fixture(scope="session")
def cylinder():
    return build_surface_mesh(make_chart("cylinder", {"R": 2.0}, (32, 32)))


@pytest.fixture(scope="session")
def torus():
    return build_surface_mesh(make_chart("torus", {"R": 2.0, "r": 0.5}, (48, 48)))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
