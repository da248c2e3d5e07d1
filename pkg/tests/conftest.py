import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from steklov import generate_disk, generate_rectangle

# Numerics per example are not cheap; keep hypothesis off the default 100
# and disable deadlines (sparse factorizations have noisy timing).
settings.register_profile(
    "default",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def disk_coarse():
    return generate_disk(0.3)


@pytest.fixture(scope="session")
def disk_fine():
    return generate_disk(0.1)


@pytest.fixture(scope="session")
def square_tiny():
    # 16 vertices, 8 boundary edges: small enough for brute-force oracles.
    return generate_rectangle(1.0, 1.0, 0.34)


@pytest.fixture(scope="session")
def rect_small():
    return generate_rectangle(2.0, 1.0, 0.4)


@pytest.fixture(scope="session")
def octagon_boundary_mesh():
    # Tiny disk-kind mesh whose 12-edge boundary keeps LP enumeration exact.
    return generate_disk(0.524)


def pytest_addoption(parser):
    parser.addoption(
        "--skip-slow",
        action="store_true",
        default=False,
        help="skip the acceptance-scale tests",
    )


def pytest_collection_modifyitems(config, items):
    if not config.getoption("--skip-slow"):
        return
    marker = pytest.mark.skip(reason="--skip-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(marker)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale runtime")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
