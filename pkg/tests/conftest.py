"""Pytest configuration and fixtures for surfpinn tests."""
import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root and src to Python path
project_root = Path(__file__).parent.parent
src_dir = project_root / 'src'
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(src_dir))

os.environ['PYTHONPATH'] = f"{src_dir}:{os.environ.get('PYTHONPATH', '')}"

from surfpinn.geometry import get_surface  # noqa: E402
from surfpinn.net import xavier_init  # noqa: E402
from surfpinn.pde import manufactured_problem  # noqa: E402
from surfpinn.sampling import minimum_energy_points, random_surface_points  # noqa: E402


@pytest.fixture
def sphere():
    """Unit sphere."""
    return get_surface("sphere")


@pytest.fixture
def torus():
    return get_surface("torus")


@pytest.fixture(scope="session")
def sphere_points():
    """100 quasi-uniform points on the unit sphere."""
    return minimum_energy_points(get_surface("sphere"), 100, seed=0, iters=50)


@pytest.fixture(scope="session")
def torus_points():
    return random_surface_points(get_surface("torus"), 40, seed=2)


@pytest.fixture
def tiny_params():
    """A small tanh network [3, 8, 8, 1]."""
    return xavier_init([3, 8, 8, 1], seed=0)


@pytest.fixture
def example1():
    return manufactured_problem("example1", "sphere")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def isolated_env(monkeypatch, tmp_path):
    """Keep SURFPINN_* settings from the developer's environment out of tests."""
    for name in list(os.environ):
        if name.startswith("SURFPINN_"):
            monkeypatch.delenv(name)
    monkeypatch.chdir(tmp_path)
