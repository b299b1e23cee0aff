import numpy as np
import pytest

from topoloss.complex_core import PointCloud
from topoloss.datasets import generate_nested_circles
from topoloss.model import DenseNetwork
from topoloss.persistence import PersistenceDiagram, PersistencePoint


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def collinear_cloud():
    return PointCloud([[0.0], [1.0], [3.0]])


@pytest.fixture
def unit_square():
    return PointCloud([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


@pytest.fixture
def small_circles():
    cloud, labels = generate_nested_circles(n_per_circle=8, noise=0.02, seed=3)
    return cloud, labels


@pytest.fixture
def small_network():
    def build(d_in=3, seed=0, hidden=(8, 8, 8), d_out=2):
        return DenseNetwork((d_in, *hidden, d_out), seed=seed)

    return build


def diagram_of(points, dim=0):
    """Finite diagram from (birth, death) pairs with made-up simplex ids."""
    return PersistenceDiagram(
        tuple(
            PersistencePoint(dim, float(b), float(d), birth_simplex=i, death_simplex=100 + i)
            for i, (b, d) in enumerate(points)
        )
    )


@pytest.fixture
def make_diagram():
    return diagram_of


def random_diagram(rng, size, dim=0, scale=1.0):
    births = rng.uniform(0.0, scale, size=size)
    deaths = births + rng.uniform(0.01, scale, size=size)
    return diagram_of(list(zip(births, deaths)), dim)


@pytest.fixture
def make_random_diagram():
    return random_diagram
