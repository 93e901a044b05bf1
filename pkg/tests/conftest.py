"""
Shared fixtures for the Rellich lab tests
"""

import numpy as np
import pytest
from hypothesis import settings

from src.rellich.fields import FamilyParams, make_field
from src.rellich.quadrature import QuadratureSettings

settings.register_profile("lab", derandomize=True, deadline=None, max_examples=40)
settings.load_profile("lab")


def field(family, n=5, **values):
    return make_field(FamilyParams.of(family, n, **values))


@pytest.fixture
def gaussian():
    return field("GaussianRadial", sigma=1.0)


@pytest.fixture
def solid():
    return field("SolidGaussian", axis=1)


@pytest.fixture
def quadrature():
    return QuadratureSettings()


@pytest.fixture
def points():
    rng = np.random.default_rng(2024)
    x = rng.standard_normal((64, 5))
    return x / np.linalg.norm(x, axis=1, keepdims=True) * rng.uniform(0.3, 3.0, 64)[:, None]
