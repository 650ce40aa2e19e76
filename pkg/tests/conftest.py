import numpy as np
import pytest

from sctorus import (
    SelfConsistentConfig,
    TorusDensity,
    default_cat_map,
    example_separable_coupling,
    zero_coupling,
)
from sctorus.meanfield import base_operator


@pytest.fixture(scope="session")
def cat_map():
    return default_cat_map(0.0)


@pytest.fixture(scope="session")
def perturbed_map():
    return default_cat_map(0.01)


@pytest.fixture(scope="session")
def separable_02():
    return example_separable_coupling(0.02)


@pytest.fixture(scope="session")
def cat_ulam_64(cat_map):
    return base_operator(cat_map, 64, 4)


@pytest.fixture(scope="session")
def cat_ulam_128(cat_map):
    return base_operator(cat_map, 128, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def small_cfg(map_spec, coupling, n=64, **kw):
    defaults = dict(resolution=n, tol_fix=1e-10, max_iterations=2000, rate_window=10)
    defaults.update(kw)
    return SelfConsistentConfig(map=map_spec, coupling=coupling, **defaults)


@pytest.fixture
def cfg_free_64(cat_map):
    return small_cfg(cat_map, zero_coupling())


@pytest.fixture
def cfg_coupled_64(perturbed_map, separable_02):
    return small_cfg(perturbed_map, separable_02)


@pytest.fixture(scope="session")
def uniform_64():
    return TorusDensity.uniform(64)
