import functools

import pytest
from hypothesis import HealthCheck, settings

from kquant.fedosov import solve_fedosov
from kquant.geometry import geometry_from_spec

settings.register_profile(
    "kquant",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("kquant")

GEOMETRIES = ["flat:1", "flat:2", "cp1", "disc"]
ALPHAS = ["zero", "hbar_omega", "berezin_toeplitz"]


@functools.lru_cache(maxsize=None)
def geometry(name):
    return geometry_from_spec(name)


@functools.lru_cache(maxsize=None)
def solved(name, alpha="zero", max_y=5):
    return solve_fedosov(geometry(name), alpha, max_y)


@pytest.fixture(params=GEOMETRIES)
def geo_name(request):
    return request.param


@pytest.fixture(params=["flat:1", "cp1", "disc"])
def curve_name(request):
    return request.param
