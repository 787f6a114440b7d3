from __future__ import annotations

import functools

import pytest

from clustered_layers.profile1d import build_profile


@functools.lru_cache(maxsize=None)
def cached_profile(p: float):
    return build_profile(p)


@pytest.fixture(scope="session")
def profile4():
    return cached_profile(4.0)


@pytest.fixture(scope="session")
def profile2():
    return cached_profile(2.0)


@functools.lru_cache(maxsize=None)
def radial_critical_curve(p: float = 4.0, m: int = 128):
    from clustered_layers import geometry as G

    q_field, _ = G.radial_bessel_root(p)
    radius = G.critical_radius_radial(p)
    res = G.find_critical_curve(G.MatrixField.identity(), q_field, p, G.circle_points(m, 0.8 * radius))
    return res


@functools.lru_cache(maxsize=None)
def anisotropic_critical_curve(a: float = 0.05, p: float = 4.0, m: int = 128):
    from clustered_layers import geometry as G

    q_field, _ = G.radial_bessel_root(p)
    radius = G.critical_radius_radial(p)
    return G.find_critical_curve(G.MatrixField.diagonal_bump(a), q_field, p, G.circle_points(m, radius))
