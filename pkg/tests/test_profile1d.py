from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clustered_layers import profile1d as P
from clustered_layers.errors import InvalidExponentError, SolvabilityError, TruncationError

from conftest import cached_profile

# Frozen oracle values (50 digit bisection on G, outside this package).
TURNING_P4 = 2.65062919143938821888080096743
TURNING_P2 = 3.0


def _bisect_G(p: float) -> float:
    """Independent oracle: plain bisection on the closed form of G."""
    G = lambda w: (1.0 + math.copysign(abs(w - 1.0) ** (p + 1), w - 1.0)) / (p + 1) - w
    lo, hi = 1.0, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if G(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ------------------------------------------------------- turning point ---- #
def test_oracle_matches_frozen_values():
    assert _bisect_G(4.0) == pytest.approx(TURNING_P4, abs=1e-13)
    assert _bisect_G(2.0) == pytest.approx(TURNING_P2, abs=1e-13)


@pytest.mark.parametrize("p,expected", [(2.0, TURNING_P2), (4.0, TURNING_P4)])
def test_turning_point_values(p, expected):
    assert P.turning_point(p) == pytest.approx(expected, abs=1e-12)


@given(st.floats(min_value=1.05, max_value=12.0))
@settings(max_examples=40, deadline=None)
def test_turning_point_is_root_of_G(p):
    w0 = P.turning_point(p)
    assert w0 > 1.0
    assert abs(P.energy_G(np.array([w0]), p)[0]) < 1e-12 * max(1.0, w0**p)


@pytest.mark.parametrize("p", [1.0, 0.5, float("nan")])
def test_turning_point_rejects_bad_exponent(p):
    with pytest.raises(InvalidExponentError):
        P.turning_point(p)


@given(st.floats(min_value=1e-6, max_value=0.2), st.floats(min_value=1.1, max_value=8.0))
@settings(max_examples=60, deadline=None)
def test_energy_series_matches_closed_form(w, p):
    closed = (1.0 + math.copysign(abs(w - 1.0) ** (p + 1), w - 1.0)) / (p + 1) - w
    series = P.energy_G(np.array([w]), p)[0]
    assert series == pytest.approx(closed, rel=1e-9, abs=1e-15)


# ------------------------------------------------------------- profile ---- #
def test_profile_p2_closed_form(profile2):
    # p = 2 has the explicit profile 3 sech^2(x / sqrt 2)
    x = profile2.x
    exact = 3.0 / np.cosh(x / math.sqrt(2.0)) ** 2
    assert profile2.w_center == pytest.approx(3.0, abs=1e-12)
    assert np.max(np.abs(profile2.w - exact)) < 1e-10


def test_profile_shape_invariants(profile4):
    w, wx = profile4.w, profile4.w_x
    assert np.all(w > 0)
    assert np.array_equal(w, w[::-1])
    assert np.array_equal(wx, -wx[::-1])
    assert wx[profile4.grid.n // 2] == 0.0
    assert w[0] < P.DEFAULT_TAIL_TOL


def test_profile_ode_residual_p4(profile4):
    r = P.ode_residual(profile4.w, 4.0, profile4.grid.h)
    assert np.nanmax(np.abs(r)) < 1e-8


def test_energy_conservation(profile4):
    p, w, wx = 4.0, profile4.w, profile4.w_x
    assert np.max(np.abs(0.5 * wx**2 + P.energy_G(w, p))) < 1e-10
    fd = P.first_difference(w, profile4.grid.h)[4:-4]
    assert np.max(np.abs(0.5 * fd**2 + P.energy_G(w, p)[4:-4])) < 1e-8


def test_short_grid_raises_truncation():
    grid = P.ProfileGrid(half_width=6.0, n=1201)
    with pytest.raises(TruncationError) as info:
        P.solve_profile(4.0, grid)
    assert info.value.suggested_half_width > 6.0


def test_grid_is_symmetric():
    x = P.ProfileGrid(7.3, 101).x
    assert np.array_equal(x, -x[::-1])
    assert x[50] == 0.0
    with pytest.raises(ValueError):
        P.ProfileGrid(1.0, 100)


# ------------------------------------------------------ decay constant ---- #
def test_decay_p2_exact(profile2):
    # 3 sech^2(x/sqrt2) ~ 12 exp(-sqrt2 x)
    assert profile2.alpha_p == pytest.approx(12.0, rel=1e-10)


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_decay_routes_agree(p):
    d = cached_profile(p).decay
    assert d.alpha_fit > 0
    assert d.relative_gap < 1e-4
    assert d.alpha_direct == pytest.approx(d.alpha_fit, rel=1e-8)


def test_decay_sign_variants(profile4):
    d = profile4.decay
    # symmetric cosh weight integrates to zero; the opposite sign gives -alpha
    assert abs(d.alpha_printed_plus) < 1e-10 * d.alpha_fit
    assert d.alpha_printed_minus == pytest.approx(-d.alpha_int, rel=1e-12)


def test_decay_fit_refinement_p2():
    coarse = P.ProfileGrid.for_exponent(2.0, n=2001)
    fine = coarse.refined()
    a = [P.decay_constant(2.0, g, *P.solve_profile(2.0, g)).alpha_fit for g in (coarse, fine)]
    assert abs(a[0] - a[1]) / a[1] < 1e-6


def test_tail_approaches_alpha_monotonically(profile4):
    x, w = profile4.x, profile4.w
    sel = x > 0.75 * profile4.grid.half_width
    gap = np.abs(w[sel] * np.exp(2.0 * x[sel]) - profile4.alpha_p)
    # monotone up to round-off in the far tail
    assert np.all(np.diff(gap) <= 1e-9 * profile4.alpha_p)


# --------------------------------------------------- linearized solves ---- #
def test_linearized_zero_rhs(profile4):
    phi = P.solve_linearized(4.0, profile4.grid, profile4.w, profile4.w_x, np.zeros(profile4.grid.n))
    assert np.all(phi == 0.0)


def test_linearized_rejects_kernel_direction(profile4):
    with pytest.raises(SolvabilityError) as info:
        P.solve_linearized(4.0, profile4.grid, profile4.w, profile4.w_x, profile4.w_x)
    assert info.value.projection == pytest.approx(profile4.I_w, rel=1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 5.0])
def test_closed_forms_from_solver(p):
    prof = cached_profile(p)
    g, w, wx = prof.grid, prof.w, prof.w_x
    w2 = P.solve_linearized(p, g, w, wx, prof.w_xx)
    w3 = P.solve_linearized(p, g, w, wx, P.bracket(w, p))
    assert np.max(np.abs(w2 - prof.w2)) < 1e-6
    assert np.max(np.abs(w3 - prof.w3)) < 1e-6


def test_correction_profile_parity_and_orthogonality(profile4):
    for name in ("w0", "w1"):
        f = getattr(profile4, name)
        assert np.max(np.abs(f + f[::-1])) < 1e-9
    # x w_x is even, so both closed forms are even
    for name in ("w2", "w3"):
        f = getattr(profile4, name)
        assert np.max(np.abs(f - f[::-1])) < 1e-12
    for name in ("w0", "w1", "w2", "w3"):
        f = getattr(profile4, name)
        assert abs(profile4.grid.trapezoid(f * profile4.w_x)) < 1e-9


def test_w2_satisfies_its_equation(profile4):
    assert P.verify_profile_identities(profile4)["w2_equation_sup"] < 1e-6


# ----------------------------------------------------------- eigenpair ---- #
def test_eigenpair_p2_exact(profile2):
    # p = 2: Z ~ sech^3(x/sqrt2), eigenvalue 9/2 - 2
    assert profile2.lambda0 == pytest.approx(2.5, rel=1e-8)
    exact = np.cosh(profile2.x / math.sqrt(2.0)) ** -3
    exact /= math.sqrt(profile2.grid.trapezoid(exact**2))
    assert np.max(np.abs(profile2.Z - exact)) < 1e-7


def test_eigenpair_properties(profile4):
    Z = profile4.Z
    assert profile4.lambda0 > 0
    # positive until Z reaches round-off level in the far tail
    core = np.abs(profile4.x) < 0.5 * profile4.grid.half_width
    assert np.all(Z[core] > 0)
    assert np.min(Z) > -1e-15
    assert np.max(np.abs(Z - Z[::-1])) < 1e-8
    assert profile4.grid.trapezoid(Z**2) == pytest.approx(1.0, abs=1e-14)
    rq = P.rayleigh_quotient(4.0, profile4.grid, profile4.w, Z)
    assert rq == pytest.approx(profile4.lambda0, rel=1e-10)


def test_eigenvalue_truncation_stability(profile4):
    g = profile4.grid
    wider = P.ProfileGrid(g.half_width + 2.0, g.n + int(round(4.0 / g.h)) // 2 * 2)
    w, _ = P.solve_profile(4.0, wider)
    lam, _ = P.eigenpair(4.0, wider, w)
    assert abs(lam - profile4.lambda0) / profile4.lambda0 < 1e-6


# ------------------------------------------------ interaction constants ---- #
def test_C1_p2_closed_form(profile2):
    # Z = c sech^3 s with s = x/sqrt2; the integral reduces to 3 c sqrt2 * 5 pi / 8
    c = math.sqrt(15.0 / (16.0 * math.sqrt(2.0)))
    assert profile2.C1 == pytest.approx(3.0 * c * math.sqrt(2.0) * 5.0 * math.pi / 8.0, rel=1e-7)
    assert profile2.C0 == pytest.approx(24.0, rel=1e-10)


def test_C0_half_line(profile4):
    p, g = 4.0, profile4.grid
    b = P.bracket(profile4.w, p)
    f = 0.5 * b * (np.exp(-2 * profile4.x) - np.exp(2 * profile4.x)) * profile4.w_x
    half = f[g.n // 2 :]
    doubled = 2.0 * g.trapezoid(half)
    assert doubled == pytest.approx(profile4.C0, rel=1e-10)
    assert profile4.C0 > 0
    assert profile4.C0 == pytest.approx(2.0 * profile4.alpha_p, rel=1e-8)


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_constants_grid_convergence(p):
    base = cached_profile(p)
    fine = P.build_profile(p, base.grid.refined())
    for name in ("alpha_p", "lambda0", "C0", "C1"):
        a, b = getattr(base, name), getattr(fine, name)
        assert abs(a - b) / abs(b) < 1e-6, name


# ---------------------------------------------------------- identities ---- #
@pytest.mark.parametrize("p", [2.0, 3.0, 4.0, 5.0])
def test_profile_identities(p):
    report = P.verify_profile_identities(cached_profile(p))
    for key in ("int_w", "x_wxx_wx", "bracket_x_wx", "w2x_wx", "w3x_wx", "bracket_w2", "bracket_w3"):
        assert abs(report[key]) < 1e-6, key
    for key in ("e58", "e59", "e60", "e61"):
        assert abs(report[key]) < 1e-5, key
    assert report["w2_closed_form_rel"] < 1e-6
    assert report["w3_closed_form_rel"] < 1e-6


def test_sample_spline(profile4):
    xq = np.array([-100.0, 0.0, 0.3, 100.0])
    vals = profile4.sample("w", xq)
    assert vals[0] == 0.0 and vals[-1] == 0.0
    assert vals[1] == pytest.approx(TURNING_P4, abs=1e-12)
    assert vals[2] == pytest.approx(profile4.sample("w", [-0.3])[0], abs=1e-14)
