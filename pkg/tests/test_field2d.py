from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy import sparse

from clustered_layers import field2d as F
from clustered_layers.errors import BranchError, EllipticityError, ValidationError
from clustered_layers.geometry import MatrixField


def _j0_series(x: float, terms: int = 60) -> float:
    total, term = 0.0, 1.0
    for k in range(terms):
        if k:
            term *= -(x * x / 4.0) / (k * k)
        total += term
    return total


def _j01_oracle() -> float:
    lo, hi = 2.0, 3.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _j0_series(lo) * _j0_series(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


J01_SQ = _j01_oracle() ** 2  # 5.78318596...


@pytest.fixture(scope="module")
def disk64():
    grid = F.disk_grid(1 / 64)
    return F.first_eigenpair(F.discretize_operator(grid, MatrixField.identity()))


# ------------------------------------------------------------ grid ---- #
def test_grid_mask_and_padding():
    g = F.square_grid(1 / 8)
    assert not g.mask[0].any() and not g.mask[-1].any()
    assert g.n_interior == 7 * 7
    d = g.boundary_distance()
    assert d[g.mask].min() == pytest.approx(g.h)


def test_disconnected_domain_rejected():
    ind = lambda X, Y: ((X - 0.25) ** 2 + Y**2 < 0.04) | ((X + 0.25) ** 2 + Y**2 < 0.04)
    with pytest.raises(ValidationError):
        F.domain_grid(ind, (-0.5, 0.5, -0.5, 0.5), 1 / 32)


def test_empty_domain_rejected():
    with pytest.raises(ValidationError):
        F.domain_grid(lambda X, Y: X > 10, (0, 1, 0, 1), 0.1)


# -------------------------------------------------------- operator ---- #
def test_identity_is_five_point_laplacian():
    g = F.square_grid(1 / 6)
    L = F.discretize_operator(g, MatrixField.identity()).matrix
    n = 5
    T = sparse.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    ref = (sparse.kron(T, sparse.identity(n)) + sparse.kron(sparse.identity(n), T)) / g.h**2
    assert abs(L - ref).max() < 1e-10


@pytest.mark.parametrize(
    "field",
    [MatrixField.identity(), MatrixField.constant(1.5, 0.4, 0.8)],
    ids=["identity", "constant-with-cross"],
)
def test_quadratic_exactness(field):
    g = F.disk_grid(1 / 16)
    X, Y = g.mesh
    u = 0.3 * X**2 - 0.7 * X * Y + 1.1 * Y**2 + X - 2 * Y + 0.5
    a11, a12, a22 = (float(v) for v in field.entries(np.zeros(2)))
    exact = -(2 * 0.3 * a11 + 2 * a12 * (-0.7) + 2 * 1.1 * a22)
    Lu = F.discretize_operator(g, field).apply_grid(u)
    inner = g.boundary_distance() > 2 * g.h
    assert np.abs(Lu[inner] - exact).max() < 1e-9


@pytest.mark.parametrize("field", [MatrixField.diagonal_bump(0.3), MatrixField.rotated_diagonal(0.3, 0.6)])
def test_operator_symmetric(field):
    L = F.discretize_operator(F.disk_grid(1 / 32), field).matrix
    assert abs(L - L.T).max() < 1e-12 * abs(L).max()


def test_operator_rejects_non_elliptic():
    with pytest.raises(EllipticityError):
        F.discretize_operator(F.disk_grid(1 / 16), MatrixField.constant(1.0, 2.0, 1.0))


# ------------------------------------------------------- eigenpair ---- #
def test_j01_oracle():
    assert _j0_series(_j01_oracle()) == pytest.approx(0.0, abs=1e-14)
    assert J01_SQ == pytest.approx(5.783185962946784, abs=1e-12)


def test_disk_eigenvalue_within_one_percent():
    t0 = time.perf_counter()
    ef = F.first_eigenpair(F.discretize_operator(F.disk_grid(1 / 128), MatrixField.identity()))
    elapsed = time.perf_counter() - t0
    assert abs(ef.lambda1 / J01_SQ - 1) < 0.01
    assert elapsed < 30


def test_disk_eigenvalue_converges(disk64):
    coarse = F.first_eigenpair(F.discretize_operator(F.disk_grid(1 / 32), MatrixField.identity()))
    assert abs(disk64.lambda1 - J01_SQ) < abs(coarse.lambda1 - J01_SQ)


def test_square_eigenvalue():
    ef = F.first_eigenpair(F.discretize_operator(F.square_grid(1 / 64), MatrixField.identity()))
    assert abs(ef.lambda1 / (2 * math.pi**2) - 1) < 0.01


def test_eigenvector_positive_and_normalized(disk64):
    assert np.all(disk64.psi > 0)
    assert disk64.psi.max() == pytest.approx(1.0)
    L = disk64.operator.matrix
    rel = np.linalg.norm(L @ disk64.psi - disk64.lambda1 * disk64.psi) / np.linalg.norm(disk64.psi)
    assert rel < 1e-8 * disk64.lambda1


def test_scaling_by_constant(disk64):
    scaled = F.first_eigenpair(F.discretize_operator(disk64.grid, MatrixField.identity(2.5)))
    assert scaled.lambda1 == pytest.approx(2.5 * disk64.lambda1, rel=1e-10)
    assert np.allclose(scaled.psi, disk64.psi, atol=1e-8)


def test_eigenvalue_decreases_with_domain():
    small = F.first_eigenpair(F.discretize_operator(F.disk_grid(1 / 48, 1.0), MatrixField.identity()))
    big = F.first_eigenpair(F.discretize_operator(F.disk_grid(1 / 48, 1.1), MatrixField.identity()))
    assert big.lambda1 < small.lambda1


def test_anisotropic_eigenpair():
    ef = F.first_eigenpair(F.discretize_operator(F.disk_grid(1 / 32), MatrixField.rotated_diagonal(0.3, 0.6)))
    assert ef.lambda1 > 0 and np.all(ef.psi > 0)


def test_analytic_field_wrapper(disk64):
    from scipy import special

    k = math.sqrt(J01_SQ)
    ef = F.eigenfield_from_function(disk64.operator, lambda x: special.j0(k * np.hypot(x[:, 0], x[:, 1])), J01_SQ)
    assert ef.psi.max() == pytest.approx(1.0)
    assert ef.residual < 1e-3


# ------------------------------------------------- negative branch ---- #
@pytest.mark.parametrize("eps", [0.2, 0.05])
def test_branch_box_and_residual(disk64, eps):
    br = F.solve_negative_branch(disk64, eps, 4.0)
    root = disk64.psi**0.25
    assert np.all(br.u <= 0) and np.all(br.u >= -root)
    assert br.residual < 1e-10
    F_ = eps**2 * (disk64.operator.matrix @ br.w) - disk64.psi + br.w**4
    assert np.linalg.norm(F_) < 1e-10 * np.linalg.norm(disk64.psi)
    top = int(np.argmax(disk64.psi))
    assert br.w[top] <= disk64.psi[top] ** 0.25


def test_branch_uniqueness_probe(disk64):
    a = F.solve_negative_branch(disk64, 0.1, 4.0)
    b = F.solve_negative_branch(disk64, 0.1, 4.0, start=np.zeros_like(disk64.psi))
    assert np.abs(a.u - b.u).max() < 1e-8


def test_monotone_fallback_agrees(disk64):
    a = F.solve_negative_branch(disk64, 0.2, 4.0)
    b = F.solve_negative_branch(disk64, 0.2, 4.0, method="monotone", rel_tol=1e-9)
    assert b.method == "monotone"
    assert np.abs(a.u - b.u).max() < 1e-8


def test_branch_failure_reports_history(disk64):
    with pytest.raises(BranchError) as info:
        F.solve_negative_branch(disk64, 0.05, 4.0, max_newton=1, max_sweeps=1)
    assert len(info.value.history) >= 1


@pytest.mark.parametrize("eps,p", [(0.0, 4.0), (0.1, 1.0)])
def test_branch_rejects_bad_input(disk64, eps, p):
    with pytest.raises(ValidationError):
        F.solve_negative_branch(disk64, eps, p)


def test_negative_expansion(disk64):
    rep = F.verify_negative_expansion(disk64, 4.0, [0.2, 0.1, 0.05])
    assert rep.monotone and rep.errors[2] < rep.errors[1] < rep.errors[0]
    assert rep.f_max < 0
    assert rep.box_ok and rep.ordering_ok
    assert rep.compact_nodes > 0
    root = disk64.psi**0.25
    for br in rep.branches:
        assert np.all(br.u + root >= 0)


def test_negative_expansion_anisotropic():
    ef = F.first_eigenpair(F.discretize_operator(F.disk_grid(1 / 48), MatrixField.rotated_diagonal(0.2, 0.4)))
    rep = F.verify_negative_expansion(ef, 3.0, [0.1, 0.05, 0.025])
    assert rep.monotone and rep.box_ok and rep.ordering_ok and rep.f_max < 0


def test_csv_export(tmp_path, disk64):
    br = F.solve_negative_branch(disk64, 0.2, 4.0)
    path = tmp_path / "field.csv"
    F.export_csv(disk64, path, br)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (disk64.grid.n_interior, 4)
    assert path.read_text().startswith("x,y,psi,u_neg")
