"""Finite differences for -Div(A grad .) on a masked uniform grid, the first
Dirichlet eigenpair and the negative solution branch.

Unknowns live on the interior nodes of a uniform grid; every node outside the
domain carries the Dirichlet value zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse import linalg as splinalg

from .errors import BranchError, SpectralError, ValidationError
from .geometry import MatrixField

__all__ = [
    "DomainGrid",
    "EllipticOperator",
    "EigenField",
    "NegativeBranch",
    "ExpansionReport",
    "disk_grid",
    "square_grid",
    "ellipse_grid",
    "discretize_operator",
    "first_eigenpair",
    "eigenfield_from_function",
    "solve_negative_branch",
    "verify_negative_expansion",
]

Indicator = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ---------------------------------------------------------------- grid ---- #
@dataclass(frozen=True)
class DomainGrid:
    """Uniform grid on [x0, x1] x [y0, y1] with spacing h and an interior mask.

    Arrays over the grid have shape (nx, ny) with index order (i, j) for (x, y).
    """

    x0: float
    y0: float
    h: float
    nx: int
    ny: int
    mask: np.ndarray
    name: str = "custom"
    diameter: float = float("nan")

    @property
    def x(self) -> np.ndarray:
        return self.x0 + self.h * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.y0 + self.h * np.arange(self.ny)

    @property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def points(self) -> np.ndarray:
        X, Y = self.mesh
        return np.stack([X, Y], axis=-1)

    @property
    def n_interior(self) -> int:
        return int(self.mask.sum())

    @property
    def interior_points(self) -> np.ndarray:
        return self.points[self.mask]

    def boundary_distance(self) -> np.ndarray:
        """Distance from each node to the nearest exterior node (zero outside)."""
        return ndimage.distance_transform_edt(self.mask) * self.h

    def to_grid(self, values: np.ndarray, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.mask.shape, fill, dtype=float)
        out[self.mask] = values
        return out

    def integrate(self, values: np.ndarray) -> float:
        """Riemann sum of interior values times the cell area."""
        return float(np.sum(values) * self.h**2)


def domain_grid(
    indicator: Indicator, bbox: tuple[float, float, float, float], h: float, name: str = "custom", diameter=None
) -> DomainGrid:
    x0, x1, y0, y1 = bbox
    if not h > 0:
        raise ValidationError("grid spacing must be positive")
    # pad by one node so the exterior ring always exists
    nx = int(round((x1 - x0) / h)) + 3
    ny = int(round((y1 - y0) / h)) + 3
    x0, y0 = x0 - h, y0 - h
    X, Y = np.meshgrid(x0 + h * np.arange(nx), y0 + h * np.arange(ny), indexing="ij")
    mask = np.asarray(indicator(X, Y), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = False
    if not mask.any():
        raise ValidationError("domain contains no grid nodes")
    labels, count = ndimage.label(mask)
    if count > 1:
        raise ValidationError(f"domain interior splits into {count} components at h={h}")
    diam = diameter if diameter is not None else math.hypot(x1 - x0, y1 - y0)
    return DomainGrid(x0, y0, h, nx, ny, mask, name, float(diam))


def disk_grid(h: float, radius: float = 1.0, center=(0.0, 0.0)) -> DomainGrid:
    cx, cy = center
    ind = lambda X, Y: (X - cx) ** 2 + (Y - cy) ** 2 < radius**2
    return domain_grid(ind, (cx - radius, cx + radius, cy - radius, cy + radius), h, "disk", 2 * radius)


def square_grid(h: float, side: float = 1.0, corner=(0.0, 0.0)) -> DomainGrid:
    cx, cy = corner
    tol = 1e-12 * side
    ind = lambda X, Y: (X > cx + tol) & (X < cx + side - tol) & (Y > cy + tol) & (Y < cy + side - tol)
    return domain_grid(ind, (cx, cx + side, cy, cy + side), h, "square", math.sqrt(2) * side)


def ellipse_grid(h: float, a: float, b: float, center=(0.0, 0.0)) -> DomainGrid:
    cx, cy = center
    ind = lambda X, Y: ((X - cx) / a) ** 2 + ((Y - cy) / b) ** 2 < 1.0
    return domain_grid(ind, (cx - a, cx + a, cy - b, cy + b), h, "ellipse", 2 * max(a, b))


# ------------------------------------------------------------ operator ---- #
@dataclass(frozen=True)
class EllipticOperator:
    grid: DomainGrid
    matrix_field: MatrixField
    matrix: sparse.csr_matrix

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ values

    def apply_grid(self, full: np.ndarray) -> np.ndarray:
        """Stencil applied to a full-grid array whose exterior values are kept (not zeroed)."""
        return _stencil_full(self.grid, self.matrix_field, full)


def _node_entries(grid: DomainGrid, A: MatrixField):
    pts = grid.points
    a11, a12, a22 = (np.broadcast_to(np.asarray(v, dtype=float), pts.shape[:-1]) for v in A.entries(pts))
    return a11, a12, a22


def _stencil_weights(grid: DomainGrid, A: MatrixField):
    """Offsets (di, dj) and weight arrays w such that (L u)_ij = sum w_ij u_{i+di, j+dj}.

    Weight arrays are defined on the inner nodes 1..n-2 of each axis.
    """
    h2 = grid.h**2
    a11, a12, a22 = _node_entries(grid, A)
    c = (slice(1, -1), slice(1, -1))
    e = (slice(2, None), slice(1, -1))
    w_ = (slice(None, -2), slice(1, -1))
    n = (slice(1, -1), slice(2, None))
    s = (slice(1, -1), slice(None, -2))
    ax_e = 0.5 * (a11[c] + a11[e])
    ax_w = 0.5 * (a11[c] + a11[w_])
    ay_n = 0.5 * (a22[c] + a22[n])
    ay_s = 0.5 * (a22[c] + a22[s])
    weights = {
        (0, 0): (ax_e + ax_w + ay_n + ay_s) / h2,
        (1, 0): -ax_e / h2,
        (-1, 0): -ax_w / h2,
        (0, 1): -ay_n / h2,
        (0, -1): -ay_s / h2,
    }
    # cross terms: -[dx(a12 dy u) + dy(a12 dx u)] with centred differences
    b_e, b_w, b_n, b_s = a12[e], a12[w_], a12[n], a12[s]
    q = 4.0 * h2
    weights[(1, 1)] = -(b_e + b_n) / q
    weights[(-1, -1)] = -(b_w + b_s) / q
    weights[(1, -1)] = (b_e + b_s) / q
    weights[(-1, 1)] = (b_w + b_n) / q
    return weights


def _stencil_full(grid: DomainGrid, A: MatrixField, full: np.ndarray) -> np.ndarray:
    out = np.zeros_like(full, dtype=float)
    nx, ny = full.shape
    for (di, dj), w in _stencil_weights(grid, A).items():
        out[1:-1, 1:-1] += w * full[1 + di : nx - 1 + di, 1 + dj : ny - 1 + dj]
    return out


def discretize_operator(grid: DomainGrid, matrix_field: MatrixField) -> EllipticOperator:
    """Symmetric flux-form finite-difference matrix on the interior nodes."""
    matrix_field.check_ellipticity(grid.interior_points)
    index = -np.ones(grid.mask.shape, dtype=np.int64)
    index[grid.mask] = np.arange(grid.n_interior)
    rows, cols, vals = [], [], []
    inner = index[1:-1, 1:-1]
    nx, ny = grid.mask.shape
    for (di, dj), w in _stencil_weights(grid, matrix_field).items():
        nb = index[1 + di : nx - 1 + di, 1 + dj : ny - 1 + dj]
        keep = (inner >= 0) & (nb >= 0) & (w != 0.0)
        rows.append(inner[keep])
        cols.append(nb[keep])
        vals.append(w[keep])
    n = grid.n_interior
    L = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    return EllipticOperator(grid, matrix_field, L)


# ----------------------------------------------------------- eigenpair ---- #
@dataclass(frozen=True)
class EigenField:
    grid: DomainGrid
    operator: EllipticOperator
    lambda1: float
    psi: np.ndarray  # interior values, max 1
    residual: float
    iterations: int = 0
    psi_fn: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    psi_scale: float = 1.0

    @property
    def psi_grid(self) -> np.ndarray:
        return self.grid.to_grid(self.psi)


def first_eigenpair(op: EllipticOperator, tol: float = 1e-10, max_iter: int = 500) -> EigenField:
    """Inverse power iteration with one sparse LU factorization."""
    lu = splinalg.splu(op.matrix.tocsc())
    n = op.matrix.shape[0]
    x = np.ones(n) / math.sqrt(n)
    lam = float(x @ (op.matrix @ x))
    for it in range(1, max_iter + 1):
        y = lu.solve(x)
        x = y / np.linalg.norm(y)
        Lx = op.matrix @ x
        lam = float(x @ Lx)
        res = float(np.linalg.norm(Lx - lam * x))
        if res < tol * lam:
            break
    else:
        raise SpectralError(f"inverse iteration did not converge (residual {res:.3e})")
    if x.sum() < 0:
        x = -x
    psi = x / x.max()
    if not np.all(psi > 0):
        raise SpectralError("first eigenvector is not positive on the interior")
    return EigenField(op.grid, op, lam, psi, res / lam, it)


def eigenfield_from_function(op: EllipticOperator, psi_fn: Callable[[np.ndarray], np.ndarray], lambda1: float) -> EigenField:
    """Wrap an analytic eigenfunction sampled on the interior nodes (max normalized there).

    The stored residual is measured at nodes at least two spacings from the
    boundary, where the masked stencil sees no Dirichlet mismatch.
    """
    psi = np.asarray(psi_fn(op.grid.interior_points), dtype=float)
    scale = float(psi.max())
    psi = psi / scale
    inner = op.grid.boundary_distance()[op.grid.mask] > 2.0 * op.grid.h
    diff = (op.matrix @ psi - lambda1 * psi)[inner]
    res = float(np.linalg.norm(diff) / np.linalg.norm(psi[inner]))
    return EigenField(op.grid, op, float(lambda1), psi, res, 0, psi_fn, scale)


# ----------------------------------------------------- negative branch ---- #
@dataclass(frozen=True)
class NegativeBranch:
    eps: float
    p: float
    u: np.ndarray  # interior values of the negative solution
    residual: float
    iterations: int
    method: str
    history: list = field(default_factory=list)

    @property
    def w(self) -> np.ndarray:
        return -self.u


def _branch_residual(L, eps2, psi, w, p):
    return eps2 * (L @ w) - psi + np.abs(w) ** p


def _newton_branch(L, eps2, psi, p, w, tol, max_iter, history):
    top = psi ** (1.0 / p)
    F = _branch_residual(L, eps2, psi, w, p)
    r = np.linalg.norm(F)
    for it in range(1, max_iter + 1):
        J = (eps2 * L + sparse.diags(p * np.abs(w) ** (p - 1))).tocsc()
        step = splinalg.spsolve(J, -F)
        t = 1.0
        for _ in range(31):
            trial = np.clip(w + t * step, 0.0, top)
            Ft = _branch_residual(L, eps2, psi, trial, p)
            rt = np.linalg.norm(Ft)
            if rt < r:
                break
            t *= 0.5
        else:
            return w, r, it, False
        w, F, r = trial, Ft, rt
        history.append(r)
        if r < tol:
            return w, r, it, True
    return w, r, max_iter, False


def _monotone_branch(L, eps2, psi, p, w, tol, max_iter, history):
    """Monotone iteration (eps^2 L + c) w_new = psi - w^p + c w with c >= p max w^{p-1}."""
    top = psi ** (1.0 / p)
    c = p * float(np.max(top)) ** (p - 1)
    lu = splinalg.splu((eps2 * L + c * sparse.identity(L.shape[0])).tocsc())
    r = math.inf
    for it in range(1, max_iter + 1):
        w = np.clip(lu.solve(psi - w**p + c * w), 0.0, top)
        r = float(np.linalg.norm(_branch_residual(L, eps2, psi, w, p)))
        history.append(r)
        if r < tol:
            return w, r, it, True
    return w, r, max_iter, False


def solve_negative_branch(
    field_: EigenField,
    eps: float,
    p: float,
    *,
    start: np.ndarray | None = None,
    rel_tol: float = 1e-10,
    max_newton: int = 60,
    max_sweeps: int = 20000,
    method: str = "newton",
) -> NegativeBranch:
    """Solve eps^2 L w = psi - w^p with 0 <= w <= psi^{1/p}; the branch is u = -w."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    if not p > 1:
        raise ValidationError("p must exceed 1")
    L = field_.operator.matrix
    psi = field_.psi
    eps2 = eps * eps
    tol = rel_tol * float(np.linalg.norm(psi))
    top = psi ** (1.0 / p)
    w0 = top.copy() if start is None else np.clip(np.asarray(start, dtype=float), 0.0, top)
    history: list[float] = []
    ok = False
    if method == "newton":
        w, r, it, ok = _newton_branch(L, eps2, psi, p, w0, tol, max_newton, history)
        used = "newton"
    if not ok:
        w, r, it, ok = _monotone_branch(L, eps2, psi, p, w0, tol, max_sweeps, history)
        used = "monotone"
    if not ok:
        raise BranchError(f"negative branch failed at eps={eps} (residual {r:.3e})", history=history)
    return NegativeBranch(eps, p, -w, r / float(np.linalg.norm(psi)), it, used, history)


# ---------------------------------------------------- expansion check ---- #
@dataclass(frozen=True)
class ExpansionReport:
    eps: list
    errors: list
    f_max: float
    compact_nodes: int
    monotone: bool
    ordering_ok: bool
    box_ok: bool
    branches: list = field(repr=False, default_factory=list)


def expansion_limit(field_: EigenField, p: float) -> np.ndarray:
    """f = Div(A grad psi^{1/p}) / (p psi^{(p-1)/p}) from the same stencil."""
    root = field_.psi ** (1.0 / p)
    return -(field_.operator.matrix @ root) / (p * field_.psi ** ((p - 1.0) / p))


def compact_mask(grid: DomainGrid, fraction: float = 0.15) -> np.ndarray:
    """Interior-indexed mask of nodes at distance >= fraction * diameter from the boundary."""
    dist = grid.boundary_distance()[grid.mask]
    return dist >= fraction * grid.diameter


def verify_negative_expansion(field_: EigenField, p: float, eps_list, fraction: float = 0.15) -> ExpansionReport:
    """E(eps) = sup_K |(u + psi^{1/p}) / eps^2 + f| on the interior compact set K."""
    eps_list = sorted((float(e) for e in eps_list), reverse=True)
    if len(eps_list) < 3:
        raise ValidationError("need at least three eps values")
    K = compact_mask(field_.grid, fraction)
    f = expansion_limit(field_, p)
    root = field_.psi ** (1.0 / p)
    errs, branches = [], []
    box_ok = True
    start = None
    for eps in eps_list:
        br = solve_negative_branch(field_, eps, p, start=start)
        start = br.w
        branches.append(br)
        box_ok &= bool(np.all(br.u <= 0.0) and np.all(br.u + root >= -1e-14))
        errs.append(float(np.max(np.abs((br.u + root)[K] / eps**2 + f[K]))))
    ordering = all(np.all(b.w >= a.w - 1e-12) for a, b in zip(branches, branches[1:]))
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    return ExpansionReport(eps_list, errs, float(np.max(f[K])), int(K.sum()), monotone, ordering, box_ok, branches)


def export_csv(field_: EigenField, path, branch: NegativeBranch | None = None) -> None:
    """Write x, y, psi and (optionally) the negative branch on the interior nodes."""
    pts = field_.grid.interior_points
    cols = [pts[:, 0], pts[:, 1], field_.psi]
    header = "x,y,psi"
    if branch is not None:
        cols.append(branch.u)
        header += ",u_neg"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="")
