"""Global N-layer ansatz on the 2D grid, its PDE residual and a Newton
certificate.

The ansatz is

    u = ubar + eta(t) alpha(theta) sum_k V_k(theta, beta(theta) (t/eps - f_k(theta)))

with V_k = w + eps phi1_k + eps e_k Z in modified Fermi coordinates
x = gamma(theta) + t n(theta).  Two residual evaluations are provided:

* on the (theta, t) tube with the exact curvilinear divergence, spectral in
  theta and sixth-order differences in t, so the layer scale eps is resolved
  independently of the 2D grid;
* on the 2D grid with the field2d stencil, which is what Newton refines.
"""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import interpolate, signal, sparse
from scipy.sparse import linalg as splinalg
from scipy.spatial import cKDTree

from . import spectral
from .errors import ChartError, InvalidExponentError, LayerOverlapError, RefinementError, TubeError, ValidationError
from .field2d import EigenField, NegativeBranch, solve_negative_branch
from .geometry import CurveGeometry
from .profile1d import ProfileSet
from .toda import LayerState, required_separation, separation_check

__all__ = [
    "AnsatzConfig",
    "FermiChart",
    "Ansatz2D",
    "ResidualReport",
    "SweepReport",
    "NewtonResult",
    "LayerLossWarning",
    "SweepWarning",
    "cutoff",
    "fermi_chart",
    "build_ansatz",
    "pde_residual",
    "residual_sweep",
    "newton_refine",
    "layer_census",
    "theorem_scaling",
    "tube_residual",
    "grid_residual",
    "export_csv",
]


class LayerLossWarning(UserWarning):
    pass


class SweepWarning(UserWarning):
    pass


# -------------------------------------------------------------- config ---- #
@dataclass(frozen=True)
class AnsatzConfig:
    """order 0 uses profiles only, order 1 adds the first-order correction."""

    order: int = 1
    delta: float = 0.14
    delta0: float = 0.44
    amplitudes: bool = True
    t_points_per_eps: int = 32
    census_sections: int = 12

    def __post_init__(self):
        if self.order not in (0, 1):
            raise ValidationError(f"ansatz order must be 0 or 1, got {self.order}")
        if not 0.0 < self.delta < self.delta0 / 3.0:
            raise ValidationError(f"need 0 < delta < delta0/3 (delta={self.delta}, delta0={self.delta0})")
        if self.delta > self.delta0 / 10.0:
            warnings.warn(
                f"delta={self.delta} exceeds delta0/10; the cutoff band sits close to the chart limit",
                stacklevel=2,
            )

    @property
    def plateau(self) -> float:
        """Half-width of the region where the cutoff equals one."""
        return 1.5 * self.delta

    @property
    def support(self) -> float:
        return 2.5 * self.delta


def cutoff(t: np.ndarray, delta: float) -> np.ndarray:
    """C^2 bump in r = |t| / (3 delta): 1 for r <= 1/2, 0 for r >= 5/6."""
    # s = 3 (r - 1/2) runs from 0 to 1 across the band 1.5 delta < |t| < 2.5 delta
    s = np.clip(np.abs(np.asarray(t, dtype=float)) / delta - 1.5, 0.0, 1.0)
    return np.clip(1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2), 0.0, 1.0)


# ---------------------------------------------------- periodic samples ---- #
class _Periodic:
    """Periodic cubic spline of a trigonometric resampling (accurate to ~1e-12 for smooth data)."""

    def __init__(self, values: np.ndarray, fine: int = 2048):
        values = np.asarray(values, dtype=float)
        m = values.shape[-1]
        fine = max(fine, 8 * m)
        dense = spectral.resample(np.moveaxis(values, -1, 0), fine)
        th = np.arange(fine + 1) / fine
        dense = np.concatenate([dense, dense[:1]], axis=0)
        self._spline = interpolate.CubicSpline(th, dense, axis=0, bc_type="periodic")

    def __call__(self, theta: np.ndarray) -> np.ndarray:
        out = self._spline(np.mod(theta, 1.0))
        return np.moveaxis(out, 0, -1) if out.ndim > 1 else out


def _theta_derivative(values: np.ndarray) -> np.ndarray:
    return np.moveaxis(spectral.derivative(np.moveaxis(values, -1, 0), 1), 0, -1)


# --------------------------------------------------------------- chart ---- #
@dataclass(frozen=True)
class FermiChart:
    """Fermi coordinates of a set of points; ``present`` marks points with |t| < delta0."""

    theta: np.ndarray
    t: np.ndarray
    present: np.ndarray
    delta0: float
    max_error: float


def _check_fold(curve: CurveGeometry, delta0: float) -> None:
    ell = curve.length
    g_th = ell * curve.tangent
    n_th = ell * curve.n_s
    n = curve.n
    det0 = g_th[:, 0] * n[:, 1] - g_th[:, 1] * n[:, 0]
    det1 = n_th[:, 0] * n[:, 1] - n_th[:, 1] * n[:, 0]
    for t in (-delta0, delta0):
        det = det0 + t * det1
        if np.any(np.sign(det) != np.sign(det0)) or np.min(np.abs(det)) < 1e-3 * np.max(np.abs(det0)):
            raise ChartError(f"Fermi chart folds within |t| < {delta0}; reduce delta0")


def fermi_chart(curve: CurveGeometry, points: np.ndarray, delta0: float, grid=None) -> FermiChart:
    """Solve gamma(theta) + t n(theta) = x per point by Newton from the nearest curve sample."""
    _check_fold(curve, delta0)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    gam = _Periodic(curve.gamma.T)
    gam_th = _Periodic(curve.length * curve.tangent.T)
    nor = _Periodic(curve.n.T)
    nor_th = _Periodic(curve.length * curve.n_s.T)
    if grid is not None:
        # the closed tube must stay inside the domain
        for t in (-delta0, delta0):
            edge = curve.gamma + t * curve.n
            ij = np.rint((edge - [grid.x0, grid.y0]) / grid.h).astype(int)
            ok = (ij >= 0).all(axis=1) & (ij[:, 0] < grid.nx) & (ij[:, 1] < grid.ny)
            if not ok.all() or not grid.mask[ij[ok, 0], ij[ok, 1]].all():
                raise TubeError(f"the tube |t| < {delta0} leaves the domain")
    fine = 8 * curve.m
    th_fine = np.arange(fine) / fine
    tree = cKDTree(gam(th_fine).T)
    dist, idx = tree.query(pts, distance_upper_bound=delta0 * 1.05 + 2.0 / fine * curve.length)
    cand = np.isfinite(dist)
    theta = np.full(len(pts), np.nan)
    tt = np.full(len(pts), np.nan)
    if cand.any():
        x = pts[cand]
        th = th_fine[idx[cand]]
        g, nn = gam(th).T, nor(th).T
        t = np.einsum("ij,ij->i", x - g, nn)
        for _ in range(30):
            g, gt, nn, nt = gam(th).T, gam_th(th).T, nor(th).T, nor_th(th).T
            r = g + t[:, None] * nn - x
            c0 = gt + t[:, None] * nt
            det = c0[:, 0] * nn[:, 1] - c0[:, 1] * nn[:, 0]
            dth = (r[:, 0] * nn[:, 1] - r[:, 1] * nn[:, 0]) / det
            dt = (c0[:, 0] * r[:, 1] - c0[:, 1] * r[:, 0]) / det
            th = np.mod(th - dth, 1.0)
            t = t - dt
            if np.max(np.abs(dth) + np.abs(dt)) < 1e-14:
                break
        err = np.linalg.norm(gam(th).T + t[:, None] * nor(th).T - x, axis=1)
        theta[cand], tt[cand] = th, t
        max_err = float(np.max(err[np.abs(t) < delta0], initial=0.0))
    else:
        max_err = 0.0
    present = cand.copy()
    present[cand] = np.abs(tt[cand]) < delta0
    return FermiChart(theta, tt, present, delta0, max_err)


# ---------------------------------------------------------- layer model ---- #
@dataclass(frozen=True)
class _LayerCoefficients:
    alpha: np.ndarray
    beta: np.ndarray
    a32: np.ndarray
    b21: np.ndarray
    q_t: np.ndarray
    f: np.ndarray  # (N, m)
    e: np.ndarray  # (N, m)

    @classmethod
    def from_curve(cls, curve: CurveGeometry, state: LayerState | None, amplitudes: bool):
        m = curve.m
        f = np.zeros((0, m)) if state is None else state.f
        e = np.zeros_like(f) if state is None or not amplitudes else state.e
        return cls(curve.alpha, curve.beta, curve.a32, curve.b21, curve.q_t, f, e)

    def at(self, theta: np.ndarray) -> "_LayerCoefficients":
        vals = {k: _Periodic(getattr(self, k))(theta) for k in ("alpha", "beta", "a32", "b21", "q_t")}
        N = self.f.shape[0]
        f = _Periodic(self.f)(theta) if N else np.zeros((0,) + np.shape(theta))
        e = _Periodic(self.e)(theta) if N else np.zeros((0,) + np.shape(theta))
        return _LayerCoefficients(f=f.reshape((N,) + np.shape(theta)), e=e.reshape((N,) + np.shape(theta)), **vals)


def _layer_sum(prof: ProfileSet, c: _LayerCoefficients, t: np.ndarray, eps: float, order: int, p: float) -> np.ndarray:
    """sum_k V_k at points with coefficient arrays broadcast against t."""
    total = np.zeros(np.broadcast(t, c.alpha).shape)
    lead = c.alpha ** (1.0 - p)
    for k in range(c.f.shape[0]):
        fk, ek = c.f[k], c.e[k]
        x = c.beta * (t / eps - fk)
        V = prof.sample("w", x)
        if order >= 1:
            phi1 = (
                c.b21 * lead * c.beta * prof.sample("w0", x)
                + c.a32 * lead * c.beta * prof.sample("w1", x)
                + c.a32 * lead * c.beta**2 * fk * prof.sample("w2", x)
                - p / c.alpha * c.q_t * fk * prof.sample("w3", x)
            )
            V = V + eps * phi1
        if np.any(ek != 0.0):
            V = V + eps * ek * prof.sample("Z", x)
        total = total + V
    return total


def theorem_scaling(curve: CurveGeometry) -> np.ndarray:
    """Stretch factor written through Psi, the tangent and the adjugate of A.

    Computes [q^(p-1) (1 - <gamma', n>) / <A* n, n>]^(1/2) from the raw
    geometry.  It coincides with ``curve.beta`` when A is the identity.
    """
    q = np.asarray(curve.q_field(curve.gamma), dtype=float)
    adj = curve.matrix_field.adjugate(curve.gamma)
    gn = np.einsum("ij,ij->i", curve.tangent, curve.n)
    ann = np.einsum("ij,ijk,ik->i", curve.n, adj, curve.n)
    return np.sqrt(q ** (curve.p - 1.0) * (1.0 - gn) / ann)


# -------------------------------------------------------------- ansatz ---- #
@dataclass(frozen=True)
class Ansatz2D:
    grid: object
    u: np.ndarray  # interior node values
    chart: FermiChart
    eps: float
    p: float
    config: AnsatzConfig
    curve: CurveGeometry
    profile: ProfileSet
    eigenfield: EigenField
    branch: NegativeBranch
    state: LayerState | None
    coefficients: _LayerCoefficients = field(repr=False)

    @property
    def N(self) -> int:
        return 0 if self.state is None else self.state.N

    @property
    def u_grid(self) -> np.ndarray:
        return self.grid.to_grid(self.u)

    def layer_part(self, theta: np.ndarray, t: np.ndarray) -> np.ndarray:
        """eta(t) alpha(theta) sum_k V_k at chart coordinates."""
        c = self.coefficients.at(theta)
        return cutoff(t, self.config.delta) * c.alpha * _layer_sum(self.profile, c, t, self.eps, self.config.order, self.p)


def _grid_spline(grid, values_interior: np.ndarray):
    return interpolate.RectBivariateSpline(grid.x, grid.y, grid.to_grid(values_interior), kx=3, ky=3)


def _psi_function(fld: EigenField) -> Callable[[np.ndarray], np.ndarray]:
    fn = getattr(fld, "psi_fn", None)
    if fn is not None:
        return lambda pts: np.asarray(fn(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:-1]) / fld.psi_scale
    spl = _grid_spline(fld.grid, fld.psi)
    return lambda pts: spl.ev(pts[..., 0], pts[..., 1])


def build_ansatz(
    fld: EigenField,
    curve: CurveGeometry,
    profile: ProfileSet,
    state: LayerState | None,
    config: AnsatzConfig,
    eps: float,
    branch: NegativeBranch | None = None,
) -> Ansatz2D:
    p = profile.p
    if not p > 3.0:
        raise InvalidExponentError(f"the layered ansatz needs p > 3, got {p}")
    if abs(curve.p - p) > 1e-12:
        raise ValidationError("curve and profile use different exponents")
    if state is not None and state.N > 1:
        got = separation_check(state, curve.beta)
        need = required_separation(eps, p)
        if got <= need:
            raise LayerOverlapError(f"layer separation {got:.4g} below required {need:.4g}")
    if branch is None:
        branch = solve_negative_branch(fld, eps, p)
    grid = fld.grid
    chart = fermi_chart(curve, grid.interior_points, config.delta0, grid=grid)
    coeffs = _LayerCoefficients.from_curve(curve, state, config.amplitudes)
    u = branch.u.copy()
    sel = chart.present & (np.abs(np.nan_to_num(chart.t, nan=np.inf)) < config.support)
    if state is not None and sel.any():
        c = coeffs.at(chart.theta[sel])
        t = chart.t[sel]
        u[sel] += cutoff(t, config.delta) * c.alpha * _layer_sum(profile, c, t, eps, config.order, p)
    return Ansatz2D(grid, u, chart, eps, p, config, curve, profile, fld, branch, state, coeffs)


# ------------------------------------------------------------ residual ---- #
_D1 = np.array([-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0]) / 60.0


def _d_dt(values: np.ndarray, h: float) -> np.ndarray:
    """Sixth-order central first derivative along axis 0; three rows lost at each end."""
    n = values.shape[0]
    out = np.zeros((n - 6,) + values.shape[1:])
    for k, c in enumerate(_D1):
        if c:
            out += c * values[k : n - 6 + k]
    return out / h


@dataclass(frozen=True)
class ResidualReport:
    eps: float
    tube_l2: float
    band_l2: float
    grid_l2: float
    grid_sup: float
    tube_sup: float
    band_excess_l2: float

    def to_dict(self) -> dict:
        out = {k: float(v) for k, v in self.__dict__.items()}
        out["band_ratio"] = float(self.band_ratio)
        return out

    @property
    def band_ratio(self) -> float:
        """Layer-induced band residual relative to the plateau residual."""
        return self.band_excess_l2 / self.tube_l2 if self.tube_l2 > 0 else math.inf


def tube_residual(ansatz: Ansatz2D, t_max: float | None = None, layers: bool = True):
    """Residual on the (theta, t) tensor grid: returns (theta, t, r, jacobian).

    With ``layers=False`` the layer part is dropped, leaving the residual of
    the interpolated negative branch alone.
    """
    cfg, curve, eps, p = ansatz.config, ansatz.curve, ansatz.eps, ansatz.p
    t_max = cfg.support if t_max is None else t_max
    ht = eps / cfg.t_points_per_eps
    nt = int(math.ceil(t_max / ht))
    t = ht * np.arange(-nt - 6, nt + 7)
    ell = curve.length
    gamma, n = curve.gamma, curve.n
    g_th, n_th = ell * curve.tangent, ell * curve.n_s
    T = t[:, None, None]
    X = gamma[None] + T * n[None]  # (nt, m, 2)
    c0 = g_th[None] + T * n_th[None]
    c1 = np.broadcast_to(n[None], c0.shape)
    det = c0[..., 0] * c1[..., 1] - c0[..., 1] * c1[..., 0]
    J = np.abs(det)
    # rows of the inverse of [c0 c1] are the contravariant basis vectors
    inv0 = np.stack([c1[..., 1], -c1[..., 0]], -1) / det[..., None]
    inv1 = np.stack([-c0[..., 1], c0[..., 0]], -1) / det[..., None]
    A = curve.matrix_field(X)
    Ainv0 = np.einsum("...ij,...j->...i", A, inv0)
    Ainv1 = np.einsum("...ij,...j->...i", A, inv1)
    G00 = np.einsum("...i,...i->...", inv0, Ainv0)
    G01 = np.einsum("...i,...i->...", inv0, Ainv1)
    G11 = np.einsum("...i,...i->...", inv1, Ainv1)

    ubar = _grid_spline(ansatz.grid, ansatz.branch.u).ev(X[..., 0], X[..., 1])
    c = ansatz.coefficients
    layer = 0.0
    if layers and ansatz.state is not None:
        layer = cutoff(T[..., 0], cfg.delta) * c.alpha[None] * _layer_sum(ansatz.profile, c, T[..., 0], eps, cfg.order, p)
    U = ubar + layer
    U_th = _theta_derivative(U)
    U_t = _d_dt(U, ht)
    core = slice(3, -3)
    F_th = J[core] * (G00[core] * U_th[core] + G01[core] * U_t)
    F_t = J[core] * (G01[core] * U_th[core] + G11[core] * U_t)
    div = (_theta_derivative(F_th)[3:-3] + _d_dt(F_t, ht)) / J[6:-6]
    psi = _psi_function(ansatz.eigenfield)(X[6:-6])
    Uc = U[6:-6]
    r = -(eps**2) * div - np.abs(Uc) ** p + psi
    return curve.theta, t[6:-6], r, J[6:-6]


def _l2(r, J, ht, dth, sel):
    return float(np.sqrt(np.sum((r[sel] ** 2) * J[sel]) * ht * dth))


def pde_residual(ansatz: Ansatz2D) -> ResidualReport:
    """Residual of eps^2 Div(A grad u) + |u|^p - Psi = 0, i.e. -eps^2 Div(A grad u) - |u|^p + Psi.

    ``tube_l2`` integrates over the plateau |t| <= 1.5 delta and ``band_l2``
    over the cutoff band 1.5 delta < |t| < 2.5 delta, both with the area
    element of the chart.  ``band_excess_l2`` is the band norm of the change
    in residual caused by adding the cut-off layers to the negative branch.
    ``grid_l2`` and ``grid_sup`` use the 2D stencil on interior nodes.
    """
    theta, t, r, J = tube_residual(ansatz)
    r0 = tube_residual(ansatz, layers=False)[2]
    cfg = ansatz.config
    ht = t[1] - t[0]
    dth = 1.0 / len(theta)
    plateau = np.abs(t) <= cfg.plateau
    band = (np.abs(t) > cfg.plateau) & (np.abs(t) < cfg.support)
    tube = _l2(r, J, ht, dth, plateau)
    band_norm = _l2(r, J, ht, dth, band)
    excess = _l2(r - r0, J, ht, dth, band)
    fld = ansatz.eigenfield
    rg = grid_residual(ansatz.u, fld, ansatz.eps, ansatz.p)
    return ResidualReport(
        ansatz.eps,
        tube,
        band_norm,
        float(np.sqrt(np.sum(rg**2)) * ansatz.grid.h),
        float(np.max(np.abs(rg))),
        float(np.max(np.abs(r[plateau]))),
        excess,
    )


def grid_residual(u: np.ndarray, fld: EigenField, eps: float, p: float) -> np.ndarray:
    """-eps^2 Div(A grad u) - |u|^p + Psi on interior nodes (zero boundary values).

    The stored stencil matrix discretizes -Div(A grad .).
    """
    return eps**2 * (fld.operator.matrix @ u) - np.abs(u) ** p + fld.psi


# --------------------------------------------------------------- sweep ---- #
@dataclass(frozen=True)
class SweepReport:
    eps: list
    norms: dict  # order -> list of tube norms
    slopes: dict  # order -> fitted slope
    monotone: dict

    def to_dict(self) -> dict:
        return {
            "eps": list(self.eps),
            "norms": {str(k): v for k, v in self.norms.items()},
            "slopes": {str(k): v for k, v in self.slopes.items()},
            "monotone": {str(k): v for k, v in self.monotone.items()},
        }


def residual_sweep(eps_list: Sequence[float], build: Callable[[float, int], Ansatz2D], orders=(0, 1)) -> SweepReport:
    """Fit log(tube L2 residual) against log(eps) for each ansatz order.

    ``build(eps, order)`` must return the ansatz for that eps; it is called
    once per (eps, order).
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 4:
        raise ValidationError("a residual sweep needs at least four eps values")
    norms, slopes, mono = {}, {}, {}
    for order in orders:
        vals = [pde_residual(build(eps, order)).tube_l2 for eps in eps_list]
        norms[order] = vals
        slopes[order] = float(np.polyfit(np.log(eps_list), np.log(vals), 1)[0])
        idx = np.argsort(eps_list)
        mono[order] = bool(np.all(np.diff(np.asarray(vals)[idx]) > 0))
        if not mono[order]:
            warnings.warn(f"order-{order} residuals are not monotone in eps: {vals}", SweepWarning, stacklevel=2)
    return SweepReport(eps_list, norms, slopes, mono)


# -------------------------------------------------------------- newton ---- #
@dataclass(frozen=True)
class NewtonResult:
    u: np.ndarray
    iterations: int
    history: list
    census: int
    section_counts: list
    peak_offsets: list
    distance_to_ansatz: float


def layer_census(ansatz: Ansatz2D, u: np.ndarray, sections: int | None = None):
    """Count maxima of u + Psi^{1/p} along normal sections through the curve.

    Returns (census, per-section counts, per-section peak t values).  The
    prominence threshold is 0.1 times the largest profile height alpha w(0).
    """
    sections = ansatz.config.census_sections if sections is None else sections
    grid, curve, p = ansatz.grid, ansatz.curve, ansatz.p
    spline = _grid_spline(grid, u + ansatz.eigenfield.psi ** (1.0 / p))
    thetas = np.arange(sections) / sections
    hs = ansatz.eps / 16.0
    t = np.arange(-ansatz.config.plateau, ansatz.config.plateau + hs / 2, hs)
    gam = _Periodic(curve.gamma.T)(thetas).T
    nor = _Periodic(curve.n.T)(thetas).T
    height = float(np.max(curve.alpha)) * ansatz.profile.w_center
    counts, peaks = [], []
    for g, nn in zip(gam, nor):
        pts = g[None] + t[:, None] * nn[None]
        vals = spline.ev(pts[:, 0], pts[:, 1])
        idx, _ = signal.find_peaks(vals, prominence=0.1 * height)
        counts.append(len(idx))
        peaks.append(t[idx])
    census = Counter(counts).most_common(1)[0][0]
    return census, counts, peaks


def newton_refine(ansatz: Ansatz2D, max_iter: int = 10, tol: float = 1e-10, u0: np.ndarray | None = None) -> NewtonResult:
    """Damped Newton on eps^2 L u - |u|^p + Psi = 0 with zero boundary values.

    Convergence is declared when the sup norm of the discrete residual is
    below ``tol``.  At least one Newton step is always taken.
    """
    fld, eps, p = ansatz.eigenfield, ansatz.eps, ansatz.p
    L = fld.operator.matrix
    u = (ansatz.u if u0 is None else u0).copy()
    F = grid_residual(u, fld, eps, p)
    r = float(np.max(np.abs(F)))
    history = [r]
    it = 0
    for it in range(1, max_iter + 1):
        J = (eps**2 * L - sparse.diags(p * np.abs(u) ** (p - 2) * u)).tocsc()
        step = splinalg.spsolve(J, -F)
        lam = 1.0
        for _ in range(31):
            trial = u + lam * step
            Ft = grid_residual(trial, fld, eps, p)
            rt = float(np.max(np.abs(Ft)))
            if rt < r or rt < tol:
                break
            lam *= 0.5
        else:
            raise RefinementError("Newton line search failed", history=history)
        u, F, r = trial, Ft, rt
        history.append(r)
        if r < tol:
            break
    else:
        raise RefinementError(f"Newton did not reach {tol:g} in {max_iter} iterations", history=history)
    census, counts, peaks = layer_census(ansatz, u)
    if census != ansatz.N:
        warnings.warn(f"layer census {census} differs from N = {ansatz.N}", LayerLossWarning, stacklevel=2)
    offsets = []
    if ansatz.state is not None:
        thetas = np.arange(len(peaks)) / len(peaks)
        f_at = _Periodic(ansatz.state.f)(thetas).reshape(ansatz.N, -1)
        for s, pk in enumerate(peaks):
            if len(pk) == ansatz.N:
                offsets.append(float(np.max(np.abs(np.sort(pk) - np.sort(eps * f_at[:, s])))))
    return NewtonResult(u, it, history, census, counts, offsets, float(np.max(np.abs(u - ansatz.u))))


def export_csv(ansatz: Ansatz2D, path, u: np.ndarray | None = None) -> None:
    """Write x, y, u and the grid residual on interior nodes."""
    u = ansatz.u if u is None else u
    pts = ansatz.grid.interior_points
    r = grid_residual(u, ansatz.eigenfield, ansatz.eps, ansatz.p)
    np.savetxt(path, np.column_stack([pts, u, r]), delimiter=",", header="x,y,u,residual", comments="")
