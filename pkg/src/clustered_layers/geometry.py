"""Closed curves under an anisotropic matrix field.

A curve is stored by its samples on a uniform parameter grid theta_i = i/m
and handled spectrally.  After construction it is reparametrized so that
the parameter speed equals the total length ``ell``; every coefficient below
is expressed in the arclength variable ``s = ell * theta`` (``'`` means d/ds),
which reduces to the unit-speed convention when ``ell = 1``.

Notation: ``A*`` is the adjugate of ``A``, ``nu`` the outward unit normal,
``n = A nu / |A nu|`` the skewed normal, and ``q = Psi^(1/p)``.  Suffixes
``_t`` and ``_tt`` are derivatives along the straight lines ``gamma + t n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, special

from . import spectral
from .errors import (
    DegenerateGeometryError,
    EllipticityError,
    GeometryError,
    NonConvergenceError,
    TubeError,
)

PointFunction = Callable[[np.ndarray], np.ndarray]

__all__ = [
    "MatrixField",
    "CurveGeometry",
    "build_curve",
    "circle_points",
    "ellipse_points",
    "functional_K",
    "functional_K_points",
    "first_variation",
    "criticality_residual",
    "jacobi_coefficients",
    "second_variation",
    "find_critical_curve",
    "radial_bessel_root",
    "critical_radius_radial",
]


# -------------------------------------------------------- matrix fields ---- #
def _as_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of size 2")
    return x


@dataclass(frozen=True)
class MatrixField:
    """Symmetric 2x2 coefficient field ``x -> A(x)``.

    ``entries`` maps points of shape (..., 2) to the tuple (a11, a12, a22) of
    arrays of shape (...).
    """

    entries: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, x) -> np.ndarray:
        x = _as_points(x)
        a11, a12, a22 = (np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1]) for v in self.entries(x))
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    def adjugate(self, x) -> np.ndarray:
        A = self(x)
        out = np.empty_like(A)
        out[..., 0, 0] = A[..., 1, 1]
        out[..., 1, 1] = A[..., 0, 0]
        out[..., 0, 1] = -A[..., 0, 1]
        out[..., 1, 0] = -A[..., 1, 0]
        return out

    def scaled(self, c: float) -> "MatrixField":
        base = self.entries
        return MatrixField(lambda x: tuple(c * v for v in base(x)), f"{c}*{self.name}", dict(self.params))

    def ellipticity_bounds(self, x) -> tuple[float, float]:
        """Smallest and largest eigenvalue over the sample points."""
        A = self(_as_points(x)).reshape(-1, 2, 2)
        ev = np.linalg.eigvalsh(A)
        return float(ev[:, 0].min()), float(ev[:, 1].max())

    def check_ellipticity(self, x, floor: float = 1e-12) -> tuple[float, float]:
        lo, hi = self.ellipticity_bounds(x)
        if not lo > floor:
            raise EllipticityError(f"matrix field {self.name!r} is not elliptic: min eigenvalue {lo:.3e}")
        return lo, hi

    # built-in families
    @classmethod
    def identity(cls, scale: float = 1.0) -> "MatrixField":
        return cls(lambda x: (scale, 0.0, scale), "identity", {"scale": scale})

    @classmethod
    def constant(cls, a11: float, a12: float, a22: float) -> "MatrixField":
        return cls(lambda x: (a11, a12, a22), "constant", {"a11": a11, "a12": a12, "a22": a22})

    @classmethod
    def diagonal_bump(cls, a: float) -> "MatrixField":
        """diag(1, 1 + a sin(2 pi x1) sin(2 pi x2))."""

        def entries(x):
            bump = 1.0 + a * np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])
            return 1.0, 0.0, bump

        return cls(entries, "diagonal", {"a": a})

    @classmethod
    def rotated_diagonal(cls, a: float, angle: float) -> "MatrixField":
        """R diag(1, 1 + a sin(2 pi x1) sin(2 pi x2)) R^T with R the rotation by ``angle``."""
        c, s = math.cos(angle), math.sin(angle)

        def entries(x):
            lam = 1.0 + a * np.sin(2 * np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1])
            return c * c + s * s * lam, c * s * (1.0 - lam), s * s + c * c * lam

        return cls(entries, "rotated", {"a": a, "angle": angle})

    @classmethod
    def from_name(cls, name: str, **params) -> "MatrixField":
        if name == "identity":
            return cls.identity(params.get("scale", 1.0))
        if name == "diagonal":
            return cls.diagonal_bump(params.get("a", 0.0))
        if name == "rotated":
            return cls.rotated_diagonal(params.get("a", 0.0), params.get("angle", 0.0))
        if name == "constant":
            return cls.constant(params["a11"], params.get("a12", 0.0), params["a22"])
        raise ValueError(f"unknown matrix field {name!r}")


# ----------------------------------------------------------- helpers ---- #
def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", u, v)


def _quad(M: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """<M u, v> node-wise."""
    return np.einsum("...ij,...j,...i->...", M, u, v)


_D1 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0
_D2 = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0


def _normal_line_derivatives(func, base: np.ndarray, direction: np.ndarray, step: float):
    """Value, first and second derivative of ``func(base + t direction)`` at t = 0."""
    vals = [func(base + k * step * direction) for k in (-2, -1, 0, 1, 2)]
    d1 = sum(c * v for c, v in zip(_D1, vals)) / step
    d2 = sum(c * v for c, v in zip(_D2, vals)) / step**2
    return vals[2], d1, d2


def circle_points(m: int, radius: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    th = 2 * np.pi * np.arange(m) / m
    return np.column_stack([center[0] + radius * np.cos(th), center[1] + radius * np.sin(th)])


def ellipse_points(m: int, a: float, b: float, center=(0.0, 0.0), angle: float = 0.0) -> np.ndarray:
    th = 2 * np.pi * np.arange(m) / m
    x, y = a * np.cos(th), b * np.sin(th)
    c, s = math.cos(angle), math.sin(angle)
    return np.column_stack([center[0] + c * x - s * y, center[1] + s * x + c * y])


def _signed_area(X: np.ndarray) -> float:
    x, y = X[:, 0], X[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _self_intersects(X: np.ndarray) -> bool:
    """Segment-pair crossing test for the closed polygon through the samples."""
    P, Q = X, np.roll(X, -1, axis=0)
    m = X.shape[0]

    def orient(a, b, c):
        return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])

    i, j = np.triu_indices(m, k=2)
    keep = ~((i == 0) & (j == m - 1))
    i, j = i[keep], j[keep]
    d1 = orient(P[i], Q[i], P[j])
    d2 = orient(P[i], Q[i], Q[j])
    d3 = orient(P[j], Q[j], P[i])
    d4 = orient(P[j], Q[j], Q[i])
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


def arclength_resample(X: np.ndarray, passes: int = 3) -> tuple[np.ndarray, float]:
    """Resample a closed curve so that its parameter speed is constant.

    Returns the new samples and the length.
    """
    m = X.shape[0]
    theta = np.arange(m) / m
    for _ in range(passes):
        speed = np.linalg.norm(spectral.derivative(X), axis=1)
        ell = float(np.mean(speed))
        wobble = spectral.antiderivative_zero_mean(speed - ell)
        # s(theta) = ell*theta + wobble(theta); solve s(theta_j) = ell*j/m by Newton
        tj = theta.copy()
        for _ in range(50):
            sval = ell * tj + spectral.evaluate(wobble, tj)
            sp = spectral.evaluate(speed, tj)
            step = (sval - ell * theta) / sp
            tj -= step
            if np.max(np.abs(step)) < 1e-15:
                break
        X = spectral.evaluate(X, tj)
    ell = float(np.mean(np.linalg.norm(spectral.derivative(X), axis=1)))
    return X, ell


# ------------------------------------------------------ CurveGeometry ---- #
@dataclass(frozen=True)
class CurveGeometry:
    """A closed curve with its skewed frame, expansion coefficients and weights.

    All arrays are sampled at theta_i = i/m and derivatives are with respect
    to arclength.
    """

    p: float
    length: float
    theta: np.ndarray
    gamma: np.ndarray
    tangent: np.ndarray
    gamma_ss: np.ndarray
    nu: np.ndarray
    curvature: np.ndarray
    n: np.ndarray
    n_s: np.ndarray
    A: np.ndarray
    Astar: np.ndarray
    Astar_t: np.ndarray
    Astar_tt: np.ndarray
    q: np.ndarray
    q_t: np.ndarray
    q_tt: np.ndarray
    D: np.ndarray
    W0: np.ndarray
    a11: np.ndarray
    a22: np.ndarray
    a31: np.ndarray
    a32: np.ndarray
    a33: np.ndarray
    b11: np.ndarray
    b21: np.ndarray
    b22: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    matrix_field: MatrixField = field(repr=False)
    q_field: PointFunction = field(repr=False)
    normal_step: float = 1e-3

    @property
    def m(self) -> int:
        return self.theta.size

    def d_ds(self, f: np.ndarray, order: int = 1) -> np.ndarray:
        return spectral.derivative(f, order) / self.length**order

    def integrate(self, f: np.ndarray) -> float:
        """Integral over the curve with respect to arclength."""
        return self.length * spectral.mean(f)

    def with_field(self, q_field: PointFunction) -> "CurveGeometry":
        return build_curve(self.gamma, self.matrix_field, q_field, self.p, normal_step=self.normal_step)


def build_curve(
    points: np.ndarray,
    matrix_field: MatrixField,
    q_field: PointFunction,
    p: float,
    *,
    normal_step: float = 1e-3,
    tube_half_width: float | None = None,
    inside: Callable[[np.ndarray], np.ndarray] | None = None,
    reparametrize: bool = True,
) -> CurveGeometry:
    """Build the frame and every coefficient array from curve samples.

    ``points`` are samples on a uniform parameter grid of a smooth closed curve;
    they are oriented counter-clockwise and resampled by arclength.
    ``inside`` (a vectorized indicator) together with ``tube_half_width``
    triggers the check that the tube around the curve stays in the domain.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[1] != 2 or X.shape[0] < 8:
        raise GeometryError("curve needs at least 8 samples of shape (m, 2)")
    if _signed_area(X) < 0:
        X = np.concatenate([X[:1], X[:0:-1]])
    if _self_intersects(X):
        raise GeometryError("curve samples self-intersect")
    if reparametrize:
        X, ell = arclength_resample(X)
    else:
        ell = float(np.mean(np.linalg.norm(spectral.derivative(X), axis=1)))
    m = X.shape[0]
    theta = np.arange(m) / m

    d = lambda f, k=1: spectral.derivative(f, k) / ell**k
    T = d(X)
    if np.max(np.abs(np.linalg.norm(T, axis=1) - 1.0)) > 1e-6:
        raise GeometryError("arclength reparametrization failed; increase the sample count")
    Xss = d(X, 2)
    nu = np.column_stack([T[:, 1], -T[:, 0]])
    curvature = _dot(Xss, nu)

    A = matrix_field(X)
    Anu = np.einsum("...ij,...j->...i", A, nu)
    n = Anu / np.linalg.norm(Anu, axis=1)[:, None]
    n_s = d(n)

    adj = matrix_field.adjugate
    Astar, Astar_t, Astar_tt = _normal_line_derivatives(adj, X, n, normal_step)
    q, q_t, q_tt = _normal_line_derivatives(lambda y: np.asarray(q_field(y), dtype=float), X, n, normal_step)
    if np.any(q <= 0):
        raise GeometryError("q must be positive on the curve")

    if tube_half_width is not None and inside is not None:
        for sgn in (-1.0, 1.0):
            for frac in (0.5, 1.0):
                if not np.all(inside(X + sgn * frac * tube_half_width * n)):
                    raise TubeError(f"tube of half width {tube_half_width} leaves the domain")

    gn = _dot(T, n)
    D = 1.0 - gn**2
    W0 = _quad(Astar, T, T)
    gnp = _dot(T, n_s)
    W_t = _quad(Astar_t, T, T)
    cross = _quad(Astar, T, n_s)
    a11 = _quad(Astar, n, n) / D
    a22 = -(_quad(Astar, n, n_s) + _quad(Astar_t, n, T)) / D
    a31 = W0 / D
    a32 = W_t / D + 2.0 * cross / D - 2.0 * gnp * W0 / D**2
    a33 = (
        (_quad(Astar, n_s, n_s) + 2.0 * _quad(Astar_t, T, n_s) + 0.5 * _quad(Astar_tt, T, T)) / D
        - 2.0 * gnp / D**2 * (W_t + 2.0 * cross)
        + (4.0 * gnp**2 / D**3 - _dot(n_s, n_s) / D**2) * W0
    )
    D_s = d(D)
    b11 = d(a11) + 0.5 * D_s / D * a11 + a22
    b21 = gnp * a31 / D + a32
    b22 = (
        0.5 * D_s / D * a22
        + (_dot(n_s, n_s) / D - 2.0 * gnp**2 / D**2) * a31
        + gnp / D * a32
        + d(a22)
        + 2.0 * a33
    )
    if np.any(a11 <= 0) or np.any(a31 <= 0):
        raise EllipticityError("a11 and a31 must be positive on the curve")
    alpha = q
    beta = np.sqrt(alpha ** (p - 1.0) / a31)

    return CurveGeometry(
        p=float(p),
        length=ell,
        theta=theta,
        gamma=X,
        tangent=T,
        gamma_ss=Xss,
        nu=nu,
        curvature=curvature,
        n=n,
        n_s=n_s,
        A=A,
        Astar=Astar,
        Astar_t=Astar_t,
        Astar_tt=Astar_tt,
        q=q,
        q_t=q_t,
        q_tt=q_tt,
        D=D,
        W0=W0,
        a11=a11,
        a22=a22,
        a31=a31,
        a32=a32,
        a33=a33,
        b11=b11,
        b21=b21,
        b22=b22,
        alpha=alpha,
        beta=beta,
        matrix_field=matrix_field,
        q_field=q_field,
        normal_step=normal_step,
    )


# --------------------------------------------------------- functional ---- #
def functional_K_points(X: np.ndarray, matrix_field: MatrixField, q_field: PointFunction, p: float) -> float:
    """K for curve samples on a uniform parameter grid of [0, 1), any speed."""
    Xt = spectral.derivative(X)
    W = _quad(matrix_field.adjugate(X), Xt, Xt)
    q = np.asarray(q_field(X), dtype=float)
    return spectral.mean(q ** ((p + 3.0) / 2.0) * np.sqrt(W))


def functional_K(curve: CurveGeometry) -> float:
    return curve.integrate(curve.q ** ((curve.p + 3.0) / 2.0) * np.sqrt(curve.W0))


def first_variation_density(curve: CurveGeometry) -> np.ndarray:
    """Density of J'(0) against normal displacements h n, per unit arclength."""
    p, q = curve.p, curve.q
    shape = _quad(curve.Astar, curve.n_s, curve.tangent) + 0.5 * _quad(curve.Astar_t, curve.tangent, curve.tangent)
    return q ** ((p + 1.0) / 2.0) / np.sqrt(curve.W0) * (0.5 * (p + 3.0) * curve.q_t * curve.W0 + q * shape)


def first_variation(curve: CurveGeometry, h: np.ndarray) -> tuple[float, np.ndarray]:
    """(J'(0) h, density) for the perturbation gamma + h n."""
    dens = first_variation_density(curve)
    return curve.integrate(dens * np.asarray(h, dtype=float)), dens


def criticality_residual(curve: CurveGeometry) -> np.ndarray:
    p = curve.p
    # alpha^{2-p} beta^2 = alpha / a31
    w = curve.alpha / curve.a31
    return curve.q_t - curve.a32 * w / (p + 3.0) + 2.0 * curve.b21 * w / (p + 3.0)


def criticality_defect(curve: CurveGeometry) -> float:
    return float(np.max(np.abs(criticality_residual(curve))))


# ---------------------------------------------------------- Jacobi ---- #
@dataclass(frozen=True)
class JacobiCoefficients:
    upsilon2: np.ndarray
    upsilon1: np.ndarray
    upsilon0: np.ndarray
    positive: bool
    l1: float
    l2: float
    length: float

    def theta_form(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coefficients of the same operator written in theta = s / length."""
        L = self.length
        return self.upsilon2 / L**2, self.upsilon1 / L, self.upsilon0


def jacobi_coefficients(curve: CurveGeometry, require_positive: bool = False) -> JacobiCoefficients:
    p = curve.p
    a, b = curve.alpha, curve.beta
    a_s, b_s, b_ss = curve.d_ds(a), curve.d_ds(b), curve.d_ds(b, 2)
    a11, a22, a32, a33 = curve.a11, curve.a22, curve.a32, curve.a33
    b11, b21, b22 = curve.b11, curve.b21, curve.b22
    lead = a ** (1.0 - p)
    u2 = lead * a11
    u1 = lead * (a22 - b11 + a11 * (b_s / b - 2.0 * a_s / a))
    bracket = (
        2.0 * a_s / a * a22
        + b_s / b * b11
        + b22
        - a33
        + 0.5 * (p + 3.0) * a ** (p - 2.0) / b**2 * curve.q_tt
        + (p + 2.0) / (2.0 * (p + 3.0)) * lead * b**2 * a32**2
        - (p + 1.0) / (p + 3.0) * lead * b**2 * a32 * b21
        - 2.0 / (p + 3.0) * lead * b**2 * b21**2
        + a11 * (b_ss / b + 2.0 * a_s * b_s / (a * b) - b_s**2 / b**2)
    )
    u0 = -lead * bracket
    positive = bool(np.min(u0) > 0)
    if require_positive and not positive:
        raise DegenerateGeometryError(f"Upsilon0 is not positive: min {np.min(u0):.3e}")
    l1 = curve.integrate(np.sqrt(np.maximum(u0, 0.0) / u2)) if positive else float("nan")
    l2 = curve.integrate(1.0 / np.sqrt(u2))
    return JacobiCoefficients(u2, u1, u0, positive, l1, l2, curve.length)


def jacobi_apply(curve: CurveGeometry, coeffs: JacobiCoefficients, u: np.ndarray) -> np.ndarray:
    """-Upsilon2 u'' + Upsilon1 u' - Upsilon0 u."""
    return -coeffs.upsilon2 * curve.d_ds(u, 2) + coeffs.upsilon1 * curve.d_ds(u) - coeffs.upsilon0 * u


def second_variation_operator(curve: CurveGeometry, h: np.ndarray) -> np.ndarray:
    """The linear operator whose kernel decides non-degeneracy, applied to h."""
    p = curve.p
    a, b = curve.alpha, curve.beta
    log_ab = curve.d_ds(b) / b + 2.0 * curve.d_ds(a) / a
    lead = a ** (1.0 - p)
    zeroth = (
        curve.a22 * log_ab
        - curve.a33
        + curve.b22
        + 0.5 * (p + 3.0) * a ** (p - 2.0) / b**2 * curve.q_tt
        + (p + 2.0) / (2.0 * (p + 3.0)) * lead * b**2 * curve.a32**2
        - (p + 1.0) / (p + 3.0) * lead * b**2 * curve.a32 * curve.b21
        - 2.0 / (p + 3.0) * lead * b**2 * curve.b21**2
    )
    return (
        -curve.a11 * curve.d_ds(h, 2)
        + (curve.a22 - curve.b11 - curve.a11 * log_ab) * curve.d_ds(h)
        + zeroth * h
    )


def second_variation(curve: CurveGeometry, h: np.ndarray, coeffs: JacobiCoefficients | None = None) -> float:
    """J''(0)[h, h] through the Jacobi operator, with u = beta h."""
    coeffs = coeffs or jacobi_coefficients(curve)
    u = curve.beta * np.asarray(h, dtype=float)
    weight = curve.alpha ** ((curve.p + 3.0) / 2.0) * np.sqrt(curve.W0)
    return curve.integrate(weight * u * jacobi_apply(curve, coeffs, u))


def jacobi_smallest_singular_value(curve: CurveGeometry, coeffs: JacobiCoefficients | None = None) -> float:
    """Smallest singular value of the collocated Jacobi operator (diagnostic)."""
    coeffs = coeffs or jacobi_coefficients(curve)
    m = curve.m
    cols = [jacobi_apply(curve, coeffs, e) for e in np.eye(m)]
    return float(np.linalg.svd(np.column_stack(cols), compute_uv=False)[-1])


# ------------------------------------------------- critical curve search ---- #
@dataclass(frozen=True)
class CriticalCurveResult:
    curve: CurveGeometry
    defect: float
    iterations: int
    history: list


def _perturbed(curve: CurveGeometry, h: np.ndarray) -> np.ndarray:
    return curve.gamma + h[:, None] * curve.n


def _differentiation_matrix(m: int, order: int) -> np.ndarray:
    return spectral.derivative(np.eye(m), order)


def hessian_matrix(curve: CurveGeometry, coeffs: JacobiCoefficients | None = None) -> np.ndarray:
    """Collocated second variation: h -> alpha^{(p+3)/2} sqrt(W0) beta Jacobi(beta h)."""
    coeffs = coeffs or jacobi_coefficients(curve)
    m, L = curve.m, curve.length
    D1 = _differentiation_matrix(m, 1) / L
    D2 = _differentiation_matrix(m, 2) / L**2
    jac = -coeffs.upsilon2[:, None] * D2 + coeffs.upsilon1[:, None] * D1 - np.diag(coeffs.upsilon0)
    left = curve.alpha ** ((curve.p + 3.0) / 2.0) * np.sqrt(curve.W0) * curve.beta
    return left[:, None] * jac * curve.beta[None, :]


def find_critical_curve(
    matrix_field: MatrixField,
    q_field: PointFunction,
    p: float,
    initial_points: np.ndarray,
    *,
    tol: float = 1e-9,
    max_iter: int = 40,
    mode_fraction: float = 1.0 / 3.0,
    normal_step: float = 1e-3,
) -> CriticalCurveResult:
    """Locate a critical curve of K near ``initial_points``.

    Each step moves the curve along ``h n`` where ``h`` solves the collocated
    second variation against the first variation density, which is Newton's
    method for J'(h) = 0.  The step is damped until the criticality defect
    drops; if no damping helps, a Sobolev-smoothed gradient step is tried.
    High Fourier modes of ``h`` (above ``mode_fraction * m``) are discarded.
    Newton does not distinguish maxima from saddles.
    """
    build = lambda X: build_curve(X, matrix_field, q_field, p, normal_step=normal_step)
    curve = build(initial_points)
    history = [criticality_defect(curve)]
    if history[-1] < tol:
        return CriticalCurveResult(curve, history[-1], 0, history)
    k = spectral.wavenumbers(curve.m)
    keep = np.abs(k) <= mode_fraction * curve.m

    def filtered(h):
        return np.real(np.fft.ifft(np.where(keep, np.fft.fft(h), 0.0)))

    for it in range(1, max_iter + 1):
        dens = first_variation_density(curve)
        try:
            step = filtered(np.linalg.solve(hessian_matrix(curve), -dens))
        except np.linalg.LinAlgError:
            step = np.zeros(curve.m)
        candidates = [step]
        smooth = np.real(np.fft.ifft(np.fft.fft(dens) / (1.0 + (2 * np.pi * k / curve.length) ** 2)))
        candidates.append(0.1 * smooth / max(np.max(np.abs(smooth)), 1e-300) * curve.length / (2 * np.pi))
        accepted = False
        for cand in candidates:
            lam = 1.0
            for _ in range(30):
                try:
                    trial = build(_perturbed(curve, lam * cand))
                except GeometryError:
                    trial = None
                if trial is not None and criticality_defect(trial) < history[-1]:
                    curve, accepted = trial, True
                    break
                lam *= 0.5
            if accepted:
                break
        history.append(criticality_defect(curve))
        if history[-1] < tol:
            return CriticalCurveResult(curve, history[-1], it, history)
        if not accepted:
            break
    raise NonConvergenceError(f"critical curve search stalled at defect {history[-1]:.3e}", history=history)


# ------------------------------------------------------ radial oracle ---- #
J01 = float(special.jn_zeros(0, 1)[0])


def radial_bessel_root(p: float, domain_radius: float = 1.0) -> tuple[PointFunction, Callable[[float], float]]:
    """q = Psi^{1/p} for the first Dirichlet mode of the disk, and its radial profile."""
    k = J01 / domain_radius

    def radial(r):
        return special.j0(k * np.asarray(r, dtype=float)) ** (1.0 / p)

    def q_field(x):
        x = np.asarray(x, dtype=float)
        return radial(np.hypot(x[..., 0], x[..., 1]))

    return q_field, radial


def critical_radius_radial(p: float, domain_radius: float = 1.0) -> float:
    """Radius of the critical circle for the radial disk mode with A = I.

    Solves ((p+3)/2) q'(R) + q(R)/R = 0 with q = J0(j01 R)^{1/p}, i.e.
    (p+3)/(2p) x J1(x)/J0(x) = 1 for x = j01 R.
    """
    g = lambda x: (p + 3.0) / (2.0 * p) * x * special.j1(x) / special.j0(x) - 1.0
    x = optimize.brentq(g, 1e-6, J01 * (1.0 - 1e-9), xtol=1e-15)
    return float(x / J01 * domain_radius)
