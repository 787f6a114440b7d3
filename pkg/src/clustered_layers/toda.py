"""Reduced layer-location system: interaction distance, Toda matrices and
periodic solvers on the curve parameter.

Coefficient arrays passed to the periodic solvers are sampled on the uniform
grid theta_i = i/m of [0, 1) and derivatives are taken in theta.  A curve of
length ``ell`` supplies them through ``JacobiCoefficients.theta_form()``.

Layer offsets use the shifted variables of the reduced system:

* ``fb_j = (j - (N+1)/2) rho + d_j`` is the stretched position of layer j,
* ``v_j = d_{j+1} - d_j`` for j < N and ``v_N = sum_j d_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from . import spectral
from .errors import (
    DegenerateGeometryError,
    LayerOverlapError,
    RecursionStallError,
    ResonanceError,
    ValidationError,
)

__all__ = [
    "RhoSolution",
    "TodaMatrices",
    "LayerState",
    "solve_rho",
    "rho_asymptotic",
    "toda_matrices",
    "offsets_from_differences",
    "leading_layer_profile",
    "q_bar",
    "layer_equations",
    "refine_layer_profile",
    "periodic_spectrum",
    "solve_periodic_linear",
    "resonance_gaps",
    "amplitude_solve",
    "build_layer_state",
    "jacobi_toda_residual",
]


# ---------------------------------------------------------------- rho ---- #
@dataclass(frozen=True)
class RhoSolution:
    rho: float
    sigma: float
    asymptotic: float
    gap: float
    residual: float
    iterations: int


def rho_asymptotic(eps: float, p: float, alpha_p: float, C0: float) -> float:
    """Three-term expansion of rho for small eps."""
    sp = math.sqrt(p)
    L = abs(math.log(eps))
    return 2.0 / sp * L - math.log(2.0 / sp * L) / sp + math.log(p * alpha_p * C0) / sp


def solve_rho(eps: float, p: float, alpha_p: float, C0: float, max_iter: int = 2000) -> RhoSolution:
    """Positive root of eps^2 rho = p alpha_p C0 exp(-sqrt(p) rho).

    Runs the fixed point map rho <- log(p alpha_p C0 / (eps^2 rho)) / sqrt(p)
    from (2/sqrt(p))|log eps| and finishes with Newton steps on the
    logarithmic form, whose left side is increasing in rho.
    """
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if not (alpha_p > 0 and C0 > 0):
        raise ValidationError("alpha_p and C0 must be positive")
    sp = math.sqrt(p)
    K = p * alpha_p * C0
    rho = 2.0 / sp * abs(math.log(eps))
    it = 0
    for it in range(1, max_iter + 1):
        new = math.log(K / (eps**2 * rho)) / sp
        if new <= 0.0:
            new = 0.5 * rho
        if abs(new - rho) < 1e-13 * max(1.0, rho):
            rho = new
            break
        rho = new
    g = lambda r: math.log(eps**2 * r) - math.log(K) + sp * r
    for _ in range(5):
        rho -= g(rho) / (1.0 / rho + sp)
    if g(rho) != 0.0 and abs(g(rho)) > 1e-12:
        rho = optimize.brentq(g, 1e-300, 10.0 * rho + 10.0, xtol=1e-16)
    residual = abs(eps**2 * rho - K * math.exp(-sp * rho))
    asym = rho_asymptotic(eps, p, alpha_p, C0)
    return RhoSolution(rho, 1.0 / rho, asym, abs(rho - asym), residual, it)


# ----------------------------------------------------------- matrices ---- #
@dataclass(frozen=True)
class TodaMatrices:
    N: int
    p: float
    M: np.ndarray
    M_half: np.ndarray
    B: np.ndarray
    B_inv: np.ndarray
    r: np.ndarray
    D: np.ndarray
    Lambda: np.ndarray


def toda_matrices(N: int, p: float) -> TodaMatrices:
    if N < 2:
        raise ValidationError("the Toda system needs N >= 2")
    n = N - 1
    M = 2.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1)
    evals, evecs = linalg.eigh(M)
    M_half = (evecs * np.sqrt(evals)) @ evecs.T
    B = -np.eye(N) + np.eye(N, k=1)
    B[-1, :] = 1.0
    i = np.arange(1, N)
    r = ((N - i) * i).astype(float)
    D = 0.5 * math.sqrt(p) * M_half @ np.diag(r) @ M_half
    D = 0.5 * (D + D.T)
    Lam = linalg.eigvalsh(D)
    return TodaMatrices(N, float(p), M, M_half, B, linalg.inv(B), r, D, Lam)


def offsets_from_differences(v: np.ndarray) -> np.ndarray:
    """d_j from (v_1..v_{N-1}, v_N); rows are layers, columns grid nodes."""
    v = np.atleast_2d(v)
    N = v.shape[0]
    vbar, vN = v[:-1], v[-1]
    k = np.arange(1, N)[:, None]
    weighted = np.sum(k * vbar, axis=0) / N
    tail = np.cumsum(vbar[::-1], axis=0)[::-1]  # sum_{k=j}^{N-1} v_k for j = 1..N-1
    d = np.empty((N,) + vN.shape)
    d[:-1] = vN / N - tail + weighted
    d[-1] = vN / N + weighted
    return d


# ---------------------------------------------------- periodic algebra ---- #
def _apply_L(u2, u1, u0, f: np.ndarray) -> np.ndarray:
    """-u2 f'' + u1 f' - u0 f along the last axis (theta)."""
    f = np.asarray(f, dtype=float)
    ft = np.moveaxis(f, -1, 0)
    d1 = np.moveaxis(spectral.derivative(ft, 1), 0, -1)
    d2 = np.moveaxis(spectral.derivative(ft, 2), 0, -1)
    return -u2 * d2 + u1 * d1 - u0 * f


def _check_upsilon0(u0: np.ndarray) -> None:
    if not np.min(u0) > 0:
        raise DegenerateGeometryError(
            f"Upsilon0 must be positive for the leading profile (min {np.min(u0):.3e})"
        )


def leading_layer_profile(mats: TodaMatrices, upsilon0: np.ndarray):
    """Leading differences vbar_1 (rows i = 1..N-1) and the offsets d with v_N = 0.

    Returns (vbar1, d, check) where ``check`` is the sup over nodes of
    |M exp(-sqrt(p) vbar1) - Upsilon0|.
    """
    u0 = np.asarray(upsilon0, dtype=float)
    _check_upsilon0(u0)
    sp = math.sqrt(mats.p)
    vbar = -np.log(0.5 * np.outer(mats.r, u0)) / sp
    check = float(np.max(np.abs(mats.M @ np.exp(-sp * vbar) - u0[None, :])))
    v = np.vstack([vbar, np.zeros_like(u0)])
    return vbar, offsets_from_differences(v), check


def q_bar(vbar: np.ndarray, coeffs, sigma: float, mats: TodaMatrices) -> np.ndarray:
    """sigma L(vbar) - Upsilon0 + M exp(-sqrt(p) vbar)."""
    u2, u1, u0 = coeffs
    sp = math.sqrt(mats.p)
    return sigma * _apply_L(u2, u1, u0, vbar) - u0[None, :] + mats.M @ np.exp(-sp * vbar)


def layer_equations(d: np.ndarray, coeffs, sigma: float, rho: float, p: float) -> np.ndarray:
    """R_j(d) = sigma(-u2 d_j'' + u1 d_j' - u0 fb_j) + [e^{-sqrt p (d_j - d_{j-1})} - e^{-sqrt p (d_{j+1} - d_j)}].

    Missing neighbours sit at infinity, so their exponentials are zero.
    """
    u2, u1, u0 = coeffs
    N = d.shape[0]
    sp = math.sqrt(p)
    shift = (np.arange(1, N + 1) - 0.5 * (N + 1))[:, None] * rho
    fb = shift + d
    lin = _apply_L(u2, u1, np.zeros_like(u0), d) - u0 * fb
    gaps = np.exp(-sp * np.diff(d, axis=0))
    left = np.vstack([np.zeros_like(u0)[None, :], gaps])
    right = np.vstack([gaps, np.zeros_like(u0)[None, :]])
    return sigma * lin + left - right


def _n1(w: np.ndarray, u0: np.ndarray, mats: TodaMatrices) -> np.ndarray:
    sp = math.sqrt(mats.p)
    x = sp * w
    # e^{-x} - 1 + x without cancellation for small x
    core = np.where(np.abs(x) < 1e-3, x**2 / 2 - x**3 / 6 + x**4 / 24, np.expm1(-x) + x)
    return 0.5 * u0[None, :] * (mats.M @ (mats.r[:, None] * core))


@dataclass(frozen=True)
class RefinedProfile:
    vbar: np.ndarray
    corrections: list
    defects: list

    @property
    def order(self) -> int:
        return len(self.defects)


def refine_layer_profile(k: int, mats: TodaMatrices, coeffs, sigma: float) -> RefinedProfile:
    """vbar_k = vbar_1 + w_1 + ... + w_{k-1} with Q̄(vbar_k) = O(sigma^k).

    Each correction solves the pointwise system -DQ0(vbar_1) w_j = previous
    defect, with DQ0(vbar_1) = -sqrt(p) M diag(exp(-sqrt(p) vbar_1)).
    ``defects[j-1]`` is the L2 norm of Q̄(vbar_j).
    """
    if k < 1:
        raise ValidationError("refinement order must be >= 1")
    u2, u1, u0 = (np.asarray(c, dtype=float) for c in coeffs)
    vbar1, _, _ = leading_layer_profile(mats, u0)
    sp = math.sqrt(mats.p)
    weights = np.exp(-sp * vbar1)  # (N-1, m)
    norm = lambda f: float(np.sqrt(np.sum(np.mean(f**2, axis=-1))))

    vbar = vbar1.copy()
    defects = [norm(q_bar(vbar, (u2, u1, u0), sigma, mats))]
    corrections: list[np.ndarray] = []
    prev = vbar1
    total_prev = np.zeros_like(vbar1)
    total_prev2 = np.zeros_like(vbar1)
    for _ in range(1, k):
        rhs = sigma * _apply_L(u2, u1, u0, prev)
        if corrections:
            rhs = rhs + _n1(total_prev, u0, mats) - _n1(total_prev2, u0, mats)
        w = np.empty_like(vbar1)
        for i in range(vbar1.shape[1]):
            jac = sp * mats.M * weights[:, i][None, :]
            w[:, i] = np.linalg.solve(jac, rhs[:, i])
        corrections.append(w)
        total_prev2 = total_prev
        total_prev = total_prev + w
        prev = w
        vbar = vbar1 + total_prev
        defects.append(norm(q_bar(vbar, (u2, u1, u0), sigma, mats)))
        if defects[-1] >= defects[-2]:
            raise RecursionStallError("refinement defect did not decrease", history=defects)
    return RefinedProfile(vbar, corrections, defects)


# --------------------------------------------------- periodic solvers ---- #
def _diff_matrices(m: int):
    I = np.eye(m)
    return spectral.derivative(I, 1), spectral.derivative(I, 2)


def periodic_spectrum(u2, u1, u0) -> np.ndarray:
    """Eigenvalues of -u2 phi'' + u1 phi' = lambda u0 phi on periodic functions, sorted by real part."""
    u2, u1, u0 = (np.asarray(c, dtype=float) for c in (u2, u1, u0))
    D1, D2 = _diff_matrices(u2.size)
    op = (-u2[:, None] * D2 + u1[:, None] * D1) / u0[:, None]
    ev = linalg.eigvals(op)
    return ev[np.argsort(ev.real)]


def solve_periodic_linear(u2, u1, u0, mu: float, sigma: float, g, min_gap: float = 1e-8, spectrum=None):
    """Periodic solution of sigma(-u2 phi'' + u1 phi') - mu u0 phi = g.

    Raises ResonanceError when mu/sigma is closer than ``min_gap`` (relative)
    to an eigenvalue of the periodic problem.  Returns (phi, residual, gap).
    """
    u2, u1, u0 = (np.asarray(c, dtype=float) for c in (u2, u1, u0))
    g = np.asarray(g, dtype=float)
    spec = periodic_spectrum(u2, u1, u0) if spectrum is None else spectrum
    target = mu / sigma
    # only the resolved part of the collocation spectrum is meaningful
    resolved = spec[: max(1, spec.size // 2)]
    dist = np.abs(resolved - target)
    j = int(np.argmin(dist))
    gap = float(dist[j])
    if gap <= min_gap * max(1.0, abs(target)):
        raise ResonanceError(
            f"mu/sigma = {target:.6g} is within {gap:.3e} of the periodic eigenvalue {resolved[j]:.6g}",
            nearest=complex(resolved[j]),
            margin=gap,
        )
    D1, D2 = _diff_matrices(u2.size)
    op = sigma * (-u2[:, None] * D2 + u1[:, None] * D1) - mu * np.diag(u0)
    phi = np.linalg.solve(op, g)
    residual = float(np.max(np.abs(op @ phi - g)))
    return phi, residual, gap


@dataclass(frozen=True)
class ResonanceReport:
    eps: float
    passes: bool
    margin_e41: float
    worst_e41: tuple
    margin_e108: float
    worst_e108: int
    lambda_star: float

    @property
    def margin(self) -> float:
        return min(self.margin_e41, self.margin_e108)


def lambda_star(lambda0: float, l2: float, convention: str = "printed") -> float:
    """lambda_0 l2^2 / (4 pi) as printed, or lambda_0 l2^2 / (4 pi^2) with ``convention='squared'``."""
    if convention == "printed":
        return lambda0 * l2**2 / (4.0 * math.pi)
    if convention == "squared":
        return lambda0 * l2**2 / (4.0 * math.pi**2)
    raise ValidationError(f"unknown lambda* convention {convention!r}")


def _gap_e41(eps: float, p: float, Lam: np.ndarray, l1: float, c1: float):
    L = abs(math.log(eps))
    scale = 2.0 / math.sqrt(p) * L
    thresh = c1 * math.sqrt(2.0 / (math.sqrt(p) * L))
    worst, where = math.inf, (0, 0)
    for i, lam in enumerate(Lam, start=1):
        x = scale * lam
        jmax = int(math.ceil(l1 / (2 * math.pi) * math.sqrt(x + thresh))) + 1
        for j in range(0, jmax + 1):
            val = abs(x - 4.0 * math.pi**2 * j**2 / l1**2) - thresh
            if val < worst:
                worst, where = val, (i, j)
    return worst, where


def _gap_e108(eps: float, lam_star: float, c2: float):
    # |eps^2 k^2 - lam_star| is minimized at one of the integers bracketing sqrt(lam_star)/eps
    centre = math.sqrt(max(lam_star, 0.0)) / eps
    cands = {max(1, int(math.floor(centre))), max(1, int(math.ceil(centre)))}
    vals = {k: abs(eps**2 * k**2 - lam_star) - c2 * eps for k in cands}
    k = min(vals, key=vals.get)
    return float(vals[k]), int(k)


def resonance_gaps(
    eps_list,
    mats: TodaMatrices,
    l1: float,
    lambda0: float,
    l2: float,
    c1: float = 1.0,
    c2: float = 1.0,
    convention: str = "printed",
) -> list[ResonanceReport]:
    """Classify each eps by the two gap conditions; margins are signed (pass iff > 0)."""
    lam_s = lambda_star(lambda0, l2, convention)
    out = []
    for eps in eps_list:
        m41, w41 = _gap_e41(eps, mats.p, mats.Lambda, l1, c1)
        m108, w108 = _gap_e108(eps, lam_s, c2)
        out.append(ResonanceReport(float(eps), bool(m41 > 0 and m108 > 0), m41, w41, m108, w108, lam_s))
    return out


@dataclass(frozen=True)
class AmplitudeSolution:
    e: np.ndarray
    norm_star: float
    residual: float


def amplitude_solve(
    eps: float,
    upsilon2: np.ndarray,
    lambda0: float,
    h: np.ndarray,
    *,
    l2: float | None = None,
    c2: float = 1.0,
    convention: str = "printed",
    check_gap: bool = True,
) -> AmplitudeSolution:
    """Periodic solution of eps^2 upsilon2 e'' + lambda0 e = h with its weighted norm.

    The norm is sup|e| + eps ||e'||_2 + eps^2 ||e''||_2.
    """
    u2 = np.asarray(upsilon2, dtype=float)
    h = np.asarray(h, dtype=float)
    if check_gap:
        l2 = l2 if l2 is not None else float(np.mean(1.0 / np.sqrt(u2)))
        margin, k = _gap_e108(eps, lambda_star(lambda0, l2, convention), c2)
        if margin <= 0:
            raise ResonanceError(f"amplitude gap violated at eps={eps} (k={k})", nearest=k, margin=margin)
    m = u2.size
    if np.ptp(u2) == 0.0:
        # constant coefficient: diagonal in Fourier space
        k = spectral.wavenumbers(m)
        symbol = lambda0 - eps**2 * u2[0] * (2 * np.pi * k) ** 2
        e = np.real(np.fft.ifft(np.fft.fft(h) / symbol))
    else:
        _, D2 = _diff_matrices(m)
        op = eps**2 * u2[:, None] * D2 + lambda0 * np.eye(m)
        e = np.linalg.solve(op, h)
    e1 = spectral.derivative(e, 1)
    e2 = spectral.derivative(e, 2)
    resid = float(np.max(np.abs(eps**2 * u2 * e2 + lambda0 * e - h)))
    l2n = lambda f: float(np.sqrt(np.mean(f**2)))
    norm = float(np.max(np.abs(e))) + eps * l2n(e1) + eps**2 * l2n(e2)
    return AmplitudeSolution(e, norm, resid)


# --------------------------------------------------------- layer state ---- #
@dataclass(frozen=True)
class LayerState:
    N: int
    eps: float
    rho: float
    sigma: float
    d: np.ndarray
    v: np.ndarray
    f_breve: np.ndarray
    f: np.ndarray
    e: np.ndarray
    order: int = 1
    defects: list = field(default_factory=list)

    @property
    def positions(self) -> np.ndarray:
        """Physical normal offsets t = eps f_j of the layer centres."""
        return self.eps * self.f


def separation_check(state: LayerState, beta: np.ndarray) -> float:
    """Smallest margin of beta (f_{j+1} - f_j) over the required lower bound."""
    if state.N < 2:
        return math.inf
    diff = beta * np.diff(state.f, axis=0)
    return float(np.min(diff))


def required_separation(eps: float, p: float) -> float:
    L = abs(math.log(eps))
    return 2.0 / math.sqrt(p) * L - 4.0 / math.sqrt(p) * math.log(L)


def build_layer_state(
    eps: float,
    N: int,
    curve,
    jacobi,
    profile,
    *,
    order: int = 3,
    amplitudes: bool = False,
    enforce_separation: bool = True,
) -> LayerState:
    """Layer offsets from the refined Toda profile, optionally with amplitudes.

    ``curve`` is a CurveGeometry, ``jacobi`` its JacobiCoefficients and
    ``profile`` a ProfileSet.  For N = 1 the single layer sits on the curve.
    """
    p = profile.p
    rs = solve_rho(eps, p, profile.alpha_p, profile.C0)
    m = curve.m
    coeffs = jacobi.theta_form()
    defects: list = []
    if N == 1:
        d = np.zeros((1, m))
        v = np.zeros((1, m))
    else:
        mats = toda_matrices(N, p)
        try:
            ref = refine_layer_profile(order, mats, coeffs, rs.sigma)
        except RecursionStallError as exc:
            # keep the best order reached before the defect grew
            order = int(np.argmin(exc.history)) + 1
            ref = refine_layer_profile(order, mats, coeffs, rs.sigma)
        v = np.vstack([ref.vbar, np.zeros(m)])
        d = offsets_from_differences(v)
        defects = ref.defects
    shift = (np.arange(1, N + 1) - 0.5 * (N + 1))[:, None] * rs.rho
    fb = shift + d
    f = fb / curve.beta[None, :]
    e = np.zeros((N, m))
    if amplitudes and N > 1:
        sp = math.sqrt(p)
        gaps = np.exp(-sp * np.diff(d, axis=0))
        pair = np.vstack([np.zeros(m), gaps]) + np.vstack([gaps, np.zeros(m)])
        forcing = -eps * profile.C1 / profile.C0 * rs.rho * pair
        l2 = jacobi.l2
        for j in range(N):
            e[j] = amplitude_solve(eps, coeffs[0], profile.lambda0, forcing[j], l2=l2).e
    state = LayerState(N, eps, rs.rho, rs.sigma, d, v, fb, f, e, order, defects)
    if enforce_separation and N > 1:
        got = separation_check(state, curve.beta)
        need = required_separation(eps, p)
        if got <= need:
            raise LayerOverlapError(f"layer separation {got:.4g} below required {need:.4g} at eps={eps}")
    return state


def jacobi_toda_residual(state: LayerState, curve, profile) -> dict:
    """Left sides of the layer-position and amplitude equations for each j.

    Neighbours outside 1..N are at infinity.  Returns arrays ``position`` and
    ``amplitude`` of shape (N, m) and their L2 norms per layer.
    """
    from .geometry import second_variation_operator

    p = curve.p
    sp = math.sqrt(p)
    eps = state.eps
    N, m = state.N, curve.m
    a, b = curve.alpha, curve.beta
    kappa = profile.coupling_ratio
    lead = a ** (1.0 - p)
    gaps = np.exp(-sp * b[None, :] * np.diff(state.f, axis=0)) if N > 1 else np.zeros((0, m))
    left = np.vstack([np.zeros((1, m)), gaps])
    right = np.vstack([gaps, np.zeros((1, m))])
    pos = np.empty((N, m))
    amp = np.empty((N, m))
    for j in range(N):
        fj, ej = state.f[j], state.e[j]
        body = second_variation_operator(curve, fj)
        if np.any(ej != 0.0):
            de = curve.d_ds(ej)
            body = body + (-2.0 * eps * curve.a11 * de * curve.d_ds(fj) + 2.0 * eps * curve.a22 * de * fj) * kappa
        pos[j] = eps**2 * lead * b * body + profile.C0 * p * profile.alpha_p * (left[j] - right[j])
        amp[j] = eps * (eps**2 * curve.a11 * lead * curve.d_ds(ej, 2) + profile.lambda0 * ej) + p * profile.alpha_p * profile.C1 * (
            left[j] + right[j]
        )
    norm = lambda f: np.sqrt(np.mean(f**2, axis=-1))
    return {"position": pos, "amplitude": amp, "position_norm": norm(pos), "amplitude_norm": norm(amp)}
