"""Numerical Fredholm determinants: the Mellin-Barnes and Cauchy-type
representations of the e_q-Laplace transform, a steep-descent evaluator of
the same determinant for large times, and the Airy-kernel Tracy-Widom CDF.

Determinant convention: det(I + K) on a contour C means the Fredholm series
with measure dw/(2*pi*i) per variable, discretized by Nystrom quadrature as
det(I + W^(1/2) K W^(1/2)) with complex node weights W.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import airy, roots_legendre

from .hydro import f0_profile, pi_kappa_sigma, r_min, theta0
from .model import ModelParams
from .qspecial import DomainError, q_pochhammer


@dataclass(frozen=True)
class ContourSpec:
    """Quadrature nodes and complex weights (including dz/(2*pi*i)) along a
    circle or a truncated vertical line."""

    kind: str
    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def circle(cls, center: complex, radius: float, n_nodes: int) -> "ContourSpec":
        phi = 2.0 * math.pi * (np.arange(n_nodes) + 0.5) / n_nodes
        z = center + radius * np.exp(1j * phi)
        w = radius * np.exp(1j * phi) / n_nodes
        return cls(kind="circle", nodes=z, weights=w)

    @classmethod
    def vline(cls, anchor: complex, half_length: float, n_nodes: int) -> "ContourSpec":
        y = np.linspace(-half_length, half_length, n_nodes)
        s = anchor + 1j * y
        w = np.full(n_nodes, (y[1] - y[0]) / (2.0 * math.pi))
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(kind="vline", nodes=s, weights=w)

    def doubled(self) -> "ContourSpec":
        if self.kind == "circle":
            center = self.nodes[0] - (self.weights[0] * len(self.nodes))
            radius = abs(self.weights[0]) * len(self.nodes)
            return ContourSpec.circle(center, radius, 2 * len(self.nodes))
        anchor = self.nodes[len(self.nodes) // 2].real
        half = float(self.nodes[-1].imag)
        return ContourSpec.vline(anchor, half, 2 * len(self.nodes) - 1)


@dataclass(frozen=True)
class DetResult:
    value: complex
    n_nodes: int
    inner_nodes: int
    est_error: float


def _poch_ratio_powers(w: np.ndarray, nu: float, q: float) -> np.ndarray:
    """log((nu*w;q)_inf / (w;q)_inf), vectorized, factorwise logs."""
    out = np.zeros_like(w, dtype=complex)
    x = np.asarray(w, dtype=complex).copy()
    y = nu * np.asarray(w, dtype=complex)
    while True:
        ax = np.abs(x).max() if x.size else 0.0
        ay = np.abs(y).max() if y.size else 0.0
        if ax < 1e-17 and ay < 1e-17:
            break
        if np.any(np.abs(1.0 - x) < 1e-13):
            raise DomainError("kernel evaluated on the singular lattice q^-k")
        out += np.log(1.0 - y) - np.log(1.0 - x)
        x *= q
        y *= q
    return out


def _log_poch(w: np.ndarray, q: float) -> np.ndarray:
    """log((w;q)_inf), vectorized."""
    out = np.zeros_like(w, dtype=complex)
    x = np.asarray(w, dtype=complex).copy()
    while np.abs(x).max() >= 1e-17:
        if np.any(np.abs(1.0 - x) < 1e-13):
            raise DomainError("Pochhammer zero on the evaluation set")
        out += np.log(1.0 - x)
        x *= q
    return out


def _exp_sum(w: np.ndarray, p: ModelParams) -> np.ndarray:
    """sum_k w q^k (R/(1 - nu w q^k) - L/(1 - w q^k)), truncated to 1e-15."""
    out = np.zeros_like(w, dtype=complex)
    x = np.asarray(w, dtype=complex).copy()
    k = 0
    while True:
        out += x * (p.R / (1.0 - p.nu * x) - p.L / (1.0 - x))
        x *= p.q
        k += 1
        if np.abs(x).max() < 1e-15 * max(1.0, np.abs(out).max()):
            break
        if k > 200_000:
            raise DomainError("kernel exponent sum did not converge")
    return out


def log_kernel_g(p: ModelParams, n: int, t: float, w) -> np.ndarray:
    """log g(w) for the Mellin-Barnes kernel,

        g(w) = ((nu w;q)_inf/(w;q)_inf)^n * exp((q-1) t S(w)) / (nu w;q)_inf,

    with S the geometric rate sum (the nu in the displayed R/nu cancels).
    At nu = q the Pochhammer ratio collapses to (1/(1-w))^n.
    """
    w = np.asarray(w, dtype=complex)
    if p.nu == p.q:
        base = -np.log(1.0 - w) * n
    else:
        base = _poch_ratio_powers(w, p.nu, p.q) * n
    expo = (p.q - 1.0) * t * _exp_sum(w, p)
    return base + expo - _log_poch(p.nu * w, p.q)


def kernel_g(p: ModelParams, n: int, t: float, w) -> complex:
    """g(w) itself (scalar convenience wrapper)."""
    return complex(np.exp(log_kernel_g(p, n, t, np.array([w]))[0]))


def _outer_radius(p: ModelParams) -> float:
    """C_1 radius keeping q^s w (Re s = 1/2) separated from the circle and
    excluding 0, 1/q, 1/nu."""
    r = (1.0 - math.sqrt(p.q)) / (1.0 + math.sqrt(p.q))
    if p.nu > 0.0:
        r = min(r, 1.0 / p.nu - 1.0)
    return 0.9 * min(r, 1.0 / p.q - 1.0, 1.0)


def _mb_value(p: ModelParams, n: int, t: float, zeta: complex,
              outer: ContourSpec, inner: ContourSpec) -> complex:
    w = outer.nodes
    log_gw = log_kernel_g(p, n, t, w)
    lz = cmath.log(-zeta)  # principal branch, zeta not in R_+
    Kmat = np.zeros((len(w), len(w)), dtype=complex)
    for s, ws in zip(inner.nodes, inner.weights):
        qs = np.exp(s * math.log(p.q))
        ratio = np.exp(log_gw - log_kernel_g(p, n, t, qs * w))
        pref = (math.pi / np.sin(-math.pi * s)) * np.exp(s * lz) * ws
        Kmat += pref * (ratio / (qs * w[:, None] - w[None, :]))
    sq = np.sqrt(outer.weights)
    A = np.eye(len(w), dtype=complex) + sq[:, None] * Kmat * sq[None, :]
    return np.linalg.det(A)


def det_mellin_barnes(p: ModelParams, n: int, t: float, zeta: complex,
                      spec: tuple[ContourSpec, ContourSpec] | None = None,
                      tol: float = 1e-8, max_outer: int = 512) -> DetResult:
    """det(I + K_zeta) on a circle around 1, K_zeta given by the s-integral

        K(w,w') = (1/2pi i) int pi/sin(-pi s) (-zeta)^s g(w)/g(q^s w)
                                ds / (q^s w - w'),   s on 1/2 + i[-S, S],

    refined by node doubling until the determinant moves < tol.

    Practical domain: moderate t (the integrand on these contours swings like
    e^{O(t)}; the steep-descent evaluator covers the large-t scaling regime).
    Note the identity with the process e_q-Laplace transform holds for L = 0;
    for L > 0 this determinant generates the contour moments, which exceed
    the process moments (see moment_contour).
    """
    if zeta.real >= 0.0 and abs(zeta.imag) < 1e-300:
        raise DomainError("zeta must avoid the nonnegative real axis")
    if spec is None:
        S = 14.0
        osc = 1.0 + abs(cmath.log(-zeta)) / (2.0 * math.pi)
        n_in = int(2 ** math.ceil(math.log2(max(256.0, 8.0 * S * osc))))
        outer = ContourSpec.circle(1.0, _outer_radius(p), 64)
        inner = ContourSpec.vline(0.5, S, n_in + 1)
    else:
        outer, inner = spec
    prev = None
    while True:
        val = _mb_value(p, n, t, zeta, outer, inner)
        if prev is not None and abs(val - prev) < tol:
            return DetResult(value=val, n_nodes=len(outer.nodes),
                             inner_nodes=len(inner.nodes),
                             est_error=abs(val - prev))
        if len(outer.nodes) >= max_outer:
            raise DomainError(
                f"Mellin-Barnes determinant did not converge below {tol} by "
                f"{max_outer} outer nodes (last delta "
                f"{abs(val - prev) if prev is not None else math.nan:.3e})"
            )
        prev = val
        outer = outer.doubled()
        inner = inner.doubled()


def _cauchy_radius_center(p: ModelParams) -> tuple[float, float]:
    # circle through 0 and 1 with margin, inside 1/q and 1/nu
    lim = 1.0 / p.q
    if p.nu > 0.0:
        lim = min(lim, 1.0 / p.nu)
    center = 0.5
    radius = 0.5 + 0.4 * (lim - 1.0)
    radius = min(radius, 0.95 * (lim - center))
    return center, radius


def det_cauchy(p: ModelParams, n: int, t: float, zeta: complex,
               spec: ContourSpec | None = None,
               tol: float = 1e-8, max_nodes: int = 512) -> DetResult:
    """det(I + zeta K~)/(zeta;q)_inf on a circle enclosing 0 and 1,

        K~(w,w') = (g(w)/g(qw)) / (q w' - w).

    Tested against det_mellin_barnes for |zeta| <= 0.5 (the representation's
    advertised smallness regime).
    """
    center, radius = _cauchy_radius_center(p)
    contour = spec or ContourSpec.circle(center, radius, 64)
    poch_zeta = q_pochhammer(zeta, p.q)
    prev = None
    while True:
        w = contour.nodes
        ratio = np.exp(log_kernel_g(p, n, t, w) - log_kernel_g(p, n, t, p.q * w))
        Kmat = ratio[:, None] / (p.q * w[None, :] - w[:, None])
        sq = np.sqrt(contour.weights)
        A = np.eye(len(w), dtype=complex) + zeta * (sq[:, None] * Kmat * sq[None, :])
        val = np.linalg.det(A) / poch_zeta
        if prev is not None and abs(val - prev) < tol:
            return DetResult(value=val, n_nodes=len(w), inner_nodes=0,
                             est_error=abs(val - prev))
        if len(w) >= max_nodes:
            raise DomainError(
                f"Cauchy-type determinant did not converge below {tol} "
                f"by {max_nodes} nodes"
            )
        prev = val
        contour = contour.doubled()


# ---------------------------------------------------------------------------
# Tracy-Widom GUE

_TW_NODES = 160
_TW_LEN = 3.0


def tw_cdf(x: float, n_nodes: int = _TW_NODES) -> float:
    """F_GUE(x) = det(I - K_Ai) on L^2(x, inf) by Nystrom quadrature.

    The Airy kernel is evaluated in its stable divided-difference form
    (Ai(u)Ai'(v) - Ai'(u)Ai(v))/(u - v); the half-line maps to (0,1) through
    u = x - L log(1 - xi), which concentrates nodes near x where the kernel
    lives.  Accuracy ~1e-10 for x >= -10 at the default node count.
    """
    xi, wq = roots_legendre(n_nodes)
    xi = 0.5 * (xi + 1.0)
    wq = 0.5 * wq
    u = x - _TW_LEN * np.log1p(-xi)
    du = _TW_LEN / (1.0 - xi)
    ai, aip, _, _ = airy(u)
    diff = u[:, None] - u[None, :]
    np.fill_diagonal(diff, 1.0)
    Kmat = (ai[:, None] * aip[None, :] - aip[:, None] * ai[None, :]) / diff
    np.fill_diagonal(Kmat, aip**2 - u * ai**2)
    sw = np.sqrt(wq * du)
    A = np.eye(n_nodes) - sw[:, None] * Kmat * sw[None, :]
    sign, logdet = np.linalg.slogdet(A)
    return float(sign * np.exp(logdet))


# ---------------------------------------------------------------------------
# steep-descent evaluation of the rescaled determinant (nu = q)

def _descent_contours(p: ModelParams, theta: float, t: float,
                      n_c: int, n_d: int):
    """Nodes/weights for the W circle C_alpha (midpoint trapezoid in u) and
    the Z wedge-plus-vertical descent contour with apex just right of theta."""
    q = p.q
    lq = math.log(q)
    alpha = q**theta
    margin = 1.0 + math.log((2.0 - alpha) / alpha) / lq
    if margin <= 0.0:
        raise DomainError("descent contours need alpha > 2q/(1+q)")
    # W contour
    u = -math.pi + 2.0 * math.pi * (np.arange(n_c) + 0.5) / n_c
    e = np.exp(1j * u)
    Wn = np.log(1.0 - (1.0 - alpha) * e) / lq
    dWdu = (-1j * (1.0 - alpha) * e) / (lq * (1.0 - (1.0 - alpha) * e))
    wW = dWdu * (2.0 * math.pi / n_c) / (2.0j * math.pi)
    # Z contour: apex theta + a0, wedge angle pi/3 up to delta, then vertical
    tf = max(t, 1.0)
    a0 = min(0.1 * margin, 0.35 * tf ** (-1.0 / 3.0))
    delta = min(0.35 * margin, 2.5 * tf ** (-1.0 / 3.0))
    xi = math.pi / 3.0
    vmax = min(12.0, 0.80 * 2.0 * math.pi / abs(lq))
    zs, zw = [], []
    gl_x, gl_w = roots_legendre(max(24, n_d // 4))

    def add_segment(z0, z1):
        mid = 0.5 * (z0 + z1)
        half = 0.5 * (z1 - z0)
        zs.append(mid + half * gl_x)
        zw.append(half * gl_w / (2.0j * math.pi))

    apex = theta + a0
    top_wedge = apex + delta * cmath.exp(1j * xi)
    top_end = complex(top_wedge.real, vmax)
    add_segment(np.conj(top_end), np.conj(top_wedge))  # bottom vertical (upward)
    add_segment(np.conj(top_wedge), apex)
    add_segment(apex, top_wedge)
    add_segment(top_wedge, top_end)
    Zn = np.concatenate(zs)
    wZ = np.concatenate(zw)
    return Wn, wW, Zn, wZ


def _descent_value(p: ModelParams, theta: float, t: float, x: float,
                   first_particle: bool, n_c: int, n_d: int) -> complex:
    prof = f0_profile(p, theta)
    sigma = pi_kappa_sigma(p, theta).sigma
    q = p.q
    lq = math.log(q)
    Wn, wW, Zn, wZ = _descent_contours(p, theta, t, n_c, n_d)
    f0W = np.array([prof.f0(W) for W in Wn])
    f0Z = np.array([prof.f0(Z) for Z in Zn])
    qW = np.exp(Wn * lq)
    qZ = np.exp(Zn * lq)
    pochW = np.exp(_log_poch(q * qW, q))
    pochZ = np.exp(_log_poch(q * qZ, q))
    scale = t ** (1.0 / 3.0) * sigma * lq * x
    Kmat = np.zeros((len(Wn), len(Wn)), dtype=complex)
    for Z, wz, fz, qz, pz in zip(Zn, wZ, f0Z, qZ, pochZ):
        expo = t * (fz - f0W) - scale * (Z - Wn)
        expo = np.clip(expo.real, -700.0, 700.0) + 1j * expo.imag
        pref = (math.pi / np.sin(-math.pi * (Z - Wn))) * np.exp(expo) * (pz / pochW)
        if first_particle:
            pref = pref * (1.0 - qz) / (1.0 - qW)
        Kmat += (wz * qW * lq * pref)[:, None] * (1.0 / (qz - qW))[None, :]
    sq = np.sqrt(wW)
    A = np.eye(len(Wn), dtype=complex) + sq[:, None] * Kmat * sq[None, :]
    return np.linalg.det(A)


def det_mb_descent(p: ModelParams, theta: float, t: float, x: float,
                   first_particle: bool = False, tol: float = 5e-7,
                   max_nc: int = 1024) -> DetResult:
    """The Mellin-Barnes determinant at the Tracy-Widom scaling point,

        zeta = -q^{-kappa t - pi t - t^(1/3) sigma x},   n = floor(kappa t),

    evaluated through the critical-point form of the kernel on steep-descent
    contours (nu = q only).  This is the same determinant after the exact
    change of variables w = q^W, s = Z - W; the original contours are
    numerically unusable at large t (integrand swings like e^{O(t)}).
    """
    if p.nu != p.q:
        raise DomainError("descent evaluation is implemented for nu = q")
    alpha = p.q**theta
    if not (alpha > 2.0 * p.q / (1.0 + p.q)):
        raise DomainError("descent evaluation needs q^theta > 2q/(1+q)")
    n_c, n_d = 128, 96
    tgrow = int(t ** (1.0 / 3.0))
    n_c *= max(1, tgrow // 2)
    prev = None
    while True:
        val = _descent_value(p, theta, t, x, first_particle, n_c, n_d)
        if prev is not None and abs(val - prev) < tol:
            return DetResult(value=val, n_nodes=n_c, inner_nodes=n_d,
                             est_error=abs(val - prev))
        if n_c >= max_nc:
            raise DomainError(
                f"descent determinant did not converge below {tol} "
                f"(last delta {abs(val - prev) if prev is not None else math.nan:.3e})"
            )
        prev = val
        n_c *= 2
        n_d *= 2


@dataclass(frozen=True)
class ProbeRow:
    t: float
    n: int
    det: float
    f_gue: float
    diff: float


@dataclass(frozen=True)
class ProbeReport:
    mode: str
    theta: float
    x: float
    rows: tuple

    @property
    def diffs(self):
        return [r.diff for r in self.rows]


def asymptotic_probe(p: ModelParams, theta: float | None, ts, x: float,
                     mode: str = "bulk") -> ProbeReport:
    """Compare det(I+K_zeta) at the Tracy-Widom scaling point against
    F_GUE(-x) along a list of times, exhibiting the convergence trend.

    bulk mode: n = floor(kappa(theta) t) with kappa(theta) >= 0 and
    q^theta > 2q/(1+q) (else refused, citing the contour condition).
    first-particle mode: theta = theta0 (kappa = 0), n = 1, requires
    r_min(q) < R < 1; the kernel carries the (1-q^Z)/(1-q^W) factor.
    """
    if p.nu != p.q:
        raise DomainError("the probe is implemented for the nu = q family")
    if mode == "first":
        if not (r_min(p.q) < p.R < 1.0):
            raise DomainError(
                f"first-particle mode needs R_min(q) < R < 1: "
                f"R_min({p.q}) = {r_min(p.q):.6f}, R = {p.R}"
            )
        theta = theta0(p)
    elif mode == "bulk":
        if theta is None:
            raise DomainError("bulk mode needs theta")
        hp = pi_kappa_sigma(p, theta)
        if hp.kappa < 0.0:
            raise DomainError(f"bulk mode needs kappa(theta) >= 0, got {hp.kappa:.4g}")
    else:
        raise DomainError(f"unknown probe mode {mode!r}")
    alpha = p.q**theta
    if not (alpha > 2.0 * p.q / (1.0 + p.q)):
        raise DomainError(
            f"probe needs q^theta > 2q/(1+q): {alpha:.6g} <= "
            f"{2.0 * p.q / (1.0 + p.q):.6g}"
        )
    hp = pi_kappa_sigma(p, theta)
    rows = []
    for t in ts:
        n = 1 if mode == "first" else int(math.floor(hp.kappa * t))
        if n < 1:
            raise DomainError(f"n = floor(kappa t) = {n} < 1 at t = {t}")
        det = det_mb_descent(p, theta, t, x, first_particle=(mode == "first"))
        f = tw_cdf(-x)
        rows.append(ProbeRow(t=float(t), n=n, det=float(det.value.real),
                             f_gue=f, diff=abs(det.value.real - f)))
    return ProbeReport(mode=mode, theta=theta, x=x, rows=tuple(rows))
