"""KPZ scaling-theory quantities for step initial data: stationary density,
flux, the fan constants (pi, kappa, sigma), the jam point theta0 and the
asymmetry threshold r_min, the action function f0 with its derivatives, and
steep-descent diagnostics along the asymptotic contours.

Everything is parametrized by theta > 0 with alpha = q^theta and, for nu > 0,
V = log_q(nu).  nu = 0 is handled by dedicated limit branches:
    Psi_q(theta+V) -> -log(1-q),   Psi_q^{(k)}(theta+V)/nu -> log(q)^{k+1} q^theta/(1-q).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ModelParams
from .qspecial import DomainError, psi_at_power, q_digamma


@dataclass(frozen=True)
class FanPosition:
    """Fan coordinate theta with the derived alpha = q^theta and V = log_q(nu)."""

    theta: float
    alpha: float
    V: float

    @classmethod
    def of(cls, p: ModelParams, theta: float) -> "FanPosition":
        if theta <= 0.0:
            raise DomainError(f"fan parameter theta must be > 0, got {theta}")
        V = math.log(p.nu) / math.log(p.q) if p.nu > 0.0 else math.inf
        return cls(theta=theta, alpha=p.q**theta, V=V)


@dataclass(frozen=True)
class HydroPoint:
    """The scaling constants at one fan position."""

    theta: float
    rho: float
    flux: float
    pi: float
    kappa: float
    sigma: float
    A: float
    lam: float


def _psi(p: ModelParams, theta: float, order: int) -> float:
    return q_digamma(theta, p.q, order).value.real


def _psi_shift_over_nu(p: ModelParams, theta: float, order: int) -> float:
    """Psi_q^{(order)}(theta+V)/nu with the nu = 0 limit built in."""
    lq = math.log(p.q)
    if p.nu == 0.0:
        return lq ** (order + 1) * p.q**theta / (1.0 - p.q)
    return _psi(p, theta + _V(p), order) / p.nu


def _psi_shift(p: ModelParams, theta: float, order: int) -> float:
    """Psi_q^{(order)}(theta+V) with the nu = 0 limit built in."""
    if p.nu == 0.0:
        return -math.log(1.0 - p.q) if order == 0 else 0.0
    return _psi(p, theta + _V(p), order)


def _V(p: ModelParams) -> float:
    return math.log(p.nu) / math.log(p.q)


def _check_theta(theta: float):
    if theta <= 0.0:
        raise DomainError(f"fan parameter theta must be > 0, got {theta}")


def density(p: ModelParams, theta: float) -> float:
    """Stationary density rho(theta) = log q / (log q + Psi_q(theta) - Psi_q(theta+V)).

    At nu = q this collapses to 1 - q^theta.
    """
    _check_theta(theta)
    lq = math.log(p.q)
    return lq / (lq + _psi(p, theta, 0) - _psi_shift(p, theta, 0))


def flux(p: ModelParams, theta: float) -> float:
    """Steady-state current j = rho (1-q)/log(q)^2 ((R/nu) Psi'(theta+V) - L Psi'(theta))."""
    _check_theta(theta)
    lq = math.log(p.q)
    b1 = p.R * _psi_shift_over_nu(p, theta, 1) - p.L * _psi(p, theta, 1)
    return density(p, theta) * (1.0 - p.q) / lq**2 * b1


def pi_kappa_sigma(p: ModelParams, theta: float) -> HydroPoint:
    """All scaling constants at fan position theta.

    pi is the theta-parametrized dj/drho, kappa = j - rho*pi, A the integrated
    gap covariance, lam = -j''(rho), and sigma = (lam A^2 / (2 rho^3))^(1/3).
    """
    _check_theta(theta)
    lq = math.log(p.q)
    b1 = p.R * _psi_shift_over_nu(p, theta, 1) - p.L * _psi(p, theta, 1)
    b2 = p.R * _psi_shift_over_nu(p, theta, 2) - p.L * _psi(p, theta, 2)
    b3 = p.R * _psi_shift_over_nu(p, theta, 3) - p.L * _psi(p, theta, 3)
    d = lq + _psi(p, theta, 0) - _psi_shift(p, theta, 0)
    p1 = _psi(p, theta, 1) - _psi_shift(p, theta, 1)
    p2 = _psi(p, theta, 2) - _psi_shift(p, theta, 2)

    rho = lq / d
    j = rho * (1.0 - p.q) / lq**2 * b1
    pi = (1.0 - p.q) / lq**2 * (b1 - b2 * d / p1)
    kappa = (1.0 - p.q) / lq * b2 / p1
    a_cov = lq * p1 / d**3
    x = b3 - b2 * p2 / p1
    jpp = (1.0 - p.q) / lq**3 * d**3 / p1**2 * x
    lam = -jpp
    sigma = (lam * a_cov**2 / (2.0 * rho**3)) ** (1.0 / 3.0)
    return HydroPoint(theta=theta, rho=rho, flux=j, pi=pi, kappa=kappa,
                      sigma=sigma, A=a_cov, lam=lam)


def madm_pi(q: float, R: float, theta: float) -> float:
    """Gap-independent-family (nu=q) closed form for pi, the independent
    cross-check path:

        (1-q)/log(q)^2 [ R/q (Psi'(th+1) - (1-a)/(a log q) Psi''(th+1))
                         - L (Psi'(th)   - (1-a)/(a log q) Psi''(th)) ],  a = q^theta.
    """
    _check_theta(theta)
    lq = math.log(q)
    a = q**theta
    c = (1.0 - a) / (a * lq)
    psi1s = q_digamma(theta + 1.0, q, 1).value.real
    psi2s = q_digamma(theta + 1.0, q, 2).value.real
    psi1 = q_digamma(theta, q, 1).value.real
    psi2 = q_digamma(theta, q, 2).value.real
    return (1.0 - q) / lq**2 * (
        R / q * (psi1s - c * psi2s) - (1.0 - R) * (psi1 - c * psi2)
    )


def madm_kappa(q: float, R: float, theta: float) -> float:
    """Gap-independent-family (nu=q) closed form for kappa:

        (1-q)/log(q)^3 * (1-a)^2/a * (R/q Psi''(th+1) - L Psi''(th)),  a = q^theta.
    """
    _check_theta(theta)
    lq = math.log(q)
    a = q**theta
    psi2s = q_digamma(theta + 1.0, q, 2).value.real
    psi2 = q_digamma(theta, q, 2).value.real
    return (1.0 - q) / lq**3 * (1.0 - a) ** 2 / a * (R / q * psi2s - (1.0 - R) * psi2)


def theta0(p: ModelParams, lo: float = 1e-3, hi: float = 50.0) -> float:
    """The jam point: unique root of kappa on (0, inf).

    Requires R > L > 0 (kappa -> R-L > 0 at infinity and -inf at 0+).  The
    bracket comes from a 200-point log-spaced sign scan; more than one sign
    change raises, none raises "no jam point".
    """
    if not (p.R > p.L > 0.0):
        raise DomainError("no jam point (check R > L > 0)")
    from scipy.optimize import brentq

    grid = np.geomspace(lo, hi, 200)
    vals = np.array([pi_kappa_sigma(p, t).kappa for t in grid])
    signs = np.sign(vals)
    flips = np.nonzero(np.diff(signs) != 0)[0]
    if len(flips) == 0:
        raise DomainError("no jam point (check R > L > 0): no sign change of kappa")
    if len(flips) > 1:
        raise DomainError(f"kappa has {len(flips)} sign changes on the scan grid")
    i = flips[0]
    return brentq(lambda t: pi_kappa_sigma(p, t).kappa, grid[i], grid[i + 1],
                  xtol=1e-13, rtol=8.9e-16)


def r_min(q: float) -> float:
    """Asymmetry threshold for jam-point fluctuation asymptotics at nu = q.

    With th_max = log_q(2q/(1+q)),

        r_min = q Psi''(th_max) / (q Psi''(th_max) + Psi''(th_max+1)),

    the R at which the kappa-root theta0 sits exactly at th_max; lies in (1/2, 1).
    """
    if not (0.0 < q < 1.0):
        raise DomainError(f"q must lie in (0,1), got {q}")
    th_max = math.log(2.0 * q / (1.0 + q)) / math.log(q)
    psi2 = q_digamma(th_max, q, 2).value.real
    psi2s = q_digamma(th_max + 1.0, q, 2).value.real
    return q * psi2 / (q * psi2 + psi2s)


@dataclass(frozen=True)
class F0Profile:
    """The action function f0 pinned at fan position theta.

    f0 has a double critical point at theta (f0' = f0'' = 0, f0''' > 0); its
    third derivative sets the t^(1/3) fluctuation scale via
    sigma^3 = -f0'''(theta) / (2 log(q)^3).
    """

    theta: float
    kappa: float
    pi: float
    f0: Callable[[complex], complex]
    d1: Callable[[complex], complex]
    d2: Callable[[complex], complex]
    d3: Callable[[complex], complex]


def f0_profile(p: ModelParams, theta: float) -> F0Profile:
    """Build f0 and its first three derivatives with kappa, pi frozen at theta.

        f0(Z) = kappa log((q^Z;q)_inf / (nu q^Z;q)_inf)
                + (1-q)/log(q) ((R/nu) Psi_q(Z+V) - L Psi_q(Z))
                - Z log(q) (kappa + pi)

    Evaluation goes through series in w = q^Z, so the callables accept any
    complex Z with q^Z off the singular lattice {q^-k} (and off q^Z = 1 for
    f0 itself, where the log has its pole); at nu = 0 the Z-independent
    divergent constant (R/nu-scaled) is dropped, leaving derivatives intact.
    """
    hp = pi_kappa_sigma(p, theta)
    q, nu, R, L = p.q, p.nu, p.R, p.L
    lq = math.log(q)
    kap, pi_ = hp.kappa, hp.pi

    def logpoch_ratio(w: complex) -> complex:
        # log((w;q)_inf / (nu w;q)_inf), factorwise to keep branches tame
        out = 0.0 + 0.0j
        x, y = complex(w), nu * complex(w)
        while abs(x) >= 1e-17 or abs(y) >= 1e-17:
            if abs(1.0 - x) < 1e-13:
                raise DomainError("f0 pole: q^Z on the lattice q^-k")
            out += cmath.log(1.0 - x) - cmath.log(1.0 - y)
            x *= q
            y *= q
        return out

    def shift_term(w: complex, order: int) -> complex:
        # (R/nu) Psi^(order)(Z+V) - L Psi^(order)(Z), via w-series
        if nu == 0.0:
            s = R * lq ** (order + 1) * w / (1.0 - q)
            if order == 0:
                s = R * lq * w / (1.0 - q)  # constant -log(1-q)*(R/nu) dropped
            return s - L * psi_at_power(w, q, order)
        return R / nu * psi_at_power(nu * w, q, order) - L * psi_at_power(w, q, order)

    c = (1.0 - q) / lq

    def f0(Z: complex) -> complex:
        w = cmath.exp(complex(Z) * lq)
        return kap * logpoch_ratio(w) + c * shift_term(w, 0) - complex(Z) * lq * (kap + pi_)

    def d1(Z: complex) -> complex:
        w = cmath.exp(complex(Z) * lq)
        if nu == 0.0:
            dlog = -psi_at_power(w, q, 0) - math.log(1.0 - q)
        else:
            dlog = psi_at_power(nu * w, q, 0) - psi_at_power(w, q, 0)
        return kap * dlog + c * shift_term(w, 1) - lq * (kap + pi_)

    def deriv(Z: complex, r: int) -> complex:
        w = cmath.exp(complex(Z) * lq)
        if nu == 0.0:
            dlog = -psi_at_power(w, q, r - 1)
        else:
            dlog = psi_at_power(nu * w, q, r - 1) - psi_at_power(w, q, r - 1)
        return kap * dlog + c * shift_term(w, r)

    return F0Profile(
        theta=theta, kappa=kap, pi=pi_,
        f0=f0, d1=d1,
        d2=lambda Z: deriv(Z, 2),
        d3=lambda Z: deriv(Z, 3),
    )


@dataclass(frozen=True)
class SteepDescentReport:
    theta: float
    alpha: float
    circle_monotone: bool
    line_monotone: bool
    min_circle_slope: float
    min_line_slope: float
    grid: int

    @property
    def passed(self) -> bool:
        return self.circle_monotone and self.line_monotone


def steep_descent_scan(p: ModelParams, theta: float, grid: int = 512) -> SteepDescentReport:
    """Sampled monotonicity of Re f0 along the two asymptotic contours (nu = q).

    Circle contour W(u) = log_q(1 - (1-alpha) e^{iu}): Re f0 must increase on
    u in (0, pi).  Vertical line Z(u) = theta + i u/|log q|: Re f0 must
    decrease on u in (0, pi).  Requires alpha = q^theta > 2q/(1+q); refuses
    otherwise (the residue-crossing condition).
    """
    if p.nu != p.q:
        raise DomainError("steep-descent contours are specific to the nu = q family")
    _check_theta(theta)
    q = p.q
    alpha = q**theta
    if not (alpha > 2.0 * q / (1.0 + q)):
        raise DomainError(
            f"steep descent needs alpha = q^theta > 2q/(1+q): "
            f"{alpha:.6g} <= {2.0 * q / (1.0 + q):.6g}"
        )
    prof = f0_profile(p, theta)
    lq = math.log(q)

    u = np.linspace(0.0, math.pi, grid + 1)[1:-1]
    w_vals = np.array([(cmath.log(1.0 - (1.0 - alpha) * cmath.exp(1j * uu)) / lq)
                       for uu in u])
    re_c = np.array([prof.f0(W).real for W in w_vals])
    dc = np.diff(re_c)
    z_vals = theta + 1j * u / abs(lq)
    re_d = np.array([prof.f0(Z).real for Z in z_vals])
    dd = np.diff(re_d)

    return SteepDescentReport(
        theta=theta, alpha=alpha,
        circle_monotone=bool(np.all(dc > 0.0)),
        line_monotone=bool(np.all(dd < 0.0)),
        min_circle_slope=float(dc.min() / (u[1] - u[0])),
        min_line_slope=float((-dd).min() / (u[1] - u[0])),
        grid=grid,
    )


def theta_for_kappa(p: ModelParams, target: float, lo: float = 1e-3, hi: float = 60.0) -> float:
    """Invert kappa(theta) = target on the increasing branch (fan interior)."""
    from scipy.optimize import brentq

    start = theta0(p) if (p.L > 0.0 and p.R > p.L) else lo

    def f(t):
        return pi_kappa_sigma(p, t).kappa - target

    a, b = max(start, lo), hi
    fa, fb = f(a), f(b)
    if fa > 0.0:
        # kappa already above target at the left end of the branch
        a = lo if start <= lo else start * 1.0000001
        fa = f(a)
    if fa * fb > 0.0:
        raise DomainError(f"kappa never reaches {target} on ({a}, {b})")
    return brentq(f, a, b, xtol=1e-12)
