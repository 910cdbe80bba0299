"""Jump-rate and jump-weight kernels for the q-Hahn exclusion / zero-range
family, plus the symmetry identities behind the duality.

Conventions: a particle with gap m ahead of it may jump j in {1..m} sites
forward at rate phi_right(j|m) and, with gap m behind, j sites backward at
rate phi_left(j|m).  m = math.inf is a first-class input for the lead
particle.  nu = q gives the gap-independent rates R/[j]_{1/q} and L/[j]_q
(the MADM family); nu = 0 gives the two-sided q-TASEP family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .qspecial import (
    INFINITY,
    DomainError,
    g_series,
    q_binomial,
    q_integer,
    q_pochhammer,
)


@dataclass(frozen=True)
class ModelParams:
    """Process parameters (q, nu, R, L) with R + L = 1 enforced to 1e-12."""

    q: float
    nu: float
    R: float
    L: float

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise DomainError(f"q must lie in (0,1), got {self.q}")
        if not (0.0 <= self.nu < 1.0):
            raise DomainError(f"nu must lie in [0,1), got {self.nu}")
        if self.R < 0.0 or self.L < 0.0:
            raise DomainError("asymmetry rates R, L must be >= 0")
        if abs(self.R + self.L - 1.0) > 1e-12:
            raise DomainError(f"normalization R+L=1 violated: R+L = {self.R + self.L}")

    @classmethod
    def from_r(cls, q: float, nu: float, R: float) -> "ModelParams":
        return cls(q=q, nu=nu, R=R, L=1.0 - R)

    @property
    def is_madm(self) -> bool:
        return self.nu == self.q


@dataclass(frozen=True)
class QHahnWeights:
    """Parameters (q, mu, nu) of the q-Hahn distribution, 0 <= nu < mu < 1."""

    q: float
    mu: float
    nu: float

    def __post_init__(self):
        if not (0.0 < self.q < 1.0):
            raise DomainError(f"q must lie in (0,1), got {self.q}")
        if not (0.0 <= self.nu < self.mu < 1.0):
            raise DomainError(
                f"need 0 <= nu < mu < 1, got nu={self.nu}, mu={self.mu}"
            )


def _poch_ratio(q: float, nu: float, j: int, m: int) -> float:
    """(nu;q)_{m-j} (q;q)_m / ((nu;q)_m (q;q)_{m-j}) as an explicit partial
    product of the j missing factors (no cancellation for large m):

        prod_{d=0}^{j-1} (1 - q^{m-d}) / (1 - nu q^{m-1-d})
    """
    out = 1.0
    for d in range(j):
        out *= (1.0 - q ** (m - d)) / (1.0 - nu * q ** (m - 1 - d))
    return out


def phi_right(p: ModelParams, j: int, m) -> float:
    """Right-jump rate phi^R(j|m) = R nu^{j-1}/[j]_q * Pochhammer ratio.

    m may be math.inf (lead particle): the ratio tends to 1 and the rate is
    R nu^{j-1}/[j]_q, which for nu = 0 is R * 1{j=1}.
    """
    if j < 1:
        raise DomainError(f"jump size must be >= 1, got {j}")
    if m is not INFINITY and m != INFINITY:
        m = int(m)
        if j > m:
            raise DomainError(f"jump size {j} exceeds gap {m}")
        ratio = _poch_ratio(p.q, p.nu, j, m)
    else:
        ratio = 1.0
    return p.R * p.nu ** (j - 1) / q_integer(j, p.q) * ratio


def phi_left(p: ModelParams, j: int, m: int) -> float:
    """Left-jump rate phi^L(j|m) = L/[j]_q * Pochhammer ratio (m finite)."""
    if j < 1:
        raise DomainError(f"jump size must be >= 1, got {j}")
    if m is INFINITY or m == INFINITY:
        raise DomainError("left jumps are gap-limited; m must be finite")
    m = int(m)
    if j > m:
        raise DomainError(f"jump size {j} exceeds gap {m}")
    return p.L / q_integer(j, p.q) * _poch_ratio(p.q, p.nu, j, m)


def qhahn_weight(w: QHahnWeights, j: int, m: int) -> float:
    """The q-Hahn probability of moving j out of a gap of m,

        mu^j (nu/mu; q)_j (mu; q)_{m-j} / (nu; q)_m * [m choose j]_q.

    The nu = 0 extension is the same formula with (0; q)_j = 1.
    """
    if not (0 <= j <= m):
        raise DomainError(f"need 0 <= j <= m, got j={j}, m={m}")
    q, mu, nu = w.q, w.mu, w.nu
    num = q_pochhammer(nu / mu, q, j).real * q_pochhammer(mu, q, m - j).real
    den = q_pochhammer(nu, q, m).real
    return mu**j * num / den * q_binomial(m, j, q)


def qhahn_weight_inverse(w: QHahnWeights, j: int, m: int) -> float:
    """The weight with all parameters inverted: phi_{1/q, 1/mu, 1/nu}(j|m)."""
    if not (0 <= j <= m):
        raise DomainError(f"need 0 <= j <= m, got j={j}, m={m}")
    if w.nu == 0.0:
        # limiting weights concentrate on j = m
        return 1.0 if j == m else 0.0
    qi, mui, nui = 1.0 / w.q, 1.0 / w.mu, 1.0 / w.nu
    num = _poch_finite(nui / mui, qi, j) * _poch_finite(mui, qi, m - j)
    den = _poch_finite(nui, qi, m)
    binom = 1.0
    for i in range(1, j + 1):
        binom *= (1.0 - qi ** (m - j + i)) / (1.0 - qi**i)
    return mui**j * num / den * binom


def _poch_finite(a: float, base: float, n: int) -> float:
    out = 1.0
    for i in range(n):
        out *= 1.0 - a * base**i
    return out


class SymmetryResiduals(NamedTuple):
    symmetry: float
    symmetry_inverse: float
    degenerate_right: float
    degenerate_left: float


def check_symmetry(w: QHahnWeights, m: int, y: int) -> SymmetryResiduals:
    """Residuals of the four duality-bearing symmetry identities.

    symmetry:          sum_j phi(j|m) q^{jy}   = sum_j phi(j|y) q^{jm}
    symmetry_inverse:  the same with all parameters and q-powers inverted
    degenerate_right:  sum_j phi^R(j|m)(q^{jy}-1)  = sum_j phi^R(j|y)(q^{jm}-1)
    degenerate_left:   sum_j phi^L(j|m)(q^{-jy}-1) = sum_j phi^L(j|y)(q^{-jm}-1)

    The degenerate identities are rate-level (epsilon-limits of the first two)
    and use (q, nu) from w; the overall R and L factors cancel.
    """
    if m < 0 or y < 0:
        raise DomainError("gap arguments must be >= 0")
    q = w.q

    lhs = sum(qhahn_weight(w, j, m) * q ** (j * y) for j in range(m + 1))
    rhs = sum(qhahn_weight(w, j, y) * q ** (j * m) for j in range(y + 1))
    res_sym = abs(lhs - rhs)

    lhs = sum(qhahn_weight_inverse(w, j, m) * q ** (-j * y) for j in range(m + 1))
    rhs = sum(qhahn_weight_inverse(w, j, y) * q ** (-j * m) for j in range(y + 1))
    res_inv = abs(lhs - rhs)

    p = ModelParams.from_r(q=q, nu=w.nu, R=0.5)
    lhs = sum(phi_right(p, j, m) * (q ** (j * y) - 1.0) for j in range(1, m + 1))
    rhs = sum(phi_right(p, j, y) * (q ** (j * m) - 1.0) for j in range(1, y + 1))
    res_right = abs(lhs - rhs)

    lhs = sum(phi_left(p, j, m) * (q ** (-j * y) - 1.0) for j in range(1, m + 1))
    rhs = sum(phi_left(p, j, y) * (q ** (-j * m) - 1.0) for j in range(1, y + 1))
    res_left = abs(lhs - rhs)

    return SymmetryResiduals(res_sym, res_inv, res_right, res_left)


def inversion_residual(q: float, nu: float, j: int, m: int) -> float:
    """Residual of R^{-1} phi^R_{1/q,1/nu}(j|m) = (nu/q) L^{-1} phi^L_{q,nu}(j|m)."""
    if nu == 0.0:
        raise DomainError("inversion identity needs nu > 0")
    # phi^R with inverted (q, nu) and R stripped, directly from the definition
    qi, nui = 1.0 / q, 1.0 / nu
    ratio = 1.0
    for d in range(j):
        ratio *= (1.0 - qi ** (m - d)) / (1.0 - nui * qi ** (m - 1 - d))
    lhs = nui ** (j - 1) / q_integer(j, qi) * ratio
    p = ModelParams.from_r(q=q, nu=nu, R=0.5)
    rhs = (nu / q) * phi_left(p, j, m) / p.L
    return abs(lhs - rhs)


def total_rate_right(p: ModelParams, m) -> float:
    """Total right-exit rate sum_{j<=m} phi^R(j|m).

    m = math.inf: (R/nu) G_q(nu) for nu > 0 (and R for nu = 0, where only
    j = 1 survives with rate R(1-q^inf) = R).
    """
    if m is INFINITY or m == INFINITY:
        if p.nu == 0.0:
            return p.R
        return p.R / p.nu * g_series(p.nu, p.q).real
    m = int(m)
    return sum(phi_right(p, j, m) for j in range(1, m + 1))


def total_rate_left(p: ModelParams, m: int) -> float:
    """Total left-exit rate sum_{j<=m} phi^L(j|m) (m finite)."""
    m = int(m)
    return sum(phi_left(p, j, m) for j in range(1, m + 1))


def mean_jump_right(p: ModelParams, m) -> float:
    """sum_j j * phi^R(j|m); the expected signed displacement rate uses this."""
    if m is INFINITY or m == INFINITY:
        if p.nu == 0.0:
            return p.R
        # sum j nu^{j-1}/[j]_q converges geometrically; truncate on the tail
        s, j = 0.0, 1
        while True:
            term = j * p.nu ** (j - 1) / q_integer(j, p.q)
            s += term
            if p.nu**j * (j + 1) / (1.0 - p.nu) ** 2 < 1e-15 * max(s, 1e-300):
                break
            j += 1
        return p.R * s
    return sum(j * phi_right(p, j, int(m)) for j in range(1, int(m) + 1))


def mean_jump_left(p: ModelParams, m: int) -> float:
    """sum_j j * phi^L(j|m) (m finite)."""
    return sum(j * phi_left(p, j, int(m)) for j in range(1, int(m) + 1))
