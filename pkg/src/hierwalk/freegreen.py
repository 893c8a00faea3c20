"""Exact free (non-interacting) Green's functions.

The killed walk's potential on the finite volume G_N decomposes across
scales: one fluctuation covariance Gamma per scale plus a zero-mode
resolvent. Gamma(beta, .) takes exactly two values, B/(1+beta) at the
origin and -L^-4/(1+beta) on the rest of the unit ball G_1, and vanishes
outside G_1; its sum over the lattice is exactly zero.

Three independent evaluations of the potential are provided: the scale
sum, the spectral (dual-ball eigenvalue) formula, and, for the infinite
volume, the geometrically convergent scale series.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction

from .lattice import Site, norm_level, process_constants


class SingularBetaError(ValueError):
    """The killing-rate argument hits a pole of the free covariance."""


def _big_b(L: int):
    return Fraction(L ** 4 - 1, L ** 4)  # 1 - L^-4


@dataclass(frozen=True)
class FluctuationCov:
    """Single-scale covariance: two values on G_1, zero outside.

    on_site = B/(1+beta) with B = 1 - L^-4, off_site = -L^-4/(1+beta);
    the lattice sum on_site + (L^4 - 1) off_site is exactly zero.
    """

    beta: object
    L: int
    on_site: object
    off_site: object

    def value_at_level(self, k: int):
        """Covariance at a site of norm L^k (k = 0 is the origin)."""
        if k == 0:
            return self.on_site
        if k == 1:
            return self.off_site
        return 0 * self.on_site


def fluctuation_cov(beta, L: int) -> FluctuationCov:
    """Assemble the two-valued fluctuation covariance at killing rate beta."""
    denom = 1 + beta
    if not denom:
        raise SingularBetaError("beta = -1 is a pole of the fluctuation covariance")
    B = _big_b(L)
    if isinstance(beta, (complex, float, int)) and not isinstance(beta, bool):
        on = complex(beta * 0) + float(B) / denom
        off = -(1.0 / L ** 4) / denom
    else:
        on = B * (1 / denom)
        off = -Fraction(1, L ** 4) * (1 / denom)
    return FluctuationCov(beta=beta, L=L, on_site=on, off_site=off)


def gamma(beta, x: Site, L: int):
    """Fluctuation covariance Gamma(beta, x); supports exact or complex beta."""
    cov = fluctuation_cov(beta, L)
    k = norm_level(x)
    if k == 0:
        return cov.on_site
    if k == 1:
        return cov.off_site
    return 0 * cov.on_site


def gamma_power_sum(beta, p: int, L: int):
    """Sum of Gamma(beta, y)^p over the lattice (closed form).

    Equals (1+beta)^-p [B^p + (L^4 - 1)(-L^-4)^p]; the p = 1 sum vanishes
    identically, which is what kills every diagram with a dangling single
    covariance line.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    denom = 1 + beta
    if not denom:
        raise SingularBetaError("beta = -1 is a pole")
    n = L ** 4
    shell = _big_b(L) ** p + (n - 1) * Fraction(-1, n) ** p
    if isinstance(beta, (complex, float, int)) and not isinstance(beta, bool):
        return float(shell) / denom ** p
    return shell * (1 / denom) ** p


def gamma_matrix(beta, L: int):
    """Dense n x n covariance matrix on G_1 (debug assembler for eigen tests)."""
    import numpy as np

    n = L ** 4
    cov = fluctuation_cov(complex(beta), L)
    m = np.full((n, n), complex(cov.off_site))
    np.fill_diagonal(m, complex(cov.on_site))
    return m


def green_finite(beta: complex, x: Site, N: int, L: int) -> complex:
    """Potential of the walk killed on exit from G_N, by the scale sum.

    U(beta, x) = sum_{j<N} L^-2j Gamma(L^2j beta, x/L^j)
                 + L^-2N / (r + L^2N beta)   for every x in G_N.
    """
    if norm_level(x) > N:
        raise ValueError(f"site {x.to_text()!r} lies outside the volume G_{N}")
    params = process_constants(L)
    beta = complex(beta)
    total = 0j
    y = x
    for j in range(N):
        total += L ** (-2 * j) * gamma(L ** (2 * j) * beta, y, L)
        y = Site(y.digits[1:], y.n)
    zero_mode = float(params.rate_r) + L ** (2 * N) * beta
    if zero_mode == 0:
        raise SingularBetaError("beta hits the zero-mode pole of the finite volume")
    return total + L ** (-2 * N) / zero_mode


def green_spectral(beta: complex, x: Site, N: int, L: int) -> complex:
    """Independent evaluation of the finite-volume potential.

    Uses the level eigenvalues gamma L^-2j on the dual shells and
    r L^-2N on the top dual ball, inverted with indicator-difference
    weights. Must agree with the scale sum to full precision.
    """
    if norm_level(x) > N:
        raise ValueError(f"site {x.to_text()!r} lies outside the volume G_{N}")
    params = process_constants(L)
    beta = complex(beta)
    n = L ** 4
    k = norm_level(x)
    total = 0j
    for j in range(N):
        # weight of (1_{G_j} - (1/n) 1_{G_{j+1}}) at x
        w = (1.0 if k <= j else 0.0) - (1.0 / n if k <= j + 1 else 0.0)
        if w == 0.0:
            continue
        ev = beta + float(params.gamma_const) * L ** (-2 * j)
        if ev == 0:
            raise SingularBetaError(f"beta hits the level-{j} eigenvalue pole")
        total += n ** (-j) * w / ev
    ev = beta + float(params.rate_r) * L ** (-2 * N)
    if ev == 0:
        raise SingularBetaError("beta hits the top-level eigenvalue pole")
    return total + n ** (-N) / ev


def green_infinite(beta: complex, x: Site, L: int, tol: float = 1e-14,
                   max_terms: int = 100000) -> complex:
    """Infinite-volume potential: geometrically truncated scale series.

    Terms L^-2l Gamma(L^2l beta, x/L^l) vanish until l = level(x) - 1 and
    decay like L^-2l afterwards; summation stops once the next-term bound
    drops below tol times the accumulated magnitude.
    """
    beta = complex(beta)
    k = norm_level(x)
    if beta == 0 and k == 0:
        raise SingularBetaError("potential diverges at beta = 0 on the zero site")
    B = float(_big_b(L))
    total = 0j
    y = x
    lvl = 0
    while True:
        if norm_level(y) <= 1:
            total += L ** (-2 * lvl) * gamma(L ** (2 * lvl) * beta, y, L)
        lvl += 1
        y = Site(y.digits[1:], y.n)
        if lvl >= max(1, k):
            bound = L ** (-2 * lvl) * B / abs(1 + L ** (2 * lvl) * beta)
            if bound < tol * max(abs(total), 1e-300):
                break
        if lvl > max_terms:
            raise ArithmeticError("scale series failed to converge")
    return total


def green_csv(rows, out=None) -> str:
    """Emit (L, N, beta_re, beta_im, x, U_re, U_im) rows as CSV."""
    buf = out or io.StringIO()
    w = csv.writer(buf)
    w.writerow(["L", "N", "beta_re", "beta_im", "x", "U_re", "U_im"])
    for (L, N, beta, x, u) in rows:
        w.writerow([L, N, beta.real, beta.imag, x.to_text(), u.real, u.imag])
    return buf.getvalue() if out is None else ""
