"""Self-normalizing Gaussian form integrals by quadrature.

A Gaussian form is exp(-S_A) where S_A carries both the bosonic quadratic
form and its odd-generator twin; its integral over C^Lambda is exactly one
whenever A has positive real part, and its moments reproduce A^{-1}. This
module integrates products of such forms with polynomial forms and with
bounded functions of the local-time form, for one and two sites:

- one site: the angular integral is done exactly (trapezoid rule on a
  trigonometric polynomial), the radial integral adaptively;
- two sites: tensor Gauss-Hermite quadrature on R^4 after factoring the
  positive-definite real part of the quadratic form, with node refinement
  until successive estimates agree.

Closed-form Gaussian algebra (partial integration via Schur complement,
convolution of covariances) lives here too, so each law can be checked
against quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_hermite

from .forms import Form, FormAlgebra, _wedge_sign


class QuadratureError(ArithmeticError):
    """Quadrature failed to converge; carries the estimate and error."""

    def __init__(self, msg, estimate=None, error=None):
        super().__init__(msg)
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# Gaussian forms and their closed-form algebra
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianForm:
    """exp(-S_A) represented by its matrix A (positive real part required)."""

    A: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=complex))
        object.__setattr__(self, "A", A)
        herm = (A + A.conj().T) / 2
        ev = np.linalg.eigvalsh(herm)
        if ev.min() <= 0:
            raise ValueError("quadratic form does not have positive real part")

    @property
    def n_sites(self):
        return self.A.shape[0]

    def covariance(self):
        return np.linalg.inv(self.A)


def partial_integral(G: GaussianForm, keep) -> GaussianForm:
    """Integrate out the complement of ``keep``: exp(-S_A) -> exp(-S_{A_u}).

    A_u is the inverse of the covariance restricted to the kept sites (the
    Schur complement of the dropped block); the normalization constant is
    exactly one.
    """
    keep = list(keep)
    C = G.covariance()
    Cu = C[np.ix_(keep, keep)]
    try:
        Au = np.linalg.inv(Cu)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular restriction of the covariance") from exc
    return GaussianForm(Au)


def convolve(G1: GaussianForm, G2: GaussianForm) -> GaussianForm:
    """Convolution of Gaussian forms: covariances add, C^-1 = A^-1 + B^-1."""
    Cinv = G1.covariance() + G2.covariance()
    try:
        C = np.linalg.inv(Cinv)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular covariance sum") from exc
    return GaussianForm(C)


def fermion_expansion(alg: FormAlgebra, A) -> Form:
    """The terminating expansion of exp(-sum psi_x A_xy psibar_y)."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    n = alg.n_sites
    T = alg.zero()
    for x in range(n):
        for y in range(n):
            if A[x, y]:
                T = T + (alg.psi(x, 1 + 0j) * alg.psibar(y, 1 + 0j)).scale(A[x, y])
    out = alg.const(1 + 0j)
    term = alg.const(1 + 0j)
    fac = 1.0
    for k in range(1, n + 1):
        term = term * T.scale(-1)
        fac *= k
        out = out + term.scale(1.0 / fac)
    return out


# ---------------------------------------------------------------------------
# smooth forms: callable coefficients for the quadrature path
# ---------------------------------------------------------------------------

class SmoothForm:
    """A form whose coefficients are callables of the complex coordinates.

    ``terms`` maps a generator bitmask to a function of the tuple of
    (vectorized) complex site coordinates.
    """

    def __init__(self, n_sites: int, terms: dict):
        self.n_sites = n_sites
        self.terms = terms

    def __mul__(self, other):
        if isinstance(other, SmoothForm):
            if other.n_sites != self.n_sites:
                raise ValueError("mismatched site sets")
            out = {}
            for m1, f1 in self.terms.items():
                for m2, f2 in other.terms.items():
                    if m1 & m2:
                        continue
                    sign = _wedge_sign(m1, m2)
                    m = m1 | m2
                    prev = out.get(m)

                    def prod(phis, f1=f1, f2=f2, sign=sign, prev=prev):
                        v = sign * f1(phis) * f2(phis)
                        return v if prev is None else prev(phis) + v

                    out[m] = prod
            return SmoothForm(self.n_sites, out)
        return SmoothForm(self.n_sites,
                          {m: (lambda phis, f=f: other * f(phis)) for m, f in self.terms.items()})

    __rmul__ = __mul__

    def top_coefficient(self):
        full = (1 << (2 * self.n_sites)) - 1
        return self.terms.get(full)


def form_to_smooth(F: Form) -> SmoothForm:
    """Evaluate a polynomial form's coefficients pointwise (parameters excluded)."""
    alg = F.alg
    if any(any(e[2 * alg.n_sites:]) for p in F.terms.values() for e in p):
        raise ValueError("substitute parameters before numeric evaluation")
    out = {}
    for m, p in F.terms.items():
        entries = [(e, complex(c)) for e, c in p.items()]

        def coeff(phis, entries=entries, n=alg.n_sites):
            total = 0
            for e, c in entries:
                v = c
                for i in range(n):
                    if e[2 * i]:
                        v = v * phis[i] ** e[2 * i]
                    if e[2 * i + 1]:
                        v = v * np.conj(phis[i]) ** e[2 * i + 1]
                total = total + v
            return total

        out[m] = coeff
    return SmoothForm(alg.n_sites, out)


def tau_function_form(funcs) -> SmoothForm:
    """The form prod_x [f_x(tau_x)] from per-site (f, f') pairs.

    Each factor is f(phi phibar) + f'(phi phibar) psi psibar; the product
    over sites needs no ordering since every factor is even.
    """
    n = len(funcs)
    out = None
    for i, (f, fp) in enumerate(funcs):
        terms = {
            0: (lambda phis, f=f, i=i: f(np.abs(phis[i]) ** 2)),
            (0b11 << (2 * i)): (lambda phis, fp=fp, i=i: fp(np.abs(phis[i]) ** 2)),
        }
        factor = SmoothForm(n, terms)
        out = factor if out is None else out * factor
    return out


def gaussian_weight(A) -> "SmoothForm":
    """exp(-<phi, A phibar>) as a degree-zero smooth form."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    n = A.shape[0]

    def w(phis):
        s = 0
        for i in range(n):
            for j in range(n):
                if A[i, j]:
                    s = s + A[i, j] * phis[i] * np.conj(phis[j])
        return np.exp(-s)

    return SmoothForm(n, {0: w})


# ---------------------------------------------------------------------------
# quadrature drivers
# ---------------------------------------------------------------------------

def _complex_quad(f, lo, hi, **kw):
    kw.setdefault("limit", 300)
    kw.setdefault("epsabs", 1e-12)
    kw.setdefault("epsrel", 1e-12)
    re = quad(lambda t: f(t).real, lo, hi, **kw)
    im = quad(lambda t: f(t).imag, lo, hi, **kw)
    return re[0] + 1j * im[0], max(re[1], im[1])


def integrate_c1(g, n_angle: int = 64, radial_limit: float = np.inf):
    """Integral of a decaying callable g(phi) over the complex plane.

    Polar coordinates; the angular average is exact for trigonometric
    polynomials of degree below ``n_angle``, the radial integral adaptive.
    """
    thetas = np.arange(n_angle) * (2 * np.pi / n_angle)
    phases = np.exp(1j * thetas)

    def radial(rho):
        vals = g(rho * phases)
        return np.mean(vals) * 2 * np.pi * rho

    val, err = _complex_quad(radial, 0.0, radial_limit)
    # scipy's half-line error estimates are conservative; gate loosely
    if err > 1e-6 * max(1.0, abs(val)):
        raise QuadratureError("radial quadrature did not converge", val, err)
    return val


def _real_quadratic_matrix(A):
    """Re <phi, A phibar> as a real quadratic form on (u_1..u_n, v_1..v_n)."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    n = A.shape[0]
    Ar, Ai = A.real, A.imag
    K = np.zeros((2 * n, 2 * n))
    K[:n, :n] = Ar
    K[n:, n:] = Ar
    K[:n, n:] = Ai
    K[n:, :n] = -Ai
    return (K + K.T) / 2


def gauss_hermite_c2(g, A, orders=(24, 32, 40, 48), rtol=1e-9):
    """Integral over C^2 of g(phi) exp(-<phi, A phibar>).

    The positive-definite real part of the exponent is factored into the
    Gauss-Hermite weight; g times the leftover unimodular phase must be
    smooth and subexponential, which covers polynomials and bounded
    functions of the local times.
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    M = _real_quadratic_matrix(A)
    w, V = np.linalg.eigh(M)
    if w.min() <= 0:
        raise ValueError("quadratic form does not have positive real part")
    T = V @ np.diag(1.0 / np.sqrt(w))
    jac = abs(np.prod(1.0 / np.sqrt(w)))
    Adev = A - (A + A.conj().T) / 2  # anti-Hermitian leftover: i * Im part

    prev = None
    for m in orders:
        x, wts = roots_hermite(m)
        grids = np.meshgrid(x, x, x, x, indexing="ij")
        y = np.stack([grid.ravel() for grid in grids])
        wt = (wts[:, None, None, None] * wts[None, :, None, None]
              * wts[None, None, :, None] * wts[None, None, None, :]).ravel()
        xr = T @ y
        phis = (xr[0] + 1j * xr[2], xr[1] + 1j * xr[3])
        # leftover exponent: -(S_A - Re S_A) = -i Im S_A
        s = 0
        for i in range(2):
            for j in range(2):
                if Adev[i, j]:
                    s = s + Adev[i, j] * phis[i] * np.conj(phis[j])
        vals = g(phis) * np.exp(-s)
        est = jac * np.dot(wt, vals)
        if prev is not None and abs(est - prev) <= rtol * max(1.0, abs(est)):
            return est
        prev = est
    raise QuadratureError("tensor quadrature did not converge", prev,
                          abs(est - prev))


def berezin_integral(S: SmoothForm, A=None):
    """Full integral of a smooth form over C^{n_sites}, n_sites <= 2.

    Extracts the top-degree coefficient and integrates it; the Gaussian
    decay matrix A (when given) is multiplied in and used to factor the
    two-site quadrature. Orientation: each site contributes one factor of
    -1/pi relative to the plain Lebesgue integral of the coefficient.
    """
    n = S.n_sites
    top = S.top_coefficient()
    if top is None:
        return 0j
    if A is not None:
        wA = gaussian_weight(A)

        def g(phis, top=top, w=wA.terms[0]):
            return top(phis) * w(phis)
    else:
        g = lambda phis: top(phis)  # noqa: E731

    if n == 1:
        val = integrate_c1(lambda z: g((z,)))
        return -val / np.pi
    if n == 2:
        if A is None:
            raise ValueError("two-site integration needs a Gaussian decay matrix")
        top_only = top
        val = gauss_hermite_c2(top_only, A)
        return val / np.pi ** 2
    raise ValueError("quadrature supports at most two sites")


def partial_integral_smooth(S: SmoothForm, drop: int, fixed_index: int,
                            n_angle: int = 64):
    """Integrate a two-site smooth form over one complex coordinate.

    Returns a dict mapping the kept site's masks to callables of the kept
    coordinate. Only terms carrying both odd generators of the dropped
    site survive; their pair extraction is sign-free in the site-major
    generator order.
    """
    if S.n_sites != 2:
        raise ValueError("expects a two-site form")
    keep = 1 - drop
    pair = 0b11 << (2 * drop)
    out = {}
    for m, f in S.terms.items():
        if m & pair != pair:
            continue
        kept_mask_src = m & ~pair
        # re-index the kept site's generators onto a one-site algebra
        km = 0
        for bar in (0, 1):
            if kept_mask_src & (1 << (2 * keep + bar)):
                km |= 1 << bar

        def coeff(z_keep, f=f):
            def g(z_drop):
                phis = [None, None]
                phis[keep] = z_keep
                phis[drop] = z_drop
                return f(tuple(phis))

            return -integrate_c1(g, n_angle=n_angle) / np.pi

        prev = out.get(km)
        out[km] = coeff if prev is None else (lambda z, a=prev, b=coeff: a(z) + b(z))
    return out


# ---------------------------------------------------------------------------
# the local-time isomorphism check
# ---------------------------------------------------------------------------

def _check_markov(A):
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    if np.abs(A.imag).max() > 0:
        return
    R = A.real
    off = R - np.diag(np.diag(R))
    if off.max() > 1e-12:
        raise ValueError("off-diagonal entries must be <= 0 for a killed generator")
    if R.sum(axis=1).min() < -1e-12:
        raise ValueError("row sums must be >= 0 for a killed generator")


def tau_isomorphism_check(A, F, a: int = 0, b: int = 0, validate_markov: bool = True):
    """Compare the Gaussian-form and the Markov-side values of the pairing.

    Left side: the full integral of exp(-S_A) F(tau) phi_a phibar_b by
    quadrature. Right side: for one site with a general F given as a
    callable pair (f, f'), the Laplace-type integral of f against the
    killed single-state process; for the Fourier family F = exp(i sum k
    tau), the resolvent entry (A - iK)^{-1}[a, b]. Returns (lhs, rhs,
    |difference|).
    """
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    n = A.shape[0]
    if n > 2:
        raise ValueError("isomorphism check supports at most two sites")
    if validate_markov:
        _check_markov(A)
    alg = FormAlgebra(n)

    if isinstance(F, tuple) and F and F[0] == "fourier":
        ks = np.asarray(F[1], dtype=float)
        funcs = [((lambda s, k=k: np.exp(1j * k * s)),
                  (lambda s, k=k: 1j * k * np.exp(1j * k * s))) for k in ks]
        K = np.diag(ks.astype(complex))
        # S_A contracts phi on the row index, so pairing with phi_a phibar_b
        # picks the resolvent entry from b to a; immaterial for symmetric A.
        rhs = np.linalg.inv(A - 1j * K)[b, a]
    else:
        if n != 1:
            raise ValueError("general F is supported on one site only")
        f, fp = F
        funcs = [(f, fp)]
        aa = A[0, 0]

        def integrand(t):
            return np.exp(-aa * t) * f(t)

        rhs, _ = _complex_quad(integrand, 0.0, np.inf, limit=200)

    obs = form_to_smooth(alg.phi(a, 1 + 0j) * alg.phibar(b, 1 + 0j))
    total = form_to_smooth(fermion_expansion(alg, A)) * tau_function_form(funcs) * obs
    lhs = berezin_integral(total, A=A)
    return lhs, rhs, abs(lhs - rhs)
