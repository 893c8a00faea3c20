"""Differential forms with polynomial coefficients on C^Lambda, exactly.

A form is stored as a sparse map from a Grassmann monomial (a bitmask over
the generators psi_x, psibar_x in a fixed global order) to a sparse
multivariate polynomial in the commuting variables phi_x, phibar_x and any
declared parameter symbols. Coefficients live in whatever ring the caller
feeds in: exact complex rationals (``exact.QC``), ``Fraction``, ``int``, or
``complex``; every identity check in the exact ring is an equality.

Normalization of the odd generators: psi_x is the coordinate differential
d(phi_x) rescaled by the fixed square root of 2*pi*i, so tau_x =
phi_x phibar_x + psi_x psibar_x carries no transcendental constants. The
exterior derivative and the interior product with the rotation field are
represented with that same branch factor scaled out (they each carry
exactly one factor of it); kernels, images, squares, and every even-form
result are unchanged, and the factor is restored at the numeric boundary
via ``SQRT_2PI_I``.

Key operators: the supersymmetry operator (exterior derivative plus
interior product), whose square is the rotation generator; the covariance
Laplacian (bosonic plus fermionic second derivatives weighted by a
covariance); its heat semigroup, which is the exact Gaussian fluctuation
convolution on polynomial forms; the iterated two-argument cross
Laplacian; and block rescaling.
"""

from __future__ import annotations

import cmath
import json
import math
from fractions import Fraction

from .exact import QC, scalar_scale

#: the fixed branch of sqrt(2 pi i) scaled out of the odd operators
SQRT_2PI_I = cmath.exp(1j * math.pi / 4) * math.sqrt(2 * math.pi)


# ---------------------------------------------------------------------------
# sparse polynomial helpers (exponent tuple -> ring scalar)
# ---------------------------------------------------------------------------

def _padd_into(acc, p, factor=None):
    for e, c in p.items():
        v = c if factor is None else c * factor
        prev = acc.get(e)
        s = v if prev is None else prev + v
        if s:
            acc[e] = s
        elif prev is not None:
            del acc[e]


def _pmul(a, b):
    out = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            c = ca * cb
            prev = out.get(e)
            s = c if prev is None else prev + c
            if s:
                out[e] = s
            elif prev is not None:
                del out[e]
    return out


def _pscale(p, s):
    if not s:
        return {}
    return {e: c * s for e, c in p.items()}


def _pfrac(p, frac):
    """Scale by an exact rational, staying exact for exact rings."""
    if not frac:
        return {}
    return {e: scalar_scale(c, frac) for e, c in p.items()}


def _pdiff(p, var):
    out = {}
    for e, c in p.items():
        k = e[var]
        if k == 0:
            continue
        e2 = e[:var] + (k - 1,) + e[var + 1:]
        v = c * k
        prev = out.get(e2)
        s = v if prev is None else prev + v
        if s:
            out[e2] = s
        elif prev is not None:
            del out[e2]
    return out


def _wedge_sign(m1: int, m2: int) -> int:
    """Parity of merging two disjoint ascending generator monomials."""
    sign = 0
    b = m2
    while b:
        low = b & -b
        sign ^= (m1 >> low.bit_length()).bit_count() & 1
        b ^= low
    return -1 if sign else 1


def _mask_derivative(mask: int, bit: int):
    """Left derivative with respect to one odd generator; None if absent."""
    g = 1 << bit
    if not mask & g:
        return None
    sign = -1 if (mask & (g - 1)).bit_count() & 1 else 1
    return mask ^ g, sign


# ---------------------------------------------------------------------------
# the algebra and its forms
# ---------------------------------------------------------------------------

class FormAlgebra:
    """Forms on C^{n_sites} with optional commuting parameter symbols.

    Variable order: phi_0, phibar_0, phi_1, phibar_1, ..., then parameters.
    Odd generators use the same site-major order (psi_i at bit 2i,
    psibar_i at bit 2i+1), which fixes every sign in the package.
    """

    def __init__(self, n_sites: int, params: tuple = ()):
        self.n_sites = n_sites
        self.params = tuple(params)
        self.nvars = 2 * n_sites + len(self.params)
        self._zero_exp = (0,) * self.nvars

    # variable/bit indexing -------------------------------------------------

    def phi_var(self, i: int, bar: bool = False) -> int:
        return 2 * i + (1 if bar else 0)

    def param_var(self, name: str) -> int:
        return 2 * self.n_sites + self.params.index(name)

    def psi_bit(self, i: int, bar: bool = False) -> int:
        return 2 * i + (1 if bar else 0)

    # constructors ----------------------------------------------------------

    def zero(self) -> "Form":
        return Form(self, {})

    def const(self, c) -> "Form":
        if not c:
            return self.zero()
        return Form(self, {0: {self._zero_exp: c}})

    def monomial(self, mask: int, exps: dict, coeff) -> "Form":
        e = list(self._zero_exp)
        for var, k in exps.items():
            e[var] = k
        return Form(self, {mask: {tuple(e): coeff}})

    def phi(self, i: int, one=1) -> "Form":
        return self.monomial(0, {self.phi_var(i): 1}, one)

    def phibar(self, i: int, one=1) -> "Form":
        return self.monomial(0, {self.phi_var(i, True): 1}, one)

    def psi(self, i: int, one=1) -> "Form":
        return self.monomial(1 << self.psi_bit(i), {}, one)

    def psibar(self, i: int, one=1) -> "Form":
        return self.monomial(1 << self.psi_bit(i, True), {}, one)

    def param(self, name: str, one=1) -> "Form":
        return self.monomial(0, {self.param_var(name): 1}, one)

    def tau(self, i: int, one=1) -> "Form":
        """The local-time form phi phibar + psi psibar at site i."""
        return self.phi(i, one) * self.phibar(i, one) + self.psi(i, one) * self.psibar(i, one)

    def trio(self, i: int, one=1):
        return self.phi(i, one), self.phibar(i, one), self.tau(i, one)


class Form:
    """Sparse differential form: {grassmann mask -> polynomial dict}."""

    __slots__ = ("alg", "terms")

    def __init__(self, alg: FormAlgebra, terms: dict):
        self.alg = alg
        self.terms = terms

    # -- basic ring structure ------------------------------------------------

    def _check(self, other):
        if self.alg is not other.alg:
            raise ValueError("forms live on different algebras")

    def __add__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        self._check(other)
        out = {m: dict(p) for m, p in self.terms.items()}
        for m, p in other.terms.items():
            acc = out.setdefault(m, {})
            _padd_into(acc, p)
            if not acc:
                del out[m]
        return Form(self.alg, out)

    def __neg__(self):
        return Form(self.alg, {m: {e: -c for e, c in p.items()} for m, p in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        """Wedge product (or scalar multiple)."""
        if not isinstance(other, Form):
            return self.scale(other)
        self._check(other)
        out = {}
        for m1, p1 in self.terms.items():
            for m2, p2 in other.terms.items():
                if m1 & m2:
                    continue
                sign = _wedge_sign(m1, m2)
                prod = _pmul(p1, p2)
                if sign < 0:
                    prod = {e: -c for e, c in prod.items()}
                acc = out.setdefault(m1 | m2, {})
                _padd_into(acc, prod)
                if not acc:
                    del out[m1 | m2]
        return Form(self.alg, out)

    def __rmul__(self, other):
        return self.scale(other)

    def scale(self, s):
        if isinstance(s, Fraction):
            return Form(self.alg, {m: _pfrac(p, s) for m, p in self.terms.items() if s})
        if not s:
            return self.alg.zero()
        return Form(self.alg, {m: _pscale(p, s) for m, p in self.terms.items()})

    def scale_fraction(self, frac: Fraction):
        if not frac:
            return self.alg.zero()
        return Form(self.alg, {m: _pfrac(p, frac) for m, p in self.terms.items()})

    def __eq__(self, other):
        if isinstance(other, Form):
            return self.alg is other.alg and (self - other).is_zero()
        if other == 0:
            return self.is_zero()
        return NotImplemented

    def __hash__(self):
        raise TypeError("forms are not hashable")

    def is_zero(self) -> bool:
        return not self.terms

    def max_abs(self) -> float:
        """Largest floating-coefficient magnitude (0.0 for exact rings)."""
        top = 0.0
        for p in self.terms.values():
            for c in p.values():
                if isinstance(c, (complex, float)):
                    top = max(top, abs(c))
        return top

    def chop(self, rel_tol: float = 1e-9, scale: float = None) -> "Form":
        """Drop floating coefficients tiny relative to the largest one.

        Exact rings pass through untouched; the float path needs this after
        cancellations that are identities in exact arithmetic. ``scale``
        anchors the cut to an external magnitude.
        """
        top = self.max_abs()
        if scale is not None:
            top = max(top, scale)
        if top == 0.0:
            return self
        cut = rel_tol * top
        out = {}
        for m, p in self.terms.items():
            q = {e: c for e, c in p.items()
                 if not (isinstance(c, (complex, float)) and abs(c) < cut)}
            if q:
                out[m] = q
        return Form(self.alg, out)

    # -- structure probes ----------------------------------------------------

    def grassmann_degrees(self):
        return sorted({m.bit_count() for m in self.terms})

    def max_degree(self) -> int:
        """Maximal combined degree (polynomial plus odd generators)."""
        best = 0
        npoly = 2 * self.alg.n_sites
        for m, p in self.terms.items():
            for e in p:
                best = max(best, m.bit_count() + sum(e[:npoly]))
        return best

    def is_even(self) -> bool:
        return all(m.bit_count() % 2 == 0 for m in self.terms)

    def coefficient(self, mask: int, exps: dict):
        e = list(self.alg._zero_exp)
        for var, k in exps.items():
            e[var] = k
        return self.terms.get(mask, {}).get(tuple(e), 0)

    def poly_at(self, mask: int) -> dict:
        return dict(self.terms.get(mask, {}))

    # -- calculus ------------------------------------------------------------

    def diff_phi(self, i: int, bar: bool = False) -> "Form":
        var = self.alg.phi_var(i, bar)
        out = {}
        for m, p in self.terms.items():
            d = _pdiff(p, var)
            if d:
                out[m] = d
        return Form(self.alg, out)

    def diff_param(self, name: str) -> "Form":
        var = self.alg.param_var(name)
        out = {}
        for m, p in self.terms.items():
            d = _pdiff(p, var)
            if d:
                out[m] = d
        return Form(self.alg, out)

    def diff_psi(self, i: int, bar: bool = False) -> "Form":
        bit = self.alg.psi_bit(i, bar)
        out = {}
        for m, p in self.terms.items():
            hit = _mask_derivative(m, bit)
            if hit is None:
                continue
            m2, sign = hit
            acc = out.setdefault(m2, {})
            _padd_into(acc, p if sign > 0 else {e: -c for e, c in p.items()})
            if not acc:
                del out[m2]
        return Form(self.alg, out)

    def param_coefficient(self, name: str, power: int) -> "Form":
        """Extract the coefficient form of param^power (parameter removed)."""
        var = self.alg.param_var(name)
        out = {}
        for m, p in self.terms.items():
            sel = {}
            for e, c in p.items():
                if e[var] == power:
                    sel[e[:var] + (0,) + e[var + 1:]] = c
            if sel:
                out[m] = sel
        return Form(self.alg, out)

    def truncate_param(self, name: str, max_power: int) -> "Form":
        var = self.alg.param_var(name)
        out = {}
        for m, p in self.terms.items():
            sel = {e: c for e, c in p.items() if e[var] <= max_power}
            if sel:
                out[m] = sel
        return Form(self.alg, out)

    def substitute_params(self, values: dict) -> "Form":
        """Evaluate parameter symbols at ring scalars (kept in the same algebra)."""
        idx = {self.alg.param_var(k): v for k, v in values.items()}
        out = {}
        for m, p in self.terms.items():
            acc = out.setdefault(m, {})
            for e, c in p.items():
                for var, val in idx.items():
                    k = e[var]
                    if k:
                        c = c * val ** k
                        e = e[:var] + (0,) + e[var + 1:]
                if not c:
                    continue
                prev = acc.get(e)
                s = c if prev is None else prev + c
                if s:
                    acc[e] = s
                elif prev is not None:
                    del acc[e]
            if not acc:
                del out[m]
        return Form(self.alg, out)

    # -- charge / rotation generator ------------------------------------------

    def charge_weighted(self) -> "Form":
        """Apply the rotation generator: each monomial times minus its charge.

        Charge counts +1 for each phi and psi, -1 for each phibar and psibar;
        this equals the square of the supersymmetry operator.
        """
        alg = self.alg
        out = {}
        for m, p in self.terms.items():
            npsi = sum(1 for i in range(alg.n_sites) if m & (1 << alg.psi_bit(i)))
            npsibar = sum(1 for i in range(alg.n_sites) if m & (1 << alg.psi_bit(i, True)))
            acc = {}
            for e, c in p.items():
                q = npsi - npsibar
                for i in range(alg.n_sites):
                    q += e[alg.phi_var(i)] - e[alg.phi_var(i, True)]
                if q:
                    acc[e] = c * (-q)
            if acc:
                out[m] = acc
        return Form(self.alg, out)

    # -- serialization ---------------------------------------------------------

    def to_debug_json(self) -> str:
        """Debug dump: {hex mask: [[exponent vector, re, im], ...]}."""
        obj = {}
        for m, p in sorted(self.terms.items()):
            rows = []
            for e, c in sorted(p.items()):
                z = complex(c)
                rows.append([list(e), z.real, z.imag])
            obj[hex(m)] = rows
        return json.dumps(obj)

    def __repr__(self):
        n = sum(len(p) for p in self.terms.values())
        return f"<Form on {self.alg.n_sites} sites, {len(self.terms)} masks, {n} terms>"


# ---------------------------------------------------------------------------
# exterior calculus
# ---------------------------------------------------------------------------

def exterior_d(F: Form) -> Form:
    """Exterior derivative (branch factor scaled out): phi -> psi on coefficients."""
    alg = F.alg
    out = alg.zero()
    for i in range(alg.n_sites):
        for bar in (False, True):
            dF = F.diff_phi(i, bar)
            if dF.is_zero():
                continue
            gen = alg.psibar(i) if bar else alg.psi(i)
            out = out + gen * dF
    return out


def interior_x(F: Form) -> Form:
    """Interior product with the rotation field (branch factor scaled out).

    Antiderivation sending psi -> -phi and psibar -> +phibar.
    """
    alg = F.alg
    out = alg.zero()
    for i in range(alg.n_sites):
        for bar in (False, True):
            dF = F.diff_psi(i, bar)
            if dF.is_zero():
                continue
            gen = alg.phibar(i) if bar else alg.phi(i).scale(-1)
            out = out + gen * dF
    return out


def susy_q(F: Form) -> Form:
    """The supersymmetry operator: exterior derivative plus interior product."""
    return exterior_d(F) + interior_x(F)


def quadratic_form(alg: FormAlgebra, A) -> Form:
    """The even supersymmetric form sum phi_x A_xy phibar_y + psi_x A_xy psibar_y.

    ``A`` is indexable as A[x][y] with ring scalars.
    """
    out = alg.zero()
    for x in range(alg.n_sites):
        for y in range(alg.n_sites):
            a = A[x][y]
            if not a:
                continue
            out = out + (alg.phi(x) * alg.phibar(y)).scale(a)
            out = out + (alg.psi(x) * alg.psibar(y)).scale(a)
    return out


# ---------------------------------------------------------------------------
# covariance Laplacian, heat flow, cross Laplacian
# ---------------------------------------------------------------------------

class MatrixCov:
    """Covariance over site indices with arbitrary ring entries."""

    def __init__(self, entries):
        self.entries = entries

    def value(self, i, j):
        return self.entries[i][j]


class BlockCov:
    """Two-valued covariance on one block: on-site and off-site entries."""

    def __init__(self, on_site, off_site):
        self.on_site = on_site
        self.off_site = off_site

    def value(self, i, j):
        return self.on_site if i == j else self.off_site


class _CrossCov:
    """Covariance on a doubled site set linking only the two copies."""

    def __init__(self, base, n):
        self.base = base
        self.n = n

    def value(self, i, j):
        left_i, left_j = i < self.n, j < self.n
        if left_i == left_j:
            return 0
        return self.base.value(i % self.n, j % self.n)


def apply_laplacian(F: Form, cov) -> Form:
    """One application of the covariance Laplacian.

    sum_{x,y} C(x,y) (d/dphi_x d/dphibar_y + d/dpsi_x d/dpsibar_y), the
    fermionic derivatives being left antiderivations; on the local-time
    form tau the bosonic and fermionic contributions cancel exactly.
    """
    alg = F.alg
    n = alg.n_sites
    out = {}

    def accumulate(m, e, c):
        acc = out.get(m)
        if acc is None:
            acc = out[m] = {}
        prev = acc.get(e)
        s = c if prev is None else prev + c
        if s:
            acc[e] = s
        elif prev is not None:
            del acc[e]

    for m, p in F.terms.items():
        # bosonic part, one pass per polynomial entry
        for e, c in p.items():
            phis = [i for i in range(n) if e[2 * i]]
            if not phis:
                continue
            phibars = [j for j in range(n) if e[2 * j + 1]]
            for i in phis:
                ki = e[2 * i]
                for j in phibars:
                    g = cov.value(i, j)
                    if not g:
                        continue
                    kj = e[2 * j + 1]
                    e2 = list(e)
                    e2[2 * i] -= 1
                    e2[2 * j + 1] -= 1
                    accumulate(m, tuple(e2), c * (ki * kj) * g)
        # fermionic part: psi_i and psibar_j bits present
        psis = [i for i in range(n) if m & (1 << (2 * i))]
        if not psis:
            continue
        psibars = [j for j in range(n) if m & (1 << (2 * j + 1))]
        for i in psis:
            for j in psibars:
                g = cov.value(i, j)
                if not g:
                    continue
                m1, s1 = _mask_derivative(m, 2 * j + 1)
                hit2 = _mask_derivative(m1, 2 * i)
                if hit2 is None:
                    continue
                m2, s2 = hit2
                fac = g if s1 * s2 > 0 else -g
                for e, c in p.items():
                    accumulate(m2, e, c * fac)
    for m in [m for m, acc in out.items() if not acc]:
        del out[m]
    return Form(alg, out)


def heat_flow(F: Form, cov, t=1) -> Form:
    """exp(t * Laplacian) applied to a polynomial form (terminating series).

    ``t`` may be a ring scalar, an exact Fraction, or the name of a declared
    parameter symbol, in which case the result is polynomial in that symbol.
    """
    alg = F.alg
    t_param = isinstance(t, str)
    out = F
    term = F
    n = 0
    while True:
        term = apply_laplacian(term, cov)
        n += 1
        if term.is_zero():
            return out
        piece = term.scale_fraction(Fraction(1, math.factorial(n)))
        if t_param:
            tn = alg.monomial(0, {alg.param_var(t): n}, 1)
            piece = tn * piece
        elif isinstance(t, Fraction):
            piece = piece.scale_fraction(t ** n)
        elif t != 1:
            piece = piece.scale(t ** n)
        out = out + piece


def fluctuation_convolve(F: Form, cov) -> Form:
    """Gaussian fluctuation convolution of a polynomial form (exact heat kernel)."""
    return heat_flow(F, cov, 1)


def _embed(F: Form, big: FormAlgebra, offset: int) -> Form:
    alg = F.alg
    nv_small = alg.nvars
    var_map = [0] * nv_small
    for i in range(alg.n_sites):
        var_map[2 * i] = 2 * (i + offset)
        var_map[2 * i + 1] = 2 * (i + offset) + 1
    for k, name in enumerate(alg.params):
        var_map[2 * alg.n_sites + k] = big.param_var(name)
    out = {}
    for m, p in F.terms.items():
        m2 = 0
        b = m
        while b:
            low = b & -b
            bit = low.bit_length() - 1
            m2 |= 1 << (bit + 2 * offset)
            b ^= low
        q = {}
        for e, c in p.items():
            e2 = [0] * big.nvars
            for v, k in enumerate(e):
                if k:
                    e2[var_map[v]] = k
            q[tuple(e2)] = c
        out[m2] = q
    return Form(big, out)


def cross_laplacian(X: Form, Y: Form, cov, power: int = 1) -> Form:
    """The iterated two-argument contraction between X and Y.

    Defined through the Leibniz decomposition of the covariance Laplacian
    on a product: every application pairs one derivative on X with one on
    Y. Realized on a doubled site set whose covariance links only the two
    copies, then folded back; signs come out of the general calculus.
    """
    for j, term in cross_laplacian_series(X, Y, cov):
        if j == power:
            return term
    return X.alg.zero()


def cross_laplacian_series(X: Form, Y: Form, cov):
    """Yield (power, cross contraction) for power = 1, 2, ... until zero."""
    if X.alg is not Y.alg:
        raise ValueError("forms live on different algebras")
    alg = X.alg
    n = alg.n_sites
    big = FormAlgebra(2 * n, alg.params)
    Z = _embed(X, big, 0) * _embed(Y, big, n)
    cc = _CrossCov(cov, n)
    fold = [i % n for i in range(2 * n)]
    power = 0
    while True:
        Z = apply_laplacian(Z, cc)
        power += 1
        if Z.is_zero():
            return
        yield power, map_sites(Z, alg, fold)


def map_sites(F: Form, target: FormAlgebra, site_of, weight: Fraction = None) -> Form:
    """Push a form through a site map, optionally scaling every field leg.

    Each phi/phibar/psi/psibar at source site i becomes the corresponding
    field at target site site_of[i], multiplied by ``weight`` (exact) when
    given. Odd generators colliding under the map annihilate the term; the
    reordering parity is tracked exactly.
    """
    alg = F.alg
    out = {}
    for m, p in F.terms.items():
        # map the odd generators, in ascending source-bit order
        tgt_bits = []
        b = m
        ok = True
        while b:
            low = b & -b
            bit = low.bit_length() - 1
            i, bar = bit // 2, bit % 2
            nb = 2 * site_of[i] + bar
            if nb in tgt_bits:
                ok = False
                break
            tgt_bits.append(nb)
            b ^= low
        if not ok:
            continue
        # parity of sorting the target bit sequence
        inv = 0
        for a in range(len(tgt_bits)):
            for c in range(a + 1, len(tgt_bits)):
                if tgt_bits[a] > tgt_bits[c]:
                    inv += 1
        sign = -1 if inv & 1 else 1
        m2 = 0
        for nb in tgt_bits:
            m2 |= 1 << nb
        nlegs_odd = len(tgt_bits)
        acc = out.setdefault(m2, {})
        for e, c in p.items():
            e2 = [0] * target.nvars
            deg = nlegs_odd
            for i in range(alg.n_sites):
                for bar in (0, 1):
                    k = e[2 * i + bar]
                    if k:
                        e2[2 * site_of[i] + bar] += k
                        deg += k
            for kk, name in enumerate(alg.params):
                k = e[2 * alg.n_sites + kk]
                if k:
                    e2[target.param_var(name)] += k
            v = c if sign > 0 else -c
            if weight is not None:
                v = scalar_scale(v, weight ** deg)
            key = tuple(e2)
            prev = acc.get(key)
            s = v if prev is None else prev + v
            if s:
                acc[key] = s
            elif prev is not None:
                del acc[key]
        if not acc:
            del out[m2]
    return Form(target, out)


def scale_block(F: Form, L: int, target: FormAlgebra = None) -> Form:
    """Block rescaling: every site collapses to one site, every leg gains 1/L.

    Sends sum_y tau_y on an L^4-site block to L^2 tau and sum_y tau_y^2 to
    tau^2.
    """
    if target is None:
        target = FormAlgebra(1, F.alg.params)
    return map_sites(F, target, [0] * F.alg.n_sites, weight=Fraction(1, L))


# ---------------------------------------------------------------------------
# supersymmetric single-site structure
# ---------------------------------------------------------------------------

def collapse_to_tau(F: Form):
    """Write an even supersymmetric one-site form as f(tau); error if impossible.

    Returns the coefficient list [f_0, f_1, ...] with F = sum f_k tau^k.
    The criteria are exact: the naked and the psi-psibar coefficients must
    both be functions of phi*phibar, and the latter must be the derivative
    of the former.
    """
    alg = F.alg
    if alg.n_sites != 1:
        raise ValueError("collapse applies to one-site forms")
    if not F.is_even():
        raise ValueError("form is not even")
    for m in F.terms:
        if m not in (0, 0b11):
            raise ValueError("unexpected odd-generator content")
    npar = len(alg.params)

    def diag(poly):
        coeffs = {}
        for e, c in poly.items():
            if any(e[2 * alg.n_sites + k] for k in range(npar)):
                raise ValueError("parameters not allowed here")
            if e[0] != e[1]:
                raise ValueError("coefficient is not a function of phi*phibar")
            coeffs[e[0]] = c
        return coeffs

    a = diag(F.poly_at(0))
    b = diag(F.poly_at(0b11))
    # supersymmetry: b must equal a'
    kmax = max(list(a) + [k + 1 for k in b] + [0])
    out = []
    for k in range(kmax + 1):
        ak = a.get(k, 0)
        out.append(ak)
        want = b.get(k - 1, 0)
        lhs = ak * k
        if lhs != want and (lhs or want):
            raise ValueError("form is not supersymmetric: tau collapse failed")
    while out and not out[-1]:
        out.pop()
    return out


def poly_of_tau(alg: FormAlgebra, coeffs, site: int = 0) -> Form:
    """Build sum_k coeffs[k] tau_site^k."""
    t = alg.tau(site)
    out = alg.zero()
    power = alg.const(1)
    for k, c in enumerate(coeffs):
        if k:
            power = power * t
        if c:
            out = out + power.scale(c)
    return out


# ---------------------------------------------------------------------------
# the small-field norm
# ---------------------------------------------------------------------------

def _scalar_abs(c):
    """|c|, exact (Fraction) when the modulus is rational, else float."""
    if isinstance(c, QC):
        a2 = c.abs2()
        num = math.isqrt(a2.numerator)
        den = math.isqrt(a2.denominator)
        if num * num == a2.numerator and den * den == a2.denominator:
            return Fraction(num, den)
        return math.sqrt(float(a2))
    if isinstance(c, (int, Fraction)):
        return abs(Fraction(c))
    return abs(c)


def small_field_norm(F: Form, h):
    """Taylor-coefficient norm at phi = 0: sum over terms of |coeff| h^degree.

    ``h`` may be a Fraction for an exact value. Parameters must have been
    substituted out first.
    """
    alg = F.alg
    npoly = 2 * alg.n_sites
    total = Fraction(0) if isinstance(h, Fraction) else 0.0
    for m, p in F.terms.items():
        gdeg = m.bit_count()
        for e, c in p.items():
            if any(e[npoly:]):
                raise ValueError("substitute parameters before taking the norm")
            deg = gdeg + sum(e[:npoly])
            total = total + _scalar_abs(c) * h ** deg
    return total
