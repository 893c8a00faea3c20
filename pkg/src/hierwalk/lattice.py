"""The four dimensional hierarchical lattice.

Sites are elements of the direct sum of countably many copies of Z_n with
n = L^4: a site is a finite digit vector, least significant digit first.
Balls G_k (all sites whose digits vanish from position k on) are subgroups
of size n^k, the metric is ultrametric, and the walk's jump law is the
heavy-tailed q(x) = c |x|^-alpha with alpha = 6, normalized to total mass
one over the infinite lattice.

All constants (gamma, the jump rate r, the normalization c, shell masses)
are exact rationals for integer L; floating point enters only in sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction


def _trim(digits):
    d = list(digits)
    while d and d[-1] == 0:
        d.pop()
    return tuple(d)


@dataclass(frozen=True)
class Site:
    """A lattice site: digit vector in [0, n), least significant first.

    Trailing zeros are trimmed so equality is structural; the zero site has
    an empty digit tuple.
    """

    digits: tuple = ()
    n: int = 16

    def __post_init__(self):
        object.__setattr__(self, "digits", _trim(self.digits))
        for d in self.digits:
            if not 0 <= d < self.n:
                raise ValueError(f"digit {d} out of range [0, {self.n})")

    @property
    def is_zero(self):
        return not self.digits

    def __add__(self, other: "Site") -> "Site":
        if self.n != other.n:
            raise ValueError("sites from different lattices")
        k = max(len(self.digits), len(other.digits))
        a = list(self.digits) + [0] * (k - len(self.digits))
        b = list(other.digits) + [0] * (k - len(other.digits))
        return Site(tuple((x + y) % self.n for x, y in zip(a, b)), self.n)

    def __neg__(self) -> "Site":
        return Site(tuple((-d) % self.n for d in self.digits), self.n)

    def __sub__(self, other: "Site") -> "Site":
        return self + (-other)

    def to_text(self) -> str:
        """Dot-separated digits, least significant first; '' is the zero site."""
        return ".".join(str(d) for d in self.digits)

    @staticmethod
    def from_text(text: str, L: int) -> "Site":
        n = L ** 4
        text = text.strip()
        if not text:
            return Site((), n)
        return Site(tuple(int(p) for p in text.split(".")), n)

    @staticmethod
    def from_index(index: int, L: int) -> "Site":
        """Site from its base-n integer encoding (digit i = i-th base-n digit)."""
        n = L ** 4
        digits = []
        while index:
            digits.append(index % n)
            index //= n
        return Site(tuple(digits), n)

    def to_index(self) -> int:
        idx = 0
        for d in reversed(self.digits):
            idx = idx * self.n + d
        return idx


@dataclass(frozen=True)
class LatticeParams:
    """Scale factor and the derived process constants.

    gamma_const = (1 - L^-2) / (1 - L^(4-alpha)) equals 1 at alpha = 6; the
    jump rate r makes the infinite volume potential at zero killing exactly
    |x|^-2; jump_norm_c normalizes the jump law to total mass one.
    """

    L: int
    alpha: int = 6
    d: int = 4
    n: int = field(init=False)
    gamma_const: Fraction = field(init=False)
    rate_r: Fraction = field(init=False)
    jump_norm_c: Fraction = field(init=False)

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("L must be an integer >= 2")
        L, a = Fraction(self.L), self.alpha
        object.__setattr__(self, "n", self.L ** self.d)
        gamma = (1 - L ** -2) / (1 - L ** (self.d - a))
        r = gamma * (1 - L ** (2 - a)) / (1 - L ** -a)
        # total mass: sum_k c (1 - L^-d) L^(d-a)k over k >= 1 equals 1
        ratio = L ** (self.d - a)
        c = (1 - ratio) / ((1 - L ** -self.d) * ratio)
        object.__setattr__(self, "gamma_const", gamma)
        object.__setattr__(self, "rate_r", r)
        object.__setattr__(self, "jump_norm_c", c)


def process_constants(L: int, alpha: int = 6) -> LatticeParams:
    """Exact process constants for scale factor L (alpha kept symbolic-able)."""
    return LatticeParams(L=L, alpha=alpha)


def norm_level(x: Site) -> int:
    """k such that |x| = L^k; 0 for the zero site."""
    return len(x.digits)


def hier_norm(x: Site, L: int):
    """Hierarchical norm: 0 at the origin, else L^k for x in G_k \\ G_{k-1}."""
    k = norm_level(x)
    return 0 if k == 0 else L ** k


def scale_down(x: Site) -> Site:
    """Drop digit 0: the canonical projection identifying each L-ball to a point."""
    return Site(x.digits[1:], x.n)


def hier_dist(x: Site, y: Site, L: int):
    """Group metric |x - y|; ultrametric."""
    return hier_norm(x - y, L)


def ball_sites(k: int, L: int):
    """All sites of G_k (n^k of them), as Site objects."""
    n = L ** 4
    return [Site.from_index(i, L) for i in range(n ** k)]


def shell_mass(k: int, params: LatticeParams) -> Fraction:
    """Exact jump-law mass of the shell G_k \\ G_{k-1}, k >= 1."""
    if k < 1:
        raise ValueError("shells are indexed from 1")
    L = Fraction(params.L)
    return params.jump_norm_c * (1 - L ** -params.d) * L ** ((params.d - params.alpha) * k)


def ball_mass(k: int, params: LatticeParams) -> Fraction:
    """Exact jump-law mass of G_k: 1 - n^k L^(-alpha k) (= 1 - L^-2k at alpha=6)."""
    return sum((shell_mass(j, params) for j in range(1, k + 1)), Fraction(0))


def jump_prob(x: Site, params: LatticeParams) -> Fraction:
    """Single-site jump probability q(x) = c |x|^-alpha, q(0) = 0. Exact."""
    k = norm_level(x)
    if k == 0:
        return Fraction(0)
    return params.jump_norm_c * Fraction(params.L) ** (-params.alpha * k)


def sample_jump_level(rng, params: LatticeParams) -> int:
    """Shell level of a jump under the infinite-lattice law.

    P(level > k) = L^(-2k) at alpha = 6 (geometric in the scale index).
    """
    import math

    u = rng.random()
    if u <= 0.0:
        raise RuntimeError("degenerate rng stream: uniform draw returned 0")
    tail = float(params.L) ** (params.d - params.alpha)  # mass ratio per level
    return int(math.floor(math.log(u) / math.log(tail))) + 1


def sample_jump(rng, params: LatticeParams, max_level: int):
    """Draw a jump displacement; None if it lands beyond G_max_level.

    Two-stage: shell level proportional to shell mass, then uniform within
    the shell (top digit uniform in [1, n), lower digits uniform in [0, n)).
    Never returns the zero site.
    """
    level = sample_jump_level(rng, params)
    if level > max_level:
        return None
    n = params.n
    digits = [rng.randrange(n) for _ in range(level - 1)]
    digits.append(rng.randrange(1, n))
    return Site(tuple(digits), n)
