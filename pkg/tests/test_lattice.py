"""Hierarchical group arithmetic, jump law, and process constants."""

import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hierwalk.lattice import (LatticeParams, Site, ball_mass, ball_sites,
                              hier_dist, hier_norm, jump_prob, norm_level,
                              process_constants, sample_jump,
                              sample_jump_level, scale_down, shell_mass)

L = 2
N16 = 16


def test_site_canonical_trimming():
    assert Site((1, 0, 0), N16) == Site((1,), N16)
    assert Site((), N16).is_zero
    assert Site((0, 0), N16).is_zero
    with pytest.raises(ValueError):
        Site((16,), N16)


def test_site_text_round_trip():
    s = Site.from_text("3.0.1", L)
    assert s.digits == (3, 0, 1)
    assert s.to_text() == "3.0.1"
    assert Site.from_text("", L).is_zero
    assert Site.from_text("", L).to_text() == ""


def test_site_index_round_trip():
    for idx in range(0, 16 ** 3, 97):
        assert Site.from_index(idx, L).to_index() == idx


def test_hier_norm_examples():
    assert hier_norm(Site((), N16), L) == 0
    assert hier_norm(Site((3,), N16), L) == 2
    assert hier_norm(Site((0, 5), N16), L) == 4
    assert norm_level(Site((), N16)) == 0
    assert norm_level(Site((1,), N16)) == 1
    assert norm_level(Site((0, 0, 7), N16)) == 3


def test_scale_down():
    assert scale_down(Site((3, 1, 2), N16)) == Site((1, 2), N16)
    assert scale_down(Site((), N16)).is_zero
    x = Site((5, 0, 9), N16)
    for _ in range(norm_level(x)):
        x = scale_down(x)
    assert x.is_zero


def test_hier_dist_basic():
    a, b = Site((1,), N16), Site((2,), N16)
    assert hier_dist(a, a, L) == 0
    assert hier_dist(a, b, L) == 2
    assert hier_dist(a, b, L) == hier_dist(b, a, L)


def _index_tables(k):
    """Vectorized norm and group-sum tables over G_k."""
    n = N16
    size = n ** k
    idx = np.arange(size, dtype=np.int64)
    norms = np.zeros(size, dtype=np.int8)
    for d in range(k):
        norms[(idx // n ** d) % n != 0] = d + 1
    return idx, norms


def test_ultrametric_exhaustive_g3():
    # d(x, z) <= max(d(x, y), d(y, z)) for all triples reduces, by
    # translation invariance of the metric, to N(u + v) <= max(N u, N v)
    # over all pairs; checked exhaustively over G_3.
    k = 3
    n = N16
    idx, norms = _index_tables(k)
    u = idx[:, None]
    v = idx[None, :]
    total = np.zeros((len(idx), len(idx)), dtype=np.int64)
    for d in range(k):
        du = (u // n ** d) % n
        dv = (v // n ** d) % n
        total += ((du + dv) % n) * n ** d
    lhs = norms[total]
    rhs = np.maximum(norms[:, None], norms[None, :])
    assert (lhs <= rhs).all()


def test_ball_enumeration_counts():
    for k in range(3):
        sites = ball_sites(k, L)
        assert len(sites) == N16 ** k
        assert len(set(sites)) == N16 ** k
        assert all(norm_level(s) <= k for s in sites)


def test_scale_down_maps_balls_onto_balls():
    k = 2
    img = {scale_down(s) for s in ball_sites(k, L)}
    assert img == set(ball_sites(k - 1, L))


def test_process_constants_exact():
    p = process_constants(L)
    assert p.gamma_const == 1
    assert p.rate_r == Fraction(20, 21)
    assert p.jump_norm_c == Fraction(16, 5)
    # rate identity: r (1 + c) n L^-alpha equals gamma
    assert p.rate_r * (1 + p.jump_norm_c) * p.n * Fraction(L) ** -6 == p.gamma_const


@pytest.mark.parametrize("Lany", [2, 3, 5])
def test_gamma_is_one_for_any_L(Lany):
    assert process_constants(Lany).gamma_const == 1


def test_jump_law_masses_exact():
    p = process_constants(L)
    assert jump_prob(Site((), N16), p) == 0
    for k in range(1, 8):
        assert ball_mass(k, p) == 1 - Fraction(L) ** (-2 * k)
    # geometric tail: the total converges to one
    k = 1
    while float(Fraction(L) ** (-2 * k)) >= 1e-12:
        k += 1
    assert abs(1 - float(ball_mass(k, p))) < 1e-12


def test_shell_one_carries_three_quarters():
    p = process_constants(L)
    assert shell_mass(1, p) == Fraction(3, 4)


def test_sample_jump_never_returns_zero_site():
    p = process_constants(L)
    rng = random.Random(0)
    for _ in range(2000):
        s = sample_jump(rng, p, max_level=4)
        assert s is None or not s.is_zero


def test_sample_jump_levels_chi_square():
    from scipy.stats import chisquare
    p = process_constants(L)
    rng = random.Random(12345)
    kmax = 8
    counts = np.zeros(kmax + 1)
    n_draws = 10 ** 6
    for _ in range(n_draws):
        lvl = sample_jump_level(rng, p)
        counts[min(lvl, kmax)] += 1
    expected = np.array(
        [float(shell_mass(k, p)) for k in range(1, kmax)]
        + [1 - float(ball_mass(kmax - 1, p))]) * n_draws
    stat, pval = chisquare(counts[1:], expected)
    assert pval > 0.001


def test_sample_jump_uniform_within_shell():
    p = process_constants(L)
    rng = random.Random(7)
    counts = {}
    for _ in range(30000):
        s = sample_jump(rng, p, max_level=1)
        if s is None:
            continue
        counts[s] = counts.get(s, 0) + 1
    # 15 shell-1 sites, uniform
    assert len(counts) == 15
    vals = np.array(list(counts.values()), dtype=float)
    assert vals.std() / vals.mean() < 0.1


def test_degenerate_rng_reported():
    class Bad:
        def random(self):
            return 0.0

    with pytest.raises(RuntimeError):
        sample_jump_level(Bad(), process_constants(L))


@given(st.lists(st.integers(min_value=0, max_value=15), max_size=6),
       st.lists(st.integers(min_value=0, max_value=15), max_size=6))
def test_group_laws(d1, d2):
    a, b = Site(tuple(d1), N16), Site(tuple(d2), N16)
    assert a + b == b + a
    assert (a + b) - b == a
    assert a - a == Site((), N16)
