"""Continuous-time hierarchical walk simulator and Green's function estimators.

The walk holds at each site an exponential time at the process rate, then
jumps by a displacement drawn from the heavy-tailed law; a displacement
whose shell level exceeds the volume exponent kills the path (absorbing
boundary realized on the infinite-lattice law). Local times accumulate per
site, and the self-repulsion weight is exp(-lambda sum_y tau_y^2).

The Green's function estimator integrates exp(-beta T) times the weight
over the whole path rather than binning hitting times: on every interval
spent at the target site the integrand's exponent is an explicit
linear-quadratic function of the elapsed time, integrated by 16-point
Gauss-Legendre with one refinement split when an interval carries real
weight. Sites are packed into base-n integers inside the compiled kernels;
per-sample substreams are derived from (seed, sample index), so estimates
are reproducible bit for bit and independent of how samples are chunked
across workers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import wofz

from .lattice import LatticeParams, Site, process_constants, sample_jump

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@dataclass
class WalkPath:
    """Piecewise-constant trajectory: visited sites, holding times, death time."""

    sites: list
    hold_times: list
    alive_until: float  # exit time from the volume, or +inf if capped

    @property
    def total_time(self):
        return sum(self.hold_times)


@dataclass
class LocalTimes:
    times: dict = field(default_factory=dict)

    @staticmethod
    def from_path(path: WalkPath) -> "LocalTimes":
        lt = LocalTimes()
        for s, h in zip(path.sites, path.hold_times):
            lt.times[s] = lt.times.get(s, 0.0) + h
        return lt

    def total(self):
        return sum(self.times.values())


@dataclass
class McEstimate:
    mean: complex
    std_error: float
    n_samples: int
    seed: int


def sample_path(N: int, params: LatticeParams, rng, t_cap: float) -> WalkPath:
    """Reference-path sampler in plain Python (the kernels mirror it).

    Holding times are exponential at the process rate; consecutive sites
    differ; the path ends at the first jump out of the volume or at t_cap.
    """
    rate = float(params.rate_r)
    site = Site((), params.n)
    sites, holds = [], []
    t = 0.0
    while True:
        dt = rng.expovariate(rate)
        if t + dt >= t_cap:
            sites.append(site)
            holds.append(t_cap - t)
            return WalkPath(sites, holds, math.inf)
        sites.append(site)
        holds.append(dt)
        t += dt
        jump = sample_jump(rng, params, N)
        if jump is None:
            return WalkPath(sites, holds, t)
        site = site + jump


# ---------------------------------------------------------------------------
# compiled kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _mix_seed(seed, i):
    z = np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15) * (np.uint64(i) + np.uint64(1))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return np.uint32(z & np.uint64(0xFFFFFFFF))


@njit(cache=True)
def _site_add(a, b, n, ndig):
    res = np.int64(0)
    mul = np.int64(1)
    for _ in range(ndig):
        da = (a // mul) % n
        db = (b // mul) % n
        res += ((da + db) % n) * mul
        mul *= n
    return res


@njit(cache=True)
def _draw_jump(n, N, log_ratio):
    """(displacement index, level); level > N means the path is killed."""
    u = np.random.random()
    while u <= 0.0:
        u = np.random.random()
    level = int(math.floor(math.log(u) / log_ratio)) + 1
    if level > N:
        return np.int64(0), level
    idx = np.int64(np.random.randint(1, n))  # top digit, nonzero
    for _ in range(level - 1):
        idx = idx * n + np.int64(np.random.randint(0, n))
    return idx, level


@njit(cache=True)
def _interval_integral(beta, lam, t0, a, dt, gl_x, gl_w):
    """integral over [0, dt] of exp(-beta (t0+u) - lam ((a+u)^2 - a^2)) du."""
    half = 0.5 * dt
    acc = 0.0 + 0.0j
    for k in range(gl_x.shape[0]):
        u = half * (gl_x[k] + 1.0)
        acc += gl_w[k] * np.exp(-beta * (t0 + u) - lam * ((a + u) ** 2 - a * a))
    return acc * half


@njit(cache=True)
def _green_kernel(seed, lo, hi, n_total, n, N, beta, lam, x_idx, t_cap, rate,
                  batch_sums, batch_counts, gl_x, gl_w):
    log_ratio = -0.5 * math.log(float(n))  # log(L^-2) with n = L^4
    n_batches = batch_sums.shape[0]
    cap = 1 << 14
    visited = np.empty(cap, dtype=np.int64)
    vtimes = np.empty(cap, dtype=np.float64)
    # contributions beyond exp(-Re beta t) = 1e-20 are invisible at double
    # precision; stopping there bounds every path by ~46/Re beta
    t_stop = min(t_cap, 46.2 / beta.real) if beta.real > 0 else t_cap
    for i in range(lo, hi):
        np.random.seed(_mix_seed(seed, i))
        t = 0.0
        site = np.int64(0)
        nv = 0
        ssq = 0.0  # running sum of squared local times
        total = 0.0 + 0.0j
        while True:
            dt = np.random.exponential(1.0 / rate)
            capped = t + dt >= t_stop
            if capped:
                dt = t_stop - t
            pos = -1
            for k in range(nv):
                if visited[k] == site:
                    pos = k
                    break
            if pos < 0:
                pos = nv
                visited[pos] = site
                vtimes[pos] = 0.0
                nv += 1
            a = vtimes[pos]
            if site == x_idx:
                pref = np.exp(-lam * (ssq - a * a) + 0.0j)
                contrib = pref * _interval_integral(beta, lam, t, a, dt, gl_x, gl_w)
                mag = abs(total)
                if mag > 0.0 and abs(contrib) > 1e-3 * mag:
                    half = 0.5 * dt
                    c1 = pref * _interval_integral(beta, lam, t, a, half, gl_x, gl_w)
                    c2 = pref * _interval_integral(beta, lam, t + half, a + half,
                                                   half, gl_x, gl_w)
                    contrib = c1 + c2
                total += contrib
            ssq += (a + dt) ** 2 - a * a
            vtimes[pos] = a + dt
            t += dt
            if capped:
                break
            jump, level = _draw_jump(n, N, log_ratio)
            if level > N:
                break
            site = _site_add(site, jump, n, N)
        b = i * n_batches // n_total
        batch_sums[b] += total
        batch_counts[b] += 1


@njit(cache=True)
def _end_to_end_kernel(seed, n_samples, n, N, T, lam, rate,
                       batch_num, batch_den, batch_alive, batch_counts):
    L2 = math.sqrt(float(n))  # L^2 when n = L^4
    log_ratio = -0.5 * math.log(float(n))
    n_batches = batch_num.shape[0]
    cap = 1 << 14
    visited = np.empty(cap, dtype=np.int64)
    vtimes = np.empty(cap, dtype=np.float64)
    for i in range(n_samples):
        np.random.seed(_mix_seed(seed, i))
        t = 0.0
        site = np.int64(0)
        nv = 0
        ssq = 0.0
        alive = True
        while True:
            dt = np.random.exponential(1.0 / rate)
            if t + dt >= T:
                dt = T - t
                capped = True
            else:
                capped = False
            pos = -1
            for k in range(nv):
                if visited[k] == site:
                    pos = k
                    break
            if pos < 0:
                pos = nv
                visited[pos] = site
                vtimes[pos] = 0.0
                nv += 1
            a = vtimes[pos]
            ssq += (a + dt) ** 2 - a * a
            vtimes[pos] = a + dt
            t += dt
            if capped:
                break
            jump, level = _draw_jump(n, N, log_ratio)
            if level > N:
                alive = False
                break
            site = _site_add(site, jump, n, N)
        b = i * n_batches // n_samples
        batch_counts[b] += 1
        if alive:
            lvl = 0
            mul = np.int64(1)
            for d in range(N):
                if (site // mul) % n != 0:
                    lvl = d + 1
                mul *= n
            nrm2 = L2 ** lvl if lvl > 0 else 0.0  # |x|^2 = (L^2)^level
            w = math.exp(-lam * ssq)
            batch_num[b] += nrm2 * w
            batch_den[b] += w
            batch_alive[b] += 1


# ---------------------------------------------------------------------------
# wrappers
# ---------------------------------------------------------------------------

def _check_volume(L: int, N: int):
    if (L ** 4) ** N >= 2 ** 62:
        raise ValueError("volume too large for packed site indices")


def _batch_stats(batch_sums, batch_counts):
    means = batch_sums / batch_counts
    mean = batch_sums.sum() / batch_counts.sum()
    se = np.std(means, ddof=1) / math.sqrt(len(means))
    return mean, float(abs(se))


def mc_green(beta, lam: float, x: Site, N: int, n_samples: int, seed: int = 1,
             L: int = 2, t_cap: float = None, n_batches: int = 32,
             workers: int = 1) -> McEstimate:
    """Monte Carlo estimate of the interacting finite-volume Green's function.

    ``lam`` must be nonnegative real (the weight stays in (0, 1]);
    ``beta`` may be complex with positive real part. Identical (seed,
    workers) reruns are bit-identical; the per-sample substreams make the
    estimate statistically independent of the chunking.
    """
    if isinstance(lam, complex) or lam < 0:
        raise ValueError("the walk estimator needs lambda >= 0 real")
    beta = complex(beta)
    if t_cap is None:
        if beta.real <= 0:
            raise ValueError("provide t_cap explicitly when Re beta <= 0")
        t_cap = 1e3 / beta.real
    _check_volume(L, N)
    params = process_constants(L)
    batch_sums = np.zeros(n_batches, dtype=np.complex128)
    batch_counts = np.zeros(n_batches, dtype=np.int64)
    bounds = [(k * n_samples) // workers for k in range(workers + 1)]
    for k in range(workers):
        lo, hi = bounds[k], bounds[k + 1]
        if hi <= lo:
            continue
        bs = np.zeros(n_batches, dtype=np.complex128)
        bc = np.zeros(n_batches, dtype=np.int64)
        _green_kernel(seed, lo, hi, n_samples, params.n, N, beta, float(lam),
                      x.to_index(), float(t_cap), float(params.rate_r),
                      bs, bc, _GL_X, _GL_W)
        batch_sums += bs
        batch_counts += bc
    mean, se = _batch_stats(batch_sums, batch_counts)
    if abs(mean) > 0 and se / abs(mean) > 0.5:
        warnings.warn("variance blow-up: std_error exceeds half the estimate")
    return McEstimate(mean=mean, std_error=se, n_samples=n_samples, seed=seed)


def mc_end_to_end(T: float, lam: float, N: int, n_samples: int, seed: int = 1,
                  L: int = 2, n_batches: int = 32):
    """Importance-weighted mean-square displacement at time T.

    Returns (numerator estimate, denominator estimate, per-batch arrays);
    the ratio is the weighted second moment of the hierarchical distance.
    Paths killed before T carry zero weight. Identical seeds reproduce the
    same paths for any lambda, so paired comparisons subtract per batch.
    """
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    _check_volume(L, N)
    params = process_constants(L)
    batch_num = np.zeros(n_batches, dtype=np.float64)
    batch_den = np.zeros(n_batches, dtype=np.float64)
    batch_alive = np.zeros(n_batches, dtype=np.int64)
    batch_counts = np.zeros(n_batches, dtype=np.int64)
    _end_to_end_kernel(seed, n_samples, params.n, N, float(T), float(lam),
                       float(params.rate_r), batch_num, batch_den,
                       batch_alive, batch_counts)
    num = McEstimate(*_batch_stats(batch_num, batch_counts), n_samples, seed)
    den = McEstimate(*_batch_stats(batch_den, batch_counts), n_samples, seed)
    return num, den, {"num": batch_num, "den": batch_den,
                      "alive": batch_alive, "counts": batch_counts}


def single_site_green(beta, lam: float) -> complex:
    """The one-state Green's function: integral of exp(-beta T - lam T^2).

    Stable evaluation through the scaled complementary error function; the
    lam -> 0 limit is 1/beta. Monotone decreasing in lam for real beta.
    """
    beta = complex(beta)
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    if lam == 0:
        if beta == 0:
            raise ZeroDivisionError("divergent at beta = 0, lambda = 0")
        return 1 / beta
    z = beta / (2 * math.sqrt(lam))
    return 0.5 * math.sqrt(math.pi / lam) * complex(wofz(1j * z))


# ---------------------------------------------------------------------------
# exact free-walk oracles
# ---------------------------------------------------------------------------

def free_transition_masses(T: float, N: int, L: int = 2):
    """Exact killed-walk occupation masses by shell at time T.

    Returns [mass at the origin, mass of shell 1, ..., mass of shell N];
    the total is the survival probability. Derived from the level
    eigenvalues gamma L^-2j on the dual shells and r L^-2N at the top.
    """
    params = process_constants(L)
    n = params.n
    gam = float(params.gamma_const)
    r = float(params.rate_r)
    psi = [gam * L ** (-2 * j) for j in range(N)] + [r * L ** (-2 * N)]

    def point_mass(k):
        # mass at one site of shell k (k = 0: the origin)
        total = 0.0
        if k > 0:
            total -= math.exp(-T * psi[k - 1]) * n ** (-(k - 1)) / n
        for j in range(k, N):
            total += math.exp(-T * psi[j]) * n ** (-j) * (1 - 1 / n)
        total += math.exp(-T * psi[N]) * n ** (-N)
        return total

    out = [point_mass(0)]
    for k in range(1, N + 1):
        out.append(point_mass(k) * (n ** k - n ** (k - 1)))
    return out


def free_msd_exact(T: float, N: int, L: int = 2) -> float:
    """Exact E(|walk(T)|^2; alive) for the killed free walk."""
    masses = free_transition_masses(T, N, L)
    return sum(m * float(L) ** (2 * k) for k, m in enumerate(masses))


def free_survival_exact(T: float, N: int, L: int = 2) -> float:
    return sum(free_transition_masses(T, N, L))


def mc_csv(rows) -> str:
    """CSV rows (beta, lambda, x, N, estimate_re, estimate_im, std_error,
    n_samples, seed)."""
    import csv as _csv
    import io
    buf = io.StringIO()
    w = _csv.writer(buf)
    w.writerow(["beta", "lambda", "x", "N", "estimate_re", "estimate_im",
                "std_error", "n_samples", "seed"])
    for (beta, lam, x, N, est) in rows:
        w.writerow([beta, lam, x.to_text(), N, est.mean.real, est.mean.imag,
                    est.std_error, est.n_samples, est.seed])
    return buf.getvalue()
