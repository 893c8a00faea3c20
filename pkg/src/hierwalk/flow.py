"""Coupling trajectories, critical shooting, and the Green's function prediction.

The step map on (beta, lambda) is the explicit second-order truncation:

    lambda' = lambda - 8 B lambda^2 / (1+beta)^2
    beta'   = L^2 [beta + 2 B lambda / (1+beta)]        (order "minimal")

with two further lambda^2 terms in beta' at order "appendixc". The unknown
nonperturbative remainders are deliberately not modeled; the flows here
are exactly these truncations.

The critical starting point beta_c(lambda_0) is the initial killing rate
whose trajectory never escapes; it is found by bisection shooting on the
unstable direction (with a run-time monotonicity assertion backing the
bracket), and the critical trajectory itself is recomputed stably by a
forward-lambda / backward-beta relaxation sweep, since forward iteration
from any floating approximation of beta_c leaves the stable manifold
after a few dozen steps.

The observable pipeline propagates the two-point insertion's coefficients
(b0, b1, b2) with the transfer matrices of the perturbation engine and
ends with the one-block volume integration; at zero coupling it telescopes
to the exact finite-volume potential. The headline prediction evaluates
the free infinite-volume Green's function at the effective killing rate
L^(-2N) (beta_N - beta_c_N) with relative error budget |lambda_N|.
"""

from __future__ import annotations

import cmath
import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

from .freegreen import SingularBetaError, gamma, green_finite, green_infinite
from .lattice import Site, norm_level, process_constants
from .perturbation import fluct_block_cov, observable_step_matrix
from .forms import BlockCov

_BETA_HUGE = 1e100


class DomainError(ValueError):
    """Arguments outside the analyticity domain of the construction."""


class BracketError(RuntimeError):
    """The shooting bracket lost monotonicity; never silently patched."""


@dataclass(frozen=True)
class FlowPoint:
    j: int
    beta: complex
    lam: complex


@dataclass(frozen=True)
class DomainParams:
    """Sector half-angles and radii for the analyticity domains.

    The fattened sector angle is b_beta + b_lambda/4 + epsilon; the margin
    must keep every rotated coupling inside the right half plane, which is
    the constraint 2(b_beta+eps) + (3/2)(b_lambda+eps) < (3/2) pi.
    """

    b_beta: float = 5 * math.pi / 8
    b_lambda: float = math.pi / 8
    delta: float = 0.03
    delta_bar: float = 0.06
    epsilon: float = math.pi / 64
    rho: float = 0.5

    def __post_init__(self):
        lhs = 2 * (self.b_beta + self.epsilon) + 1.5 * (self.b_lambda + self.epsilon)
        if not lhs < 1.5 * math.pi:
            raise ValueError("sector margins violate the rotation constraint")

    @property
    def b_beta_bar(self):
        return self.b_beta + self.b_lambda / 4 + self.epsilon

    @property
    def h_theta(self):
        return self.b_beta + self.b_lambda / 4 + 9 * self.epsilon / 8 - math.pi / 2


def big_b(L: int) -> float:
    return 1.0 - L ** -4


def _b3_shell(L: int) -> float:
    n = L ** 4
    return big_b(L) ** 3 + (n - 1) * (-1.0 / n) ** 3


def flow_step(p: FlowPoint, L: int, order: str = "minimal",
              cov_scalar: complex = None) -> FlowPoint:
    """One step of the truncated recursion.

    ``cov_scalar`` replaces 1/(1+beta) wherever the covariance enters; the
    default binds it to beta. With it explicit, the step commutes exactly
    with (beta, lambda, scalar) -> (beta e^{i th}, lambda e^{2i th},
    scalar e^{-i th}).
    """
    beta, lam = complex(p.beta), complex(p.lam)
    if abs(beta) > _BETA_HUGE and cov_scalar is None:
        # corrections are below 1e-100 relative; componentwise scaling keeps
        # the sector direction even past float overflow (inf * 0j is nan)
        big = complex(L ** 2 * beta.real, L ** 2 * beta.imag)
        return FlowPoint(p.j + 1, big, lam)
    if cov_scalar is None:
        denom = 1 + beta
        if denom == 0:
            raise SingularBetaError("beta = -1 is a pole of the step map")
        s = 1 / denom
    else:
        s = complex(cov_scalar)
    B = big_b(L)
    lam_next = lam - 8 * B * s * s * lam * lam
    beta_next = L ** 2 * (beta + 2 * B * s * lam)
    if order == "appendixc":
        beta_next = beta_next - 4 * L ** 2 * (B * B + _b3_shell(L)) * s ** 3 * lam * lam
    elif order != "minimal":
        raise ValueError(f"unknown order {order!r}")
    return FlowPoint(p.j + 1, beta_next, lam_next)


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

def _sector_dist(z: complex, half_angle: float) -> float:
    """Distance from z to the open sector |arg| < half_angle (its closure)."""
    if z == 0:
        return 0.0
    phi = abs(cmath.phase(z))
    if phi <= half_angle:
        return 0.0
    d = phi - half_angle
    if d >= math.pi / 2:
        return abs(z)
    return abs(z) * math.sin(d)


def _in_sector(z: complex, half_angle: float) -> bool:
    return z != 0 and abs(cmath.phase(z)) < half_angle


def in_domain(beta: complex, lam, dp: DomainParams = None, which: str = "DbarRho") -> bool:
    """Membership in the analyticity domains.

    ``which``: "D" (bare sectors), "Dbar" (fattened sectors), "DbarRho"
    (fattened beta sector plus a ball of radius rho), "Hplus"/"Hminus"
    (the two overlapping rotated half-plane sectors covering DbarRho).
    Pass lam=None to test beta alone.
    """
    dp = dp or DomainParams()
    beta = complex(beta)
    if which == "D":
        ok_beta = _in_sector(beta, dp.b_beta)
        lam_angle, lam_radius = dp.b_lambda, dp.delta
    elif which == "Dbar":
        ok_beta = _in_sector(beta, dp.b_beta_bar)
        lam_angle, lam_radius = dp.b_lambda + dp.epsilon, dp.delta_bar
    elif which == "DbarRho":
        ok_beta = _sector_dist(beta, dp.b_beta_bar) < dp.rho
        lam_angle, lam_radius = dp.b_lambda + dp.epsilon, dp.delta_bar
    elif which in ("Hplus", "Hminus"):
        th = dp.h_theta if which == "Hplus" else -dp.h_theta
        rotated = beta * cmath.exp(-1j * th)
        ok_beta = _sector_dist(rotated, math.pi / 2 - dp.epsilon / 8) < 0.5
        lam_angle, lam_radius = dp.b_lambda + dp.epsilon, dp.delta_bar
    else:
        raise ValueError(f"unknown domain selector {which!r}")
    if lam is None:
        return ok_beta
    lam = complex(lam)
    ok_lam = 0 < abs(lam) < lam_radius and abs(cmath.phase(lam)) < lam_angle
    return ok_beta and ok_lam


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryReport:
    points: list
    M: int = None  # first exit index; None means no exit observed
    beta_hat: list = field(default_factory=list)
    beta_eff: list = field(default_factory=list)

    def csv(self, dp: DomainParams = None) -> str:
        dp = dp or DomainParams()
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["j", "beta_re", "beta_im", "lambda_re", "lambda_im",
                    "beta_hat_re", "beta_hat_im", "in_domain"])
        for k, p in enumerate(self.points):
            lam = None if p.lam == 0 else p.lam
            ind = in_domain(p.beta, lam, dp, "DbarRho")
            bh = self.beta_hat[k] if k < len(self.beta_hat) else None
            w.writerow([p.j, p.beta.real, p.beta.imag, p.lam.real, p.lam.imag,
                        "" if bh is None else bh.real,
                        "" if bh is None else bh.imag,
                        int(ind)])
        return buf.getvalue()


def run_flow(beta0: complex, lam0: complex, L: int, J_max: int,
             dp: DomainParams = None, order: str = "minimal",
             force_past_exit: bool = False, critical=None) -> TrajectoryReport:
    """Iterate the step map, recording the first domain-exit index.

    The membership test is against the rho-fattened domain; lambda = 0 is
    only checked on the beta side (the free flow has no coupling sector to
    sit in). With ``critical`` (a trajectory of FlowPoints) given, the
    deviations beta_hat_j and the effective rates L^-2j beta_hat_j are
    recorded alongside.
    """
    dp = dp or DomainParams()
    p = FlowPoint(0, complex(beta0), complex(lam0))
    points = [p]
    M = None
    for _ in range(J_max):
        lam_arg = None if p.lam == 0 else p.lam
        if M is None and not in_domain(p.beta, lam_arg, dp, "DbarRho"):
            M = p.j
            if not force_past_exit:
                break
        p = flow_step(p, L, order)
        points.append(p)
    else:
        lam_arg = None if p.lam == 0 else p.lam
        if M is None and not in_domain(p.beta, lam_arg, dp, "DbarRho"):
            M = p.j
    rep = TrajectoryReport(points=points, M=M)
    if critical is not None:
        for k, q in enumerate(points):
            if k >= len(critical):
                break
            bh = q.beta - critical[k].beta
            rep.beta_hat.append(bh)
            rep.beta_eff.append(L ** (-2 * k) * bh)
    return rep


# ---------------------------------------------------------------------------
# critical shooting
# ---------------------------------------------------------------------------

_EXIT_HIGH = 1.0
_EXIT_LOW = -0.45


def _real_probe(beta0: float, lam0: float, L: int, J: int, order: str):
    """Run a real trajectory until it commits to a side; (sign, betas)."""
    p = FlowPoint(0, beta0, lam0)
    betas = [beta0]
    for _ in range(J):
        if p.beta.real > _EXIT_HIGH:
            return 1, betas
        if p.beta.real < _EXIT_LOW:
            return -1, betas
        p = flow_step(p, L, order)
        betas.append(p.beta.real)
    return (1 if p.beta.real > 0 else -1), betas


def _assert_ordered(lo_betas, hi_betas):
    for a, b in zip(lo_betas, hi_betas):
        if a > b + 1e-15:
            raise BracketError("shooting trajectories crossed: the step map "
                               "is not monotone on this bracket")


def critical_beta(lam0, L: int, J: int = 400, tol: float = 1e-14,
                  order: str = "minimal"):
    """Initial killing rate whose trajectory stays on the stable side.

    Real lam0: bisection on the unstable direction, returning the upper
    bracket endpoint (its trajectory drifts to the harmless positive side,
    so it remains inside the fattened domain at every step). Monotonicity
    of the endpoint trajectories is asserted on every refinement. Complex
    lam0: secant continuation seeded from the real solution at |lam0|.
    """
    if isinstance(lam0, complex) and lam0.imag != 0:
        return _critical_beta_complex(lam0, L, J, tol, order)
    lam0 = float(lam0 if not isinstance(lam0, complex) else lam0.real)
    if lam0 == 0:
        return 0.0
    if lam0 < 0:
        raise DomainError("bisection path needs a positive real coupling")
    B = big_b(L)
    lo, hi = -8 * B * lam0, 8 * B * lam0
    sign_lo, lo_betas = _real_probe(lo, lam0, L, J, order)
    while sign_lo != -1:
        lo *= 2
        if lo < -0.9:
            raise BracketError("failed to bracket from below")
        sign_lo, lo_betas = _real_probe(lo, lam0, L, J, order)
    sign_hi, hi_betas = _real_probe(hi, lam0, L, J, order)
    while sign_hi != 1:
        hi *= 2
        if hi > 1.0:
            raise BracketError("failed to bracket from above")
        sign_hi, hi_betas = _real_probe(hi, lam0, L, J, order)
    _assert_ordered(lo_betas, hi_betas)
    while hi - lo > tol * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        sign_mid, mid_betas = _real_probe(mid, lam0, L, J, order)
        _assert_ordered(lo_betas, mid_betas)
        _assert_ordered(mid_betas, hi_betas)
        if sign_mid == 1:
            hi, hi_betas = mid, mid_betas
        else:
            lo, lo_betas = mid, mid_betas
    return hi


def _renormalized_residual(beta0: complex, lam0: complex, L: int, J: int,
                           order: str) -> complex:
    p = FlowPoint(0, beta0, lam0)
    for _ in range(J):
        if abs(p.beta) > 1.0:
            break
        p = flow_step(p, L, order)
    return p.beta * L ** (-2 * p.j)


def _critical_beta_complex(lam0: complex, L: int, J: int, tol: float,
                           order: str) -> complex:
    seed = critical_beta(abs(lam0), L, J, tol, order)
    # leading order beta_c is linear in lambda; rotate the seed accordingly
    z0 = seed * lam0 / abs(lam0)
    z1 = z0 * (1 + 1e-3) + 1e-12
    f0 = _renormalized_residual(z0, lam0, L, J, order)
    for _ in range(80):
        f1 = _renormalized_residual(z1, lam0, L, J, order)
        if f1 == f0:
            break
        z2 = z1 - f1 * (z1 - z0) / (f1 - f0)
        z0, f0, z1 = z1, f1, z2
        if abs(z1 - z0) < tol * max(1.0, abs(z1)):
            break
    return z1


def critical_trajectory(lam0: float, L: int, J: int, order: str = "minimal",
                        sweeps: int = 40, pad: int = 48):
    """The critical trajectory itself, stable to arbitrary depth.

    Forward iteration from any floating beta_c leaves the stable manifold
    after ~50 steps, so the trajectory is computed by relaxation: the
    coupling is swept forward, the killing rate backward (the backward map
    contracts deviations by L^-2 per step), until the pair is a fixed
    point of the combined sweep. The tail pad absorbs the arbitrary
    boundary seed.
    """
    if lam0 <= 0:
        return [FlowPoint(j, 0.0, 0.0) for j in range(J + 1)]
    B = big_b(L)
    extra = 4 * L ** 2 * (B * B + _b3_shell(L)) if order == "appendixc" else 0.0
    total = J + pad
    lam = [float(lam0)] + [0.0] * total
    beta = [0.0] * (total + 1)
    for _ in range(sweeps):
        # forward sweep of the coupling at the current killing rates
        for j in range(total):
            s = 1.0 / (1.0 + beta[j])
            lam[j + 1] = lam[j] - 8 * B * s * s * lam[j] * lam[j]
        # backward sweep of the killing rate; tail seeded at the slaved value
        b = -2 * B * lam[total] * L ** 2 / (L ** 2 - 1)
        moved = 0.0
        for j in range(total, -1, -1):
            if j < total:
                target = beta[j + 1]
                b = beta[j]
                for _ in range(60):
                    s = 1.0 / (1.0 + b)
                    f = L ** 2 * (b + 2 * B * lam[j] * s) - extra * s ** 3 * lam[j] ** 2 - target
                    fp = L ** 2 * (1 - 2 * B * lam[j] * s * s) + 3 * extra * s ** 4 * lam[j] ** 2
                    step = f / fp
                    b -= step
                    if abs(step) < 1e-17 * max(1.0, abs(b)):
                        break
            moved = max(moved, abs(b - beta[j]))
            beta[j] = b
        if moved < 1e-16:
            break
    return [FlowPoint(j, beta[j], lam[j]) for j in range(J + 1)]


def coupling_tail_report(points, L: int, j_lo: int = None, j_hi: int = None) -> dict:
    """sup over a tail window of |8 B j lambda_j - 1| (the running-coupling law)."""
    B = big_b(L)
    j_hi = j_hi if j_hi is not None else len(points) - 1
    j_lo = j_lo if j_lo is not None else j_hi
    worst, arg = 0.0, None
    for p in points[j_lo:j_hi + 1]:
        if p.j == 0:
            continue
        dev = abs(8 * B * p.j * p.lam - 1)
        if dev >= worst:
            worst, arg = dev, p.j
    return {"sup_dev": worst, "at_j": arg, "window": (j_lo, j_hi)}


# ---------------------------------------------------------------------------
# the observable pipeline
# ---------------------------------------------------------------------------

@dataclass
class ObservableState:
    b0: complex
    b1: complex
    b2: complex
    x: Site
    j: int
    a_j: complex = 0j


@lru_cache(maxsize=4096)
def _transfer_matrix(beta: complex, lam: complex, L: int, pair_site: int,
                     cov_pair) -> tuple:
    cov = BlockCov(*cov_pair) if cov_pair is not None else None
    rows = observable_step_matrix(beta, lam, L, pair_site=pair_site, cov=cov)
    return tuple(tuple(r) for r in rows)


def _volume_cov_pair(beta: complex, L: int):
    """One-block potential values: fluctuation covariance plus the zero mode."""
    r = float(process_constants(L).rate_r)
    z = L ** -2 / (r + L ** 2 * beta)
    c = fluct_block_cov(complex(beta), L)
    return (c.on_site + z, c.off_site + z)


def observable_flow(x: Site, traj, L: int, N: int = None) -> ObservableState:
    """Propagate the two-point insertion along a trajectory to volume G_N.

    Below the coalescence scale the coefficient of the insertion scales by
    exactly L^-2 per step; from the coalescence step on, the perturbation
    engine's transfer matrices apply, with the off-site covariance value at
    the step where the insertion points first share a block, and the final
    step integrates the full one-block potential. The running sum a_j
    accumulates L^-2j Gamma(beta_j, x scaled j times); the final b0 is the
    Green's function value.
    """
    points = traj.points if isinstance(traj, TrajectoryReport) else traj
    if N is None:
        N = len(points) - 1
    Nx = norm_level(x)
    if N < max(Nx, 1) or len(points) < N + 1:
        raise ValueError("trajectory too short for the requested volume")
    b0, b1, b2 = 0j, 1 + 0j, 0j
    a = 0j
    for j in range(N):
        beta_j, lam_j = complex(points[j].beta), complex(points[j].lam)
        if j < Nx - 1:
            b1 *= L ** -2
            continue
        pair = 1 if (j == Nx - 1 and Nx >= 1) else 0
        cov_pair = _volume_cov_pair(beta_j, L) if j == N - 1 else None
        M = _transfer_matrix(beta_j, lam_j, L, pair, cov_pair)
        b0, b1, b2 = (M[0][0] * b0 + M[0][1] * b1 + M[0][2] * b2,
                      M[1][0] * b0 + M[1][1] * b1 + M[1][2] * b2,
                      M[2][0] * b0 + M[2][1] * b1 + M[2][2] * b2)
        level_xj = max(Nx - j, 0)
        if level_xj <= 1:
            a += L ** (-2 * j) * gamma(beta_j, Site((1,) * level_xj, L ** 4), L)
    return ObservableState(b0=b0, b1=b1, b2=b2, x=x, j=N, a_j=a)


# ---------------------------------------------------------------------------
# the prediction
# ---------------------------------------------------------------------------

def predict_green(beta0: complex, lam0: complex, x: Site, L: int,
                  dp: DomainParams = None, order: str = "minimal",
                  beta_c: complex = None) -> dict:
    """Green's function prediction: the free value at the effective rate.

    Runs the trajectory and the critical trajectory to the coalescence
    scale N(x), forms beta_eff = L^-2N (beta_N - beta_c_N), and evaluates
    the infinite-volume free Green's function there. The relative error
    budget is |lambda_N| (the prefactor of the uncontrolled remainder).
    """
    dp = dp or DomainParams()
    Nx = norm_level(x)
    if lam0 == 0:
        beta_c = 0.0 if beta_c is None else beta_c
    elif not in_domain(1.0, lam0, dp, "D"):
        raise DomainError("coupling outside its sector")
    if beta_c is None:
        beta_c = critical_beta(lam0, L, order=order)
    if lam0 != 0 and not in_domain(complex(beta0) - complex(beta_c), None, dp, "D"):
        raise DomainError("killing rate outside the shifted sector")
    traj = run_flow(beta0, lam0, L, max(Nx, 1), dp, order, force_past_exit=True)
    ctraj = run_flow(beta_c, lam0, L, max(Nx, 1), dp, order, force_past_exit=True)
    beta_N = traj.points[Nx].beta
    beta_c_N = ctraj.points[Nx].beta
    lam_N = traj.points[Nx].lam
    beta_eff = L ** (-2 * Nx) * (beta_N - beta_c_N)
    value = green_infinite(beta_eff, x, L)
    return {
        "x": x.to_text(),
        "N_x": Nx,
        "beta_eff": beta_eff,
        "lambda_Nx": lam_N,
        "G0_value": value,
        "rel_error_budget": abs(lam_N),
    }


def prediction_json(rec: dict) -> str:
    out = dict(rec)
    for key in ("beta_eff", "lambda_Nx", "G0_value"):
        z = complex(out[key])
        out[key] = [z.real, z.imag]
    return json.dumps(out)
