"""Coupling trajectories, domains, shooting, observable pipeline, prediction."""

import cmath
import math
import random

import pytest

from hierwalk.flow import (BracketError, DomainError, DomainParams, FlowPoint,
                           TrajectoryReport, coupling_tail_report,
                           critical_beta, critical_trajectory, flow_step,
                           in_domain, observable_flow, predict_green,
                           prediction_json, run_flow)
from hierwalk.freegreen import (SingularBetaError, green_finite,
                                green_infinite)
from hierwalk.lattice import Site, ball_sites, norm_level

L = 2
B = 1 - L ** -4


def test_flow_step_values():
    p = flow_step(FlowPoint(0, 0.0, 0.01), L)
    assert p.lam == pytest.approx(0.00925)
    assert p.beta == pytest.approx(0.075)
    assert p.j == 1


def test_flow_step_free():
    p = flow_step(FlowPoint(3, 0.2 + 0.1j, 0.0), L)
    assert p.beta == pytest.approx(4 * (0.2 + 0.1j))
    assert p.lam == 0


def test_flow_step_pole():
    with pytest.raises(SingularBetaError):
        flow_step(FlowPoint(0, -1.0, 0.01), L)


def test_flow_step_orders_differ_at_second_order():
    p_min = flow_step(FlowPoint(0, 0.1, 0.01), L, "minimal")
    p_app = flow_step(FlowPoint(0, 0.1, 0.01), L, "appendixc")
    assert p_min.lam == p_app.lam
    assert p_min.beta != p_app.beta
    assert abs(p_min.beta - p_app.beta) < 50 * 0.01 ** 2


def test_rotation_covariance_50_angles():
    rng = random.Random(5)
    for _ in range(50):
        th = rng.uniform(-math.pi / 2, math.pi / 2)
        e1, e2 = cmath.exp(1j * th), cmath.exp(2j * th)
        b = complex(rng.uniform(0.05, 0.5), rng.uniform(-0.2, 0.2))
        lam = complex(rng.uniform(0.001, 0.02), rng.uniform(-0.005, 0.005))
        s = 1 / (1 + b)
        for order in ("minimal", "appendixc"):
            p0 = flow_step(FlowPoint(0, b, lam), L, order, cov_scalar=s)
            p1 = flow_step(FlowPoint(0, b * e1, lam * e2), L, order,
                           cov_scalar=s / e1)
            assert abs(p1.beta - p0.beta * e1) < 1e-12
            assert abs(p1.lam - p0.lam * e2) < 1e-12


def test_in_domain_examples():
    dp = DomainParams()
    assert in_domain(1.0, 0.001, dp, "DbarRho")
    assert in_domain(1.0, 0.001, dp, "Dbar")
    assert not in_domain(-1.0, 0.001, dp, "D")
    # just past the bare sector boundary but inside the fattened one
    eps_arg = 5 * math.pi / 8 + 0.01
    z = 0.5 * cmath.exp(1j * eps_arg)
    assert not in_domain(z, 0.001, dp, "D")
    assert in_domain(z, 0.001, dp, "Dbar")
    # lambda sector
    assert not in_domain(1.0, -0.001, dp, "D")
    assert not in_domain(1.0, 0.0, dp, "D")
    assert not in_domain(1.0, 1.0, dp, "D")  # |lambda| above delta


def test_in_domain_hplus_hminus_cover():
    dp = DomainParams()
    rng = random.Random(11)
    for _ in range(300):
        r = rng.uniform(1e-3, 3.0)
        phi = rng.uniform(-dp.b_beta_bar, dp.b_beta_bar)
        z = r * cmath.exp(1j * phi)
        if in_domain(z, None, dp, "DbarRho"):
            assert in_domain(z, None, dp, "Hplus") or in_domain(z, None, dp, "Hminus")


def test_domain_params_margin_guard():
    with pytest.raises(ValueError):
        DomainParams(b_beta=3 * math.pi / 4, b_lambda=math.pi / 2)


def test_run_flow_free_theory():
    rep = run_flow(0.01, 0.0, L, 10)
    for k, p in enumerate(rep.points):
        assert p.beta == pytest.approx(0.01 * 4 ** k)
    assert rep.M is None


def test_run_flow_exit_recorded():
    # from a negative real start the free flow exits the fattened domain
    rep = run_flow(-0.01, 0.0, L, 100)
    assert rep.M is not None
    assert abs(rep.points[rep.M].beta) >= 0.5 - 1e-9


def test_run_flow_csv():
    rep = run_flow(0.02, 0.001, L, 5)
    text = rep.csv()
    assert text.startswith("j,beta_re")
    assert len(text.strip().split("\n")) == 5 + 2


def test_critical_beta_free_limit():
    assert critical_beta(0.0, L) == 0.0


def test_critical_beta_sign_and_size():
    for lam0 in (1e-3, 1e-2):
        bc = critical_beta(lam0, L)
        assert bc < 0
        assert B * lam0 < -bc < 8 * B * lam0


def test_critical_flow_stays_in_domain():
    for lam0 in (1e-3, 1e-2):
        bc = critical_beta(lam0, L)
        rep = run_flow(bc, lam0, L, 1000)
        assert rep.M is None


def test_perturbed_starts_diverge():
    lam0 = 1e-2
    tol = 1e-14
    bc = critical_beta(lam0, L, tol=tol)
    ct = critical_trajectory(lam0, L, 1000)
    low = run_flow(bc - 10 * tol, lam0, L, 1000, force_past_exit=True)
    high = run_flow(bc + 10 * tol, lam0, L, 1000, force_past_exit=True)
    assert low.M is not None  # leaves the domain toward the pole
    sep_high = max(abs(p.beta - c.beta) for p, c in zip(high.points, ct))
    assert sep_high > 0.5  # separates from the critical trajectory
    assert high.M is None  # but stays inside the (unbounded) sector


def test_deviation_growth_rate():
    # once the deviation dominates, it doubles at rate L^2 per step
    lam0 = 1e-3
    bc = critical_beta(lam0, L)
    rep = run_flow(bc + 0.02, lam0, L, 40, force_past_exit=True)
    ct = critical_trajectory(lam0, L, 40)
    ratios = []
    for k in range(len(rep.points) - 1):
        bh0 = rep.points[k].beta - ct[k].beta
        bh1 = rep.points[k + 1].beta - ct[k + 1].beta
        if abs(bh0) > 1e3 * abs(rep.points[k].lam) and abs(bh1) < 1e200:
            ratios.append(abs(bh1 / bh0))
    assert ratios
    assert all(abs(r - L ** 2) < 0.05 * L ** 2 for r in ratios)


def test_bracket_monotonicity_guard_runs():
    # the assertion machinery is exercised on every bisection; it must not
    # fire on healthy inputs
    critical_beta(5e-3, L, tol=1e-12)


def test_critical_trajectory_matches_bisection():
    for lam0 in (1e-3, 1e-2):
        ct = critical_trajectory(lam0, L, 60)
        bc = critical_beta(lam0, L)
        assert abs(ct[0].beta - bc) < 1e-12


def test_coupling_tail_short_window():
    ct = critical_trajectory(1e-2, L, 2000)
    rep = coupling_tail_report(ct, L, j_lo=1500, j_hi=2000)
    assert rep["sup_dev"] < 0.05


def test_lambda_monotone_and_positive():
    ct = critical_trajectory(1e-2, L, 500)
    lams = [p.lam for p in ct]
    assert all(l > 0 for l in lams)
    assert all(a > b for a, b in zip(lams, lams[1:]))


def test_complex_coupling_continuation():
    lam0 = 1e-2 * cmath.exp(0.1j)
    bc = critical_beta(lam0, L)
    assert abs(bc - critical_beta(1e-2, L) * cmath.exp(0.1j)) < 2e-3
    # the residual after renormalized shooting is tiny
    rep = run_flow(bc, lam0, L, 30, force_past_exit=True)
    assert abs(rep.points[30].beta) * L ** -60 < 1e-10


# ---------------------------------------------------------------------------
# observable pipeline
# ---------------------------------------------------------------------------

def free_traj(beta0, J):
    return [FlowPoint(j, beta0 * L ** (2 * j), 0.0) for j in range(J + 1)]


def test_free_pipeline_exactness_sample():
    rng = random.Random(4)
    r = rng.uniform(0.2, 1.0)
    phi = rng.uniform(-5 * math.pi / 8 * 0.95, 5 * math.pi / 8 * 0.95)
    beta0 = r * cmath.exp(1j * phi)
    traj = free_traj(beta0, 3)
    for text in ("", "1", "0.1", "0.0.1", "3.2.1"):
        x = Site.from_text(text, L)
        st = observable_flow(x, traj, L, N=3)
        assert abs(st.b0 - green_finite(beta0, x, 3, L)) < 1e-12


def test_insertion_coefficient_scales_exactly():
    # at zero coupling b1 contracts by exactly L^-2 per step, through both
    # the pure-scaling steps and the engine steps
    traj = free_traj(0.3, 3)
    for text in ("", "0.0.1"):
        st = observable_flow(Site.from_text(text, L), traj, L, N=3)
        assert abs(st.b1 - L ** -6) < 1e-15


def test_observable_flow_too_short():
    with pytest.raises(ValueError):
        observable_flow(Site.from_text("0.0.1", L), free_traj(0.3, 1), L, N=3)


def test_a_accumulator_approximates_infinite_green():
    lam0 = 5e-3
    bc = critical_beta(lam0, L)
    beta0 = bc + 0.08
    x = Site.from_text("0.1", L)
    Nx = norm_level(x)
    traj = run_flow(beta0, lam0, L, 8, force_past_exit=True)
    ct = critical_trajectory(lam0, L, 8)
    st = observable_flow(x, traj, L, N=8)
    beta_eff = L ** (-2 * Nx) * (traj.points[Nx].beta - ct[Nx].beta)
    g0 = green_infinite(beta_eff, x, L)
    assert abs(st.a_j - g0) < 5 * lam0 * abs(g0)


def test_predict_free_theory():
    x = Site.from_text("0.1", L)
    rec = predict_green(0.17, 0.0, x, L)
    assert rec["N_x"] == 2
    assert rec["G0_value"] == pytest.approx(green_infinite(0.17, x, L))
    assert rec["rel_error_budget"] == 0


def test_predict_x_zero_uses_level_zero():
    rec = predict_green(0.3, 0.0, Site.from_text("", L), L)
    assert rec["N_x"] == 0
    assert rec["G0_value"] == pytest.approx(green_infinite(0.3, Site((), 16), L))


def test_predict_domain_violations():
    x = Site.from_text("0.1", L)
    with pytest.raises(DomainError):
        predict_green(0.3, 0.5, x, L)  # coupling above delta
    with pytest.raises(DomainError):
        predict_green(critical_beta(0.01, L) - 0.2, 0.01, x, L)


def test_predict_finite_nonzero_and_json():
    x = Site.from_text("0.1", L)
    rec = predict_green(critical_beta(0.01, L) + 0.1, 0.01, x, L)
    v = rec["G0_value"]
    assert v != 0 and abs(v) < 1
    text = prediction_json(rec)
    import json
    obj = json.loads(text)
    assert set(obj) >= {"x", "N_x", "beta_eff", "lambda_Nx", "G0_value",
                        "rel_error_budget"}
