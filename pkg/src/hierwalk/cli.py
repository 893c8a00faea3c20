"""Command-line front end: reproducible batch runs over all modules.

Subcommands: free-green, rg-flow, critical-beta, predict, mc-green,
end-to-end, compare, verify. Exit codes: 0 success, 1 usage, 2 domain
error, 3 numerical failure. Every run is deterministic given (config,
seed) and echoes its configuration into the output header. A config file
of flat key=value lines may seed the options; explicit flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, asdict
from fractions import Fraction

from .exact import QC
from .flow import (BracketError, DomainError, DomainParams, FlowPoint,
                   coupling_tail_report, critical_beta, critical_trajectory,
                   in_domain, predict_green, prediction_json, run_flow)
from .freegreen import (SingularBetaError, green_csv, green_finite,
                        green_infinite, green_spectral)
from .gaussian import QuadratureError
from .lattice import Site
from .montecarlo import mc_csv, mc_end_to_end, mc_green

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class RunConfig:
    L: int = 2
    N: int = 3
    beta: str = "0.5"
    lam: str = "0.0"
    x: str = ""
    seed: int = 1
    samples: int = 100000
    order: str = "minimal"
    tol: float = 1e-12
    fmt: str = "csv"
    out: str = ""
    J: int = 100
    T: float = 50.0
    verbose: bool = False

    def header_lines(self):
        return [f"# {k}={v}" for k, v in asdict(self).items()]


def parse_complex(text: str) -> complex:
    """Parse 're' or 're,im' with exact-decimal intermediate."""
    parts = str(text).split(",")
    if len(parts) == 1:
        return complex(float(Fraction(parts[0])), 0.0)
    if len(parts) == 2:
        return complex(float(Fraction(parts[0])), float(Fraction(parts[1])))
    raise ValueError(f"cannot parse complex number from {text!r}")


def load_config(path: str) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _emit(cfg: RunConfig, text: str):
    if cfg.out:
        with open(cfg.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _headered(cfg: RunConfig, body: str) -> str:
    return "\n".join(cfg.header_lines()) + "\n" + body


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_free_green(cfg: RunConfig) -> int:
    beta = parse_complex(cfg.beta)
    x = Site.from_text(cfg.x, cfg.L)
    uf = green_finite(beta, x, cfg.N, cfg.L)
    us = green_spectral(beta, x, cfg.N, cfg.L)
    ui = green_infinite(beta, x, cfg.L, tol=cfg.tol)
    if cfg.fmt == "json":
        body = json.dumps({
            "config": asdict(cfg),
            "finite": [uf.real, uf.imag],
            "spectral": [us.real, us.imag],
            "infinite": [ui.real, ui.imag],
        }, indent=1)
    else:
        rows = [(cfg.L, cfg.N, beta, x, uf)]
        body = _headered(cfg, green_csv(rows)
                         + f"# spectral={us.real},{us.imag}\n"
                         + f"# infinite={ui.real},{ui.imag}\n")
    _emit(cfg, body)
    return EXIT_OK


def cmd_rg_flow(cfg: RunConfig) -> int:
    beta0 = parse_complex(cfg.beta)
    lam0 = parse_complex(cfg.lam)
    rep = run_flow(beta0, lam0, cfg.L, cfg.J, order=cfg.order,
                   force_past_exit=True)
    if cfg.fmt == "json":
        body = json.dumps({
            "config": asdict(cfg),
            "M": rep.M,
            "points": [[p.j, p.beta.real, p.beta.imag, p.lam.real, p.lam.imag]
                       for p in rep.points],
        }, indent=1)
    else:
        body = _headered(cfg, rep.csv())
    _emit(cfg, body)
    return EXIT_OK


def cmd_critical_beta(cfg: RunConfig) -> int:
    lam0 = parse_complex(cfg.lam)
    lam_arg = lam0 if lam0.imag else lam0.real
    history = []
    if cfg.verbose and not lam0.imag:
        # instrumented rerun: record the bracket as it tightens
        from . import flow as _flow
        orig = _flow._real_probe
        probes = []

        def probing(beta0, lam, L, J, order):
            res = orig(beta0, lam, L, J, order)
            probes.append((beta0, res[0]))
            return res

        _flow._real_probe = probing
        try:
            bc = critical_beta(lam_arg, cfg.L, tol=cfg.tol, order=cfg.order)
        finally:
            _flow._real_probe = orig
        history = probes
    else:
        bc = critical_beta(lam_arg, cfg.L, tol=cfg.tol, order=cfg.order)
    bc = complex(bc)
    if cfg.fmt == "json":
        body = json.dumps({"config": asdict(cfg),
                           "beta_c": [bc.real, bc.imag],
                           "bracket_history": history}, indent=1)
    else:
        lines = [f"beta_c_re,beta_c_im", f"{bc.real},{bc.imag}"]
        if history:
            lines.append("# bracket history (probe, side):")
            lines += [f"# {b},{s}" for b, s in history]
        body = _headered(cfg, "\n".join(lines) + "\n")
    _emit(cfg, body)
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    beta0 = parse_complex(cfg.beta)
    lam0 = parse_complex(cfg.lam)
    x = Site.from_text(cfg.x, cfg.L)
    rec = predict_green(beta0, lam0 if lam0.imag else lam0.real, x, cfg.L,
                        order=cfg.order)
    if cfg.fmt == "json":
        rec2 = json.loads(prediction_json(rec))
        rec2["config"] = asdict(cfg)
        body = json.dumps(rec2, indent=1)
    else:
        body = _headered(cfg, "x,N_x,beta_eff_re,beta_eff_im,G0_re,G0_im,rel_error_budget\n"
                         + f"{rec['x']},{rec['N_x']},{rec['beta_eff'].real},"
                         f"{rec['beta_eff'].imag},{rec['G0_value'].real},"
                         f"{rec['G0_value'].imag},{rec['rel_error_budget']}\n")
    _emit(cfg, body)
    return EXIT_OK


def cmd_mc_green(cfg: RunConfig) -> int:
    beta = parse_complex(cfg.beta)
    lam = parse_complex(cfg.lam)
    if lam.imag:
        raise DomainError("walk estimator needs real lambda >= 0")
    x = Site.from_text(cfg.x, cfg.L)
    est = mc_green(beta, lam.real, x, cfg.N, cfg.samples, seed=cfg.seed, L=cfg.L)
    if cfg.fmt == "json":
        body = json.dumps({"config": asdict(cfg),
                           "estimate": [est.mean.real, est.mean.imag],
                           "std_error": est.std_error,
                           "n_samples": est.n_samples, "seed": est.seed}, indent=1)
    else:
        body = _headered(cfg, mc_csv([(beta, lam.real, x, cfg.N, est)]))
    _emit(cfg, body)
    return EXIT_OK


def cmd_end_to_end(cfg: RunConfig) -> int:
    lam = parse_complex(cfg.lam).real
    num, den, _ = mc_end_to_end(cfg.T, lam, cfg.N, cfg.samples, seed=cfg.seed,
                                L=cfg.L)
    ratio = num.mean / den.mean if den.mean else float("nan")
    if cfg.fmt == "json":
        body = json.dumps({"config": asdict(cfg),
                           "numerator": [num.mean.real, num.std_error],
                           "denominator": [den.mean.real, den.std_error],
                           "msd_ratio": ratio.real}, indent=1)
    else:
        body = _headered(cfg, "T,lambda,N,msd_ratio,num,num_se,den,den_se\n"
                         + f"{cfg.T},{lam},{cfg.N},{ratio.real},{num.mean.real},"
                         f"{num.std_error},{den.mean.real},{den.std_error}\n")
    _emit(cfg, body)
    return EXIT_OK


def cmd_compare(cfg: RunConfig) -> int:
    beta0 = parse_complex(cfg.beta)
    lam0 = parse_complex(cfg.lam).real
    x = Site.from_text(cfg.x, cfg.L)
    rec = predict_green(beta0, lam0, x, cfg.L, order=cfg.order)
    est = mc_green(beta0, lam0, x, cfg.N, cfg.samples, seed=cfg.seed, L=cfg.L)
    pred = rec["G0_value"]
    tolerance = max(3 * est.std_error, rec["rel_error_budget"] * abs(pred))
    agree = abs(est.mean - pred) <= tolerance
    out = {"config": asdict(cfg),
           "prediction": [pred.real, pred.imag],
           "rel_error_budget": rec["rel_error_budget"],
           "mc": [est.mean.real, est.mean.imag],
           "mc_std_error": est.std_error,
           "difference": abs(est.mean - pred),
           "tolerance": tolerance,
           "agree": bool(agree)}
    _emit(cfg, json.dumps(out, indent=1) if cfg.fmt == "json"
          else _headered(cfg, "quantity,re,im\n"
                         + f"prediction,{pred.real},{pred.imag}\n"
                         + f"mc,{est.mean.real},{est.mean.imag}\n"
                         + f"# difference={abs(est.mean - pred)} tolerance={tolerance} agree={agree}\n"))
    return EXIT_OK if agree else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# verification suites
# ---------------------------------------------------------------------------

def _suite_susy(cfg):
    import random
    from .exact import QC
    from .forms import (FormAlgebra, exterior_d, interior_x, quadratic_form,
                        susy_q)
    from .gaussian import berezin_integral, fermion_expansion, form_to_smooth
    import numpy as np
    rng = random.Random(cfg.seed)
    checks = []
    alg = FormAlgebra(2)
    ok_d2 = ok_ix2 = ok_lie = True
    for _ in range(25):
        F = _random_form(alg, rng)
        ok_d2 &= exterior_d(exterior_d(F)).is_zero()
        ok_ix2 &= interior_x(interior_x(F)).is_zero()
        ok_lie &= (susy_q(susy_q(F)) - F.charge_weighted()).is_zero()
    checks.append(("d^2 = 0", ok_d2, "25 random forms, exact"))
    checks.append(("i_X^2 = 0", ok_ix2, "25 random forms, exact"))
    checks.append(("Q^2 = rotation generator", ok_lie, "25 random forms, exact"))
    ok_q = True
    for _ in range(5):
        A = [[QC(rng.randint(1, 4), rng.randint(-2, 2)) for _ in range(2)]
             for _ in range(2)]
        ok_q &= susy_q(quadratic_form(alg, A)).is_zero()
    checks.append(("Q(S_A) = 0", ok_q, "5 random matrices, exact"))
    A1 = np.array([[1.1 + 0.3j]])
    v = berezin_integral(form_to_smooth(fermion_expansion(FormAlgebra(1), A1)), A=A1)
    checks.append(("self-normalization", abs(v - 1) < 1e-8, f"|int - 1| = {abs(v-1):.2e}"))
    return checks


def _random_form(alg, rng, nterms=5):
    from .exact import QC
    F = alg.zero()
    gens = []
    for i in range(alg.n_sites):
        gens += [alg.phi(i, QC(1)), alg.phibar(i, QC(1)),
                 alg.psi(i, QC(1)), alg.psibar(i, QC(1))]
    for _ in range(nterms):
        term = alg.const(QC(rng.randint(-3, 3), rng.randint(-3, 3)))
        for _ in range(rng.randint(0, 4)):
            term = term * gens[rng.randrange(len(gens))]
        F = F + term
    return F


def _suite_tau(cfg):
    import numpy as np
    from .gaussian import tau_isomorphism_check
    from .montecarlo import single_site_green
    checks = []
    lhs, rhs, d = tau_isomorphism_check(
        np.array([[1.0]]),
        (lambda t: np.exp(-0.3 * t ** 2), lambda t: -0.6 * t * np.exp(-0.3 * t ** 2)))
    closed = single_site_green(1.0, 0.3)
    checks.append(("one site, quadratic weight", d < 1e-6 * abs(rhs) and abs(lhs - closed) < 1e-6 * abs(closed),
                   f"lhs-rhs = {d:.2e}, vs closed form {abs(lhs-closed):.2e}"))
    A = np.array([[2.0, -0.7], [-0.5, 1.8]])
    lhs, rhs, d = tau_isomorphism_check(A, ("fourier", (0.6, -0.3)), 0, 1)
    checks.append(("two sites, fourier family", d < 1e-8, f"diff = {d:.2e}"))
    return checks


def _suite_decomp(cfg):
    import random
    from .freegreen import gamma, green_finite, green_spectral
    rng = random.Random(cfg.seed)
    worst_dec = worst_spec = 0.0
    L = cfg.L
    for _ in range(20):
        beta = complex(rng.uniform(0.05, 1.0), rng.uniform(-0.5, 0.5))
        for idx in range(0, 30, 7):
            x = Site.from_index(idx, L)
            u = green_finite(beta, x, 4, L)
            inner = green_finite(L ** 2 * beta, Site(x.digits[1:], x.n), 3, L)
            res = abs(u - (L ** -2 * inner + gamma(beta, x, L)))
            worst_dec = max(worst_dec, res)
            worst_spec = max(worst_spec, abs(u - green_spectral(beta, x, 4, L)))
    return [("scale decomposition", worst_dec < 1e-12, f"max residual {worst_dec:.2e}"),
            ("spectral route agreement", worst_spec < 1e-12, f"max diff {worst_spec:.2e}")]


def _suite_diagrams(cfg):
    from .perturbation import verify_diagram_identities
    rep = verify_diagram_identities(QC(Fraction(1, 5), Fraction(1, 7)), cfg.L)
    return [(k, v["match"], "exact coefficient equality")
            for k, v in rep.items() if k.startswith("diagram_")]


def _suite_norms(cfg):
    import random
    from .forms import FormAlgebra, small_field_norm
    rng = random.Random(cfg.seed)
    alg = FormAlgebra(1)
    ok = True
    for _ in range(20):
        F = _random_form(alg, rng)
        G = _random_form(alg, rng)
        h = Fraction(rng.randint(1, 4), rng.randint(1, 3))
        lhs = small_field_norm(F * G, h)
        rhs = small_field_norm(F, h) * small_field_norm(G, h)
        ok &= lhs <= rhs
    return [("product submultiplicativity", ok, "20 random forms, exact")]


def _suite_convolution(cfg):
    import numpy as np
    from .gaussian import GaussianForm, convolve, partial_integral
    checks = []
    a, b = 1.2 + 0.1j, 2.0 - 0.3j
    C = convolve(GaussianForm([[a]]), GaussianForm([[b]])).A[0, 0]
    checks.append(("scalar convolution law", abs(1 / C - (1 / a + 1 / b)) < 1e-12,
                   "covariances add"))
    A = np.array([[2.0 + 0.3j, -0.4 + 0.2j], [-0.4 + 0.2j, 1.5 - 0.2j]])
    Au = partial_integral(GaussianForm(A), [0]).A
    Cfull = np.linalg.inv(A)
    checks.append(("restriction law", abs(1 / Au[0, 0] - Cfull[0, 0]) < 1e-12,
                   "kept covariance block is inverted back"))
    big = GaussianForm(np.array([[1e6]]))
    near = convolve(GaussianForm([[a]]), big).A[0, 0]
    checks.append(("sharp-limit convolution", abs(near - a) < 1e-4 * abs(a),
                   f"|C - A| = {abs(near - a):.2e}"))
    return checks


_SUITES = {
    "susy": _suite_susy,
    "tau": _suite_tau,
    "decomp": _suite_decomp,
    "diagrams": _suite_diagrams,
    "norms": _suite_norms,
    "convolution": _suite_convolution,
}


def cmd_verify(cfg: RunConfig, suite: str) -> int:
    checks = _SUITES[suite](cfg)
    report = {"suite": suite,
              "checks": [{"name": n, "pass": bool(p), "detail": d}
                         for n, p, d in checks],
              "all_pass": all(p for _, p, _ in checks)}
    _emit(cfg, json.dumps(report, indent=1) + "\n")
    return EXIT_OK if report["all_pass"] else EXIT_NUMERIC


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hierwalk",
                                 description="hierarchical self-avoiding walk RG toolkit")
    ap.add_argument("--config", help="flat key=value file; flags override")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--L", type=int)
        p.add_argument("--N", type=int)
        p.add_argument("--beta")
        p.add_argument("--lambda", dest="lam")
        p.add_argument("--x")
        p.add_argument("--seed", type=int)
        p.add_argument("--samples", type=int)
        p.add_argument("--order", choices=["minimal", "appendixc"])
        p.add_argument("--tol", type=float)
        p.add_argument("--format", dest="fmt", choices=["csv", "json"])
        p.add_argument("--out")
        p.add_argument("--J", type=int)
        p.add_argument("--T", type=float)
        p.add_argument("--verbose", action="store_true")

    for name in ("free-green", "rg-flow", "critical-beta", "predict",
                 "mc-green", "end-to-end", "compare"):
        common(sub.add_parser(name))
    vp = sub.add_parser("verify")
    vp.add_argument("suite", choices=sorted(_SUITES))
    common(vp)
    return ap


def config_from_args(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        file_values = load_config(args.config)
        for key, value in file_values.items():
            if key == "lambda":
                key = "lam"
            if key == "format":
                key = "fmt"
            if hasattr(cfg, key):
                current = getattr(cfg, key)
                cast = type(current)
                setattr(cfg, key, cast(value) if not isinstance(current, bool)
                        else value.lower() in ("1", "true", "yes"))
    for key in ("L", "N", "beta", "lam", "x", "seed", "samples", "order",
                "tol", "fmt", "out", "J", "T", "verbose"):
        v = getattr(args, key, None)
        if v is not None and v is not False:
            setattr(cfg, key, v)
    return cfg


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    cfg = config_from_args(args)
    handlers = {
        "free-green": cmd_free_green,
        "rg-flow": cmd_rg_flow,
        "critical-beta": cmd_critical_beta,
        "predict": cmd_predict,
        "mc-green": cmd_mc_green,
        "end-to-end": cmd_end_to_end,
        "compare": cmd_compare,
    }
    try:
        if args.command == "verify":
            return cmd_verify(cfg, args.suite)
        return handlers[args.command](cfg)
    except (DomainError, SingularBetaError, ValueError) as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (QuadratureError, BracketError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
