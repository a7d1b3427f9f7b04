"""Command-line front end.

Subcommands: generate, solve, recover, experiment, ripcheck, klcheck,
momentcheck, fano, phase-retrieval.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 failed acceptance check (``--assert`` mode).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import baselines, lab, phase as phase_mod
from .bench import ExperimentGrid, run_grid
from .constrained import ConstrainedConfig, EtaRule, InfeasibleError, solve_constrained
from .model import (LiftedEstimate, MixedDataset, RegressorPair, load_dataset,
                    rho_metric, save_dataset)
from .regularized import (LambdaRule, NumericalFailure, RegularizedConfig,
                          solve_regularized)
from .spectral import recover_betas
from .synth import (AdversarialNoise, BoundedDesign, GaussianDesign, NoNoise,
                    StochasticNoise, gen_mixed, gen_packing_instance,
                    gen_phase_retrieval, random_pair)

_FMT = "%.17g"


class CheckFailed(Exception):
    pass


def _write_matrix(path, rows):
    lines = [",".join(_FMT % v for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_matrix(path):
    lines = Path(path).read_text().strip().splitlines()
    return np.array([[float(v) for v in ln.split(",")] for ln in lines])


def save_estimate(est: LiftedEstimate, path) -> None:
    """K (p rows) then g (one row)."""
    _write_matrix(path, list(est.K) + [est.g])


def load_estimate(path) -> LiftedEstimate:
    M = _read_matrix(path)
    p = M.shape[1]
    if M.shape[0] != p + 1:
        raise ValueError(f"estimate file must have p+1 rows of p columns, got {M.shape}")
    return LiftedEstimate(M[:p], M[p])


def save_pair(pair: RegressorPair, path) -> None:
    _write_matrix(path, [pair.beta1, pair.beta2])


def load_pair(path) -> RegressorPair:
    M = _read_matrix(path)
    if M.shape[0] != 2:
        raise ValueError("pair file must have exactly two rows")
    return RegressorPair(M[0], M[1])


def save_phase(ds, path) -> None:
    path = Path(path)
    cols = [f"x_{j + 1}" for j in range(ds.p)] + ["zmeas"]
    if ds.e is not None:
        cols.append("e")
    lines = [",".join(cols)]
    for i in range(ds.n):
        parts = [_FMT % v for v in ds.X[i]] + [_FMT % ds.zmeas[i]]
        if ds.e is not None:
            parts.append(_FMT % ds.e[i])
        lines.append(",".join(parts))
    path.write_text("\n".join(lines) + "\n")
    path.with_suffix(path.suffix + ".meta.json").write_text(
        json.dumps(ds.meta, indent=2, sort_keys=True) + "\n"
    )


def load_phase(path):
    from .synth import PhaseDataset

    path = Path(path)
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    zi = header.index("zmeas")
    p = zi
    has_e = "e" in header
    rows = [ln.split(",") for ln in lines[1:]]
    X = np.array([[float(v) for v in r[:p]] for r in rows])
    z = np.array([float(r[zi]) for r in rows])
    e = np.array([float(r[header.index("e")]) for r in rows]) if has_e else None
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return PhaseDataset(X=X, zmeas=z, e=e, meta=meta)


def _parse_noise(spec: str):
    if spec == "none":
        return NoNoise()
    kind, _, val = spec.partition(":")
    if kind == "gaussian":
        return StochasticNoise(float(val))
    if kind == "bounded":
        return StochasticNoise(float(val), distribution="bounded")
    if kind == "adversarial":
        return AdversarialNoise(float(val))
    raise ValueError(f"unknown noise spec {spec!r}")


def _parse_grid_arg(spec: str):
    # "lo:hi:k" log-spaced, or comma list
    if ":" in spec:
        lo, hi, k = spec.split(":")
        return np.geomspace(float(lo), float(hi), int(k)).tolist()
    return [float(v) for v in spec.split(",")]


def _load_config(args):
    if getattr(args, "config", None):
        return json.loads(Path(args.config).read_text())
    return {}


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    design = BoundedDesign() if args.design == "bounded" else GaussianDesign()
    if args.truth_file:
        pair = load_pair(args.truth_file)
    else:
        pair = random_pair(args.p, args.seed, gamma=args.gamma,
                           min_alpha=args.min_alpha, antipodal=args.antipodal)
    labels = "bernoulli" if args.labels == "bernoulli" else \
        tuple(int(v) for v in args.labels.split(","))
    data = gen_mixed(pair, args.n, labels=labels, design=design,
                     noise=_parse_noise(args.noise), seed=args.seed)
    save_dataset(data, args.out)
    save_pair(pair, str(args.out) + ".truth.csv")
    print(f"wrote {args.out} (n={data.n}, p={data.p}, n1={data.meta['n1']})")
    return 0


def cmd_solve(args) -> int:
    data = load_dataset(args.data)
    out = Path(args.out)
    if args.program == "constrained":
        if args.eta is not None:
            eta = args.eta
        elif args.eta_auto is not None:
            c4, e_norm, sep = (float(v) for v in args.eta_auto.split(","))
            eta = EtaRule(c4, e_norm, sep)
        else:
            raise ValueError("constrained program needs --eta or --eta-auto")
        cfg = ConstrainedConfig(eta=eta, max_iter=args.max_iter)
        est, report = solve_constrained(data, cfg)
        save_estimate(est, out)
        out.with_suffix(out.suffix + ".report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n")
    elif args.program == "regularized":
        if args.lam is not None:
            lam = args.lam
        elif args.lambda_auto is not None:
            parts = [float(v) for v in args.lambda_auto.split(",")]
            lam = LambdaRule(c5=parts[0],
                             gamma_estimate=parts[1] if len(parts) > 1 else None)
        else:
            raise ValueError("regularized program needs --lambda or --lambda-auto")
        cfg = RegularizedConfig(lam=lam, sigma2=args.sigma2, max_iter=args.max_iter)
        est, report = solve_regularized(data, cfg)
        save_estimate(est, out)
        out.with_suffix(out.suffix + ".report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n")
    elif args.program == "em":
        cfg = baselines.EmConfig(seed=args.seed, sigma2=args.sigma2,
                                 variance_mode="estimated" if args.sigma2 == 0 else "known")
        res = baselines.fit_em(data, cfg)
        save_pair(res.pair, out)
        out.with_suffix(out.suffix + ".report.json").write_text(
            json.dumps({"rounds": res.rounds}, indent=2) + "\n")
    elif args.program == "lad":
        beta = baselines.fit_blind_lad(data)
        _write_matrix(out, [beta])
    elif args.program == "oracle":
        save_pair(baselines.fit_oracle(data), out)
    else:
        raise ValueError(f"unknown program {args.program!r}")
    print(f"wrote {out}")
    return 0


def cmd_recover(args) -> int:
    est = load_estimate(args.estimate)
    pair = recover_betas(est)
    save_pair(pair, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_experiment(args) -> int:
    cfg = _load_config(args)
    if not cfg:
        raise ValueError("experiment needs --config grid.json")
    cfg.setdefault("base_seed", args.seed)
    if args.out:
        cfg["output_dir"] = args.out
    grid = ExperimentGrid(**cfg)
    results = run_grid(grid, threads=args.threads)
    n_fail = sum(r.failures for r in results)
    print(f"{len(results)} cells, {n_fail} failed trials -> {grid.output_dir}")
    return 0


def cmd_ripcheck(args) -> int:
    res = lab.rip_scan(args.design, args.p, args.n, args.rank, args.samples,
                       seed=args.seed, mode=args.mode, sigma=args.sigma)
    doc = {"design": args.design, "p": args.p, "n": args.n, "rank": args.rank,
           "samples": args.samples, "mode": args.mode,
           "delta_lower": res.delta_lower, "delta_upper": res.delta_upper,
           "ratio": res.delta_lower / res.delta_upper}
    ok = doc["ratio"] >= args.min_ratio and res.delta_lower > args.min_lower
    doc["pass"] = bool(ok)
    _emit(args.out, doc, [("value", res.values.tolist())])
    if args.check and not ok:
        raise CheckFailed(f"rip bounds {doc['delta_lower']:.4f}/{doc['delta_upper']:.4f}")
    return 0


def cmd_klcheck(args) -> int:
    rows = []
    ok = True
    for sigma in (float(s) for s in args.sigma.split(",")):
        cells = lab.kl_mixture_bound_check(
            _parse_grid_arg(args.u), _parse_grid_arg(args.v), sigma)
        for c in cells:
            rows.append((sigma, c.u, c.v, c.numeric, c.bound, int(c.holds)))
            ok = ok and c.holds
    doc = {"cells": len(rows), "pass": bool(ok)}
    _emit(args.out, doc, [("sigma,u,v,numeric,bound,holds", rows)])
    if args.check and not ok:
        raise CheckFailed("KL bound violated on the grid")
    return 0


def cmd_momentcheck(args) -> int:
    from .rng import stream as _stream

    rng_ok = 0
    rows = []
    for k in range(args.pairs):
        rng = _stream(args.seed, "pair-dirs", k)
        a = rng.standard_normal(args.p)
        b = rng.standard_normal(args.p)
        b *= np.linalg.norm(a) / np.linalg.norm(b)
        rep = lab.gaussian_moment_check(a, b, args.trials, seed=args.seed + k)
        good = rep.product_within_5se and rep.cross_holds and rep.sq_diff_holds
        rng_ok += int(good)
        rows.append((k, rep.product_empirical, rep.product_exact,
                     rep.product_stderr, int(good)))
    doc = {"pairs": args.pairs, "trials": args.trials, "passed": rng_ok,
           "pass": bool(rng_ok >= args.pairs - 2)}
    _emit(args.out, doc, [("pair,empirical,exact,stderr,ok", rows)])
    if args.check and not doc["pass"]:
        raise CheckFailed(f"moment identity held on only {rng_ok}/{args.pairs} pairs")
    return 0


def cmd_fano(args) -> int:
    fam = gen_packing_instance(args.regime, args.p, args.n, args.sigma,
                               args.kappa, seed=args.seed, c0=args.c0)
    rep = lab.fano_accounting(fam.pairs, args.sigma, args.n)
    doc = {"regime": args.regime, "members": len(fam.pairs),
           "mi_bound": rep.mi_bound, "log_m": rep.log_m,
           "separation": rep.separation,
           "predicted_lower_bound": rep.predicted_lower_bound,
           "quarter_rule_holds": rep.quarter_rule_holds,
           "error_prob_lower": rep.error_prob_lower,
           "pass": bool(rep.quarter_rule_holds)}
    _emit(args.out, doc, [])
    if args.check and not rep.quarter_rule_holds:
        raise CheckFailed(f"mutual information bound {rep.mi_bound:.4f} exceeds "
                          f"log(M)/4 = {rep.log_m / 4:.4f}")
    return 0


def cmd_phase(args) -> int:
    if args.data:
        ds = load_phase(args.data)
        truth = None
    else:
        rng_pair = random_pair(args.p, args.seed, antipodal=True)
        truth = rng_pair.beta1 * (args.norm / np.linalg.norm(rng_pair.beta1))
        noise = StochasticNoise(args.sigma) if args.sigma > 0 else NoNoise()
        ds = gen_phase_retrieval(truth, args.n, model=args.model, noise=noise,
                                 seed=args.seed)
    if args.program == "regularized":
        cfg = RegularizedConfig(
            lam=LambdaRule(c5=args.c5), sigma2=args.sigma**2)
    else:
        cfg = None
    beta_hat, report = phase_mod.solve_phase(ds, program=args.program,
                                             seed=args.seed, config=cfg)
    out = Path(args.out)
    _write_matrix(out, [beta_hat])
    doc = {"program": args.program, "model": args.model,
           "iterations": report.iterations, "stop_reason": report.stop_reason}
    if truth is not None:
        doc["sign_invariant_error"] = phase_mod.sign_invariant_error(beta_hat, truth)
        doc["signal_norm"] = float(np.linalg.norm(truth))
    out.with_suffix(out.suffix + ".report.json").write_text(
        json.dumps(doc, indent=2) + "\n")
    print(json.dumps(doc, indent=2))
    return 0


def _emit(out, summary: dict, tables) -> None:
    if out:
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        for header, rows in tables:
            csv_path = out.with_suffix(".csv")
            lines = [header]
            for row in rows:
                if isinstance(row, tuple):
                    lines.append(",".join(str(v) for v in row))
                else:
                    lines.append(str(row))
            csv_path.write_text("\n".join(lines) + "\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="mixlift",
        description="Two-component mixed linear regression via convex lifting.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, out_default=None):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--out", default=out_default)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--config", default=None, help="JSON file with options")

    g = sub.add_parser("generate", help="sample a mixed-regression dataset")
    common(g, "data.csv")
    g.add_argument("--p", type=int, default=10)
    g.add_argument("--n", type=int, default=200)
    g.add_argument("--gamma", type=float, default=2.0)
    g.add_argument("--min-alpha", type=float, default=0.5)
    g.add_argument("--antipodal", action="store_true")
    g.add_argument("--truth-file", default=None, help="pair CSV to use as truth")
    g.add_argument("--labels", default="bernoulli", help="'bernoulli' or 'n1,n2'")
    g.add_argument("--design", choices=("gaussian", "bounded"), default="gaussian")
    g.add_argument("--noise", default="none",
                   help="none | gaussian:SIGMA | bounded:SIGMA | adversarial:EPS")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run an estimator on a dataset CSV")
    common(s, "estimate.csv")
    s.add_argument("--data", required=True)
    s.add_argument("--program", required=True,
                   choices=("constrained", "regularized", "em", "lad", "oracle"))
    s.add_argument("--eta", type=float, default=None)
    s.add_argument("--eta-auto", default=None, metavar="C4,ENORM,SEP")
    s.add_argument("--lambda", dest="lam", type=float, default=None)
    s.add_argument("--lambda-auto", default=None, metavar="C5[,GAMMA]")
    s.add_argument("--sigma2", type=float, default=0.0)
    s.add_argument("--max-iter", type=int, default=5000)
    s.set_defaults(func=cmd_solve)

    r = sub.add_parser("recover", help="spectral recovery from an estimate CSV")
    common(r, "pair.csv")
    r.add_argument("--estimate", required=True)
    r.set_defaults(func=cmd_recover)

    e = sub.add_parser("experiment", help="run a sweep described by a JSON grid")
    common(e)
    e.set_defaults(func=cmd_experiment)

    rip = sub.add_parser("ripcheck", help="empirical l1 isometry scan")
    common(rip)
    rip.add_argument("--design", default="gaussian",
                     choices=("gaussian", "rademacher", "bounded"))
    rip.add_argument("--p", type=int, default=10)
    rip.add_argument("--n", type=int, default=2000)
    rip.add_argument("--rank", type=int, default=2)
    rip.add_argument("--samples", type=int, default=200)
    rip.add_argument("--mode", choices=("rip", "rip2"), default="rip")
    rip.add_argument("--sigma", type=float, default=1.0)
    rip.add_argument("--min-ratio", type=float, default=0.3)
    rip.add_argument("--min-lower", type=float, default=0.2)
    rip.add_argument("--assert", dest="check", action="store_true")
    rip.set_defaults(func=cmd_ripcheck)

    kl = sub.add_parser("klcheck", help="quadrature vs closed-form KL bound")
    common(kl)
    kl.add_argument("--u", default="0.05:2.0:20", help="grid 'lo:hi:k' or list")
    kl.add_argument("--v", default="0.05:2.0:20")
    kl.add_argument("--sigma", default="0.5,1,2")
    kl.add_argument("--assert", dest="check", action="store_true")
    kl.set_defaults(func=cmd_klcheck)

    mo = sub.add_parser("momentcheck", help="Gaussian product-moment identity")
    common(mo)
    mo.add_argument("--p", type=int, default=8)
    mo.add_argument("--pairs", type=int, default=50)
    mo.add_argument("--trials", type=int, default=1_000_000)
    mo.add_argument("--assert", dest="check", action="store_true")
    mo.set_defaults(func=cmd_momentcheck)

    fa = sub.add_parser("fano", help="mutual-information accounting for a packing")
    common(fa)
    fa.add_argument("--regime", default="medium-snr",
                    choices=("high-snr", "medium-snr", "low-snr"))
    fa.add_argument("--p", type=int, default=65)
    fa.add_argument("--n", type=int, default=4160)
    fa.add_argument("--sigma", type=float, default=1.0)
    fa.add_argument("--kappa", type=float, default=None)
    fa.add_argument("--c0", type=float, default=0.01)
    fa.add_argument("--assert", dest="check", action="store_true")
    fa.set_defaults(func=cmd_fano)

    ph = sub.add_parser("phase-retrieval", help="solve a magnitude-measurement instance")
    common(ph, "signal.csv")
    ph.add_argument("--data", default=None, help="phase CSV; omit to synthesize")
    ph.add_argument("--model", choices=("noisy-phase", "noisy-magnitude"),
                    default="noisy-phase")
    ph.add_argument("--program", choices=("constrained", "regularized"),
                    default="constrained")
    ph.add_argument("--p", type=int, default=10)
    ph.add_argument("--n", type=int, default=200)
    ph.add_argument("--norm", type=float, default=1.0)
    ph.add_argument("--sigma", type=float, default=0.0)
    ph.add_argument("--c5", type=float, default=2.0)
    ph.set_defaults(func=cmd_phase)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "command", None) == "fano" and args.kappa is None:
        # default to the bottom of the admissible window, where the
        # information bound is tightest
        m = args.p - 1
        args.kappa = math.sqrt(2.0 * args.c0) * args.sigma * (m / args.n) ** 0.25
    try:
        return args.func(args)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 4
    except (InfeasibleError, NumericalFailure, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
