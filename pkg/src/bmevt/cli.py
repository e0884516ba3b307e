"""bm-evt: command-line front end.

Subcommands: simulate, fit, theta, rl, var, posterior, coverage, mse,
diagnose.  Series files hold one value per line; blank lines and
anything after '#' are ignored.  Results go to stdout as JSON unless an
output path is given.  Exit codes: 0 success, 1 usage error, 2 numerical
failure.
"""

import argparse
import csv
import json
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from bmevt.bayes import (
    ChainConfig,
    ThetaPriorSpec,
    credible_interval_asymmetric,
    credible_interval_symmetric,
    rl_posterior,
    sample_posterior,
    theta_posterior,
    var_posterior,
)
from bmevt.blocks import BlockConfig, block_maxima, pseudo_observations
from bmevt.freq import (
    FitError,
    RiskQuery,
    ci_asymmetric_mc,
    ci_gamma_symmetric,
    ci_return_level_symmetric,
    ci_theta_symmetric,
    ci_var_symmetric,
    fit_gev_mle,
    fit_theta,
    return_level_point,
    var_point,
)
from bmevt.harness import ExperimentConfig, diagnose_blocks, run_coverage, run_mse_ratio
from bmevt.simulate import DgpSpec, simulate_series


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; remap to 1 and keep 0 for --help
    def exit(self, status=0, message=None):
        if message:
            self._print_message(message, sys.stderr)
        sys.exit(1 if status else 0)


def _read_series(path):
    if path == "-":
        lines = sys.stdin.read().splitlines()
    else:
        with open(path) as fh:
            lines = fh.read().splitlines()
    values = []
    for raw in lines:
        text = raw.split("#", 1)[0].strip()
        if text:
            values.append(float(text))
    if not values:
        raise ValueError(f"no data in {path!r}")
    return np.asarray(values)


def _emit(obj, out):
    text = json.dumps(obj, indent=2, default=float)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _write_rows(path, rows, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def _chain_config(args):
    return ChainConfig(iters=args.iters, burn_in=args.burn_in, thin=args.thin, seed=args.seed)


def _add_chain_flags(p):
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--burn-in", type=int, default=5000, dest="burn_in")
    p.add_argument("--thin", type=int, default=1)


def _cmd_simulate(args):
    spec = DgpSpec(model=args.model, eta=args.eta, n=args.n, marginal=args.marginal,
                   seed=args.seed, burn_in=args.burn_in)
    series, _ = simulate_series(spec)
    lines = "\n".join(repr(float(x)) for x in series) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(lines)
    else:
        sys.stdout.write(lines)
    return 0


def _fit_from_args(args):
    series = _read_series(args.input)
    maxima = block_maxima(series, BlockConfig(m=args.m, l=args.l))
    return series, maxima, fit_gev_mle(maxima, q=args.q)


def _cmd_fit(args):
    _, maxima, fit = _fit_from_args(args)
    out = {
        "gamma": fit.params.gamma,
        "mu": fit.params.mu,
        "sigma": fit.params.sigma,
        "loglik": fit.loglik,
        "k": fit.k,
        "singular_info": fit.singular_info,
    }
    if not fit.singular_info:
        lo, hi = ci_gamma_symmetric(fit, alpha=args.alpha)
        out["gamma_ci"] = [lo, hi]
    _emit(out, args.out)
    return 0


def _cmd_theta(args):
    series = _read_series(args.input)
    tfit = fit_theta(series, args.m, K=args.K)
    lo, hi = ci_theta_symmetric(tfit, alpha=args.alpha)
    _emit({
        "theta": tfit.theta_hat,
        "sigma_tilde_sq": tfit.sigma_tilde_sq,
        "var": tfit.var_hat,
        "k_tilde": tfit.k_tilde,
        "m_tilde": tfit.m_tilde,
        "ci": [lo, hi],
    }, args.out)
    return 0


def _posterior_draws_for(args, series, maxima, fit, target, query):
    chain = sample_posterior(maxima, config=_chain_config(args), fit=fit, q=args.q)
    if target == "rl":
        return chain, rl_posterior(chain, query.tau, query.m, query.m_star)
    tfit = fit_theta(series, args.m, K=args.K)
    tpost = theta_posterior(pseudo_observations(series, args.m),
                            prior=ThetaPriorSpec(atom_mass=args.theta_atom),
                            adjusted=True, theta_fit=tfit)
    return chain, var_posterior(chain, tpost, query.tau_E, query.m, seed=args.seed + 1)


def _cmd_rl(args):
    series, maxima, fit = _fit_from_args(args)
    m_star = args.m_star if args.m_star is not None else args.m
    query = RiskQuery(tau=args.tau, m=args.m, m_star=m_star, alpha=args.alpha)
    point = return_level_point(fit, args.tau, args.m, m_star)
    if args.method == "FS":
        lo, hi = ci_return_level_symmetric(fit, query)
    elif args.method == "FA":
        lo, hi = ci_asymmetric_mc(fit, query, draws=args.draws, seed=args.seed)
    else:
        _, draws = _posterior_draws_for(args, series, maxima, fit, "rl", query)
        builder = credible_interval_symmetric if args.method == "BS" else credible_interval_asymmetric
        lo, hi = builder(draws, alpha=args.alpha)
    _emit({"target": "return_level", "method": args.method, "tau": args.tau,
           "m": args.m, "m_star": m_star, "point": point, "lo": lo, "hi": hi}, args.out)
    return 0


def _cmd_var(args):
    series, maxima, fit = _fit_from_args(args)
    tfit = fit_theta(series, args.m, K=args.K)
    query = RiskQuery(tau_E=args.tau_e, m=args.m, alpha=args.alpha)
    point = var_point(fit, tfit, args.tau_e, args.m)
    if args.method == "FS":
        lo, hi = ci_var_symmetric(fit, tfit, query)
    elif args.method == "FA":
        lo, hi = ci_asymmetric_mc(fit, query, theta_fit=tfit, draws=args.draws, seed=args.seed)
    else:
        _, draws = _posterior_draws_for(args, series, maxima, fit, "eq", query)
        builder = credible_interval_symmetric if args.method == "BS" else credible_interval_asymmetric
        lo, hi = builder(draws, alpha=args.alpha)
    _emit({"target": "extreme_quantile", "method": args.method, "tau_E": args.tau_e,
           "m": args.m, "theta": tfit.theta_hat, "point": point, "lo": lo, "hi": hi}, args.out)
    return 0


def _cmd_posterior(args):
    series, maxima, fit = _fit_from_args(args)
    chain = sample_posterior(maxima, config=_chain_config(args), fit=fit, q=args.q)
    chain.to_csv(args.out)
    summary = {
        "draws": int(chain.draws.shape[0]),
        "acceptance_rate": chain.acceptance_rate,
        "ess": list(chain.ess),
        "chain_csv": args.out,
    }
    if args.theta_out:
        tfit = fit_theta(series, args.m, K=args.K)
        tpost = theta_posterior(pseudo_observations(series, args.m),
                                prior=ThetaPriorSpec(atom_mass=args.theta_atom),
                                adjusted=not args.unadjusted, theta_fit=tfit)
        tpost.to_csv(args.theta_out)
        summary["theta_csv"] = args.theta_out
        summary["theta_mean"] = tpost.mean()
        summary["theta_atom_weight"] = tpost.atom_weight
    _emit(summary, None)
    return 0


def _grid_from_toml(cfg):
    if "grid" in cfg:
        return tuple(tuple(int(v) for v in cell) for cell in cfg["grid"])
    n, m = cfg["n"], cfg["m"]
    l = cfg.get("l", 0)
    as_list = lambda v: list(v) if isinstance(v, list) else [v]
    ns, ms, ls = as_list(n), as_list(m), as_list(l)
    width = max(len(ns), len(ms), len(ls))
    pad = lambda v: v * width if len(v) == 1 else v
    ns, ms, ls = pad(ns), pad(ms), pad(ls)
    if not len(ns) == len(ms) == len(ls):
        raise ValueError("n, m, l lists must have matching lengths")
    return tuple(zip(ns, ms, ls))


def _experiment_from_toml(path):
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    mcmc_cfg = cfg.get("mcmc", {})
    mcmc = ChainConfig(
        iters=int(mcmc_cfg.get("iters", 6000)),
        burn_in=int(mcmc_cfg.get("burn_in", 1500)),
        thin=int(mcmc_cfg.get("thin", 1)),
    )
    kwargs = {
        "model": cfg["model"],
        "eta": float(cfg["eta"]),
        "marginal": cfg.get("marginal"),
        "grid": _grid_from_toml(cfg),
        "mcmc": mcmc,
    }
    optional = {
        "replications": int, "alpha": float, "methods": tuple, "targets": tuple,
        "rl_tau": float, "m_star": int, "eq_level": float, "K": int, "q": float,
        "theta_atom": float, "fa_draws": int, "truth_reps": int,
        "base_seed": int, "workers": int, "arch_burn_in": int,
    }
    for key, cast in optional.items():
        if key in cfg:
            kwargs[key] = cast(cfg[key])
    return ExperimentConfig(**kwargs)


def _report_failures(report):
    for item in report.failures:
        print(f"bm-evt: failed rep {item['rep']} (n={item['n']}, m={item['m']}): "
              f"{item['reason']}", file=sys.stderr)


def _cmd_coverage(args):
    config = _experiment_from_toml(args.config)
    report = run_coverage(config)
    report.to_csv(args.out)
    if args.mse_out:
        report.mse_to_csv(args.mse_out)
    if args.truths_out:
        _write_rows(args.truths_out, report.truths, ["n", "m", "target", "truth", "mc_se"])
    _report_failures(report)
    print(f"wrote {len(report.rows)} coverage rows to {args.out}")
    return 0


def _cmd_mse(args):
    config = _experiment_from_toml(args.config)
    report = run_mse_ratio(config)
    report.mse_to_csv(args.out)
    _report_failures(report)
    print(f"wrote {len(report.mse_rows)} MSE rows to {args.out}")
    return 0


def _cmd_diagnose(args):
    series = _read_series(args.input)
    m_range = [int(v) for v in args.m_range.split(",") if v.strip()]
    tables = diagnose_blocks(series, m_range, alpha=args.alpha, lags=args.lags, K=args.K)
    prefix = args.out_prefix
    _write_rows(f"{prefix}_stability.csv", tables["stability"],
                ["m", "k", "theta", "theta_lo", "theta_hi", "gamma", "gamma_lo", "gamma_hi"])
    _write_rows(f"{prefix}_acf.csv", tables["acf"], ["m", "lag", "acf_max", "acf_sq", "band"])
    _write_rows(f"{prefix}_qq.csv", tables["qq"], ["m", "i", "empirical", "reference"])
    print(f"wrote {prefix}_stability.csv, {prefix}_acf.csv, {prefix}_qq.csv")
    return 0


def _build_parser():
    parser = _Parser(prog="bm-evt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a series from a built-in model")
    p.add_argument("--model", required=True, choices=["armax", "clayton_markov", "arch"])
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--marginal", choices=["exponential", "powerlaw"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--burn-in", type=int, default=1000, dest="burn_in")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    def common_fit_flags(p, with_l=True):
        p.add_argument("--input", required=True)
        p.add_argument("--m", type=int, required=True)
        if with_l:
            p.add_argument("--l", type=int, default=0)
        p.add_argument("--q", type=float, default=0.5)
        p.add_argument("--alpha", type=float, default=0.05)

    p = sub.add_parser("fit", help="maximum-likelihood fit to the block maxima")
    common_fit_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("theta", help="extremal-index estimate from sliding blocks")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_theta)

    p = sub.add_parser("rl", help="return-level point estimate and interval")
    common_fit_flags(p)
    p.add_argument("--tau", type=float, default=0.9)
    p.add_argument("--m-star", type=int, dest="m_star")
    p.add_argument("--method", choices=["FS", "FA", "BS", "BA"], default="FS")
    p.add_argument("--draws", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K", type=int, default=10)
    _add_chain_flags(p)
    p.add_argument("--theta-atom", type=float, default=0.1, dest="theta_atom")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rl)

    p = sub.add_parser("var", help="extreme marginal quantile and interval")
    common_fit_flags(p)
    p.add_argument("--tau-e", type=float, required=True, dest="tau_e")
    p.add_argument("--method", choices=["FS", "FA", "BS", "BA"], default="FS")
    p.add_argument("--draws", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K", type=int, default=10)
    _add_chain_flags(p)
    p.add_argument("--theta-atom", type=float, default=0.1, dest="theta_atom")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_var)

    p = sub.add_parser("posterior", help="sample the shape/location/scale posterior")
    common_fit_flags(p)
    _add_chain_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--theta-atom", type=float, default=0.1, dest="theta_atom")
    p.add_argument("--unadjusted", action="store_true",
                   help="skip the variance adjustment of the extremal-index posterior")
    p.add_argument("--out", required=True, help="chain CSV path")
    p.add_argument("--theta-out", dest="theta_out",
                   help="also write the extremal-index posterior here")
    p.set_defaults(func=_cmd_posterior)

    p = sub.add_parser("coverage", help="run a coverage study from a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mse-out", dest="mse_out")
    p.add_argument("--truths-out", dest="truths_out")
    p.set_defaults(func=_cmd_coverage)

    p = sub.add_parser("mse", help="posterior-median vs MLE mean-squared-error ratios")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_mse)

    p = sub.add_parser("diagnose", help="block-size diagnostics for an observed series")
    p.add_argument("--input", required=True)
    p.add_argument("--m-range", required=True, dest="m_range",
                   help="comma-separated block sizes, e.g. 30,60,90")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--lags", type=int, default=10)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--out-prefix", default="diagnostics", dest="out_prefix")
    p.set_defaults(func=_cmd_diagnose)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"bm-evt: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError, FitError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"bm-evt: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
