"""Monte-Carlo experiment harness: coverage tables, MSE ratios, diagnostics.

Each grid cell (n, m, l) is replicated many times; every replication
simulates a fresh series, fits the block-maxima model, and builds the
requested intervals.  Replication r of cell c derives all of its
randomness from SeedSequence((base_seed, c, r)), so results are
bit-identical no matter how many worker processes run the loop, and the
reduction always happens in replication order.

Methods: FS / FA are the symmetric and simulation-based frequentist
intervals, BS / BA the symmetric and equal-tailed posterior intervals.
Targets: the tail shape ("gamma"), the extremal index ("theta"), the
return level of an m_star-length stretch ("rl"), and the marginal
quantile ("eq").  FA applies to the two risk targets only.
"""

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

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
from bmevt.simulate import DgpSpec, eq_ground_truth, rl_ground_truth, simulate_series

_ALL_METHODS = ("BS", "BA", "FS", "FA")
_ALL_TARGETS = ("gamma", "theta", "rl", "eq")
_BAYES = ("BS", "BA")


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for one simulation experiment.

    grid holds (n, m, l) cells; m_star defaults to n (the return level
    of one full observation window) and eq_level to 1 - 1/n.  The chain
    settings are deliberately lighter than the library defaults: the
    sampler is re-run tens of thousands of times inside a study.
    """

    model: str
    eta: float
    marginal: str = None
    grid: tuple = ((1800, 30, 0),)
    replications: int = 1000
    alpha: float = 0.05
    methods: tuple = _ALL_METHODS
    targets: tuple = _ALL_TARGETS
    rl_tau: float = 0.9
    m_star: int = None
    eq_level: float = None
    K: int = 10
    q: float = 0.5
    mcmc: ChainConfig = field(default_factory=lambda: ChainConfig(iters=6000, burn_in=1500))
    theta_atom: float = 0.1
    fa_draws: int = 50000
    truth_reps: int = 100000
    base_seed: int = 20240717
    workers: int = 1
    arch_burn_in: int = 1000

    def __post_init__(self):
        for meth in self.methods:
            if meth not in _ALL_METHODS:
                raise ValueError(f"unknown method {meth!r}")
        for tgt in self.targets:
            if tgt not in _ALL_TARGETS:
                raise ValueError(f"unknown target {tgt!r}")
        for cell in self.grid:
            n, m, l = cell
            if n % (m + l) != 0:
                raise ValueError(f"cell {cell}: n must be a multiple of m + l")


@dataclass(frozen=True)
class CoverageRow:
    n: int
    k: int
    m: int
    method: str
    target: str
    coverage: float
    width: float
    mc_se: float
    reps: int
    failed: int


@dataclass(frozen=True)
class MseRow:
    n: int
    k: int
    m: int
    target: str
    ratio: float
    mse_median: float
    mse_mle: float
    reps: int
    failed: int


@dataclass
class CoverageReport:
    rows: list
    mse_rows: list
    truths: list
    failures: list

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "k", "m", "method", "target", "coverage", "width", "mc_se", "reps", "failed"])
            for r in self.rows:
                w.writerow([r.n, r.k, r.m, r.method, r.target,
                            _fmt(r.coverage), _fmt(r.width), _fmt(r.mc_se), r.reps, r.failed])

    def mse_to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "k", "m", "target", "ratio", "mse_median", "mse_mle", "reps", "failed"])
            for r in self.mse_rows:
                w.writerow([r.n, r.k, r.m, r.target,
                            _fmt(r.ratio), _fmt(r.mse_median), _fmt(r.mse_mle), r.reps, r.failed])


def _fmt(x):
    if x != x:
        return "nan"
    return f"{x:.10g}"


def _pair_targets(method, targets):
    if method == "FA":
        return tuple(t for t in targets if t in ("rl", "eq"))
    return targets


class _RepFailure(Exception):
    def __init__(self, stage, detail):
        super().__init__(f"{stage}: {detail}")
        self.stage = stage
        self.detail = detail


def _stage(stage, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:  # noqa: BLE001 - reason-coded and reported upstream
        raise _RepFailure(stage, f"{type(exc).__name__}: {exc}") from exc


def _rep_worker(packed):
    """One replication: simulate, fit, build every requested interval.

    Returns (rep_idx, intervals, points) on success, where intervals maps
    (method, target) -> (lo, hi), or (rep_idx, None, reason) on failure.
    """
    config, cell_idx, rep_idx, cell = packed
    n, m, l = cell
    ss = np.random.SeedSequence((config.base_seed, cell_idx, rep_idx))
    seed_sim, seed_mcmc, seed_fa_rl, seed_fa_eq, seed_eq_draw = ss.spawn(5)
    try:
        spec = DgpSpec(model=config.model, eta=config.eta, n=n,
                       marginal=config.marginal, seed=seed_sim, burn_in=config.arch_burn_in)
        series, _ = _stage("simulate", simulate_series, spec)
        maxima = _stage("block_maxima", block_maxima, series, BlockConfig(m=m, l=l))
        fit = _stage("mle", fit_gev_mle, maxima, q=config.q)

        need_theta = "theta" in config.targets or "eq" in config.targets
        tfit = _stage("theta", fit_theta, series, m, K=config.K) if need_theta else None

        m_star = config.m_star if config.m_star is not None else n
        eq_level = config.eq_level if config.eq_level is not None else 1.0 - 1.0 / n
        rl_query = RiskQuery(tau=config.rl_tau, m=m, m_star=m_star, alpha=config.alpha)
        eq_query = RiskQuery(tau_E=eq_level, m=m, alpha=config.alpha)

        need_bayes = any(meth in _BAYES for meth in config.methods)
        chain = tpost = rl_draws = eq_draws = None
        if need_bayes:
            mc = replace(config.mcmc, seed=seed_mcmc)
            chain = _stage("mcmc", sample_posterior, maxima, config=mc, fit=fit, q=config.q)
            if "rl" in config.targets:
                rl_draws = _stage("rl_draws", rl_posterior, chain, config.rl_tau, m, m_star)
            if need_theta:
                tpost = _stage("theta_posterior", theta_posterior, pseudo_observations(series, m),
                               prior=ThetaPriorSpec(atom_mass=config.theta_atom),
                               adjusted=True, theta_fit=tfit)
            if "eq" in config.targets:
                eq_draws = _stage("eq_draws", var_posterior, chain, tpost, eq_level, m,
                                  seed=seed_eq_draw)

        intervals = {}
        for meth in config.methods:
            for tgt in _pair_targets(meth, config.targets):
                intervals[(meth, tgt)] = _one_interval(
                    meth, tgt, config, fit, tfit, chain, tpost, rl_draws, eq_draws,
                    rl_query, eq_query, seed_fa_rl, seed_fa_eq)

        points = {}
        if "gamma" in config.targets:
            points["gamma"] = (fit.params.gamma,
                               float(np.median(chain.draws[:, 0])) if chain is not None else math.nan)
        if "theta" in config.targets:
            points["theta"] = (tfit.theta_hat,
                               tpost.quantile(0.5) if tpost is not None else math.nan)
        if "rl" in config.targets:
            points["rl"] = (_stage("rl_point", return_level_point, fit, config.rl_tau, m, m_star),
                            float(np.median(rl_draws)) if rl_draws is not None else math.nan)
        if "eq" in config.targets:
            points["eq"] = (_stage("eq_point", var_point, fit, tfit, eq_level, m),
                            float(np.median(eq_draws)) if eq_draws is not None else math.nan)
        return rep_idx, intervals, points
    except _RepFailure as fail:
        return rep_idx, None, f"{fail.stage}:{fail.detail}"


def _one_interval(meth, tgt, config, fit, tfit, chain, tpost, rl_draws, eq_draws,
                  rl_query, eq_query, seed_fa_rl, seed_fa_eq):
    alpha = config.alpha
    if meth == "FS":
        if tgt == "gamma":
            return _stage("ci_gamma", ci_gamma_symmetric, fit, alpha=alpha)
        if tgt == "theta":
            return _stage("ci_theta", ci_theta_symmetric, tfit, alpha=alpha)
        if tgt == "rl":
            return _stage("ci_rl", ci_return_level_symmetric, fit, rl_query)
        return _stage("ci_eq", ci_var_symmetric, fit, tfit, eq_query)
    if meth == "FA":
        if tgt == "rl":
            return _stage("fa_rl", ci_asymmetric_mc, fit, rl_query,
                          draws=config.fa_draws, seed=seed_fa_rl)
        return _stage("fa_eq", ci_asymmetric_mc, fit, eq_query, theta_fit=tfit,
                      draws=config.fa_draws, seed=seed_fa_eq)
    # posterior intervals
    if tgt == "gamma":
        source = chain.draws[:, 0]
    elif tgt == "theta":
        source = tpost
    elif tgt == "rl":
        source = rl_draws
    else:
        source = eq_draws
    builder = credible_interval_symmetric if meth == "BS" else credible_interval_asymmetric
    return _stage(f"{meth.lower()}_{tgt}", builder, source, alpha=alpha)


def _cell_truths(config, cell):
    n, m, l = cell
    spec = DgpSpec(model=config.model, eta=config.eta, n=2,
                   marginal=config.marginal, seed=0, burn_in=config.arch_burn_in)
    _, gt = simulate_series(spec)
    m_star = config.m_star if config.m_star is not None else n
    eq_level = config.eq_level if config.eq_level is not None else 1.0 - 1.0 / n
    truths, records = {}, []
    spec_n = replace(spec, n=n)
    if "gamma" in config.targets:
        truths["gamma"] = gt.gamma0
    if "theta" in config.targets:
        truths["theta"] = gt.theta0
    if "rl" in config.targets:
        value, se = rl_ground_truth(spec_n, config.rl_tau, m_star, reps=config.truth_reps)
        truths["rl"] = value
        records.append({"n": n, "m": m, "target": "rl", "truth": value, "mc_se": se})
    if "eq" in config.targets:
        if gt.marginal_quantile is not None:
            value = gt.marginal_quantile(eq_level)
        else:
            value = eq_ground_truth(spec_n, eq_level)
        truths["eq"] = value
        records.append({"n": n, "m": m, "target": "eq", "truth": value, "mc_se": 0.0})
    for tgt, value in truths.items():
        if not math.isfinite(value):
            raise ValueError(f"no reference truth for target {tgt!r} "
                             f"(model={config.model}, eta={config.eta})")
    return truths, records


def _n_workers(config):
    env = os.environ.get("BM_EVT_WORKERS")
    if env:
        return max(1, int(env))
    return max(1, config.workers)


def _run_cell(config, cell_idx, cell):
    n, m, l = cell
    truths, truth_records = _cell_truths(config, cell)
    reps = config.replications
    packed = [(config, cell_idx, r, cell) for r in range(reps)]
    workers = _n_workers(config)

    results = []
    failed = []
    aborted = False
    limit = 0.2 * reps

    def consume(iterator):
        nonlocal aborted
        for rep_idx, intervals, payload in iterator:
            if intervals is None:
                failed.append((rep_idx, payload))
                if len(failed) > limit:
                    aborted = True
                    return
            else:
                results.append((rep_idx, intervals, payload))

    if workers == 1:
        consume(map(_rep_worker, packed))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, reps // (workers * 8))
            consume(pool.map(_rep_worker, packed, chunksize=chunk))

    # reduce strictly in replication order so worker count never matters
    results.sort(key=lambda item: item[0])
    k = n // (m + l)
    rows, mse_rows = [], []
    n_ok = len(results)
    for meth in config.methods:
        for tgt in _pair_targets(meth, config.targets):
            if aborted or n_ok == 0:
                rows.append(CoverageRow(n, k, m, meth, tgt, math.nan, math.nan, math.nan,
                                        n_ok, len(failed)))
                continue
            truth = truths[tgt]
            hits = 0
            widths = 0.0
            for _, intervals, _ in results:
                lo, hi = intervals[(meth, tgt)]
                hits += 1 if lo <= truth <= hi else 0
                widths += hi - lo
            cov = hits / n_ok
            rows.append(CoverageRow(n, k, m, meth, tgt, cov, widths / n_ok,
                                    math.sqrt(cov * (1.0 - cov) / n_ok), n_ok, len(failed)))

    bayes_points = any(meth in _BAYES for meth in config.methods)
    for tgt in config.targets:
        if aborted or n_ok == 0 or not bayes_points:
            mse_rows.append(MseRow(n, k, m, tgt, math.nan, math.nan, math.nan, n_ok, len(failed)))
            continue
        truth = truths[tgt]
        sq_mle = sq_med = 0.0
        for _, _, points in results:
            mle_pt, med_pt = points[tgt]
            sq_mle += (mle_pt - truth) ** 2
            sq_med += (med_pt - truth) ** 2
        mse_mle = sq_mle / n_ok
        mse_med = sq_med / n_ok
        ratio = mse_med / mse_mle if mse_mle > 0.0 else math.nan
        mse_rows.append(MseRow(n, k, m, tgt, ratio, mse_med, mse_mle, n_ok, len(failed)))

    failures = [{"n": n, "m": m, "rep": rep, "reason": reason} for rep, reason in failed]
    return rows, mse_rows, truth_records, failures


def run_coverage(config):
    """Run the full grid and return a CoverageReport.

    Coverage rows hold the fraction of replications whose interval
    contained the truth and the mean interval width per (cell, method,
    target); a cell whose failure count passes 20% of the replications
    is abandoned and reported as nan.  MSE-ratio rows
    (posterior median vs maximum likelihood) come along for free whenever
    a posterior method is in play.
    """
    rows, mse_rows, truths, failures = [], [], [], []
    for cell_idx, cell in enumerate(config.grid):
        r, mr, tr, fl = _run_cell(config, cell_idx, cell)
        rows.extend(r)
        mse_rows.extend(mr)
        truths.extend(tr)
        failures.extend(fl)
    return CoverageReport(rows=rows, mse_rows=mse_rows, truths=truths, failures=failures)


def run_mse_ratio(config):
    """Grid study of (posterior median - truth)^2 / (MLE - truth)^2.

    Forces a posterior method on if the configuration lists none, since
    the ratio needs posterior medians.
    """
    if not any(meth in _BAYES for meth in config.methods):
        config = replace(config, methods=tuple(config.methods) + ("BS",))
    return run_coverage(config)


def _acf(x, lags):
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    denom = float(c @ c)
    if denom == 0.0:
        return np.zeros(lags)
    out = np.empty(lags)
    for h in range(1, lags + 1):
        out[h - 1] = float(c[:-h] @ c[h:]) / denom
    return out


def diagnose_blocks(series, m_range, alpha=0.05, lags=10, K=10):
    """Block-size diagnostics for a single observed series.

    Returns a dict of plot-ready tables:

    * "stability": per block size, the extremal-index and tail-shape
      estimates with their symmetric intervals (nan where a fit fails);
    * "acf": per block size and lag, autocorrelations of the disjoint
      block maxima and of their squares, with the +-z/sqrt(k) band;
    * "qq": per block size, sorted values of F_n(M_i)^(theta*m) against
      uniform plotting positions i/(k+1) -- near the diagonal when the
      fitted block-maximum law matches the sample.
    """
    series = np.asarray(series, dtype=float)
    z = norm.ppf(1.0 - alpha / 2.0)
    stability, acf_rows, qq_rows = [], [], []
    for m in m_range:
        k = len(series) // m
        if k < 2:
            raise ValueError(f"block size {m} leaves fewer than two blocks")
        maxima = block_maxima(series[: k * m], BlockConfig(m=m))
        row = {"m": m, "k": k,
               "theta": math.nan, "theta_lo": math.nan, "theta_hi": math.nan,
               "gamma": math.nan, "gamma_lo": math.nan, "gamma_hi": math.nan}
        theta_hat = None
        try:
            tfit = fit_theta(series, m, K=K)
            lo, hi = ci_theta_symmetric(tfit, alpha=alpha)
            theta_hat = tfit.theta_hat
            row.update(theta=tfit.theta_hat, theta_lo=lo, theta_hi=hi)
        except Exception:
            pass
        try:
            fit = fit_gev_mle(maxima)
            lo, hi = ci_gamma_symmetric(fit, alpha=alpha)
            row.update(gamma=fit.params.gamma, gamma_lo=lo, gamma_hi=hi)
        except Exception:
            pass
        stability.append(row)

        band = z / math.sqrt(k)
        acf_max = _acf(maxima, lags)
        acf_sq = _acf(maxima**2, lags)
        for h in range(1, lags + 1):
            acf_rows.append({"m": m, "lag": h, "acf_max": float(acf_max[h - 1]),
                             "acf_sq": float(acf_sq[h - 1]), "band": band})

        if theta_hat is not None:
            pseudo = pseudo_observations(series, m)
            probs = np.sort(np.exp(-theta_hat * pseudo.y))
            for i, val in enumerate(probs, start=1):
                qq_rows.append({"m": m, "i": i, "empirical": float(val),
                                "reference": i / (k + 1.0)})
    return {"stability": stability, "acf": acf_rows, "qq": qq_rows}
