"""Frequentist inference for block maxima.

GEV maximum likelihood over the restricted parameter space
Theta_n = (-1/2, k^q) x R x (0, inf), finite-difference observed
information, quadrature expected information, the extremal-index MLE
with its multi-origin sliding variance estimator, and the interval
constructions built on top: symmetric (delta-method) intervals for the
shape, the extremal index, return levels and extreme quantiles, and
asymmetric Monte-Carlo intervals that push Gaussian parameter draws
through the risk functional instead of linearizing it.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gamma as gamma_fn, logit
from scipy.stats import norm

from bmevt.blocks import pseudo_observations
from bmevt.gev import (
    GevParams,
    _log_density_raw,
    _quantile_from_t,
    gev_log_density_hessian,
    gev_quantile_dgamma_neglog,
    gev_quantile_neglog,
)

EULER_GAMMA = 0.5772156649015329

# largest -log(p) before p = exp(-neglog) underflows to exactly 0
_NEGLOG_MAX = 744.0


class FitError(RuntimeError):
    """Optimizer failed to converge; carries the best point found."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class GevFit:
    """Result of a GEV fit to k block maxima.

    loglik is the summed log-likelihood at the optimum; observed_info is
    its negative Hessian (curvature of k * mean loglik), and
    info_inv_standardized is the inverse of the observed information
    after standardizing location and scale by sigma_hat, the covariance
    estimate that all symmetric intervals use.  singular_info flags fits
    where the curvature could not be inverted; intervals then refuse to
    run rather than report garbage.
    """

    params: GevParams
    loglik: float
    observed_info: np.ndarray
    info_inv_standardized: np.ndarray
    k: int
    q: float
    converged: bool = True
    singular_info: bool = False


@dataclass(frozen=True)
class ThetaFit:
    """Extremal index estimate with its variance machinery.

    var_hat = theta_hat^4 * sigma_tilde_sq / k_tilde estimates the
    variance of theta_hat.
    """

    theta_hat: float
    sigma_tilde_sq: float
    K: int
    k_tilde: int
    m_tilde: int
    var_hat: float


@dataclass(frozen=True)
class RiskQuery:
    """What to ask of a risk functional, and at which interval level.

    For return levels set tau, m and m_star (the target block size the
    level is extrapolated to); for extreme quantiles set tau_E and m.
    b_hat is a bias plug-in for users with second-order knowledge; the
    default 0 matches standard practice.
    """

    tau: float = None
    tau_E: float = None
    m: int = None
    m_star: int = None
    alpha: float = 0.05
    b_hat: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        for p in (self.tau, self.tau_E):
            if p is not None and not 0.0 < p < 1.0:
                raise ValueError("probability levels must lie in (0, 1)")


def gev_loglik(maxima, params):
    """Mean GEV log-likelihood of the block maxima; -inf off support."""
    x = np.asarray(maxima, dtype=float)
    if x.size == 0:
        raise ValueError("maxima must be nonempty")
    return _loglik_raw(x, params.gamma, params.mu, params.sigma)


def _loglik_raw(x, gamma, mu, sigma):
    if sigma <= 0:
        return -math.inf
    ld = _log_density_raw(x, gamma, mu, sigma)
    if not np.all(np.isfinite(ld)):
        return -math.inf
    return float(np.mean(ld))


def _pwm_init(x):
    """Probability-weighted-moment starting point (gamma, mu, sigma).

    Classic L-moment fit: solves the GEV L-skewness relation with the
    usual rational approximation.  Falls back to Gumbel moments if the
    sample is too degenerate for the formulas.
    """
    xs = np.sort(x)
    n = len(xs)
    i = np.arange(1, n + 1)
    b0 = xs.mean()
    b1 = np.sum((i - 1) / (n - 1) * xs) / n
    b2 = np.sum((i - 1) * (i - 2) / ((n - 1) * (n - 2)) * xs) / n
    denom = 3.0 * b2 - b0
    gumbel_sigma = max((2.0 * b1 - b0) / math.log(2.0), 1e-8 * max(abs(b0), 1.0))
    if abs(denom) < 1e-12:
        return 0.0, b0 - EULER_GAMMA * gumbel_sigma, gumbel_sigma
    c = (2.0 * b1 - b0) / denom - math.log(2.0) / math.log(3.0)
    kappa = 7.8590 * c + 2.9554 * c * c
    if abs(kappa) < 1e-6:
        return 0.0, b0 - EULER_GAMMA * gumbel_sigma, gumbel_sigma
    g1 = gamma_fn(1.0 + kappa)
    sigma = kappa * (2.0 * b1 - b0) / (g1 * (1.0 - 2.0 ** (-kappa)))
    mu = b0 + sigma * (g1 - 1.0) / kappa
    gamma = -kappa
    if not (np.isfinite(gamma) and np.isfinite(mu) and np.isfinite(sigma)) or sigma <= 0:
        return 0.0, b0 - EULER_GAMMA * gumbel_sigma, gumbel_sigma
    return gamma, mu, sigma


def fit_gev_mle(maxima, q=0.5):
    """Maximum likelihood GEV fit over (-1/2, k^q) x R x (0, inf).

    Runs a derivative-free simplex search in transformed coordinates
    (shape mapped onto its open interval by a logistic, scale by log) so
    the constraints cannot be violated, restarting from a
    probability-weighted-moments initializer plus perturbed copies of
    it.  The GEV likelihood is non-smooth at the support boundary, which
    is exactly where gradient methods stall.

    Parameters
    ----------
    maxima : block maxima, at least 4 distinct values
    q : restriction exponent; the shape is constrained below k^q

    Returns
    -------
    GevFit.  Raises FitError (carrying the best point found) if no
    start converges.
    """
    x = np.asarray(maxima, dtype=float)
    k = len(x)
    if len(np.unique(x)) < 4:
        raise ValueError("need at least 4 distinct block maxima")
    upper = float(k) ** q
    width = upper + 0.5

    def to_params(u):
        return -0.5 + width * expit(u[0]), u[1], math.exp(u[2])

    def objective(u):
        g, m, s = to_params(u)
        ll = _loglik_raw(x, g, m, s)
        return -ll if np.isfinite(ll) else 1e10

    g0, m0, s0 = _pwm_init(x)
    g0 = min(max(g0, -0.45), 0.95 * upper)
    u0 = np.array([logit((g0 + 0.5) / width), m0, math.log(s0)])
    # fixed perturbations of the start; enough to escape a bad PWM guess
    offsets = np.array(
        [
            [0.0, 0.0, 0.0],
            [0.8, 0.0, 0.0],
            [-0.8, 0.0, 0.0],
            [0.0, 0.5 * s0, 0.5],
            [0.4, -0.5 * s0, -0.5],
        ]
    )
    best = None
    for off in offsets:
        res = minimize(
            objective,
            u0 + off,
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 5000, "maxfev": 5000},
        )
        if best is None or res.fun < best.fun:
            best = res
    g, m, s = to_params(best.x)
    params = GevParams(gamma=g, mu=m, sigma=s)
    if not np.isfinite(best.fun) or best.fun >= 1e10:
        raise FitError("GEV likelihood optimization failed", best=params)
    loglik = -best.fun * k

    hess = _fd_hessian(lambda v: k * _loglik_raw(x, v[0], v[1], v[2]), np.array([g, m, s]), _fd_scales(g, m, s))
    observed_info = -hess
    a = np.diag([1.0, s, s])
    info_std = a @ (observed_info / k) @ a
    singular = not np.all(np.isfinite(info_std))
    info_inv = np.full((3, 3), np.nan)
    if not singular:
        try:
            eigvals = np.linalg.eigvalsh(info_std)
            if np.min(eigvals) <= 0:
                singular = True
            else:
                info_inv = np.linalg.inv(info_std)
        except np.linalg.LinAlgError:
            singular = True
    return GevFit(
        params=params,
        loglik=loglik,
        observed_info=observed_info,
        info_inv_standardized=info_inv,
        k=k,
        q=q,
        converged=bool(best.success or np.isfinite(best.fun)),
        singular_info=singular,
    )


def _fd_scales(g, m, s):
    # natural parameter scales: shape is O(1), location/scale live on sigma
    return np.array([max(abs(g), 1.0), max(abs(m), s), s])


def _fd_hessian(f, x0, scales):
    """Central finite-difference Hessian with per-coordinate steps.

    Steps are cbrt(machine eps) times the coordinate scale.  f may
    return a scalar or a vector (the Hessian is then computed for every
    component at once, last axis = component).  If an evaluation is not
    finite the step for the offending coordinate pair is shrunk once
    before giving up and returning NaN entries.
    """
    h = np.finfo(float).eps ** (1.0 / 3.0) * np.asarray(scales, dtype=float)
    f0 = np.asarray(f(x0), dtype=float)
    d = len(x0)
    out = np.full((d, d) + f0.shape, np.nan)

    def eval_step(i, j, si, sj, hi, hj):
        xx = x0.copy()
        xx[i] += si * hi
        if j is not None:
            xx[j] += sj * hj
        return np.asarray(f(xx), dtype=float)

    for i in range(d):
        for attempt in range(2):
            hi = h[i] / (8.0**attempt)
            fp = eval_step(i, None, 1.0, 0.0, hi, 0.0)
            fm = eval_step(i, None, -1.0, 0.0, hi, 0.0)
            val = (fp - 2.0 * f0 + fm) / (hi * hi)
            if np.all(np.isfinite(val)):
                out[i, i] = val
                break
    for i in range(d):
        for j in range(i + 1, d):
            for attempt in range(2):
                hi, hj = h[i] / (8.0**attempt), h[j] / (8.0**attempt)
                fpp = eval_step(i, j, 1.0, 1.0, hi, hj)
                fpm = eval_step(i, j, 1.0, -1.0, hi, hj)
                fmp = eval_step(i, j, -1.0, 1.0, hi, hj)
                fmm = eval_step(i, j, -1.0, -1.0, hi, hj)
                val = (fpp - fpm - fmp + fmm) / (4.0 * hi * hj)
                if np.all(np.isfinite(val)):
                    out[i, j] = val
                    out[j, i] = val
                    break
    return out


# quadrature panels for the expected information: geometric toward both
# endpoints, where the integrand picks up powers of log(u) and
# log(-log u); 24-node Gauss-Legendre per panel.  The mass outside
# (1e-10, 1 - 1e-10) contributes O(1e-8 * polylog) and is dropped.
_PANEL_BREAKS = np.array(
    [1e-10, 1e-8, 1e-6, 1e-4, 1e-3, 0.01, 0.05, 0.2, 0.5, 0.8, 0.95, 0.99,
     0.999, 0.9999, 1.0 - 1e-5, 1.0 - 1e-6, 1.0 - 1e-8, 1.0 - 1e-10]
)


def _panel_nodes(n_nodes=24):
    xg, wg = np.polynomial.legendre.leggauss(n_nodes)
    nodes, weights = [], []
    for a, b in zip(_PANEL_BREAKS[:-1], _PANEL_BREAKS[1:]):
        half = 0.5 * (b - a)
        nodes.append(0.5 * (a + b) + half * xg)
        weights.append(half * wg)
    return np.concatenate(nodes), np.concatenate(weights)


def expected_information(params):
    """Expected (Fisher) information of one GEV observation.

    Integrates the negative analytic Hessian of the log-density along
    the quantile curve u -> mu + sigma * Q_gamma(u) over u in (0, 1)
    with composite Gauss-Legendre panels graded toward both endpoints.
    Finite and positive definite for gamma > -1/2.
    """
    g, m, s = params.gamma, params.mu, params.sigma
    if g <= -0.5:
        raise ValueError("information not positive definite for gamma <= -1/2")
    u, w = _panel_nodes()
    xq = m + s * _quantile_from_t(-np.log(-np.log(u)), g)
    hess = gev_log_density_hessian(xq, g, m, s)
    info = -np.tensordot(hess, w, axes=([2], [0]))
    return 0.5 * (info + info.T)


def _require_invertible(fit):
    if fit.singular_info or not np.all(np.isfinite(fit.info_inv_standardized)):
        raise ValueError("observed information is singular; interval unavailable")


def ci_gamma_symmetric(fit, alpha=0.05, b_hat=0.0):
    """Equi-tailed normal-approximation interval for the GEV shape."""
    _require_invertible(fit)
    z = norm.ppf(1.0 - alpha / 2.0)
    psi = math.sqrt(fit.info_inv_standardized[0, 0])
    center = fit.params.gamma - b_hat
    half = z * psi / math.sqrt(fit.k)
    return center - half, center + half


def theta_mle(pseudo):
    """Extremal index MLE min(1, k_tilde / sum(Y)); 1 if all Y vanish."""
    total = float(np.sum(pseudo.y))
    if total <= 0.0:
        return 1.0
    return min(1.0, pseudo.k_tilde / total)


def _origin_variance(x, sorted_suffix, m_tilde, n_blocks, j):
    """Influence-corrected variance of the pseudo-observations from origin j.

    Works on the suffix x[j..n]; n_blocks complete blocks are used with
    1/n_blocks normalization throughout (the origin-1 estimator keeps
    all k_tilde blocks, shifted origins drop one).
    """
    z = x[j - 1 :]
    denom = float(len(z))
    used = z[: n_blocks * m_tilde].reshape(n_blocks, m_tilde)
    maxima = used.max(axis=1)
    f_max = np.searchsorted(sorted_suffix, maxima, side="right") / denom
    y = -m_tilde * np.log(f_max)

    # c_s = mean over blocks l of (F(M_l) - 1(X_s <= M_l)) / F(M_l)
    #     = 1 - (1/B) * sum_{l: M_l >= X_s} 1 / F(M_l)
    order = np.argsort(maxima)
    m_sorted = maxima[order]
    inv_f_sorted = 1.0 / f_max[order]
    tail_sum = np.concatenate([np.cumsum(inv_f_sorted[::-1])[::-1], [0.0]])
    pos = np.searchsorted(m_sorted, used.ravel(), side="left")
    c = 1.0 - tail_sum[pos] / n_blocks
    block_corr = c.reshape(n_blocks, m_tilde).sum(axis=1)

    terms = y - y.mean() + block_corr
    return float(np.mean(terms * terms))


def theta_sliding_variance(series, m_tilde, K=10):
    """Variance estimator for the extremal index pseudo-likelihood.

    Averages the influence-corrected empirical variance of the
    pseudo-observations over K block origins spread across one block
    length: origin 1 keeps all k_tilde blocks; origin j >= 2 uses the
    k_tilde - 1 complete blocks of the suffix starting at j, with the
    suffix's own ecdf.  K = 1 reduces to the plain disjoint-origin
    estimator.
    """
    x = np.asarray(series, dtype=float)
    n = len(x)
    if K < 1:
        raise ValueError("K must be >= 1")
    if n < 2 * m_tilde:
        raise ValueError("series too short: need n >= 2 * m_tilde")
    k_tilde = n // m_tilde
    total = 0.0
    for i in range(1, K + 1):
        j = 1 if i == 1 else math.ceil((i - 1) * m_tilde / K) + 1
        n_blocks = k_tilde if j == 1 else k_tilde - 1
        if (n - j + 1) < n_blocks * m_tilde:
            raise ValueError(f"series too short for origin {j}")
        total += _origin_variance(x, np.sort(x[j - 1 :]), m_tilde, n_blocks, j)
    return total / K


def fit_theta(series, m_tilde, K=10):
    """Extremal index MLE plus its sliding variance, bundled."""
    pseudo = pseudo_observations(series, m_tilde)
    th = theta_mle(pseudo)
    s2 = theta_sliding_variance(series, m_tilde, K=K)
    var_hat = th**4 * s2 / pseudo.k_tilde
    return ThetaFit(
        theta_hat=th,
        sigma_tilde_sq=s2,
        K=K,
        k_tilde=pseudo.k_tilde,
        m_tilde=pseudo.m_tilde,
        var_hat=var_hat,
    )


def ci_theta_symmetric(theta_fit, alpha=0.05):
    """Normal interval for the extremal index, clipped to (0, 1]."""
    z = norm.ppf(1.0 - alpha / 2.0)
    half = z * theta_fit.theta_hat**2 * math.sqrt(theta_fit.sigma_tilde_sq / theta_fit.k_tilde)
    lo = max(theta_fit.theta_hat - half, 0.0)
    hi = min(theta_fit.theta_hat + half, 1.0)
    return lo, hi


def _rl_neglog(tau, m, m_star):
    # block-m level for a size-m_star target: tau^(m/m_star), kept as -log p
    if m_star < m:
        raise ValueError("m_star must be >= m")
    return (m / m_star) * (-math.log(tau))


def return_level_point(fit, tau, m, m_star):
    """Plug-in return level: the tau-quantile of size-m_star block maxima.

    Extrapolates the fitted block-m GEV via the tail stability relation,
    evaluating its quantile at tau^(m/m_star).
    """
    nl = _rl_neglog(tau, m, m_star)
    p = fit.params
    return p.mu + p.sigma * gev_quantile_neglog(nl, p.gamma)


def _symmetric_interval(center, slope, psi, k, alpha, b_hat):
    z = norm.ppf(1.0 - alpha / 2.0)
    a = center - slope * (b_hat + z * psi / math.sqrt(k))
    b = center - slope * (b_hat - z * psi / math.sqrt(k))
    return (a, b) if a <= b else (b, a)


def ci_return_level_symmetric(fit, query):
    """Delta-method interval for the return level.

    The sensitivity vector packs the quantile and its shape derivative;
    the variance comes from the standardized observed information.
    """
    _require_invertible(fit)
    nl = _rl_neglog(query.tau, query.m, query.m_star)
    g, s = fit.params.gamma, fit.params.sigma
    qd = gev_quantile_dgamma_neglog(nl, g)
    if qd == 0.0:
        raise ValueError("degenerate sensitivity: quantile level e^-1 has zero shape derivative")
    qv = gev_quantile_neglog(nl, g)
    v = np.array([1.0, 1.0 / qd, qv / qd])
    psi = math.sqrt(v @ fit.info_inv_standardized @ v)
    center = fit.params.mu + s * qv
    return _symmetric_interval(center, s * qd, psi, fit.k, query.alpha, query.b_hat)


def var_point(fit, theta_fit, tau_E, m):
    """Extreme value-at-risk: the tau_E marginal quantile.

    Maps the marginal level to the block-maximum scale through the
    extremal index, tau_E^(m * theta_hat), then reads off the fitted GEV
    quantile.
    """
    nl = m * theta_fit.theta_hat * (-math.log(tau_E))
    if nl > _NEGLOG_MAX:
        raise ValueError("level too extreme for block size")
    p = fit.params
    return p.mu + p.sigma * gev_quantile_neglog(nl, p.gamma)


def ci_var_symmetric(fit, theta_fit, query):
    """Delta-method interval for the extreme VaR.

    On top of the GEV parameter uncertainty, a correction term accounts
    for the estimated extremal index; it enters through the derivative
    of the quantile with respect to theta and uses the sliding variance.
    """
    _require_invertible(fit)
    th = theta_fit.theta_hat
    nl = query.m * th * (-math.log(query.tau_E))
    if nl > _NEGLOG_MAX:
        raise ValueError("level too extreme for block size")
    g, s = fit.params.gamma, fit.params.sigma
    qd = gev_quantile_dgamma_neglog(nl, g)
    if qd == 0.0:
        raise ValueError("degenerate sensitivity: quantile level e^-1 has zero shape derivative")
    qv = gev_quantile_neglog(nl, g)
    if g >= 0.0:
        v = np.array([1.0, 0.0, 0.0])
    else:
        v = np.array([1.0, g * g, -g])
    # delta-method contribution of theta_hat: d(quantile)/d(theta) is
    # -sigma * (-log p)^(-gamma) / theta, scaled here to the same sqrt(k)
    # normalization as the GEV part
    varsigma = (
        theta_fit.sigma_tilde_sq * th**2 * (fit.k / theta_fit.k_tilde) / (nl**g * qd) ** 2
    )
    psi = math.sqrt(v @ fit.info_inv_standardized @ v + varsigma)
    center = fit.params.mu + s * qv
    return _symmetric_interval(center, s * qd, psi, fit.k, query.alpha, query.b_hat)


def _truncated_normal_draws(rng, mean, cov_chol, accept, count, dim, batch=20000):
    """Rejection-sample Gaussian draws until count pass the accept mask.

    Fixed batch size keeps the stream deterministic for a given seed
    regardless of the acceptance rate.
    """
    kept = []
    have = 0
    guard = 0
    while have < count:
        z = rng.standard_normal((batch, dim))
        draws = mean + z @ cov_chol.T
        good = draws[accept(draws)]
        kept.append(good)
        have += len(good)
        guard += 1
        if guard > 1000 and have == 0:
            raise ValueError("truncation region has negligible mass")
    return np.concatenate(kept)[:count]


def ci_asymmetric_mc(fit, query, theta_fit=None, draws=50000, seed=0):
    """Asymmetric Monte-Carlo interval for a return level or extreme VaR.

    Samples GEV parameter triples from a Gaussian centered at the MLE
    with the inverse observed information as covariance, truncated to
    the fitting domain; for VaR additionally samples the extremal index
    from its own truncated normal.  Each draw is pushed through the risk
    functional and the empirical alpha/2 and 1-alpha/2 quantiles are
    returned.  Deterministic given (seed, draws).
    """
    _require_invertible(fit)
    cov = np.linalg.inv(fit.observed_info)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("observed-information covariance not positive definite")
    p = fit.params
    upper = float(fit.k) ** fit.q
    rng = np.random.default_rng(seed)

    def in_domain(d):
        return (d[:, 0] > -0.5) & (d[:, 0] < upper) & (d[:, 2] > 0.0)

    theta_star = None
    if query.tau_E is not None:
        if theta_fit is None:
            raise ValueError("VaR interval needs a theta_fit")
        sd = math.sqrt(theta_fit.var_hat)
        if sd == 0.0:
            theta_star = np.full(draws, theta_fit.theta_hat)
        else:
            theta_star = _truncated_normal_draws(
                rng,
                np.array([theta_fit.theta_hat]),
                np.array([[sd]]),
                lambda d: (d[:, 0] > 0.0) & (d[:, 0] <= 1.0),
                draws,
                1,
            )[:, 0]
    samples = _truncated_normal_draws(
        rng, np.array([p.gamma, p.mu, p.sigma]), chol, in_domain, draws, 3
    )
    g_s, mu_s, sig_s = samples[:, 0], samples[:, 1], samples[:, 2]
    if query.tau_E is not None:
        nl = query.m * theta_star * (-math.log(query.tau_E))
    else:
        nl = _rl_neglog(query.tau, query.m, query.m_star)
    vals = mu_s + sig_s * _quantile_from_t(-np.log(nl), g_s)
    lo, hi = np.quantile(vals, [query.alpha / 2.0, 1.0 - query.alpha / 2.0])
    return float(lo), float(hi)
