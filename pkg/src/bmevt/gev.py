"""Generalized extreme value distribution numerics.

Standardized GEV cdf G_g(z) = exp(-(1 + g*z)^(-1/g)) for 1 + g*z > 0,
with the g = 0 (Gumbel) limit exp(-exp(-z)).  Everything here reduces to
the transformed variable w = log(1 + g*z)/g, which tends to z as g -> 0:

    cdf         = exp(-exp(-w))
    log density = -exp(-w) - (1 + g)*w - log(sigma)

Quantiles use Q_g(p) = expm1(g*t)/g with t = -log(-log p), so a single
expression covers heavy (g > 0), light (g = 0) and short (g < 0) tails.
Below a small-|g| threshold the exact expressions are replaced by short
Taylor expansions to avoid cancellation; the switch is exercised by the
continuity tests.

All functions accept scalars or numpy arrays and broadcast.
"""

import math
from dataclasses import dataclass

import numpy as np

# Exact formulas are used for |g| >= GAMMA_EPS, series expansions below.
# At the crossover both branches agree to ~1e-12.
GAMMA_EPS = 1e-6

# The quantile's shape derivative switches on u = g*t instead (t can be
# as large as ~7 for p near 1, so the u scale is what cancellation sees).
_U_EPS = 1e-3


@dataclass(frozen=True)
class GevParams:
    """GEV parameter triple (shape, location, scale).

    gamma is dimensionless; mu and sigma are in data units; sigma > 0.
    Any real gamma can be evaluated, but fitting restricts gamma to
    (-1/2, k^q) where the MLE is well behaved.
    """

    gamma: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma) or not np.isfinite(self.mu) or not np.isfinite(self.sigma):
            raise ValueError("GEV parameters must be finite")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class SupportInfo:
    """Support interval of a GEV distribution (endpoints may be +-inf)."""

    lower: float
    upper: float


def gev_support(params):
    """Support of the GEV with the given parameters.

    gamma > 0: [mu - sigma/gamma, inf); gamma < 0: (-inf, mu - sigma/gamma];
    gamma = 0: the whole line.
    """
    g = params.gamma
    if g > 0:
        return SupportInfo(params.mu - params.sigma / g, math.inf)
    if g < 0:
        return SupportInfo(-math.inf, params.mu - params.sigma / g)
    return SupportInfo(-math.inf, math.inf)


def _w_transform(z, gamma):
    """log(1 + gamma*z)/gamma with its gamma -> 0 limit z.

    Only valid where 1 + gamma*z > 0; callers mask the rest.
    """
    z = np.asarray(z, dtype=float)
    if abs(gamma) < GAMMA_EPS:
        # series of log1p(g*z)/g in g; |g*z| is tiny for any sane z here
        return z * (1.0 - 0.5 * gamma * z + gamma * gamma * z * z / 3.0)
    return np.log1p(gamma * z) / gamma


def gev_cdf(z, gamma):
    """Standardized GEV cdf G_gamma(z).

    Returns exp(-(1+gamma*z)^(-1/gamma)) with the gamma=0 limit
    exp(-exp(-z)); 0 below the lower support endpoint (gamma > 0) and 1
    above the upper endpoint (gamma < 0).
    """
    z = np.asarray(z, dtype=float)
    if np.any(np.isnan(z)) or np.isnan(gamma):
        raise ValueError("NaN input to gev_cdf")
    out_of_support = 1.0 + gamma * z <= 0.0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w = np.where(out_of_support, 1.0, _w_transform(z, gamma))
        cdf = np.exp(-np.exp(-w))
    if gamma > 0:
        cdf = np.where(out_of_support, 0.0, cdf)
    elif gamma < 0:
        cdf = np.where(out_of_support, 1.0, cdf)
    return cdf if cdf.ndim else float(cdf)


def _log_density_raw(x, gamma, mu, sigma):
    """Vectorized GEV log density; -inf off support.  No validation."""
    z = (np.asarray(x, dtype=float) - mu) / sigma
    out = np.full(z.shape, -np.inf)
    ok = 1.0 + gamma * z > 0.0
    if np.any(ok):
        w = _w_transform(z[ok], gamma)
        out[ok] = -np.exp(-w) - (1.0 + gamma) * w - math.log(sigma)
    return out


def gev_log_density(x, params):
    """Log density of the GEV with parameters (gamma, mu, sigma).

    Returns log g_gamma((x - mu)/sigma) - log sigma where the density is
    positive and -inf outside the support, so likelihood code can let an
    optimizer or sampler reject naturally instead of raising.
    """
    out = _log_density_raw(x, params.gamma, params.mu, params.sigma)
    return out if out.ndim else float(out)


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise ValueError("probability must lie strictly in (0, 1)")
    return p


def _quantile_from_t(t, gamma):
    """Q_gamma as a function of t = -log(-log p).

    gamma may be an array (one shape per draw); expm1(u)/gamma is stable
    down to the underflow limit, so the series branch is only needed to
    cover gamma = 0 itself in the array case.
    """
    t = np.asarray(t, dtype=float)
    g = np.asarray(gamma, dtype=float)
    if g.ndim == 0:
        g = float(g)
        if abs(g) < GAMMA_EPS:
            return t + 0.5 * g * t * t + g * g * t * t * t / 6.0
        return np.expm1(g * t) / g
    safe = np.where(g == 0.0, 1.0, g)
    exact = np.expm1(safe * t) / safe
    return np.where(g == 0.0, np.broadcast_to(t, exact.shape), exact)


def gev_quantile(p, gamma):
    """Quantile function of the standardized GEV.

    Q_gamma(p) = ((-log p)^(-gamma) - 1)/gamma, with the gamma=0 limit
    -log(-log p).  Strictly increasing in p.
    """
    p = _check_prob(p)
    t = -np.log(-np.log(p))
    out = _quantile_from_t(t, gamma)
    return out if out.ndim else float(out)


def gev_quantile_neglog(neglog_p, gamma):
    """Quantile at the probability whose negative log is neglog_p.

    Same as gev_quantile(exp(-neglog_p), gamma) but keeps full precision
    when the probability is very close to 1 (neglog_p near 0), which is
    exactly where return levels and extreme quantiles live.
    """
    nl = np.asarray(neglog_p, dtype=float)
    if np.any(~(nl > 0.0)):
        raise ValueError("neglog_p must be positive")
    out = _quantile_from_t(-np.log(nl), gamma)
    return out if out.ndim else float(out)


def _h_series(u):
    # (u*e^u - e^u + 1)/u^2 = 1/2 + u/3 + u^2/8 + u^3/30 + u^4/144 + ...
    return 0.5 + u / 3.0 + u * u / 8.0 + u**3 / 30.0 + u**4 / 144.0


def _dgamma_from_t(t, gamma):
    """d/dgamma of Q_gamma as a function of t = -log(-log p).

    Writing u = gamma*t, the derivative is t^2 * h(u) with
    h(u) = ((u - 1)e^u + 1)/u^2; h has a removable singularity at 0
    (h(0) = 1/2) handled by its power series.
    """
    t = np.asarray(t, dtype=float)
    u = gamma * t
    small = np.abs(u) < _U_EPS
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        h_exact = ((u - 1.0) * np.exp(u) + 1.0) / (u * u)
    h = np.where(small, _h_series(np.where(small, u, 0.0)), h_exact)
    return t * t * h


def gev_quantile_dgamma(p, gamma):
    """Derivative of gev_quantile with respect to gamma.

    At gamma = 0 this is (log(-log p))^2 / 2; near zero a series in
    u = gamma * t keeps the removable singularity stable.  Checked
    against central finite differences in the test suite.
    """
    p = _check_prob(p)
    t = -np.log(-np.log(p))
    out = _dgamma_from_t(t, gamma)
    return out if out.ndim else float(out)


def gev_quantile_dgamma_neglog(neglog_p, gamma):
    """Shape derivative of the quantile, parametrized like gev_quantile_neglog."""
    nl = np.asarray(neglog_p, dtype=float)
    if np.any(~(nl > 0.0)):
        raise ValueError("neglog_p must be positive")
    out = _dgamma_from_t(-np.log(nl), gamma)
    return out if out.ndim else float(out)


def gev_model_quantile(p, params):
    """p-quantile of the GEV with parameters (gamma, mu, sigma)."""
    return params.mu + params.sigma * gev_quantile(p, params.gamma)


def _phi1(u):
    # (u/(1+u) - log1p(u))/u^2, the scaled dw/dgamma; removable
    # singularity at 0 with value -1/2
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _U_EPS
    us = np.where(small, 0.0, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = (us / (1.0 + us) - np.log1p(us)) / (us * us)
    series = -0.5 + u * (2.0 / 3.0 + u * (-0.75 + u * (0.8 - u * 5.0 / 6.0)))
    return np.where(small, series, exact)


def _phi2(u):
    # scaled d^2 w/dgamma^2: -1/(u(1+u)^2) - 2*phi1(u)/u, value 2/3 at 0
    u = np.asarray(u, dtype=float)
    small = np.abs(u) < _U_EPS
    us = np.where(small, 1.0, u)
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = -1.0 / (us * (1.0 + us) ** 2) - 2.0 * _phi1(us) / us
    series = 2.0 / 3.0 + u * (-1.5 + u * (2.4 + u * (-10.0 / 3.0 + u * 30.0 / 7.0)))
    return np.where(small, series, exact)


def gev_log_density_hessian(x, gamma, mu, sigma):
    """Analytic Hessian of the log density in (gamma, mu, sigma).

    Vectorized over x: returns an array of shape (3, 3) + x.shape, nan
    off the support.  Writing s = (x-mu)/sigma, u = gamma*s and
    w = log1p(u)/gamma, everything reduces to V = e^-w and the first two
    gamma-derivatives of w, which carry removable singularities at u = 0
    handled by series.  Used as the expected-information integrand,
    where finite differencing would step outside the support near the
    endpoint nodes.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    s = (x - mu) / sigma
    u = gamma * s
    a = 1.0 + u
    ok = a > 0.0
    sm = np.where(ok, s, 0.0)
    um = np.where(ok, u, 0.0)
    am = np.where(ok, a, 1.0)
    w = _w_transform(sm, gamma) if abs(gamma) < GAMMA_EPS else np.log1p(um) / gamma
    v = np.exp(-w)
    l_w = v - (1.0 + gamma)
    w_g = sm * sm * _phi1(um)
    w_gg = sm**3 * _phi2(um)
    l_s = l_w / am
    l_ss = -(v + gamma * l_w) / (am * am)
    l_gs = (-v * w_g - 1.0) / am - l_w * sm / (am * am)
    l_gg = -v * w_g * w_g - 2.0 * w_g + l_w * w_gg
    hess = np.empty((3, 3) + x.shape)
    hess[0, 0] = l_gg
    hess[0, 1] = hess[1, 0] = -l_gs / sigma
    hess[0, 2] = hess[2, 0] = -sm * l_gs / sigma
    hess[1, 1] = l_ss / sigma**2
    hess[1, 2] = hess[2, 1] = (sm * l_ss + l_s) / sigma**2
    hess[2, 2] = (1.0 + sm * sm * l_ss + 2.0 * sm * l_s) / sigma**2
    hess[:, :, ~ok] = np.nan
    return hess[:, :, 0] if scalar else hess
