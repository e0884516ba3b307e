import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from bmevt.gev import (
    GevParams,
    gev_cdf,
    gev_log_density,
    gev_log_density_hessian,
    gev_model_quantile,
    gev_quantile,
    gev_quantile_dgamma,
    gev_quantile_dgamma_neglog,
    gev_quantile_neglog,
    gev_support,
)


def test_support_endpoints():
    assert gev_support(GevParams(0.5, 0.0, 1.0)).lower == -2.0
    assert gev_support(GevParams(0.5, 0.0, 1.0)).upper == math.inf
    s = gev_support(GevParams(-0.25, 1.0, 2.0))
    assert s.lower == -math.inf and s.upper == 1.0 + 2.0 / 0.25
    s = gev_support(GevParams(0.0, 3.0, 1.0))
    assert s.lower == -math.inf and s.upper == math.inf


def test_cdf_hand_values():
    assert gev_cdf(0.0, 0.0) == pytest.approx(math.exp(-1.0), abs=1e-12)
    assert gev_cdf(1.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    # above the upper endpoint -1/gamma = 2 the cdf saturates at 1
    assert gev_cdf(2.5, -0.5) == 1.0
    assert gev_cdf(-3.0, 0.5) == 0.0


def test_cdf_rejects_nan():
    with pytest.raises(ValueError):
        gev_cdf(float("nan"), 0.2)
    with pytest.raises(ValueError):
        gev_cdf(1.0, float("nan"))


def test_log_density_hand_values():
    assert gev_log_density(0.0, GevParams(0.0, 0.0, 1.0)) == pytest.approx(-1.0, abs=1e-12)
    assert gev_log_density(-2.0, GevParams(1.0, 0.0, 1.0)) == -math.inf
    # g_1(1) = e^(-1/2) / 4
    assert gev_log_density(1.0, GevParams(1.0, 0.0, 1.0)) == pytest.approx(
        -0.5 - math.log(4.0), abs=1e-12
    )
    # scale shifts the log density by -log sigma
    assert gev_log_density(0.0, GevParams(0.0, 0.0, 2.0)) == pytest.approx(
        -1.0 - math.log(2.0), abs=1e-12
    )


def test_density_integrates_to_one():
    for gamma in (-0.3, 0.0, 0.5, 1.0):
        params = GevParams(gamma, 0.0, 1.0)
        sup = gev_support(params)
        lo = sup.lower if math.isfinite(sup.lower) else -60.0
        hi = sup.upper if math.isfinite(sup.upper) else np.inf
        total, _ = quad(
            lambda x: math.exp(gev_log_density(x, params)),
            lo, hi, limit=400, epsabs=1e-11, epsrel=1e-11,
        )
        assert abs(total - 1.0) < 1e-6


def test_quantile_hand_values():
    for gamma in (-0.3, 0.0, 0.7, 2.0):
        assert gev_quantile(math.exp(-1.0), gamma) == pytest.approx(0.0, abs=1e-12)
    assert gev_quantile(0.9, 0.0) == pytest.approx(-math.log(-math.log(0.9)), abs=1e-9)
    assert gev_quantile(0.9, 0.0) == pytest.approx(2.250367, abs=1e-6)
    # independent root-find on the cdf
    root = brentq(lambda z: gev_cdf(z, 1.0) - 0.9, 1e-9, 100.0, xtol=1e-12)
    assert gev_quantile(0.9, 1.0) == pytest.approx(root, abs=1e-9)
    assert gev_quantile(0.9, 1.0) == pytest.approx(8.491, abs=1e-3)


def test_quantile_rejects_bad_probability():
    for p in (0.0, 1.0, -0.1, 1.1, float("nan")):
        with pytest.raises(ValueError):
            gev_quantile(p, 0.2)
    with pytest.raises(ValueError):
        gev_quantile_neglog(0.0, 0.2)
    with pytest.raises(ValueError):
        gev_quantile_dgamma_neglog(-1.0, 0.2)


def test_model_quantile_root_find_oracle():
    params = GevParams(0.2, 1.0, 0.5)
    val = gev_model_quantile(0.99, params)
    assert val == pytest.approx(1.0 + 0.5 * gev_quantile(0.99, 0.2), abs=1e-12)
    root = brentq(
        lambda x: gev_cdf((x - 1.0) / 0.5, 0.2) - 0.99, -1.0, 50.0, xtol=1e-12
    )
    assert val == pytest.approx(root, abs=1e-9)
    assert gev_model_quantile(math.exp(-1.0), GevParams(0.4, 3.0, 2.0)) == pytest.approx(3.0, abs=1e-12)


def test_round_trip_cdf_quantile():
    gammas = np.linspace(-0.45, 5.0, 40)
    probs = np.concatenate([[1e-6, 1 - 1e-6], np.linspace(0.001, 0.999, 41)])
    worst = 0.0
    for g in gammas:
        back = gev_cdf(gev_quantile(probs, g), g)
        worst = max(worst, float(np.max(np.abs(back - probs))))
    assert worst < 1e-10


def test_quantile_neglog_matches_plain():
    for g in (-0.4, 0.0, 0.3, 2.0):
        for p in (0.01, 0.5, 0.99):
            assert gev_quantile_neglog(-math.log(p), g) == pytest.approx(
                gev_quantile(p, g), rel=1e-12
            )
    # the neglog form survives p indistinguishable from 1
    assert math.isfinite(gev_quantile_neglog(1e-300, 0.3))


def test_dgamma_hand_values():
    for g in (-0.3, 0.0, 1.5):
        assert gev_quantile_dgamma(math.exp(-1.0), g) == pytest.approx(0.0, abs=1e-12)
    # at gamma=0 the derivative is (log(-log p))^2 / 2
    assert gev_quantile_dgamma(math.exp(-math.e), 0.0) == pytest.approx(0.5, abs=1e-12)
    p, t = 0.9, -math.log(-math.log(0.9))
    assert gev_quantile_dgamma(p, 0.0) == pytest.approx(t * t / 2.0, abs=1e-12)


def test_dgamma_single_point_finite_difference():
    h = 1e-5
    fd = (gev_quantile(0.9, 0.3 + h) - gev_quantile(0.9, 0.3 - h)) / (2 * h)
    assert abs(gev_quantile_dgamma(0.9, 0.3) - fd) < 1e-6


def test_dgamma_finite_difference_grid():
    # 20x20 grid across the fitting range; relative to max(1, |fd|)
    gammas = np.linspace(-0.45, 5.0, 20)
    probs = np.linspace(0.001, 0.999, 20)
    h = 1e-5
    worst = 0.0
    for g in gammas:
        fd = (gev_quantile(probs, g + h) - gev_quantile(probs, g - h)) / (2 * h)
        err = np.abs(gev_quantile_dgamma(probs, g) - fd) / np.maximum(1.0, np.abs(fd))
        worst = max(worst, float(err.max()))
    assert worst < 1e-6


def test_gamma_to_zero_continuity():
    probs = np.linspace(0.001, 0.999, 50)
    eps = 1e-9
    for sign in (+1.0, -1.0):
        g = sign * eps
        assert np.max(np.abs(gev_quantile(probs, g) - gev_quantile(probs, 0.0))) < 1e-6
        assert np.max(np.abs(gev_quantile_dgamma(probs, g) - gev_quantile_dgamma(probs, 0.0))) < 1e-6
        z = gev_quantile(probs, 0.0)
        assert np.max(np.abs(gev_cdf(z, g) - gev_cdf(z, 0.0))) < 1e-6


def test_log_density_gamma_continuity():
    x = np.linspace(-2.0, 6.0, 30)
    a = gev_log_density(x, GevParams(1e-9, 0.0, 1.0))
    b = gev_log_density(x, GevParams(0.0, 0.0, 1.0))
    assert np.max(np.abs(a - b)) < 1e-6


@settings(deadline=None)
@given(
    st.floats(min_value=-0.45, max_value=5.0),
    st.floats(min_value=0.001, max_value=0.995),
    st.floats(min_value=1e-4, max_value=0.004),
)
def test_quantile_strictly_increasing(gamma, p, dp):
    assert gev_quantile(p + dp, gamma) > gev_quantile(p, gamma)


@settings(deadline=None)
@given(
    st.floats(min_value=-0.45, max_value=5.0),
    st.floats(min_value=-50.0, max_value=50.0),
    st.floats(min_value=1e-3, max_value=10.0),
)
def test_cdf_monotone_and_bounded(gamma, z, dz):
    lo = gev_cdf(z, gamma)
    hi = gev_cdf(z + dz, gamma)
    assert 0.0 <= lo <= hi <= 1.0


def _fd_hess_entry(x, gamma, mu, sigma, i, j, h):
    # central second difference of the log density in parameter directions
    def f(eps_i, eps_j):
        v = [gamma, mu, sigma]
        v[i] += eps_i
        v[j] += eps_j
        return gev_log_density(x, GevParams(*v))

    if i == j:
        return (f(h, 0.0) - 2.0 * f(0.0, 0.0) + f(-h, 0.0)) / (h * h)
    return (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h)


def test_log_density_hessian_vs_finite_differences():
    cases = [
        (0.7, -0.4, 0.0, 1.0),
        (1.3, -0.1, 0.5, 2.0),
        (0.4, 0.0, 0.0, 1.0),
        (2.0, 0.2, -1.0, 0.7),
        (5.0, 1.0, 0.0, 1.0),
        (30.0, 3.0, 2.0, 4.0),
    ]
    for x, g, m, s in cases:
        hess = gev_log_density_hessian(x, g, m, s)
        assert np.allclose(hess, hess.T)
        for i in range(3):
            for j in range(i, 3):
                fd = _fd_hess_entry(x, g, m, s, i, j, 3e-5)
                scale = max(1.0, abs(fd))
                assert abs(hess[i, j] - fd) / scale < 1e-4, (x, g, i, j)


def test_log_density_hessian_off_support_nan():
    hess = gev_log_density_hessian(np.array([-2.0, 1.0]), 1.0, 0.0, 1.0)
    assert np.all(np.isnan(hess[:, :, 0]))
    assert np.all(np.isfinite(hess[:, :, 1]))
    assert np.all(np.isnan(gev_log_density_hessian(-2.0, 1.0, 0.0, 1.0)))


def test_quantile_array_gamma():
    # vectorized over one gamma per draw, as the posterior pushforwards use it
    gs = np.array([-0.2, 0.0, 0.5, 1.0])
    vals = gev_quantile_neglog(np.full(4, 0.10536051565782628), gs)
    for i, g in enumerate(gs):
        assert vals[i] == pytest.approx(gev_quantile(0.9, float(g)), rel=1e-12)
