import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import dense_posterior, matern52

from coat_tuner.errors import ConfigError, InputError, NumericalError
from coat_tuner.gp import BetaSchedule, GpModel, KernelParams, beta_at, cholesky_with_jitter, kernel_eval
from coat_tuner.grid import ParamGrid


def test_kernel_at_zero_is_variance():
    assert kernel_eval(KernelParams(1.0, 0.1), 0.0) == 1.0
    assert kernel_eval(KernelParams(2.5, 0.3), 0.0) == 2.5


def test_kernel_decays():
    kp = KernelParams(1.0, 0.1)
    assert kernel_eval(kp, 10 * 0.1) < 1e-3


def test_kernel_closed_form_at_one_lengthscale():
    # closed form: (1 + sqrt5 + 5/3) exp(-sqrt5)
    expected = (1.0 + math.sqrt(5.0) + 5.0 / 3.0) * math.exp(-math.sqrt(5.0))
    got = kernel_eval(KernelParams(1.0, 0.1), 0.1)
    assert got == pytest.approx(expected, rel=1e-14)
    assert got == pytest.approx(0.5239941088318203, rel=1e-14)
    assert got == pytest.approx(matern52(0.1, 1.0, 0.1), rel=1e-14)


def test_kernel_strictly_decreasing_and_bounded():
    kp = KernelParams(1.7, 0.2)
    r = np.linspace(0, 3, 301)
    vals = np.array([kernel_eval(kp, x) for x in r])
    assert np.all(np.diff(vals) < 0)
    assert np.all((vals > 0) & (vals <= 1.7))


def test_kernel_rejects_negative_distance_and_bad_params():
    with pytest.raises(InputError):
        kernel_eval(KernelParams(), -0.1)
    with pytest.raises(ConfigError):
        KernelParams(variance=0.0)
    with pytest.raises(ConfigError):
        KernelParams(lengthscale=-1.0)


def test_anisotropic_lengthscale():
    kp = KernelParams(1.0, (0.1, 1.0))
    a = np.array([[0.0, 0.0]])
    b = np.array([[0.1, 0.0], [0.0, 0.1]])
    k = kp.cross(a, b)[0]
    assert k[0] == pytest.approx(matern52(1.0, 1.0, 1.0))
    assert k[1] == pytest.approx(matern52(0.1, 1.0, 1.0))


def _grid1d(n=21):
    return ParamGrid((n,), (0.0,), (1.0,))


def test_prior_posterior():
    g = _grid1d()
    mu, sigma = GpModel.empty(KernelParams(2.0, 0.1), 0.01, g).posterior()
    assert np.all(mu == 0.0)
    np.testing.assert_allclose(sigma, math.sqrt(2.0))


def test_single_observation_mean():
    g = _grid1d()
    m = GpModel.empty(KernelParams(1.0, 0.1), 0.01, g).add_observation(5, 1.0)
    mu, _ = m.posterior()
    assert mu[5] == pytest.approx(1.0 / 1.01, abs=1e-14)


def test_noiseless_limit_interpolates():
    g = _grid1d()
    m = GpModel.empty(KernelParams(1.0, 0.1), 1e-12, g).add_observation(7, 0.37)
    mu, sigma = m.posterior()
    assert mu[7] == pytest.approx(0.37, abs=1e-6)
    assert sigma[7] < 1e-5


def test_duplicate_observation_averages():
    g = _grid1d()
    m = GpModel.empty(KernelParams(1.0, 0.1), 0.01, g).add_observation(3, 1.0).add_observation(3, 2.0)
    mu, _ = m.posterior()
    assert 1.0 < mu[3] < 2.0


def test_three_observations_match_dense_oracle():
    g = _grid1d(31)
    m = GpModel.empty(KernelParams(1.0, 0.1), 0.01, g)
    xs, ys = [2, 15, 16], [0.3, -1.0, 0.8]
    for x, y in zip(xs, ys):
        m = m.add_observation(x, y)
    mu, sigma = m.posterior()
    mu_o, var_o = dense_posterior(g.coords, xs, ys, 1.0, 0.1, 0.01)
    np.testing.assert_allclose(mu, mu_o, atol=1e-8, rtol=0)
    np.testing.assert_allclose(sigma ** 2, var_o, atol=1e-8, rtol=0)


def test_incremental_equals_refit():
    g = ParamGrid.uniform(2, 9)
    rng = np.random.default_rng(3)
    m = GpModel.empty(KernelParams(1.0, 0.2), 0.02, g)
    for _ in range(25):
        m = m.add_observation(int(rng.integers(g.total)), float(rng.normal()))
    mu_a, s_a = m.posterior()
    mu_b, s_b = m.refit().posterior()
    np.testing.assert_allclose(mu_a, mu_b, atol=1e-8, rtol=0)
    np.testing.assert_allclose(s_a, s_b, atol=1e-8, rtol=0)


def test_model_is_a_value():
    g = _grid1d()
    m0 = GpModel.empty(KernelParams(), 0.01, g)
    m1 = m0.add_observation(4, 1.0)
    assert m0.n_obs == 0 and m1.n_obs == 1
    assert np.all(m0.posterior()[0] == 0.0)


def test_rejects_non_finite_and_bad_index():
    m = GpModel.empty(KernelParams(), 0.01, _grid1d())
    with pytest.raises(InputError):
        m.add_observation(0, math.nan)
    with pytest.raises(InputError):
        m.add_observation(0, math.inf)
    with pytest.raises(InputError):
        m.add_observation(99, 1.0)
    with pytest.raises(ConfigError):
        GpModel.empty(KernelParams(), 0.0, _grid1d())


def test_jitter_protocol():
    k = np.ones((3, 3))  # rank one, singular without noise
    chol, jitter = cholesky_with_jitter(k, 0.0, 1.0)
    assert jitter == pytest.approx(1e-8)
    np.testing.assert_allclose(chol @ chol.T, k + jitter * np.eye(3), atol=1e-12)
    bad = np.array([[1.0, 2.0], [2.0, 1.0]])  # indefinite: no small jitter helps
    with pytest.raises(NumericalError, match="3 jitter retries"):
        cholesky_with_jitter(bad, 0.0, 1.0)


def test_beta_fixed():
    b = BetaSchedule("fixed", 5.0)
    assert [beta_at(b, n) for n in (1, 2, 70)] == [5.0, 5.0, 5.0]


def test_beta_theoretical_example():
    b = BetaSchedule("theoretical", rkhs_bound=1.0, noise_sigma=0.1, delta=0.1, info_gain=lambda n: 0.0)
    assert beta_at(b, 1) == pytest.approx((1 + 0.4 * math.sqrt(1 + math.log(10))) ** 2, rel=1e-14)


def test_beta_theoretical_nondecreasing():
    b = BetaSchedule("theoretical", rkhs_bound=2.0, noise_sigma=0.05, delta=0.05,
                     info_gain=lambda n: 3.0 * math.log1p(n) ** 3)
    vals = [beta_at(b, n) for n in range(1, 200)]
    assert all(a <= c for a, c in zip(vals, vals[1:]))


def test_beta_errors():
    with pytest.raises(ConfigError):
        BetaSchedule("theoretical", delta=1.0)
    with pytest.raises(ConfigError):
        BetaSchedule("theoretical", delta=0.0)
    with pytest.raises(ConfigError):
        BetaSchedule("other")
    with pytest.raises(InputError):
        beta_at(BetaSchedule(), 0)


@settings(max_examples=40, deadline=None)
@given(
    st.integers(2, 40),
    st.lists(st.tuples(st.integers(0, 39), st.floats(-3, 3)), min_size=1, max_size=15),
    st.floats(0.05, 0.5),
    st.floats(1e-3, 0.5),
)
def test_sigma_never_increases(n, obs, ls, noise):
    g = _grid1d(n)
    m = GpModel.empty(KernelParams(1.0, ls), noise, g)
    prev = m.posterior()[1]
    for x, y in obs:
        m = m.add_observation(x % n, y)
        cur = m.posterior()[1]
        assert np.all(cur <= prev + 1e-8)
        assert np.all(cur >= 0)
        prev = cur


def test_confidence_bounds_cover_rkhs_function():
    """Bounds from a correct beta contain a known RKHS function in most trials.

    The test function is a kernel expansion with RKHS norm <= B and the
    evaluations are noiseless (the model still assumes noise ``sigma``).
    The information-gain bound is
    Hadamard's inequality, ``gamma_n <= n/2 log(1 + variance / sigma^2)``,
    which holds for any n points.  Coverage failures (anywhere on the grid,
    at any step) must stay below 2 delta over 500 trials.
    """
    g = ParamGrid((40,), (0.0,), (1.0,))
    kp = KernelParams(1.0, 0.1)
    sigma, delta, bound = 0.05, 0.1, 1.0
    rng = np.random.default_rng(11)
    beta = BetaSchedule("theoretical", rkhs_bound=bound, noise_sigma=sigma, delta=delta,
                        info_gain=lambda n: 0.5 * n * math.log1p(1.0 / sigma ** 2))
    failures = 0
    trials = 500
    for _ in range(trials):
        centres = rng.random(4)
        w = rng.normal(size=4)
        gram = matern52(np.abs(centres[:, None] - centres[None, :]), 1.0, 0.1)
        w *= bound / math.sqrt(float(w @ gram @ w))
        q = matern52(np.abs(g.coords[:, 0][:, None] - centres[None, :]), 1.0, 0.1) @ w
        m = GpModel.empty(kp, sigma ** 2, g)
        bad = False
        for n in range(1, 11):
            x = int(rng.integers(g.total))
            m = m.add_observation(x, float(q[x]))
            mu, s = m.posterior()
            root = math.sqrt(beta_at(beta, n))
            if np.any(q < mu - root * s) or np.any(q > mu + root * s):
                bad = True
                break
        failures += bad
    assert failures / trials < 2 * delta
