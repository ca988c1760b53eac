import math

import numpy as np
import pytest

from ruling_shock import factor as fac
from ruling_shock.errors import ValidationError
from ruling_shock.panel import HorizonPanel, ScaleMatrix

N = 100_000


def hp(values):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return HorizonPanel(0, values, np.arange(1, len(values) + 1))


def zscore(x, mean, var):
    return (np.mean(x) - mean) / math.sqrt(var / len(x))


def test_prior_default():
    assert fac.FactorPriors().tau == 1.0
    with pytest.raises(ValidationError):
        fac.FactorPriors(tau=0.0)


def test_loadings_without_events_are_prior(rng):
    fs = fac.FactorState(np.zeros(N), np.zeros(0), np.zeros(0, dtype=np.int64))
    lam = fac.sample_loadings(fs, hp(np.zeros((3, N))), ScaleMatrix(np.ones(N)), 1.0,
                              fac.FactorPriors(), rng)
    assert abs(zscore(lam, 0.0, 1.0)) < 3
    assert abs(np.var(lam) - 1.0) < 4 * math.sqrt(2.0 / N)


def test_single_event_loading_posterior(rng):
    fs = fac.FactorState(np.zeros(N), np.array([1.0]), np.array([0]))
    y = hp(np.full((1, N), 2.0))
    mean, var = fac.loading_moments(fs, y, ScaleMatrix(np.ones(N)), 1.0, fac.FactorPriors())
    np.testing.assert_allclose(mean, 1.0)
    np.testing.assert_allclose(var, 0.5)
    lam = fac.sample_loadings(fs, y, ScaleMatrix(np.ones(N)), 1.0, fac.FactorPriors(), rng)
    assert abs(zscore(lam, 1.0, 0.5)) < 3


def test_doubling_scale_halves_data_precision():
    fs = fac.FactorState(np.zeros(2), np.array([0.7, -1.3]), np.array([0, 1]))
    y = hp([[1.0, 2.0], [0.5, -1.0]])
    _, v1 = fac.loading_moments(fs, y, ScaleMatrix([1.0, 3.0]), 1.0, fac.FactorPriors())
    _, v2 = fac.loading_moments(fs, y, ScaleMatrix([2.0, 6.0]), 1.0, fac.FactorPriors())
    np.testing.assert_allclose(1 / v2 - 1, 0.5 * (1 / v1 - 1), rtol=1e-14)


def test_factors_with_zero_loadings_are_prior(rng):
    fs = fac.FactorState(np.zeros(3), np.zeros(N), np.arange(N))
    f = fac.sample_factors(fs, hp(rng.standard_normal((N, 3))), ScaleMatrix(np.ones(3)), 1.0, rng)
    assert abs(zscore(f, 0.0, 1.0)) < 3


def test_factor_posterior_example(rng):
    fs = fac.FactorState(np.array([1.0]), np.zeros(N), np.arange(N))
    y = hp(np.full((N, 1), 2.0))
    mean, var = fac.factor_moments(fs, y, ScaleMatrix([1.0]), 1.0)
    np.testing.assert_allclose(mean, 1.0)
    assert var == pytest.approx(0.5)
    f = fac.sample_factors(fs, y, ScaleMatrix([1.0]), 1.0, rng)
    assert abs(zscore(f, 1.0, 0.5)) < 3


def test_factor_variance_common_across_events(rng):
    fs = fac.FactorState(np.array([0.3, -2.0]), np.zeros(4), np.arange(4))
    mean, var = fac.factor_moments(fs, hp(rng.standard_normal((4, 2))), ScaleMatrix([1.0, 0.5]), 2.0)
    assert np.ndim(var) == 0
    assert len(np.unique(mean)) == 4


def test_shrinkage_ladder():
    fs = fac.FactorState(np.zeros(3), np.array([1.5, -0.8, 2.0]), np.arange(3))
    y = hp([[2.0, -1.0, 0.5], [-1.0, 0.7, -0.2], [3.0, -1.5, 1.0]])
    means = [np.abs(fac.loading_moments(fs, y, ScaleMatrix([1, 1, 1]), th, fac.FactorPriors())[0])
             for th in (0.01, 0.1, 1.0, 10.0, 100.0, 1e6)]
    means = np.array(means)
    assert np.all(np.diff(means, axis=0) < 0)
    _, var = fac.loading_moments(fs, y, ScaleMatrix([1, 1, 1]), 1e12, fac.FactorPriors())
    np.testing.assert_allclose(var, 1.0, rtol=1e-9)


def test_enforce_sign_flips():
    fs = fac.FactorState(np.array([0.5, 1.0, -0.2]), np.array([2.0, -1.0]), np.array([0, 1]))
    before = np.outer(fs.factors, fs.loadings)
    fs, flipped = fac.enforce_sign(fs, fac.SignRestriction((0, 1)))
    assert flipped
    np.testing.assert_array_equal(fs.loadings, [-0.5, -1.0, 0.2])
    np.testing.assert_array_equal(fs.factors, [-2.0, 1.0])
    np.testing.assert_array_equal(np.outer(fs.factors, fs.loadings), before)


def test_enforce_sign_noop():
    fs = fac.FactorState(np.array([-0.5, 1.0, 9.0]), np.array([2.0]), np.array([0]))
    fs, flipped = fac.enforce_sign(fs, fac.SignRestriction((0,)))
    assert not flipped
    np.testing.assert_array_equal(fs.loadings, [-0.5, 1.0, 9.0])


def test_positive_direction():
    fs = fac.FactorState(np.array([-0.5]), np.array([2.0]), np.array([0]))
    _, flipped = fac.enforce_sign(fs, fac.SignRestriction((0,), direction=1))
    assert flipped and fs.loadings[0] == 0.5


def test_flip_invariants(rng):
    lam = rng.standard_normal(5)
    om = rng.gamma(2, 1, 5)
    np.testing.assert_array_equal(np.outer(lam, lam), np.outer(-lam, -lam))
    np.testing.assert_array_equal(fac.commonality(lam, 0.7, om), fac.commonality(-lam, 0.7, om))


def test_restriction_from_glob():
    labels = ["CISS_DE", "ois_1y", "ciss_it", "spread"]
    r = fac.SignRestriction.from_glob(labels, "*ciss*")
    assert r.target_columns == (0, 2) and r.direction == -1
    with pytest.raises(ValidationError):
        fac.SignRestriction.from_glob(labels, "*vix*")
    with pytest.raises(ValidationError):
        fac.SignRestriction(())


def test_commonality_values():
    assert fac.commonality(np.array([0.0]), 1.0, np.array([1.0]))[0] == 0.0
    assert fac.commonality(np.array([1.0]), 3.0, np.array([1.0]))[0] == pytest.approx(0.25)
    assert fac.commonality(np.array([1.0]), 1.0, np.array([3.0]))[0] == pytest.approx(0.25)


def test_init_factor_reproduces_rank_one_data():
    lam = np.array([1.0, -2.0, 0.5])
    f = np.array([1.5, -0.5, 2.0])
    y = np.zeros((10, 3))
    y[[2, 5, 8]] = np.outer(f, lam)
    y[[0, 1]] = [[1, 1, 1], [-1, -1, -1]]
    fs = fac.init_factor(hp(y), [2, 5, 8])
    np.testing.assert_allclose(np.outer(fs.factors, fs.loadings), np.outer(f, lam), atol=1e-12)
    empty = fac.init_factor(hp(y), [])
    assert len(empty.factors) == 0 and np.all(empty.loadings == 0)


def _log_joint(lam, f, y, sig2, tau):
    resid = y[None, :] - lam * f[:, None]
    return (-0.5 * np.sum(resid ** 2 / sig2, axis=1)
            - 0.5 * np.sum(lam ** 2, axis=1) / tau - 0.5 * f ** 2)


@pytest.mark.slow
def test_gibbs_matches_brute_force_metropolis():
    """One event, two series: alternating conditionals versus random-walk Metropolis."""
    y = np.array([1.2, -0.8])
    om = ScaleMatrix([0.5, 1.5])
    theta1 = 0.8
    sig2 = theta1 * om.omega_sq
    tau = 1.0
    rng = np.random.default_rng(99)

    fs = fac.FactorState(np.array([0.5, -0.5]), np.array([1.0]), np.array([0]))
    panel = hp(y[None, :])
    n = 200_000
    g = np.empty((n, 3))
    for i in range(n):
        fs.loadings = fac.sample_loadings(fs, panel, om, theta1, fac.FactorPriors(tau), rng)
        fs.factors = fac.sample_factors(fs, panel, om, theta1, rng)
        g[i] = fs.loadings[0], fs.loadings[1], fs.factors[0]

    # many independent random-walk chains run side by side
    chains, steps, burn = 4000, 3000, 1000
    lam = rng.standard_normal((chains, 2))
    f = rng.standard_normal(chains)
    lp = _log_joint(lam, f, y, sig2, tau)
    kept = []
    for s in range(steps):
        lam_p = lam + 0.6 * rng.standard_normal((chains, 2))
        f_p = f + 0.6 * rng.standard_normal(chains)
        lp_p = _log_joint(lam_p, f_p, y, sig2, tau)
        ok = np.log(rng.random(chains)) < lp_p - lp
        lam[ok], f[ok], lp[ok] = lam_p[ok], f_p[ok], lp_p[ok]
        if s >= burn and s % 10 == 0:
            kept.append(np.c_[lam, f])
    m = np.concatenate(kept)

    # moments invariant to the joint sign symmetry of (lambda, f)
    def moments(x):
        return np.c_[x[:, 0] * x[:, 2], x[:, 1] * x[:, 2], x[:, 0] ** 2, x[:, 2] ** 2,
                     x[:, 0] * x[:, 1]]

    mg, mm = moments(g), moments(m)
    batches = np.array([b.mean(axis=0) for b in np.array_split(mg, 200)])
    se_g = batches.std(axis=0, ddof=1) / math.sqrt(200)
    se_m = np.array([b.mean(axis=0) for b in np.array_split(mm, 200)]).std(axis=0, ddof=1) / math.sqrt(200)
    z = (mg.mean(axis=0) - mm.mean(axis=0)) / np.sqrt(se_g ** 2 + se_m ** 2)
    assert np.all(np.abs(z) < 4), z
