import warnings

import numpy as np
import pytest

from ruling_shock import factor as fac
from ruling_shock import gibbs, mixture as mix
from ruling_shock import projection as pj
from ruling_shock import synthetic as syn
from ruling_shock.errors import ValidationError
from ruling_shock.panel import demean

from conftest import target_restriction


def fake_draws(h, lam, theta1=None, factors=None, omega=None):
    lam = np.asarray(lam, dtype=float)
    R, M = lam.shape
    return gibbs.Draws(
        horizon=h, mode="mixture", lambda_=lam,
        factors=np.ones((R, 2)) if factors is None else np.asarray(factors, dtype=float),
        theta1_sq=np.ones(R) if theta1 is None else np.asarray(theta1, dtype=float),
        nonempty_count=np.ones(R, dtype=int), c0_trace=np.ones(R), flipped=np.zeros(R, bool),
        nonevent_prob=np.ones(3), variance_path=np.ones(3), origin_indices=np.arange(1, 4),
        omega_sq=np.ones(M) if omega is None else np.asarray(omega, dtype=float),
        theta1_all=np.ones(R), accept_rate=0.3, numerical_rejections=0)


R1 = fac.SignRestriction((0,))


@pytest.fixture(scope="module")
def small():
    data = syn.generate(syn.SyntheticSpec(T=300, M=5, n_events=4, n_target=2, seed=4))
    panel = demean(data.panel)
    return data, panel, target_restriction(panel)


def run_small(small, H=2, workers=1, seed=5, mode="mixture"):
    data, panel, restriction = small
    cfg = gibbs.ChainConfig(burnin=100, draws=150, thin=3, seed=seed, mode=mode)
    return pj.estimate_all(panel, data.events, H, mix.MixturePriors(), fac.FactorPriors(),
                           restriction, cfg, workers=workers)


def test_commonality_arithmetic():
    d = fake_draws(0, [[1.0, 0.0]], theta1=[3.0])
    np.testing.assert_allclose(pj.compute_commonalities(d), [[0.25, 0.0]])


def test_kappa_fixed_point_and_doubling():
    draws = {0: fake_draws(0, [[-2.0, 1.0], [-1.0, 3.0]]), 1: fake_draws(1, [[4.0, -1.0], [2.0, 5.0]])}
    k, ok = pj.scale_factors(draws, R1, 0, 2.0)
    np.testing.assert_allclose(k, [1.0, 2.0])
    assert ok.all()
    res = pj.normalize_shock(draws, R1, 0, 2.0)
    np.testing.assert_allclose(res.irf_draws[1], [[4.0, -1.0], [4.0, 10.0]])
    np.testing.assert_allclose(res.scale_factors, [1.0, 2.0])


def test_target_response_pinned_exactly(small):
    data, panel, restriction = small
    draws = run_small(small)
    res = pj.normalize_shock(draws, restriction, 2, 0.37)
    tgt = res.irf_draws[2][:, list(restriction.target_columns)].mean(axis=1)
    np.testing.assert_allclose(tgt, -0.37, rtol=1e-14)


def test_single_target_series_pinned():
    lam = np.random.default_rng(0).standard_normal((50, 1))
    draws = {h: fake_draws(h, lam * (h + 1)) for h in range(3)}
    res = pj.normalize_shock(draws, R1, 1, 1.5)
    np.testing.assert_allclose(res.irf_draws[1][:, 0], -1.5, rtol=1e-14)


def test_joint_sign_flip_leaves_irf_unchanged():
    rng = np.random.default_rng(1)
    lam = {h: rng.standard_normal((40, 3)) for h in range(3)}
    flip = np.where(rng.random(40) < 0.5, -1.0, 1.0)[:, None]
    a = pj.normalize_shock({h: fake_draws(h, lam[h]) for h in lam}, R1, 2, 1.0)
    b = pj.normalize_shock({h: fake_draws(h, lam[h] * flip) for h in lam}, R1, 2, 1.0)
    for h in lam:
        np.testing.assert_allclose(a.irf_draws[h], b.irf_draws[h], rtol=1e-14)


def test_negated_shock_negates_every_response():
    rng = np.random.default_rng(2)
    draws = {h: fake_draws(h, rng.standard_normal((40, 3))) for h in range(3)}
    pos = pj.normalize_shock(draws, R1, 1, 0.8)
    neg = pj.normalize_shock(draws, R1, 1, -0.8)
    for h in draws:
        np.testing.assert_array_equal(neg.irf_draws[h], -pos.irf_draws[h])
    np.testing.assert_allclose(neg.irf[..., 2], -pos.irf[..., 2], rtol=1e-12, atol=1e-15)


def test_commonality_uses_unscaled_draws():
    lam = np.array([[-1.0, 2.0], [-0.1, 0.4], [-3.0, 1.0]])
    draws = {0: fake_draws(0, lam, theta1=[1.0, 2.0, 0.5], omega=[1.0, 4.0])}
    res = pj.normalize_shock(draws, R1, 0, 10.0)
    np.testing.assert_allclose(res.commonality[0], pj.median_commonality(draws[0]))
    scaled = fac.commonality(res.irf_draws[0], draws[0].theta1_sq, draws[0].omega_sq)
    assert not np.allclose(np.median(scaled, axis=0), res.commonality[0])


def test_near_zero_target_draws_dropped():
    lam = np.array([[1.0, 0.0], [0.0, 5.0], [-2.0, 1.0]])
    with pytest.warns(UserWarning, match="dropped"):
        res = pj.normalize_shock({0: fake_draws(0, lam)}, R1, 0, 1.0)
    assert res.dropped == 1
    np.testing.assert_array_equal(res.kept, [0, 2])
    assert res.irf_draws[0].shape == (2, 2)


def test_no_warning_below_one_percent():
    lam = np.ones((200, 1))
    lam[0] = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = pj.normalize_shock({0: fake_draws(0, lam)}, R1, 0, 1.0)
    assert res.dropped == 1


def test_missing_reference_horizon():
    with pytest.raises(ValidationError):
        pj.normalize_shock({0: fake_draws(0, [[1.0]])}, R1, 10, 1.0)


def test_reference_magnitude(small):
    data, panel, restriction = small
    avg = panel.values[:, [0, 1]].mean(axis=1)
    assert pj.reference_magnitude(panel, restriction) == pytest.approx(np.std(avg, ddof=1))


def test_factor_quantiles_raw_and_scaled():
    f = np.array([[1.0, np.nan], [2.0, np.nan], [3.0, np.nan]])
    d = {0: fake_draws(0, [[-1.0], [-0.5], [-0.25]], factors=f)}
    raw = pj.factor_at_events(d, levels=(0.5,))
    assert raw.shape == (2, 1, 1)
    assert raw[0, 0, 0] == 2.0 and np.isnan(raw[1, 0, 0])
    k, _ = pj.scale_factors(d, R1, 0, 1.0)
    scaled = pj.factor_at_events(d, levels=(0.5,), kappa=k)
    # lambda * f is unchanged when f is divided by kappa
    np.testing.assert_allclose(scaled[0, 0, 0], np.median(f[:, 0] / k))


def test_interval_width():
    q = np.array([[[0.0, 1.0, 2.0, 3.0, 5.0]]])
    assert pj.interval_width(q, gibbs.DEFAULT_LEVELS)[0, 0] == 5.0


def test_horizon_bounds(small):
    data, panel, restriction = small
    with pytest.raises(ValidationError):
        pj.estimate_all(panel, data.events, panel.T - 1, mix.MixturePriors(), fac.FactorPriors(),
                        restriction, gibbs.ChainConfig())


def test_zero_horizon_single_chain(small):
    draws = run_small(small, H=0)
    assert list(draws) == [0]


def test_serial_and_parallel_bit_exact(small):
    a = run_small(small, H=3, workers=1)
    b = run_small(small, H=3, workers=3)
    assert list(a) == list(b) == [0, 1, 2, 3]
    for h in a:
        np.testing.assert_array_equal(a[h].lambda_, b[h].lambda_)
        np.testing.assert_array_equal(a[h].factors, b[h].factors)
        np.testing.assert_array_equal(a[h].nonevent_prob, b[h].nonevent_prob)


def test_horizon_order_irrelevant(small):
    data, panel, restriction = small
    cfg = gibbs.ChainConfig(burnin=50, draws=60, thin=3, seed=9)
    fwd = gibbs.run_horizons(panel, data.events, [0, 1, 2], mix.MixturePriors(), fac.FactorPriors(),
                             restriction, cfg)
    rev = gibbs.run_horizons(panel, data.events, [2, 1, 0], mix.MixturePriors(), fac.FactorPriors(),
                             restriction, cfg)
    for h in fwd:
        np.testing.assert_array_equal(fwd[h].lambda_, rev[h].lambda_)


def test_irf_quantiles_monotone_and_commonality_bounded(small):
    data, panel, restriction = small
    res = pj.normalize_shock(run_small(small), restriction, 2, 1.0)
    assert res.irf.shape == (3, panel.M, 5)
    assert np.all(np.diff(res.irf, axis=-1) >= 0)
    assert np.all((res.commonality >= 0) & (res.commonality <= 1))
    fq = res.factor_quantiles
    ok = np.isfinite(fq).all(axis=-1)
    assert np.all(np.diff(fq[ok], axis=-1) >= 0)
