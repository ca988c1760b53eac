"""Closed-form and quadrature oracles for every conditional of the sampler.

Each check draws from the production sampler and compares Monte Carlo
moments with analytic values via z-scores. A check fails when any
``|z| > Z_LIMIT``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln

from . import factor as fac
from . import mixture as mix
from .panel import HorizonPanel, ScaleMatrix

Z_LIMIT = 4.0


@dataclass
class CheckResult:
    name: str
    z: dict
    passed: bool
    info: dict = field(default_factory=dict)

    def line(self) -> str:
        zs = ", ".join(f"{k}={v:+.2f}" for k, v in self.z.items())
        extra = "".join(f", {k}={v:.4g}" for k, v in self.info.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {zs}{extra}"


def _z_mean(x, mean, var):
    return float((np.mean(x) - mean) / math.sqrt(var / len(x)))


def _z_var(x, var):
    # normal-theory standard error of the sample variance
    return float((np.var(x, ddof=1) - var) / (var * math.sqrt(2.0 / (len(x) - 1))))


def _result(name, z, info=None):
    return CheckResult(name, z, all(abs(v) <= Z_LIMIT for v in z.values()), info or {})


def _hp(values, labels=()):
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return HorizonPanel(0, values, np.arange(1, len(values) + 1), labels)


def check_component_variances(n, rng, sampler=None) -> CheckResult:
    """One observation y=2 (M=1, Omega=1) per occupied cluster; empty clusters draw the prior."""
    sampler = sampler or mix.sample_component_variances
    priors = mix.MixturePriors(J=1)
    y = np.full((n, 1), 2.0)
    state = mix.MixtureState(theta_sq=np.ones(2 * n), weights=np.full(2 * n, 0.5 / n),
                             alloc=np.arange(n), is_ruling=np.zeros(n, dtype=bool), c0=1.0)
    draws = sampler(state, _hp(y), ScaleMatrix([1.0]), None, rng, priors, "coherent")
    prec_post, prec_prior = 1.0 / draws[:n], 1.0 / draws[n:]
    a, b = 0.6, 2.1
    a0, b0 = priors.a0, priors.b0
    return _result("component_variances", {
        "posterior_precision_mean": _z_mean(prec_post, a / b, a / b ** 2),
        "posterior_precision_var": float((np.var(prec_post) - a / b ** 2)
                                         / math.sqrt((6 * a / b ** 4 + 2 * a * a / b ** 4) / n)),
        "prior_precision_mean": _z_mean(prec_prior, a0 / b0, a0 / b0 ** 2),
    })


def check_weights(n, rng, sampler=None) -> CheckResult:
    """J=2, c0=0.1, occupancies (98, 2)."""
    sampler = sampler or mix.sample_weights
    alloc = np.r_[np.zeros(98, dtype=np.int64), np.ones(2, dtype=np.int64)]
    state = mix.MixtureState(theta_sq=np.ones(2), weights=np.full(2, 0.5), alloc=alloc,
                             is_ruling=np.zeros(100, dtype=bool), c0=0.1)
    w1 = np.array([sampler(state, rng)[0][0] for _ in range(n)])
    a1, a0 = 98.1, 100.2
    mean = a1 / a0
    var = a1 * (a0 - a1) / (a0 ** 2 * (a0 + 1))
    return _result("weights", {"w1_mean": _z_mean(w1, mean, var), "w1_var": _z_var(w1, var)})


def check_allocations(n, rng, sampler=None) -> CheckResult:
    """J=2, equal weights, variances (1, 4), y=0: P(first) from the density ratio."""
    sampler = sampler or mix.sample_allocations
    state = mix.MixtureState(theta_sq=np.array([1.0, 4.0]), weights=np.array([0.5, 0.5]),
                             alloc=np.zeros(n, dtype=np.int64),
                             is_ruling=np.zeros(n, dtype=bool), c0=1.0)
    alloc, _ = sampler(state, _hp(np.zeros((n, 1))), ScaleMatrix([1.0]), rng)
    d1 = stats.norm.pdf(0.0, scale=1.0)
    d2 = stats.norm.pdf(0.0, scale=2.0)
    p = 0.5 * d1 / (0.5 * d1 + 0.5 * d2)
    return _result("allocations", {"p_first": _z_mean(alloc == 0, p, p * (1 - p))},
                   {"p_oracle": p})


def c0_log_target(c0, stat, J, d):
    """Unnormalized log density of c0 implied by the acceptance ratio."""
    c0 = np.asarray(c0, dtype=float)
    return (c0 * stat + gammaln(J * c0) - J * gammaln(c0)
            + (d - 1) * np.log(c0) - d * J * c0)


def c0_grid_cdf(stat, J, d, n_grid=200_001):
    """Grid quadrature of the c0 target on the log scale; returns (grid, cdf)."""
    u = np.linspace(-25.0, 5.0, n_grid)
    logp = c0_log_target(np.exp(u), stat, J, d) + u
    p = np.exp(logp - logp.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(u))])
    cdf /= cdf[-1]
    return np.exp(u), cdf


def run_c0_chain(stat, J, d, n_iter, burnin, rng, statistic="as_printed"):
    """MH chain on a frozen statistic, adapting during the first half of burn-in."""
    state = mix.MixtureState(theta_sq=np.ones(J), weights=np.full(J, 1.0 / J),
                             alloc=np.zeros(1, dtype=np.int64),
                             is_ruling=np.zeros(1, dtype=bool), c0=1.0 / J)
    state.log_xi_sum = stat
    priors = mix.MixturePriors(d=d, J=J)
    for it in range(burnin):
        state.c0, _ = mix.sample_c0(state, priors, rng, statistic)
        state.prop_scale = mix.adapt_proposal(state, it / burnin)
    # pre-drawn innovations, same step function as the sampler
    zs = rng.standard_normal(n_iter)
    us = rng.random(n_iter)
    out = np.empty(n_iter)
    c0, acc = state.c0, 0
    for i in range(n_iter):
        c0, a, _ = mix.mh_c0_step(c0, stat, J, d, state.prop_scale, zs[i], us[i])
        acc += a
        out[i] = c0
    return out, acc / n_iter, state.prop_scale


def ks_to_grid(sample, grid, cdf) -> float:
    x = np.sort(sample)
    F = np.interp(x, grid, cdf)
    n = len(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def _batch_se(x, n_batches=100):
    b = np.array_split(x, n_batches)
    means = np.array([bb.mean() for bb in b])
    return float(np.std(means, ddof=1) / math.sqrt(n_batches))


def check_c0(n, rng, stat=-10.0, J=2, d=10.0) -> CheckResult:
    sample, acc, _ = run_c0_chain(stat, J, d, n, burnin=20_000, rng=rng)
    grid, cdf = c0_grid_cdf(stat, J, d)
    dens = np.gradient(cdf, grid)
    mean = float(np.trapezoid(grid * dens, grid))
    z = (sample.mean() - mean) / _batch_se(sample)
    res = _result("c0", {"mean": float(z)}, {"acceptance": acc, "ks": ks_to_grid(sample, grid, cdf)})
    lo, hi = mix.ACCEPT_BAND
    if not lo <= acc <= hi:
        res.passed = False
    return res


def check_loadings(n, rng, sampler=None) -> CheckResult:
    """One event, f=1, y=2 in every column, theta1^2 omega^2 = 1."""
    sampler = sampler or fac.sample_loadings
    hp = _hp(np.full((1, n), 2.0))
    fs = fac.FactorState(np.zeros(n), np.array([1.0]), np.array([0]))
    lam = sampler(fs, hp, ScaleMatrix(np.ones(n)), 1.0, fac.FactorPriors(), rng)
    empty = fac.FactorState(np.zeros(n), np.zeros(0), np.zeros(0, dtype=np.int64))
    prior = sampler(empty, hp, ScaleMatrix(np.ones(n)), 1.0, fac.FactorPriors(), rng)
    return _result("loadings", {
        "mean": _z_mean(lam, 1.0, 0.5), "var": _z_var(lam, 0.5),
        "prior_mean": _z_mean(prior, 0.0, 1.0), "prior_var": _z_var(prior, 1.0),
    })


def check_factors(n, rng, sampler=None) -> CheckResult:
    """M=1, lambda=1, Omega=1, theta1^2=1, y=2 on every event row."""
    sampler = sampler or fac.sample_factors
    hp = _hp(np.full((n, 1), 2.0))
    rows = np.arange(n)
    f = sampler(fac.FactorState(np.array([1.0]), np.zeros(n), rows), hp, ScaleMatrix([1.0]), 1.0, rng)
    f0 = sampler(fac.FactorState(np.array([0.0]), np.zeros(n), rows), hp, ScaleMatrix([1.0]), 1.0, rng)
    return _result("factors", {
        "mean": _z_mean(f, 1.0, 0.5), "var": _z_var(f, 0.5),
        "prior_mean": _z_mean(f0, 0.0, 1.0), "prior_var": _z_var(f0, 1.0),
    })


def analytic_check(n: int = 100_000, seed: int = 20240601, samplers: dict | None = None) -> list:
    """Run every oracle; ``samplers`` may replace conditionals (negative controls)."""
    samplers = samplers or {}
    rng = np.random.default_rng(seed)
    return [
        check_component_variances(n, rng, samplers.get("component_variances")),
        check_allocations(n, rng, samplers.get("allocations")),
        check_weights(n, rng, samplers.get("weights")),
        check_c0(2 * n, rng),
        check_loadings(n, rng, samplers.get("loadings")),
        check_factors(n, rng, samplers.get("factors")),
    ]


def mh_target_check(n_iter: int = 1_000_000, burnin: int = 20_000, stat=-10.0, J=2, d=10.0,
                    seed: int = 7) -> dict:
    """Stationary distribution of the c0 step versus grid quadrature."""
    rng = np.random.default_rng(seed)
    sample, acc, scale = run_c0_chain(stat, J, d, n_iter, burnin, rng)
    grid, cdf = c0_grid_cdf(stat, J, d)
    return {"ks": ks_to_grid(sample, grid, cdf), "acceptance": acc, "prop_scale": scale}
