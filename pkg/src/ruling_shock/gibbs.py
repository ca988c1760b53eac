"""Six-step Gibbs sampler for one horizon and a parallel map over horizons."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import factor as fac
from . import mixture as mix
from .errors import ChainAbort, ValidationError
from .panel import compute_scale, difference_horizon

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.05, 0.16, 0.50, 0.84, 0.95)


@dataclass(frozen=True)
class ChainConfig:
    burnin: int = 2000
    draws: int = 3000
    thin: int = 3
    seed: int = 0
    mode: str = "mixture"
    variant: str = "coherent"
    mh_statistic: str = "as_printed"
    empty_last: bool = True

    def __post_init__(self):
        if self.burnin < 1 or self.draws < 1 or self.thin < 1:
            raise ValidationError("burnin, draws and thin must all be at least 1")
        if self.mode not in ("mixture", "naive"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.variant not in ("coherent", "verbatim"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.mh_statistic not in ("as_printed", "dirichlet_w"):
            raise ValidationError(f"unknown MH statistic {self.mh_statistic!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must be an unsigned 64-bit integer")

    @property
    def retained(self) -> int:
        return self.draws // self.thin


@dataclass
class Draws:
    horizon: int
    mode: str
    lambda_: np.ndarray  # retained x M
    factors: np.ndarray  # retained x n_events, NaN where the event is outside the horizon sample
    theta1_sq: np.ndarray
    nonempty_count: np.ndarray
    c0_trace: np.ndarray
    flipped: np.ndarray
    nonevent_prob: np.ndarray  # per horizon-panel row
    variance_path: np.ndarray  # posterior mean of the allocated component variance per row
    origin_indices: np.ndarray
    omega_sq: np.ndarray
    theta1_all: np.ndarray  # every post-burn-in iteration, before thinning
    accept_rate: float
    numerical_rejections: int

    @property
    def retained(self) -> int:
        return self.lambda_.shape[0]


def chain_rng(seed: int, horizon: int) -> np.random.Generator:
    """Independent stream per (seed, horizon); unrelated to execution order or mode."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(horizon),)))


def run_chain(hpanel, events, omega, mpriors, fpriors, restriction, config: ChainConfig,
              trace=None) -> Draws:
    """Run one chain; ``trace`` (a list) receives the step numbers executed."""
    h = hpanel.horizon
    if config.mode == "naive":
        mpriors = replace(mpriors, J=1)
    rows_all = hpanel.rows_for(events.event_indices)
    present = rows_all >= 0
    rows = rows_all[present]
    if not present.all():
        log.warning("horizon %d: %d event(s) outside the differenced sample", h, (~present).sum())
    rng = chain_rng(config.seed, h)
    state = mix.init_state(hpanel, omega, rows, mpriors)
    fstate = fac.init_factor(hpanel, rows)
    fac.enforce_sign(fstate, restriction)

    n, M = hpanel.values.shape
    R = config.retained
    out_lam = np.empty((R, M))
    out_f = np.full((R, len(rows_all)), np.nan)
    out_th1 = np.empty(R)
    out_ne = np.empty(R, dtype=np.int64)
    out_c0 = np.empty(R)
    out_flip = np.zeros(R, dtype=bool)
    in_ne = np.zeros(n)
    var_path = np.zeros(n)
    th1_all = np.empty(config.draws)
    n_acc = 0
    total = config.burnin + config.draws
    k = 0
    for it in range(total):
        state.theta_sq = mix.sample_component_variances(
            state, hpanel, omega, fstate, rng, mpriors, config.variant)
        _step(trace, 1)
        state.alloc, state.log_xi_sum = mix.sample_allocations(state, hpanel, omega, rng)
        _step(trace, 2)
        state.weights, state.log_weights = mix.sample_weights(state, rng)
        mix.permute_ascending(state, empty_last=config.empty_last)
        _step(trace, 3)
        state.c0, accepted = mix.sample_c0(state, mpriors, rng, config.mh_statistic)
        if it < config.burnin:
            state.prop_scale = mix.adapt_proposal(state, it / config.burnin)
        else:
            n_acc += accepted
        _step(trace, 4)
        theta1 = state.theta_sq[0]
        fstate.loadings = fac.sample_loadings(fstate, hpanel, omega, theta1, fpriors, rng)
        _step(trace, 5)
        fstate.factors = fac.sample_factors(fstate, hpanel, omega, theta1, rng)
        _, flipped = fac.enforce_sign(fstate, restriction)
        _step(trace, 6)

        if not (np.all(np.isfinite(fstate.loadings)) and np.all(np.isfinite(fstate.factors))
                and np.isfinite(theta1)):
            raise ChainAbort("non-finite draw", iteration=it, horizon=h)
        if it < config.burnin:
            continue
        j = it - config.burnin
        th1_all[j] = theta1
        if (j + 1) % config.thin or k >= R:
            continue
        ne = (state.alloc == 0) & ~state.is_ruling
        if not ne.any():
            raise ChainAbort("empty non-event set", iteration=it, horizon=h)
        out_lam[k] = fstate.loadings
        out_f[k, present] = fstate.factors
        out_th1[k] = theta1
        out_ne[k] = mix.count_nonempty(state)
        out_c0[k] = state.c0
        out_flip[k] = flipped
        in_ne += ne
        var_path += state.theta_sq[state.alloc]
        k += 1

    return Draws(
        horizon=h,
        mode=config.mode,
        lambda_=out_lam,
        factors=out_f,
        theta1_sq=out_th1,
        nonempty_count=out_ne,
        c0_trace=out_c0,
        flipped=out_flip,
        nonevent_prob=in_ne / R,
        variance_path=var_path / R,
        origin_indices=np.array(hpanel.origin_indices),
        omega_sq=np.array(omega.omega_sq),
        theta1_all=th1_all,
        accept_rate=n_acc / config.draws,
        numerical_rejections=state.numerical_rejections,
    )


def _step(trace, k):
    if trace is None:
        return
    expected = trace[-1] % 6 + 1 if trace else 1
    if k != expected:
        raise AssertionError(f"sampler step {k} ran where step {expected} was due")
    trace.append(k)


def quantiles(x, probs=DEFAULT_LEVELS) -> np.ndarray:
    """Column quantiles with linear interpolation between order statistics."""
    x = np.asarray(x, dtype=float)
    if x.size == 0 or x.shape[0] == 0:
        raise ValidationError("cannot summarize empty draws")
    return np.quantile(x, probs, axis=0, method="linear")


def summarize(draws: Draws, probs=DEFAULT_LEVELS) -> dict:
    if draws.retained < 1:
        raise ValidationError("cannot summarize empty draws")
    with np.errstate(all="ignore"):
        return {
            "levels": np.asarray(probs, dtype=float),
            "lambda": quantiles(draws.lambda_, probs),
            "factors": quantiles(draws.factors, probs),
            "theta1_sq": quantiles(draws.theta1_sq, probs),
        }


def _horizon_job(args):
    panel, events, h, mpriors, fpriors, restriction, config = args
    hp = difference_horizon(panel, h)
    omega = compute_scale(hp)
    try:
        return h, run_chain(hp, events, omega, mpriors, fpriors, restriction, config)
    except ChainAbort as exc:
        if exc.horizon is None:
            exc.horizon = h
        raise


def run_horizons(panel, events, horizons, mpriors, fpriors, restriction, config,
                 workers: int = 1) -> dict:
    """Independent chains per horizon, collected by horizon index."""
    jobs = [(panel, events, h, mpriors, fpriors, restriction, config) for h in horizons]
    if workers <= 1 or len(jobs) <= 1:
        results = [_horizon_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_horizon_job, jobs))
    return {h: d for h, d in sorted(results, key=lambda r: r[0])}
