"""Sparse finite mixture on common volatility for non-ruling days.

Internally components are labelled 0..J-1; label 0 is the minimum-variance
component whose non-ruling members form the non-event set.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .errors import NumericalError, ValidationError

VARIANCE_FLOOR = 1e-12
ADAPT_WINDOW = 50
ACCEPT_BAND = (0.20, 0.40)


@dataclass(frozen=True)
class MixturePriors:
    a0: float = 0.1
    b0: float = 0.1
    d: float = 10.0
    J: int = 30

    def __post_init__(self):
        if self.J < 1:
            raise ValidationError("J must be at least 1")
        if min(self.a0, self.b0, self.d) <= 0:
            raise ValidationError("a0, b0 and d must be positive")


@dataclass
class MixtureState:
    theta_sq: np.ndarray
    weights: np.ndarray
    alloc: np.ndarray
    is_ruling: np.ndarray
    c0: float
    prop_scale: float = 0.1
    log_weights: np.ndarray = None
    log_xi_sum: float = 0.0
    accept_history: deque = field(default_factory=lambda: deque(maxlen=ADAPT_WINDOW))
    adapt_calls: int = 0
    numerical_rejections: int = 0
    # quadratic forms of the chain's data rows, filled by init_state
    q: np.ndarray = None
    q_raw: np.ndarray = None

    def __post_init__(self):
        if self.log_weights is None:
            with np.errstate(divide="ignore"):
                self.log_weights = np.log(self.weights)

    @property
    def J(self) -> int:
        return len(self.theta_sq)

    def counts(self) -> np.ndarray:
        """Occupancy of each component over non-ruling days."""
        return np.bincount(self.alloc[~self.is_ruling], minlength=self.J)


def quad_form(y: np.ndarray, omega_sq: np.ndarray) -> np.ndarray:
    return np.sum(y * y / omega_sq, axis=1)


def init_state(hpanel, omega, ruling_rows, priors: MixturePriors) -> MixtureState:
    """Quantile-bin days on their average squared standardized value."""
    n, M = hpanel.values.shape
    J = priors.J
    is_ruling = np.zeros(n, dtype=bool)
    is_ruling[np.asarray(ruling_rows, dtype=np.int64)] = True
    score = quad_form(hpanel.values, omega.omega_sq) / M
    alloc = np.zeros(n, dtype=np.int64)
    nr = np.flatnonzero(~is_ruling)
    order = nr[np.argsort(score[nr], kind="stable")]
    theta_sq = np.empty(J)
    for j, chunk in enumerate(np.array_split(order, J)):
        alloc[chunk] = j
        theta_sq[j] = score[chunk].mean() if len(chunk) else np.nan
    if np.any(np.isnan(theta_sq)):
        top = np.nanmax(theta_sq) if np.any(np.isfinite(theta_sq)) else 1.0
        miss = np.isnan(theta_sq)
        theta_sq[miss] = top * np.arange(2, miss.sum() + 2)
    theta_sq = np.maximum(theta_sq, VARIANCE_FLOOR)
    return MixtureState(
        theta_sq=theta_sq,
        weights=np.full(J, 1.0 / J),
        alloc=alloc,
        is_ruling=is_ruling,
        c0=1.0 / J,
        prop_scale=0.1,
        q=score * M,
        q_raw=np.sum(hpanel.values ** 2, axis=1),
    )


def _cached(state, attr, compute):
    val = getattr(state, attr)
    if val is None or len(val) != len(state.alloc):
        val = compute()
        setattr(state, attr, val)
    return val


def sample_component_variances(state, hpanel, omega, factor, rng, priors: MixturePriors,
                               variant: str = "coherent") -> np.ndarray:
    """Inverse-gamma draws of the component variances.

    ``variant='coherent'`` uses the conjugate posterior of the scaled
    Gaussian components (shape a0 + T_j*M/2, Omega-weighted quadratic form).
    ``variant='verbatim'`` uses shape a0 + T_j/2 and the unweighted form.
    Ruling rows enter component 0 through their factor residuals.
    """
    M = hpanel.values.shape[1]
    if variant == "coherent":
        q = _cached(state, "q", lambda: quad_form(hpanel.values, omega.omega_sq))
        scale = omega.omega_sq
        per_obs = M / 2.0
    elif variant == "verbatim":
        q = _cached(state, "q_raw", lambda: np.sum(hpanel.values ** 2, axis=1))
        scale = np.ones(M)
        per_obs = 0.5
    else:
        raise ValidationError(f"unknown variance variant {variant!r}")
    if factor is not None and len(factor.rows):
        resid = hpanel.values[factor.rows] - np.outer(factor.factors, factor.loadings)
        q = q.copy()
        q[factor.rows] = quad_form(resid, scale)
    J = state.J
    T_j = np.bincount(state.alloc, minlength=J)
    ss = np.bincount(state.alloc, weights=q, minlength=J)
    a = priors.a0 + T_j * per_obs
    b = priors.b0 + 0.5 * ss
    draws = b / rng.gamma(a)
    if not np.all(draws > 0):
        raise NumericalError("nonpositive component variance draw")
    return np.maximum(draws, VARIANCE_FLOOR)


def allocation_log_probs(theta_sq, log_weights, q, M) -> np.ndarray:
    """Normalized log allocation probabilities, one row per day.

    Computed with max-subtraction so that very unequal variances do not
    underflow.
    """
    theta_sq = np.asarray(theta_sq, dtype=float)
    ll = (np.asarray(log_weights)[None, :]
          - 0.5 * M * np.log(theta_sq)[None, :]
          - 0.5 * np.asarray(q, dtype=float)[:, None] / theta_sq[None, :])
    top = np.max(ll, axis=1, keepdims=True)
    if not np.all(np.isfinite(top)):
        raise NumericalError("all allocation log-densities are -inf")
    ll = ll - top
    return ll - np.log(np.sum(np.exp(ll), axis=1, keepdims=True))


def sample_allocations(state, hpanel, omega, rng):
    """Draw component labels for non-ruling days.

    Returns the new allocation vector and the sum of log allocation
    probabilities over all components and non-ruling days.
    """
    nr = np.flatnonzero(~state.is_ruling)
    q = _cached(state, "q", lambda: quad_form(hpanel.values, omega.omega_sq))[nr]
    M = hpanel.values.shape[1]
    J = state.J
    # log w_j + log N(y_t | 0, theta_j^2 Omega) up to a constant is a_j - q_t b_j
    a = state.log_weights - 0.5 * M * np.log(state.theta_sq)
    b = 0.5 / state.theta_sq
    # components along axis 0 so reductions run over contiguous rows
    ll = np.multiply.outer(-b, q)
    ll += a[:, None]
    top = np.max(ll, axis=0)
    if not np.all(np.isfinite(top)):
        raise NumericalError("all allocation log-densities are -inf")
    ll -= top
    np.exp(ll, out=ll)
    cdf = np.cumsum(ll, axis=0, out=ll)
    total = cdf[-1]
    u = rng.random(len(nr)) * total
    labels = np.minimum(np.sum(cdf < u, axis=0), J - 1)
    alloc = np.array(state.alloc, copy=True)
    alloc[nr] = labels
    alloc[state.is_ruling] = 0
    # sum_j sum_t log xi_jt without materializing the matrix
    with np.errstate(over="ignore", invalid="ignore"):
        stat = float(len(nr) * np.sum(a) - np.sum(q) * np.sum(b)
                     - J * np.sum(top) - J * np.sum(np.log(total)))
    return alloc, stat


def sample_log_dirichlet(alpha, rng) -> np.ndarray:
    """Log of a Dirichlet draw, stable for concentrations far below one."""
    alpha = np.asarray(alpha, dtype=float)
    small = alpha < 1.0
    log_g = np.empty_like(alpha)
    g = rng.gamma(np.where(small, alpha + 1.0, alpha))
    u = rng.random(len(alpha))
    with np.errstate(divide="ignore"):
        log_g[:] = np.log(g)
        log_g[small] += np.log(u[small]) / alpha[small]
    top = np.max(log_g)
    return log_g - (top + np.log(np.sum(np.exp(log_g - top))))


def sample_weights(state, rng):
    """Dirichlet(c0 + T_j) draw; returns (weights, log_weights)."""
    log_w = sample_log_dirichlet(state.c0 + state.counts(), rng)
    w = np.exp(log_w)
    return w / w.sum(), log_w


def log_accept_c0(c0_new: float, c0_old: float, stat: float, J: int, d: float) -> float:
    """Log acceptance ratio of the log-normal random-walk step for c0."""
    dlog = math.log(c0_new) - math.log(c0_old)
    dc = c0_new - c0_old
    return (dc * stat
            + math.lgamma(J * c0_new) - math.lgamma(J * c0_old)
            - J * (math.lgamma(c0_new) - math.lgamma(c0_old))
            + (d - 1.0) * dlog
            - d * J * dc
            + dlog)


def c0_statistic(state, statistic: str = "as_printed") -> float:
    """``as_printed``: summed log allocation probabilities over non-ruling
    days. ``dirichlet_w``: summed log weights, the Dirichlet likelihood."""
    if statistic == "as_printed":
        return state.log_xi_sum
    if statistic == "dirichlet_w":
        return float(np.sum(state.log_weights))
    raise ValidationError(f"unknown c0 statistic {statistic!r}")


def mh_c0_step(c0, stat, J, d, prop_scale, z, u):
    """One random-walk step given a standard normal ``z`` and uniform ``u``.

    Returns (c0, accepted, numerically_rejected).
    """
    log_new = math.log(c0) + math.sqrt(prop_scale) * z
    c0_new = math.exp(log_new)
    if not (c0_new > 0 and math.isfinite(c0_new)):
        return c0, False, True
    try:
        log_zeta = log_accept_c0(c0_new, c0, stat, J, d)
    except (ValueError, OverflowError):
        return c0, False, True
    if not math.isfinite(log_zeta):
        return c0, False, True
    if log_zeta >= 0 or math.log(u) < log_zeta:
        return c0_new, True, False
    return c0, False, False


def sample_c0(state, priors: MixturePriors, rng, statistic: str = "as_printed"):
    """Metropolis-Hastings update of the Dirichlet intensity; returns (c0, accepted)."""
    stat = c0_statistic(state, statistic)
    z = rng.standard_normal()
    u = rng.random()
    if u == 0.0:
        u = np.nextafter(0.0, 1.0)
    c0, accepted, numerical = mh_c0_step(state.c0, stat, state.J, priors.d, state.prop_scale, z, u)
    if numerical:
        state.numerical_rejections += 1
    state.accept_history.append(accepted)
    return c0, accepted


def adapt_proposal(state, burnin_progress: float) -> float:
    """Rescale the proposal variance every 50 calls during the first half of burn-in."""
    if burnin_progress > 0.5:
        return state.prop_scale
    state.adapt_calls += 1
    if state.adapt_calls % ADAPT_WINDOW or not state.accept_history:
        return state.prop_scale
    rate = sum(state.accept_history) / len(state.accept_history)
    if rate > ACCEPT_BAND[1]:
        return state.prop_scale * 1.1
    if rate < ACCEPT_BAND[0]:
        return state.prop_scale * 0.9
    return state.prop_scale


def permute_ascending(state, empty_last: bool = True):
    """Relabel components by ascending variance (stable for ties).

    With ``empty_last`` components without non-ruling members are placed
    after all occupied ones, so label 0 is always the minimum-variance
    occupied component. Ruling days are re-asserted to label 0.
    """
    if empty_last:
        empty = state.counts() == 0
        order = np.lexsort((state.theta_sq, empty))
    else:
        order = np.argsort(state.theta_sq, kind="stable")
    inverse = np.empty_like(order)
    inverse[order] = np.arange(len(order))
    state.theta_sq = state.theta_sq[order]
    state.weights = state.weights[order]
    state.log_weights = state.log_weights[order]
    state.alloc = inverse[state.alloc]
    state.alloc[state.is_ruling] = 0
    return state


def nonevent_set(state) -> np.ndarray:
    rows = np.flatnonzero((state.alloc == 0) & ~state.is_ruling)
    if len(rows) == 0:
        raise ValidationError("non-event set is empty")
    return rows


def count_nonempty(state) -> int:
    return int(np.count_nonzero(state.counts()))


def mixture_log_density(state, y, omega, priors: MixturePriors) -> float:
    """Joint log density of non-ruling data, labels, variances and weights."""
    nr = ~state.is_ruling
    M = y.shape[1]
    q = quad_form(y[nr], omega.omega_sq)
    lab = state.alloc[nr]
    th = state.theta_sq[lab]
    with np.errstate(divide="ignore"):
        ll = np.sum(np.log(state.weights[lab]) - 0.5 * M * np.log(2 * np.pi * th)
                    - 0.5 * np.sum(np.log(omega.omega_sq)) - 0.5 * q / th)
    a0, b0 = priors.a0, priors.b0
    lp_theta = np.sum(a0 * np.log(b0) - gammaln(a0) - (a0 + 1) * np.log(state.theta_sq)
                      - b0 / state.theta_sq)
    alpha = np.full(state.J, state.c0)
    with np.errstate(divide="ignore", invalid="ignore"):
        lp_w = gammaln(alpha.sum()) - np.sum(gammaln(alpha)) + np.sum((alpha - 1) * state.log_weights)
    return float(ll + lp_theta + lp_w)
