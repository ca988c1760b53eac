"""Horizon-by-horizon estimation and impulse-response assembly.

Loadings estimated on ``y[t+h] - y[t-1]`` are the responses at horizon h.
Normalization is applied draw by draw: every horizon's loading vector of
draw d is multiplied by the same scale factor, chosen so that the mean
target-column response at the reference horizon equals ``-ref_magnitude``.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import gibbs
from .errors import ValidationError
from .factor import commonality

log = logging.getLogger(__name__)

NEAR_ZERO = 1e-12


@dataclass
class IrfResult:
    horizons: np.ndarray
    levels: np.ndarray
    irf: np.ndarray  # (H+1) x M x levels, quantiles of scaled loadings
    irf_draws: dict  # horizon -> kept draws x M scaled loadings
    commonality: np.ndarray  # (H+1) x M posterior medians, unscaled draws
    factor_quantiles: np.ndarray  # events x (H+1) x levels
    scale_factors: np.ndarray  # per kept draw
    kept: np.ndarray  # draw indices that survived normalization
    dropped: int


def estimate_all(panel, events, H, mpriors, fpriors, restriction, config, workers=1) -> dict:
    """Run one chain per horizon 0..H; returns {h: Draws}."""
    if H < 0 or H > panel.T - 2:
        raise ValidationError(f"H={H} must satisfy 0 <= H <= T-2 = {panel.T - 2}")
    return gibbs.run_horizons(panel, events, range(H + 1), mpriors, fpriors,
                              restriction, config, workers=workers)


def compute_commonalities(draws) -> np.ndarray:
    """Per-draw shares of ruling-day variance explained, shape retained x M."""
    return commonality(draws.lambda_, draws.theta1_sq, draws.omega_sq)


def median_commonality(draws) -> np.ndarray:
    return np.median(compute_commonalities(draws), axis=0)


def reference_magnitude(panel, restriction) -> float:
    """One standard deviation of the target-column average in levels."""
    avg = panel.values[:, list(restriction.target_columns)].mean(axis=1)
    return float(np.std(avg, ddof=1))


def scale_factors(draws_by_h, restriction, ref_horizon: int, ref_magnitude: float):
    """Per-draw kappa and the mask of usable draws."""
    if ref_horizon not in draws_by_h:
        raise ValidationError(f"reference horizon {ref_horizon} was not estimated")
    lam = draws_by_h[ref_horizon].lambda_
    target = lam[:, list(restriction.target_columns)].mean(axis=1)
    ok = np.abs(target) > NEAR_ZERO
    kappa = np.full(len(target), np.nan)
    kappa[ok] = -ref_magnitude / target[ok]
    return kappa, ok


def normalize_shock(draws_by_h, restriction, ref_horizon: int = 10, ref_magnitude: float = 1.0,
                    levels=gibbs.DEFAULT_LEVELS, scaled_factors: bool = False) -> IrfResult:
    """Scale every draw so the target response at ``ref_horizon`` is ``-ref_magnitude``."""
    horizons = np.array(sorted(draws_by_h))
    kappa, ok = scale_factors(draws_by_h, restriction, ref_horizon, ref_magnitude)
    dropped = int(np.sum(~ok))
    if dropped > 0.01 * len(ok):
        warnings.warn(f"{dropped} of {len(ok)} draws dropped: target loading mean near zero")
    kept = np.flatnonzero(ok)
    k = kappa[kept]
    levels = np.asarray(levels, dtype=float)
    irf_draws = {}
    irf_q = []
    comm = []
    for h in horizons:
        d = draws_by_h[h]
        if d.retained != len(kappa):
            raise ValidationError("all horizons must retain the same number of draws")
        scaled = d.lambda_[kept] * k[:, None]
        irf_draws[int(h)] = scaled
        irf_q.append(np.moveaxis(gibbs.quantiles(scaled, levels), 0, -1))
        comm.append(median_commonality(d))
    fq = factor_at_events(draws_by_h, levels, kappa=kappa if scaled_factors else None)
    return IrfResult(
        horizons=horizons,
        levels=levels,
        irf=np.stack(irf_q),
        irf_draws=irf_draws,
        commonality=np.stack(comm),
        factor_quantiles=fq,
        scale_factors=k,
        kept=kept,
        dropped=dropped,
    )


def factor_at_events(draws_by_h, levels=gibbs.DEFAULT_LEVELS, kappa=None) -> np.ndarray:
    """Quantiles of the event-date factors, shape events x horizons x levels.

    With ``kappa`` the factors are divided by the draw's scale factor so that
    loading times factor is unchanged by normalization.
    """
    horizons = sorted(draws_by_h)
    out = []
    for h in horizons:
        f = draws_by_h[h].factors
        if kappa is not None:
            keep = np.isfinite(kappa)
            f = f[keep] / kappa[keep][:, None]
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            q = np.full((len(levels), f.shape[1]), np.nan)
            present = np.all(np.isfinite(f), axis=0)
            if present.any():
                q[:, present] = gibbs.quantiles(f[:, present], levels)
        out.append(q.T)
    return np.stack(out, axis=1)


def interval_width(factor_q, levels, lo=0.05, hi=0.95) -> np.ndarray:
    """Width of a credible interval from a quantile table (last axis = levels)."""
    levels = list(np.round(levels, 10))
    return factor_q[..., levels.index(hi)] - factor_q[..., levels.index(lo)]
