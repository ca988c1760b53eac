"""Single-factor model on ruling days, identified through heteroskedasticity."""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class FactorPriors:
    tau: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be positive")


@dataclass
class FactorState:
    loadings: np.ndarray  # length M
    factors: np.ndarray  # one per ruling row
    rows: np.ndarray  # horizon-panel rows the factors belong to


@dataclass(frozen=True)
class SignRestriction:
    """Mean loading over ``target_columns`` must have sign ``direction``."""

    target_columns: tuple
    direction: int = -1

    def __post_init__(self):
        object.__setattr__(self, "target_columns", tuple(int(c) for c in self.target_columns))
        if not self.target_columns:
            raise ValidationError("sign restriction needs at least one target column")
        if self.direction not in (-1, 1):
            raise ValidationError("direction must be -1 or +1")

    @classmethod
    def from_glob(cls, labels, pattern: str, direction: int = -1) -> "SignRestriction":
        cols = [i for i, lab in enumerate(labels)
                if fnmatch.fnmatchcase(lab.lower(), pattern.lower())]
        if not cols:
            raise ValidationError(f"no series label matches target pattern {pattern!r}")
        return cls(tuple(cols), direction)


def init_factor(hpanel, rows) -> FactorState:
    """Start from the leading principal component of the ruling rows."""
    rows = np.asarray(rows, dtype=np.int64)
    M = hpanel.values.shape[1]
    if len(rows) == 0:
        return FactorState(np.zeros(M), np.zeros(0), rows)
    y = hpanel.values[rows]
    sd = np.std(hpanel.values, axis=0, ddof=1)
    u, s, vt = np.linalg.svd(y / sd, full_matrices=False)
    f = u[:, 0] * np.sqrt(len(rows))
    lam = vt[0] * s[0] / np.sqrt(len(rows)) * sd
    return FactorState(lam, f, rows)


def loading_moments(factor, hpanel, omega, theta1_sq, priors: FactorPriors):
    """Posterior mean and variance of each loading given the factors."""
    sig2 = theta1_sq * omega.omega_sq
    f = factor.factors
    y = hpanel.values[factor.rows]
    prec = np.sum(f * f) / sig2 + 1.0 / priors.tau
    var = 1.0 / prec
    mean = var * (y.T @ f) / sig2
    return mean, var


def sample_loadings(factor, hpanel, omega, theta1_sq, priors: FactorPriors, rng) -> np.ndarray:
    mean, var = loading_moments(factor, hpanel, omega, theta1_sq, priors)
    return mean + np.sqrt(var) * rng.standard_normal(len(mean))


def factor_moments(factor, hpanel, omega, theta1_sq):
    """Posterior means (one per ruling row) and the common variance."""
    lam = factor.loadings
    w = lam / omega.omega_sq
    var = 1.0 / (lam @ w / theta1_sq + 1.0)
    y = hpanel.values[factor.rows]
    mean = var * (y @ w) / theta1_sq
    return mean, var


def sample_factors(factor, hpanel, omega, theta1_sq, rng) -> np.ndarray:
    mean, var = factor_moments(factor, hpanel, omega, theta1_sq)
    return mean + np.sqrt(var) * rng.standard_normal(len(mean))


def enforce_sign(factor, restriction: SignRestriction):
    """Negate loadings and factors when the restriction fails; returns (state, flipped)."""
    m = float(np.mean(factor.loadings[list(restriction.target_columns)]))
    if m * restriction.direction < 0:
        factor.loadings = -factor.loadings
        factor.factors = -factor.factors
        return factor, True
    return factor, False


def commonality(loadings, theta1_sq, omega_sq):
    """Share of ruling-day variance explained by the factor, per series."""
    lam2 = np.square(loadings)
    return lam2 / (lam2 + np.asarray(theta1_sq)[..., None] * omega_sq)
