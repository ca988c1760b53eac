"""Ground-truth panels drawn from the model itself.

Increments follow the ruling-day factor model on event days and the
scaled-variance mixture on all other days; levels are their cumulative sum,
so the horizon-0 differences reproduce the generated increments exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from typing import NamedTuple

import numpy as np
import pandas as pd

from .errors import ValidationError
from .panel import EventCalendar, Panel

DEFAULT_FACTORS = (2.0, -1.5, 2.5, -2.0, 1.8, 0.0, -2.2, 1.6, 2.4, -1.7, 2.1, -2.3)


@dataclass
class SyntheticSpec:
    T: int = 1500
    M: int = 20
    regime_variances: tuple = (1.0, 5.0, 25.0)
    regime_weights: tuple = (0.6, 0.3, 0.1)
    markov_stay: float | None = None  # persistent regimes when set
    n_events: int = 12
    event_indices: tuple | None = None
    true_loadings: tuple | None = None
    true_factors: tuple | None = DEFAULT_FACTORS
    omega_true: tuple | None = None
    loading_ratio: float = 3.0  # |lambda_i| / regime-1 sd when loadings are defaulted
    n_target: int = 4
    start_date: str = "2012-03-01"
    seed: int = 1

    def __post_init__(self):
        K = len(self.regime_variances)
        if K < 1 or any(v <= 0 for v in self.regime_variances):
            raise ValidationError("regime variances must be positive")
        if list(self.regime_variances) != sorted(self.regime_variances):
            raise ValidationError("regime 1 must have the smallest variance")
        if len(self.regime_weights) != K or abs(sum(self.regime_weights) - 1) > 1e-9:
            raise ValidationError("regime weights must match regimes and sum to one")
        if self.T < 3 or self.M < 1:
            raise ValidationError("need T >= 3 and M >= 1")
        if not 1 <= self.n_target <= self.M:
            raise ValidationError("n_target must lie in 1..M")
        if self.markov_stay is not None and not 0 <= self.markov_stay < 1:
            raise ValidationError("markov_stay must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown synthetic spec fields: {sorted(unknown)}")
        d = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        return cls(**d)

    def resolved(self) -> "SyntheticSpec":
        """Fill defaulted fields with concrete values."""
        T, M = self.T, self.M
        ev = self.event_indices
        if ev is None:
            ev = tuple(int(x) for x in np.linspace(T * 0.05, T * 0.95, self.n_events).round())
        if any(e < 1 or e >= T for e in ev) or len(set(ev)) != len(ev):
            raise ValidationError("event indices must be distinct and in 1..T-1")
        om = self.omega_true
        if om is None:
            om = tuple(np.round(np.linspace(0.35, 0.65, M), 6))
        if len(om) != M or any(o <= 0 for o in om):
            raise ValidationError("omega_true needs M positive entries")
        lam = self.true_loadings
        if lam is None:
            sd1 = np.sqrt(self.regime_variances[0]) * np.asarray(om)
            signs = np.where(np.arange(M) < self.n_target, -1.0,
                             np.where(np.arange(M) % 2 == 0, 1.0, -1.0))
            lam = tuple(self.loading_ratio * sd1 * signs)
        f = self.true_factors
        if f is None or len(f) != len(ev):
            f = tuple(np.resize(np.asarray(DEFAULT_FACTORS), len(ev)))
        if len(lam) != M:
            raise ValidationError("true_loadings needs M entries")
        return SyntheticSpec(**{**asdict(self), "event_indices": tuple(int(e) for e in ev),
                                "omega_true": tuple(float(o) for o in om),
                                "true_loadings": tuple(float(x) for x in lam),
                                "true_factors": tuple(float(x) for x in f)})


class SyntheticData(NamedTuple):
    panel: Panel
    events: EventCalendar
    truth: dict

    def labels(self):
        return self.panel.labels


def _regime_path(spec, rng) -> np.ndarray:
    K = len(spec.regime_variances)
    n = spec.T - 1
    p = np.asarray(spec.regime_weights)
    if spec.markov_stay is None:
        return rng.choice(K, size=n, p=p)
    path = np.empty(n, dtype=np.int64)
    path[0] = rng.choice(K, p=p)
    for t in range(1, n):
        path[t] = path[t - 1] if rng.random() < spec.markov_stay else rng.choice(K, p=p)
    return path


def series_labels(M: int, n_target: int) -> list:
    return [f"ciss_{i + 1:02d}" if i < n_target else f"series_{i + 1:02d}" for i in range(M)]


def generate(spec: SyntheticSpec) -> SyntheticData:
    spec = spec.resolved()
    rng = np.random.default_rng(spec.seed)
    T, M = spec.T, spec.M
    om = np.asarray(spec.omega_true)
    th = np.asarray(spec.regime_variances)
    regimes = _regime_path(spec, rng)  # for base rows 1..T-1
    ev = np.asarray(spec.event_indices)
    regimes[ev - 1] = 0
    noise = rng.standard_normal((T - 1, M)) * om * np.sqrt(th[regimes])[:, None]
    lam = np.asarray(spec.true_loadings)
    f = np.asarray(spec.true_factors)
    x = noise
    x[ev - 1] += np.outer(f, lam)
    levels = np.vstack([np.zeros(M), np.cumsum(x, axis=0)])
    dates = pd.bdate_range(spec.start_date, periods=T).date
    labels = series_labels(M, spec.n_target)
    panel = Panel(np.array(dates, dtype="datetime64[D]"), levels, labels)
    events = EventCalendar(ev, [f"event_{i + 1:02d}" for i in range(len(ev))],
                           dates=panel.dates[ev])
    regime_full = np.concatenate([[-1], regimes])
    truth = {
        "spec": asdict(spec),
        "labels": labels,
        "event_dates": [str(d) for d in events.dates],
        "regime": regime_full.tolist(),
        "is_event": np.isin(np.arange(T), ev).tolist(),
    }
    return SyntheticData(panel, events, truth)


def truth_to_json(truth: dict) -> str:
    return json.dumps(truth, indent=1, sort_keys=True)


def recovery_metrics(draws, truth: dict) -> dict:
    """Compare a horizon-0 chain with the planted truth."""
    spec = truth["spec"]
    regime = np.asarray(truth["regime"])[draws.origin_indices]
    is_event = np.asarray(truth["is_event"])[draws.origin_indices]
    nr = ~is_event
    est_ne = draws.nonevent_prob[nr] > 0.5
    accuracy = float(np.mean(est_ne == (regime[nr] == 0)))
    lam_true = np.asarray(spec["true_loadings"])
    med = np.median(draws.lambda_, axis=0)
    sd = np.std(draws.lambda_, axis=0, ddof=1)
    z = (med - lam_true) / sd
    return {
        "regime1_accuracy": accuracy,
        "loading_z": z.tolist(),
        "loading_within_3sd": float(np.mean(np.abs(z) <= 3)),
        "mean_nonempty": float(np.mean(draws.nonempty_count)),
    }
