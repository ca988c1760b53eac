"""Daily panel ingestion, event calendars, horizon differencing and scaling.

All containers here are immutable after construction: their arrays are
flagged read-only so they can be shared between chains.
"""

from __future__ import annotations

import datetime as dt
import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import ParseError, ValidationError

log = logging.getLogger(__name__)


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Panel:
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray  # T x M
    labels: tuple
    demeaned: bool = False

    def __post_init__(self):
        object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if self.values.ndim != 2:
            raise ValidationError("panel values must be a T x M matrix")
        T, M = self.values.shape
        if len(self.dates) != T:
            raise ValidationError(f"{len(self.dates)} dates for {T} rows")
        if len(self.labels) != M:
            raise ValidationError(f"{len(self.labels)} labels for {M} columns")
        if T > 1 and not np.all(np.diff(self.dates) > np.timedelta64(0, "D")):
            raise ValidationError("panel dates must be strictly increasing")

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def to_csv(self) -> str:
        df = pd.DataFrame(self.values, columns=list(self.labels))
        df.insert(0, "date", [str(d) for d in self.dates])
        return df.to_csv(index=False, float_format="%.17g", lineterminator="\n")


@dataclass(frozen=True)
class EventCalendar:
    event_indices: np.ndarray  # row indices into Panel.dates, ascending
    labels: tuple
    dates: np.ndarray = field(default=None)  # trading day each event maps to

    def __post_init__(self):
        idx = np.asarray(self.event_indices, dtype=np.int64)
        object.__setattr__(self, "event_indices", _frozen(idx, np.int64))
        object.__setattr__(self, "labels", tuple(str(x) for x in self.labels))
        if self.dates is not None:
            object.__setattr__(self, "dates", _frozen(self.dates, "datetime64[D]"))
        if len(idx) < 1:
            raise ValidationError("event calendar must contain at least one event")
        if len(np.unique(idx)) != len(idx):
            raise ValidationError("event indices must be distinct")
        if np.any(idx < 0):
            raise ValidationError("event indices must be nonnegative")
        if len(self.labels) != len(idx):
            raise ValidationError("one label per event is required")

    def __len__(self) -> int:
        return len(self.event_indices)

    def to_csv(self) -> str:
        if self.dates is None:
            raise ValidationError("calendar has no dates attached")
        lines = ["date,label"]
        for d, lab in zip(self.dates, self.labels):
            lab = lab.replace('"', '""')
            lines.append(f'{d},"{lab}"' if ("," in lab or '"' in lab) else f"{d},{lab}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class HorizonPanel:
    """Rows hold y[t+h] - y[t-1] for base-panel origins t = 1 .. T-1-h."""

    horizon: int
    values: np.ndarray
    origin_indices: np.ndarray
    labels: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "origin_indices", _frozen(self.origin_indices, np.int64))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def M(self) -> int:
        return self.values.shape[1]

    def rows_for(self, base_indices) -> np.ndarray:
        """Row position of each base index, -1 where the origin is not present."""
        base_indices = np.asarray(base_indices, dtype=np.int64)
        first = self.origin_indices[0] if self.n else 0
        pos = base_indices - first
        ok = (pos >= 0) & (pos < self.n)
        return np.where(ok, pos, -1)


@dataclass(frozen=True)
class ScaleMatrix:
    omega_sq: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "omega_sq", _frozen(self.omega_sq))
        if np.any(~(self.omega_sq > 0)):
            raise ValidationError("scale entries must be positive")


@dataclass(frozen=True)
class IngestOptions:
    """``fill='ffill'`` forward-fills gaps; ``fill='strict'`` rejects any gap."""

    fill: str = "ffill"

    def __post_init__(self):
        if self.fill not in ("ffill", "strict"):
            raise ValidationError(f"unknown fill mode {self.fill!r}")


def _read_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("utf-8")
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            return fh.read()
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _parse_date(text, row: int) -> np.datetime64:
    try:
        return np.datetime64(dt.date.fromisoformat(str(text).strip()), "D")
    except (ValueError, TypeError):
        raise ParseError(f"row {row}: malformed date {text!r}") from None


def load_panel(source, options: IngestOptions | None = None) -> Panel:
    """Read a ``date,<label1>,...`` CSV into a validated :class:`Panel`."""
    options = options or IngestOptions()
    text = _read_text(source)
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ParseError("panel file is empty") from None
    if df.shape[1] < 2:
        raise ParseError("panel header must name a date column and at least one series")
    labels = [str(c).strip() for c in df.columns[1:]]
    # row numbers in messages are 1-based file lines after the header
    dates = np.array([_parse_date(v, i + 2) for i, v in enumerate(df.iloc[:, 0])],
                     dtype="datetime64[D]")
    values = np.empty((len(df), len(labels)))
    for j, col in enumerate(df.columns[1:]):
        for i, cell in enumerate(df[col]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                values[i, j] = np.nan
                continue
            try:
                values[i, j] = float(cell)
            except ValueError:
                raise ParseError(f"row {i + 2}, column {labels[j]!r}: bad number {cell!r}") from None

    order = np.argsort(dates, kind="stable")
    dates, values = dates[order], values[order]
    dup = np.diff(dates) == np.timedelta64(0, "D")
    if np.any(dup):
        raise ValidationError(f"duplicate date {dates[1:][dup][0]}")
    counts = np.sum(np.isfinite(values), axis=0)
    for j, c in enumerate(counts):
        if c < 2:
            raise ValidationError(f"column {labels[j]!r} has fewer than 2 observations")

    missing = ~np.isfinite(values)
    if missing.any():
        if options.fill == "strict":
            i, j = np.argwhere(missing)[0]
            raise ValidationError(f"missing value on {dates[i]} in column {labels[j]!r}")
        values = pd.DataFrame(values).ffill().to_numpy()
        complete = np.all(np.isfinite(values), axis=1)
        first = int(np.argmax(complete))
        if first:
            log.info("dropping %d leading rows with missing values", first)
        dates, values = dates[first:], values[first:]
    return Panel(dates=dates, values=values, labels=labels)


def demean(panel: Panel) -> Panel:
    centered = panel.values - panel.values.mean(axis=0)
    return Panel(panel.dates, centered, panel.labels, demeaned=True)


def load_events(source, panel: Panel) -> EventCalendar:
    """Map a ``date,label`` CSV onto panel rows.

    Dates that are not trading days move to the next trading day. Events
    landing on the same trading day are merged into one event.
    """
    text = _read_text(source)
    try:
        df = pd.read_csv(io.StringIO(text), dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise ValidationError("events file is empty") from None
    if len(df) == 0:
        raise ValidationError("events file has no events")
    if df.shape[1] < 2:
        raise ParseError("events header must be 'date,label'")
    last, first = panel.dates[-1], panel.dates[0]
    by_index: dict[int, list[str]] = {}
    for i, (d, lab) in enumerate(zip(df.iloc[:, 0], df.iloc[:, 1])):
        day = _parse_date(d, i + 2)
        lab = str(lab).strip()
        if day > last:
            raise ValidationError(f"event {lab!r} on {day} is after the last panel date {last}")
        if day < first:
            raise ValidationError(f"event {lab!r} on {day} is before the first panel date {first}")
        k = int(np.searchsorted(panel.dates, day, side="left"))
        if panel.dates[k] != day:
            log.info("event %r on %s remapped to next trading day %s", lab, day, panel.dates[k])
        by_index.setdefault(k, []).append(lab)
    idx = sorted(by_index)
    return EventCalendar(
        event_indices=idx,
        labels=["; ".join(by_index[k]) for k in idx],
        dates=panel.dates[idx],
    )


def difference_horizon(panel: Panel, h: int) -> HorizonPanel:
    T = panel.T
    if h < 0 or h >= T - 1:
        raise ValidationError(f"horizon {h} needs 0 <= h < T-1 = {T - 1}")
    y = panel.values
    values = y[1 + h:] - y[: T - 1 - h]
    return HorizonPanel(h, values, np.arange(1, T - h), panel.labels)


def compute_scale(hpanel: HorizonPanel) -> ScaleMatrix:
    """Column sample variances (denominator n-1) of a horizon panel."""
    if hpanel.n < 2:
        raise ValidationError("need at least 2 rows to compute scales")
    var = np.var(hpanel.values, axis=0, ddof=1)
    for j, v in enumerate(var):
        if not v > 0:
            name = hpanel.labels[j] if hpanel.labels else str(j)
            raise ValidationError(f"column {name!r} has zero variance")
    return ScaleMatrix(var)
