"""Plot-ready long-format CSV output and the run manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if np.isnan(v) else repr(v)
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for r in rows:
            fh.write(",".join(fmt(x) for x in r) + "\n")


def irf_rows(mode, labels, result):
    for i, lab in enumerate(labels):
        for hi, h in enumerate(result.horizons):
            for li, lev in enumerate(result.levels):
                yield mode, lab, int(h), float(lev), result.irf[hi, i, li]


def commonality_rows(mode, labels, result):
    for i, lab in enumerate(labels):
        for hi, h in enumerate(result.horizons):
            yield mode, lab, int(h), result.commonality[hi, i]


def factor_rows(mode, events, result):
    for e, (lab, date) in enumerate(zip(events.labels, events.dates)):
        for hi, h in enumerate(result.horizons):
            for li, lev in enumerate(result.levels):
                yield mode, lab, str(date), int(h), float(lev), result.factor_quantiles[e, hi, li]


def nonevent_rows(mode, dates, draws_by_h):
    for h, d in sorted(draws_by_h.items()):
        for r, t in enumerate(d.origin_indices):
            yield mode, str(dates[t]), int(h), d.nonevent_prob[r], d.variance_path[r]


def chain_rows(mode, draws_by_h):
    for h, d in sorted(draws_by_h.items()):
        yield (mode, int(h), float(np.median(d.theta1_sq)), float(np.mean(d.nonempty_count)),
               d.accept_rate, float(np.median(d.c0_trace)), d.numerical_rejections)


def write_outputs(out: Path, panel, events, results: dict) -> None:
    """``results`` maps mode -> (draws_by_h, IrfResult)."""
    modes = sorted(results)
    labels = panel.labels
    write_csv(out / "irf.csv", ["mode", "variable", "horizon", "level", "value"],
              (r for m in modes for r in irf_rows(m, labels, results[m][1])))
    write_csv(out / "commonality.csv", ["mode", "variable", "horizon", "median"],
              (r for m in modes for r in commonality_rows(m, labels, results[m][1])))
    write_csv(out / "factor_events.csv", ["mode", "event", "date", "horizon", "level", "value"],
              (r for m in modes for r in factor_rows(m, events, results[m][1])))
    write_csv(out / "nonevent_prob.csv", ["mode", "date", "horizon", "prob", "variance"],
              (r for m in modes for r in nonevent_rows(m, panel.dates, results[m][0])))
    write_csv(out / "chains.csv",
              ["mode", "horizon", "theta1_sq_median", "nonempty_mean", "accept_rate",
               "c0_median", "numerical_rejections"],
              (r for m in modes for r in chain_rows(m, results[m][0])))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path: Path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
