"""Command-line front end: ``estimate``, ``simulate`` and ``check``.

Exit codes: 0 success, 1 oracle failure, 2 invalid input, 3 chain abort.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, oracle
from . import synthetic as syn
from .errors import ChainAbort, ValidationError
from .factor import FactorPriors, SignRestriction
from .gibbs import ChainConfig, run_chain
from .mixture import MixturePriors
from .panel import IngestOptions, compute_scale, demean, difference_horizon, load_events, load_panel
from .projection import estimate_all, normalize_shock, reference_magnitude
from .report import sha256_file, write_csv, write_manifest, write_outputs

log = logging.getLogger("ruling_shock")

THREADS_ENV = "RULING_SHOCK_THREADS"


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _workers(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def _add_chain_flags(p):
    p.add_argument("--components", type=int, default=30, help="maximum mixture components J")
    p.add_argument("--burnin", type=int, default=2000)
    p.add_argument("--draws", type=int, default=3000)
    p.add_argument("--thin", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variant", choices=["coherent", "verbatim"], default="coherent")
    p.add_argument("--mh-statistic", choices=["as_printed", "dirichlet_w"], default="as_printed")
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruling-shock", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate impulse responses from a panel and events")
    est.add_argument("--panel")
    est.add_argument("--events")
    est.add_argument("--from-manifest", help="re-run the configuration recorded in a manifest")
    est.add_argument("--horizons", type=int, default=60)
    est.add_argument("--mode", choices=["mixture", "naive", "both"], default="mixture")
    est.add_argument("--target-columns", default="*ciss*")
    est.add_argument("--ref-horizon", type=int, default=None,
                     help="normalization horizon (default: 10, or H when H < 10)")
    est.add_argument("--ref-magnitude", type=float, default=None,
                     help="default: one sd of the target-column average in levels")
    est.add_argument("--strict", action="store_true", help="reject missing cells instead of forward-filling")
    est.add_argument("--scaled-factors", action="store_true")
    est.add_argument("--truth", help="ground-truth JSON from `simulate` for recovery metrics")
    est.add_argument("--out", default="out")
    _add_chain_flags(est)

    sim = sub.add_parser("simulate", help="write a synthetic panel with planted truth")
    sim.add_argument("--spec", help="JSON file with synthetic spec fields")
    sim.add_argument("--T", type=int)
    sim.add_argument("--M", type=int)
    sim.add_argument("--n-events", type=int)
    sim.add_argument("--sim-seed", type=int, help="seed of the generator")
    sim.add_argument("--components-sweep", help="comma-separated J values, e.g. 10,20,30,40")
    sim.add_argument("--out", default="sim")
    _add_chain_flags(sim)

    chk = sub.add_parser("check", help="run the analytic oracle suite")
    chk.add_argument("--n", type=int, default=100_000, help="draws per conditional")
    chk.add_argument("--seed", type=int, default=20240601)
    return parser


def _settings_from_args(args) -> dict:
    if args.from_manifest:
        with open(args.from_manifest, encoding="utf-8") as fh:
            s = json.load(fh)["settings"]
        if args.out != "out":
            s["out"] = args.out
        return s
    if not args.panel or not args.events:
        raise ValidationError("--panel and --events are required")
    return {
        "panel": str(Path(args.panel).resolve()),
        "events": str(Path(args.events).resolve()),
        "horizons": args.horizons,
        "mode": args.mode,
        "components": args.components,
        "burnin": args.burnin,
        "draws": args.draws,
        "thin": args.thin,
        "seed": args.seed,
        "variant": args.variant,
        "mh_statistic": args.mh_statistic,
        "target_columns": args.target_columns,
        "ref_horizon": args.ref_horizon if args.ref_horizon is not None else min(10, args.horizons),
        "ref_magnitude": args.ref_magnitude,
        "strict": args.strict,
        "scaled_factors": args.scaled_factors,
        "truth": str(Path(args.truth).resolve()) if args.truth else None,
        "out": args.out,
        "priors": {"a0": 0.1, "b0": 0.1, "d": 10.0, "tau": 1.0},
    }


def run_estimate(settings: dict, workers: int = 1) -> dict:
    """Run the pipeline described by ``settings``; writes outputs, returns results."""
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    opts = IngestOptions(fill="strict" if settings["strict"] else "ffill")
    panel = demean(load_panel(settings["panel"], opts))
    events = load_events(settings["events"], panel)
    restriction = SignRestriction.from_glob(panel.labels, settings["target_columns"])
    pr = settings["priors"]
    mpriors = MixturePriors(a0=pr["a0"], b0=pr["b0"], d=pr["d"], J=settings["components"])
    fpriors = FactorPriors(tau=pr["tau"])
    H = settings["horizons"]
    if not 0 <= settings["ref_horizon"] <= H:
        raise ValidationError(f"reference horizon {settings['ref_horizon']} outside 0..{H}")
    ref_mag = settings["ref_magnitude"]
    if ref_mag is None:
        ref_mag = reference_magnitude(panel, restriction)
    modes = ["mixture", "naive"] if settings["mode"] == "both" else [settings["mode"]]

    manifest = {
        "software": {"name": "ruling_shock", "version": __version__, "numpy": np.__version__},
        "settings": settings,
        "inputs": {"panel_sha256": sha256_file(settings["panel"]),
                   "events_sha256": sha256_file(settings["events"])},
        "derived": {"T": panel.T, "M": panel.M, "n_events": len(events),
                    "target_columns": [panel.labels[i] for i in restriction.target_columns],
                    "ref_magnitude": ref_mag},
        "started": _now(),
    }
    write_manifest(out / "manifest.json", manifest)

    results = {}
    for mode in modes:
        cfg = ChainConfig(burnin=settings["burnin"], draws=settings["draws"], thin=settings["thin"],
                          seed=settings["seed"], mode=mode, variant=settings["variant"],
                          mh_statistic=settings["mh_statistic"])
        draws = estimate_all(panel, events, H, mpriors, fpriors, restriction, cfg, workers=workers)
        irf = normalize_shock(draws, restriction, settings["ref_horizon"], ref_mag,
                              scaled_factors=settings["scaled_factors"])
        results[mode] = (draws, irf)
    write_outputs(out, panel, events, results)

    if settings.get("truth"):
        with open(settings["truth"], encoding="utf-8") as fh:
            truth = json.load(fh)
        rec = syn.recovery_metrics(results[modes[0]][0][0], truth)
        with open(out / "recovery.json", "w", encoding="utf-8") as fh:
            json.dump(rec, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"regime-1 accuracy {rec['regime1_accuracy']:.4f}, "
              f"loadings within 3 sd {rec['loading_within_3sd']:.3f}, "
              f"mean non-empty clusters {rec['mean_nonempty']:.2f}")

    manifest["acceptance_rates"] = {m: {str(h): d.accept_rate for h, d in results[m][0].items()}
                                    for m in modes}
    manifest["dropped_draws"] = {m: results[m][1].dropped for m in modes}
    manifest["finished"] = _now()
    write_manifest(out / "manifest.json", manifest)
    return results


def cmd_estimate(args) -> int:
    settings = _settings_from_args(args)
    run_estimate(settings, workers=_workers(args))
    print(f"wrote results to {settings['out']}")
    return 0


def _sim_spec(args) -> syn.SyntheticSpec:
    base = {}
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            try:
                base = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"invalid spec JSON: {exc}") from None
    for key, val in (("T", args.T), ("M", args.M), ("n_events", args.n_events), ("seed", args.sim_seed)):
        if val is not None:
            base[key] = val
    return syn.SyntheticSpec.from_dict(base)


def cmd_simulate(args) -> int:
    spec = _sim_spec(args)
    data = syn.generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "panel.csv").write_text(data.panel.to_csv(), encoding="utf-8")
    (out / "events.csv").write_text(data.events.to_csv(), encoding="utf-8")
    (out / "truth.json").write_text(syn.truth_to_json(data.truth) + "\n", encoding="utf-8")
    print(f"wrote panel.csv, events.csv, truth.json to {out}")
    if args.components_sweep:
        try:
            Js = [int(x) for x in args.components_sweep.split(",") if x.strip()]
        except ValueError:
            raise ValidationError("--components-sweep takes comma-separated integers") from None
        rows = components_sweep(data, Js, args)
        write_csv(out / "sweep.csv", ["J", "mean_nonempty", "theta1_sq_median"], rows)
        print(f"{'J':>4} {'non-empty':>10} {'theta1^2':>10}")
        for J, ne, th in rows:
            print(f"{J:>4} {ne:>10.3f} {th:>10.4f}")
    return 0


def components_sweep(data, Js, args) -> list:
    """Horizon-0 chains for several maximum component counts."""
    panel = demean(data.panel)
    hp = difference_horizon(panel, 0)
    omega = compute_scale(hp)
    restriction = SignRestriction(tuple(range(data.truth["spec"]["n_target"])))
    rows = []
    for J in Js:
        cfg = ChainConfig(burnin=args.burnin, draws=args.draws, thin=args.thin, seed=args.seed,
                          variant=args.variant, mh_statistic=args.mh_statistic)
        d = run_chain(hp, data.events, omega, MixturePriors(J=J), FactorPriors(), restriction, cfg)
        rows.append((J, float(np.mean(d.nonempty_count)), float(np.median(d.theta1_sq))))
    return rows


def cmd_check(args) -> int:
    results = oracle.analytic_check(n=args.n, seed=args.seed)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print("FAILED: " + ", ".join(failed))
        return 1
    print("all oracle checks passed")
    return 0


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ChainAbort as exc:
        print(f"chain aborted: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
