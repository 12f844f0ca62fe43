"""
Command-line front end.

    roughvol estimate SERIES.csv   structure functions and Hurst fit of a vol series
    roughvol simulate              rough-vol MC experiment: implied vols and H per maturity
    roughvol market QUOTES.csv     filters, parity fits, ATM IVs, daily proxy, optional spot proxy
    roughvol bias                  smoothing-bias curve f(theta) and the m-hat table

Every run writes ``manifest.json`` next to its outputs with the resolved
configuration, seeds, input and output digests and timestamps. Timestamps live
only in the manifest, so the other outputs are byte-identical across reruns.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import hashlib
import json
import logging
import math
import platform
import sys
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__, bias, market, medvedev, montecarlo, rng, scaling
from . import config as config_mod
from .fbm import CholeskyError

log = logging.getLogger("roughvol")

MANIFEST = "manifest.json"
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICS = 0, 1, 2


class DegenerateRun(Exception):
    """Outputs were written but the main numerical result is undefined."""


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def write_manifest(out: Path, command: str, cfg: dict, seed: int, workers: int, inputs: list[Path],
                   outputs: list[Path], started: str, status: str, argv: list[str]) -> Path:
    payload = {
        "command": command,
        "argv": argv,
        "status": status,
        "configuration": config_mod.jsonable(cfg),
        "seeds": {
            "base_seed": seed,
            "rule": "SeedSequence(base_seed, spawn_key=key) -> Philox",
            "keys": {"master_path": [rng.MASTER_PATH_KEY], "continuations": [rng.CONTINUATION_KEY, "day"]},
        },
        "workers": workers,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {p.name: _sha256(p) for p in sorted(set(outputs))},
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "started_at": started,
        "finished_at": _now(),
    }
    path = out / MANIFEST
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def _write_json(path: Path, payload: dict) -> Path:
    payload = {**payload, "manifest": MANIFEST}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, (dt.date, dt.datetime)):
        return obj.isoformat()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _empty_scaling_csvs(out: Path, stem: str) -> list[Path]:
    files = []
    for suffix, header in (("logm", ["q", "delta", "log_delta", "log_m"]),
                           ("zeta", ["q", "zeta", "zeta_stderr", "r_squared", "q_times_hurst"])):
        p = out / f"{stem}_{suffix}.csv"
        with open(p, "w", newline="") as fh:
            csv.writer(fh).writerow(header)
        files.append(p)
    return files


def scaling_artifacts(series: scaling.VolSeries, cfg: dict, out: Path, stem: str,
                      diagnostics: bool = False) -> tuple[str, list[Path]]:
    """Fit and write ``<stem>_report.json`` plus the two CSVs; returns ``(status, files)``.

    Status is ``ok``, ``degenerate`` (some q has fewer than three nonzero
    cells) or ``insufficient_data`` (fewer than three usable lags).
    """
    est = cfg["estimate"]
    q = est["q_grid"]
    deltas = [d for d in range(est["delta_min"], est["delta_max"] + 1) if 1 <= d <= len(series) - 2]
    base = {"n_points": len(series), "requested_delta_range": [est["delta_min"], est["delta_max"]]}
    report_path = out / f"{stem}_report.json"
    if len(deltas) < 3:
        log.warning("%s: %d points leave %d usable lags; no fit", stem, len(series), len(deltas))
        _write_json(report_path, {**base, "status": "insufficient_data", "delta_grid": deltas, "q_grid": list(q)})
        return "insufficient_data", [report_path, *_empty_scaling_csvs(out, stem)]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = scaling.fit_scaling(series, q, deltas)
    except scaling.DegenerateScalingError as exc:
        table = np.asarray(exc.m_table)
        log.warning("%s: %s", stem, exc)
        _write_json(report_path, {**base, "status": "degenerate", "reason": str(exc), "q_grid": list(q),
                                  "delta_grid": deltas, "m_table": table, "m_identically_zero": bool(np.all(table == 0))})
        return "degenerate", [report_path, *_empty_scaling_csvs(out, stem)]

    extra = {**base, "status": "ok", "manifest": MANIFEST}
    if diagnostics:
        diag = []
        for d in est["diagnostic_deltas"]:
            try:
                diag.append(scaling.increment_diagnostics(series, d, hurst=rep.hurst_hat).to_dict())
            except ValueError as exc:
                diag.append({"delta": d, "skipped": str(exc)})
        extra["diagnostics"] = diag
    files = rep.write(out, stem, extra)
    return "ok", files


def _log_outputs(files):
    for f in files:
        log.info("wrote %s", f)


def cmd_estimate(args, cfg, out: Path):
    if args.input is None:
        raise ValueError("estimate needs an input series CSV")
    src = Path(args.input)
    series = scaling.read_series_csv(src)
    status, files = scaling_artifacts(series, cfg, out, "scaling", diagnostics=True)
    if status == "insufficient_data":
        return [src], files, ValueError(f"series of {len(series)} points is too short for the lag range")
    if status == "degenerate":
        return [src], files, DegenerateRun("structure function vanishes; the scaling fit is undefined")
    return [src], files, None


def cmd_simulate(args, cfg, out: Path):
    model = config_mod.build_model(cfg)
    mc = config_mod.build_mc(cfg, args.seed, args.workers)
    res = montecarlo.hurst_vs_tau(model, mc, cfg["estimate"]["q_grid"],
                                  range(cfg["estimate"]["delta_min"], cfg["estimate"]["delta_max"] + 1))
    files = []
    spot = out / "spot.csv"
    scaling.write_series_csv(res.spot_series, spot)
    files.append(spot)
    for tau, series in res.implied_series.items():
        p = out / f"implied_tau{tau}.csv"
        scaling.write_series_csv(series, p)
        files.append(p)

    curve = out / "bias_curve.csv"
    with open(curve, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "hurst_hat", "stderr"])
        for tau in mc.taus:
            h, se = res.hurst_by_tau[tau]
            w.writerow([tau, repr(float(h)), repr(float(se))])
    files.append(curve)

    prices = out / "atm_prices.csv"
    with open(prices, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "tau", "price", "stderr"])
        for i in range(res.prices.shape[0]):
            for j, tau in enumerate(mc.taus):
                w.writerow([i + 1, tau, repr(float(res.prices[i, j])), repr(float(res.price_stderr[i, j]))])
    files.append(prices)

    files.append(_write_json(out / "experiment.json", {
        "spot_hurst": {"hurst_hat": res.spot_hurst[0], "stderr": res.spot_hurst[1]},
        "hurst_by_tau": {str(t): {"hurst_hat": h, "stderr": s} for t, (h, s) in res.hurst_by_tau.items()},
        "increment_std": {"spot": float(np.std(np.diff(res.spot_series.log_values), ddof=1)),
                          **{str(t): float(np.std(np.diff(s.log_values), ddof=1))
                             for t, s in res.implied_series.items()}},
    }))
    return [], files, None


def cmd_market(args, cfg, out: Path):
    if args.quotes is None:
        raise ValueError("market needs a quotes CSV")
    src = Path(args.quotes)
    inputs = [src] + ([Path(args.params)] if args.params else [])
    fconf = config_mod.build_filter(cfg)
    ms = config_mod.build_medvedev(cfg)
    rows = market.read_quotes_csv(src)
    res = market.run_market_pipeline(rows, fconf)

    files = [out / "parity_fits.csv", out / "iv_panel.csv", out / "daily_proxy.csv"]
    market.write_fits_csv(res.fits, files[0])
    market.write_iv_panel_csv(res.iv_points, files[1])
    market.write_proxy_csv(res.proxies, files[2])

    stages = {}
    series = scaling.VolSeries(np.array([p.date.isoformat() for p in res.proxies], dtype=object),
                               np.array([p.implied_vol for p in res.proxies]), "1 trading day")
    stages["proxy_scaling"], f = scaling_artifacts(series, cfg, out, "proxy_scaling")
    files += f

    if ms is not None:
        params, terms = ms
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            prows = medvedev.proxy_rows([(p.date, p.tau_days, p.implied_vol) for p in res.proxies], params, terms)
        for w in caught:
            log.warning("%s", w.message)
        stages["medvedev_dropped"] = len(res.proxies) - len(prows)
        p = out / "medvedev_proxy.csv"
        medvedev.write_proxy_rows_csv(prows, p)
        files.append(p)
        ms_series = scaling.VolSeries(np.array([r.date.isoformat() for r in prows], dtype=object),
                                      np.array([r.sigma_proxy for r in prows]), "1 trading day")
        stages["medvedev_scaling"], f = scaling_artifacts(ms_series, cfg, out, "medvedev_scaling")
        files += f

    files.append(_write_json(out / "filter_report.json", {**res.report.to_dict(), "n_input_rows": len(rows),
                                                          "stages": stages}))
    return inputs, files, None


def cmd_bias(args, cfg, out: Path):
    b = cfg["bias"]
    params = bias.BiasParams(b["hurst"], b["nu"])
    errors = []
    if not b["tau"] > 0:
        errors.append(f"bias.tau must be positive, got {b['tau']}")
    if not 0 < b["theta_min"] < b["theta_max"] or b["n_theta"] < 2:
        errors.append("need 0 < theta_min < theta_max and n_theta >= 2")
    if not 1 <= b["delta_min"] < b["delta_max"]:
        errors.append("need 1 <= delta_min < delta_max")
    if errors:
        raise config_mod.ConfigValidationError(errors)

    theta = np.logspace(math.log10(b["theta_min"]), math.log10(b["theta_max"]), b["n_theta"])
    curve = bias.bias_curve(params.hurst, theta, b["tol"], workers=args.workers)
    deltas = list(range(b["delta_min"], b["delta_max"] + 1))
    table = bias.moment_table(params, b["tau"], deltas, b["tol"])
    log_d = np.log(deltas)
    slope = float(np.polyfit(log_d, np.log([r["m_hat"] for r in table]), 1)[0])
    curve.meta.update({"manifest": MANIFEST, "nu": params.nu, "tau": b["tau"],
                       "m_hat_loglog_slope": slope, "m_hat_implied_hurst": slope / 2})
    files = curve.write(out)

    mt = out / "moment_table.csv"
    with open(mt, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delta", "theta", "f", "m_hat", "unbiased"])
        for r in table:
            w.writerow([r["delta"], repr(float(r["theta"])), repr(float(r["f"])), repr(float(r["m_hat"])),
                        repr(float(r["unbiased"]))])
    files.append(mt)
    return [], files, None


COMMANDS = {"estimate": cmd_estimate, "simulate": cmd_simulate, "market": cmd_market, "bias": cmd_bias}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="base seed for every random stream (default 0)")
    common.add_argument("--workers", type=int, default=None, help="worker processes (default: logical cores)")
    common.add_argument("--out", default="out", help="output directory (default ./out)")
    common.add_argument("--config", help="INI file with [model] [mc] [estimate] [filter] [medvedev] [bias]")
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="roughvol", description=__doc__.split("\n\n")[0].strip())
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("estimate", parents=[common], help="scaling analysis of a date,value series")
    e.add_argument("input", nargs="?")
    e.add_argument("--q-grid", type=config_mod.parse_float_list)
    e.add_argument("--delta-min", type=int)
    e.add_argument("--delta-max", type=int)

    s = sub.add_parser("simulate", parents=[common], help="Hurst estimate versus maturity in the rough model")
    s.add_argument("--taus", type=config_mod.parse_int_list, help="e.g. 1,5,10,20 or 1-20")
    s.add_argument("--n-paths", type=int)
    s.add_argument("--hurst", type=float)
    s.add_argument("--eta", type=float)
    s.add_argument("--sigma0", type=float)
    s.add_argument("--horizon-days", type=int)
    s.add_argument("--variance-rule", choices=montecarlo.VARIANCE_RULES)

    m = sub.add_parser("market", parents=[common], help="option quotes to daily ATM vol proxy")
    m.add_argument("quotes", nargs="?")
    m.add_argument("--params", help="INI file whose [medvedev] section enables the spot proxy")

    b = sub.add_parser("bias", parents=[common], help="smoothing-bias curve and second-moment table")
    b.add_argument("--hurst", type=float)
    b.add_argument("--nu", type=float)
    b.add_argument("--tau", type=float)
    b.add_argument("--delta-min", type=int)
    b.add_argument("--delta-max", type=int)
    b.add_argument("--theta-min", type=float)
    b.add_argument("--theta-max", type=float)
    b.add_argument("--n-theta", type=int)
    return p


def _overrides(args) -> dict:
    g = lambda name: getattr(args, name, None)  # noqa: E731
    if args.command == "estimate":
        return {"estimate": {"q_grid": g("q_grid"), "delta_min": g("delta_min"), "delta_max": g("delta_max")}}
    if args.command == "simulate":
        return {"mc": {"taus": g("taus"), "n_paths": g("n_paths"), "variance_rule": g("variance_rule")},
                "model": {"hurst": g("hurst"), "eta": g("eta"), "sigma0": g("sigma0"),
                          "horizon_days": g("horizon_days")}}
    if args.command == "bias":
        return {"bias": {k: g(k) for k in ("hurst", "nu", "tau", "delta_min", "delta_max",
                                           "theta_min", "theta_max", "n_theta")}}
    return {}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = _now()
    try:
        cfg = config_mod.load_config(args.config, _overrides(args), getattr(args, "params", None))
        if args.print_config:
            sys.stdout.write(config_mod.dump_config(cfg))
            return EXIT_OK
        if args.workers is None:
            args.workers = montecarlo.default_workers()
        if args.workers < 1:
            raise ValueError(f"--workers must be positive, got {args.workers}")
        if args.seed < 0:
            raise ValueError(f"--seed must be nonnegative, got {args.seed}")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        inputs, files, problem = COMMANDS[args.command](args, cfg, out)
        status = "ok" if problem is None else type(problem).__name__
        write_manifest(out, args.command, cfg, args.seed, args.workers, inputs, files, started, status, argv)
        _log_outputs(files)
        if problem is not None:
            raise problem
        return EXIT_OK
    except DegenerateRun as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    # LinAlgError subclasses ValueError, so numerical failures are matched first.
    except (ArithmeticError, CholeskyError, np.linalg.LinAlgError, montecarlo.McPricingError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except (ValueError, OSError) as exc:
        errors = getattr(exc, "errors", None)
        if errors:
            for e in errors:
                print(f"error: {e}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
