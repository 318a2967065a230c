"""Command-line entry point.

Exit codes: 0 success, 2 usage error, 3 input/configuration error,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from datetime import date, datetime, timedelta
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .afc import AfcSchema, clean_records, parse_afc_csv, split_by_line_consistency, write_afc_csv
from .config import load_config
from .errors import InputError, MetroflowError, NoRouteError, NumericalError, StageError
from .flows import SCENARIOS, DayWindow, FlowSeries, aggregate, default_calendar, parse_clock, split_scenarios
from .network import MetroNetwork, RouteCache, enumerate_routes, extract_transfers
from .neural import MinMaxScaler, RecurrentModel, TrainingConfig, predict_series, sliding_windows, train
from .neural.data import WindowedDataset
from .pipeline import ModelConfig, compare_models, evaluate
from .stl import StlParams, sigma3_repair, stl_decompose
from .synth import SynthConfig, default_network, generate_afc, generate_series

log = logging.getLogger("metroflow")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config -> objects
# ---------------------------------------------------------------------------

def day_window_from(cfg) -> DayWindow:
    return DayWindow.parse(*cfg["series"]["day_window"])


def interval_from(cfg) -> timedelta:
    return timedelta(minutes=cfg["series"]["interval_minutes"])


def stl_params_from(cfg, period: int | None = None) -> StlParams:
    s = dict(cfg["stl"])
    s["period"] = period if period is not None else s["period"]
    if s["period"] is None:
        raise InputError("STL period unknown: set stl.period or pass --period")
    return StlParams(**s)


def model_cfg_from(cfg) -> ModelConfig:
    m = dict(cfg["model"])
    m["layer_sizes"] = tuple(m["layer_sizes"])
    return ModelConfig(**m)


def train_cfg_from(cfg, seed: int) -> TrainingConfig:
    return TrainingConfig(shuffle_seed=seed, **cfg["train"])


def synth_cfg_from(cfg, seed: int) -> SynthConfig:
    s = dict(cfg["synth"])
    s["start_date"] = date.fromisoformat(s["start_date"])
    if s["base_rate"] is None:
        del s["base_rate"]
    return SynthConfig(seed=seed, day_window=day_window_from(cfg), interval=interval_from(cfg), **s)


def schema_from(cfg) -> AfcSchema:
    ing = cfg["ingest"]
    kwargs: dict[str, Any] = {"delimiter": ing["delimiter"], "time_format": ing["time_format"]}
    if ing["columns"] is not None:
        kwargs["columns"] = ing["columns"]
    return AfcSchema(**kwargs)


def _clock(text: str):
    off = parse_clock(text)
    return (datetime.min + off).time() if off < timedelta(hours=24) else datetime.max.time()


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects what a subcommand needs to write its manifest."""

    def __init__(self, command: str, cfg: dict, seed: int, out: Path | None):
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.out = out
        self.inputs: dict[str, str] = {}
        self.started = datetime.now().isoformat(timespec="seconds")

    def add_input(self, path: str | Path) -> Path:
        p = Path(path)
        if not p.exists():
            raise InputError(f"input not found: {p}")
        if p.is_dir():
            for f in sorted(p.iterdir()):
                if f.is_file():
                    self.inputs[str(f)] = file_digest(f)
        else:
            self.inputs[str(p)] = file_digest(p)
        return p

    def path(self, name: str) -> Path:
        if self.out is None:
            raise UsageError(f"{self.command} needs --out")
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def write_manifest(self) -> None:
        if self.out is None:
            return
        manifest = {
            "subcommand": self.command,
            "config": self.cfg,
            "inputs": self.inputs,
            "seeds": {"master": self.seed},
            "version": __version__,
            "started": self.started,
            "finished": datetime.now().isoformat(timespec="seconds"),
        }
        with open(self.path("manifest.json"), "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _dump_json(path: Path, obj: Any) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_network(path: str | None, run: Run) -> MetroNetwork:
    if path is None:
        return default_network()
    return MetroNetwork.load(run.add_input(path))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, cfg, run: Run) -> int:
    sc = synth_cfg_from(cfg, run.seed)
    if args.kind == "afc":
        records, truth = generate_afc(sc)
        with open(run.path("records.csv"), "w", newline="", encoding="utf-8") as fh:
            write_afc_csv(records, fh, schema_from(cfg))
        (sc.network or default_network()).save(run.path("network.json"))
        with open(run.path("truth.json"), "w", encoding="utf-8") as fh:
            fh.write(truth.to_json())
        print(f"wrote {len(records)} records, {len(truth.transfer_events)} true transfer events")
    else:
        series, truth = generate_series(sc)
        series.save(run.path("all.csv"))
        calendar = default_calendar(series.dates, _holidays(cfg))
        for name, part in split_scenarios(series, calendar).items():
            part.save(run.path(f"{name}.csv"))
        with open(run.path("truth.json"), "w", encoding="utf-8") as fh:
            fh.write(truth.to_json())
        print(f"wrote {len(series.dates)} days x {series.samples_per_day} bins")
    return EXIT_OK


def _holidays(cfg) -> list[date]:
    return [date.fromisoformat(d) for d in cfg["series"]["holidays"]]


def cmd_ingest(args, cfg, run: Run) -> int:
    net = _load_network(args.network, run)
    src = run.add_input(args.input)
    with open(src, encoding="utf-8", newline="") as fh:
        parsed = parse_afc_csv(fh, schema_from(cfg))
    ing = cfg["ingest"]
    ops = (_clock(ing["ops_hours"][0]), _clock(ing["ops_hours"][1]))
    kept, report = clean_records(parsed.records, net, ops, timedelta(hours=ing["max_trip_hours"]))
    transfers, single = split_by_line_consistency(kept)
    with open(run.path("cleaned.csv"), "w", newline="", encoding="utf-8") as fh:
        write_afc_csv(kept, fh, schema_from(cfg))
    with open(run.path("transfer_candidates.csv"), "w", newline="", encoding="utf-8") as fh:
        write_afc_csv(transfers, fh, schema_from(cfg))
    doc = report.to_dict()
    doc["malformed"] = [{"row": r, "error": e} for r, e in parsed.malformed]
    doc["transfer_candidates"] = len(transfers)
    doc["single_line_trips"] = len(single)
    report_path = Path(args.report) if args.report else Path("report.json")
    if not report_path.is_absolute():
        report_path = run.path(str(report_path))
    _dump_json(report_path, doc)
    rate = report.validity_rate
    print(f"{report.valid_out}/{report.total_in} valid" + (f" ({rate:.2%})" if rate is not None else ""))
    return EXIT_OK


def cmd_routes(args, cfg, run: Run) -> int:
    net = _load_network(args.network, run)
    try:
        origin, dest = [s.strip() for s in args.od.split(",")]
    except ValueError:
        raise UsageError("--od expects ORIGIN,DESTINATION") from None
    rc = cfg["routes"]
    routes = enumerate_routes(net, origin, dest, rc["max_transfers"], rc["distance_slack"])
    if not routes:
        raise NoRouteError(f"no route from {origin} to {dest}")
    rows = []
    for rank, it in enumerate(routes, 1):
        legs = " | ".join(f"L{line}: {'-'.join(st)}" for line, st in it.legs)
        print(f"{rank:>3}. {it.total_distance:>9.0f} m  {it.n_transfers} transfer(s)  {legs}")
        rows.append({"rank": rank, "distance_m": it.total_distance, "transfers": it.n_transfers,
                     "path": list(it.path), "legs": [[line, list(st)] for line, st in it.legs],
                     "transfer_stations": [t.station for t in it.transfers]})
    if run.out is not None:
        _dump_json(run.path("routes.json"), rows)
    return EXIT_OK


def cmd_series(args, cfg, run: Run) -> int:
    net = _load_network(args.network, run)
    src = run.add_input(args.input)
    with open(src, encoding="utf-8", newline="") as fh:
        parsed = parse_afc_csv(fh, schema_from(cfg))
    candidates, _ = split_by_line_consistency(parsed.records)
    rc = cfg["routes"]
    ext = extract_transfers(candidates, net, RouteCache(net, rc["max_transfers"]))
    stations = cfg["series"]["stations"] or net.transfer_stations
    if args.stations:
        stations = [s.strip() for s in args.stations.split(",")]
    dates = sorted({r.in_time.date() for r in parsed.records})
    summary = {"unroutable": len(ext.unroutable), "events": len(ext.events), "stations": {}}
    for st in stations:
        agg = aggregate(ext.events, st, interval_from(cfg), day_window_from(cfg), dates)
        series = agg.series.padded() if cfg["series"]["pad_overnight"] else agg.series
        series.save(run.path(f"{st}.csv"))
        summary["stations"][st] = {"total": int(series.counts.sum()), "out_of_window": agg.out_of_window}
        if args.split_scenarios and series.dates:
            calendar = default_calendar(series.dates, _holidays(cfg))
            for name, part in split_scenarios(series, calendar).items():
                part.save(run.path(f"{st}_{name}.csv"))
    _dump_json(run.path("series_summary.json"), summary)
    print(f"{len(ext.events)} transfer events at {len(stations)} station(s); {len(ext.unroutable)} unroutable")
    return EXIT_OK


def cmd_decompose(args, cfg, run: Run) -> int:
    series = FlowSeries.load(run.add_input(args.input))
    if cfg["series"]["pad_overnight"]:
        series = series.padded()
    for key in ("n_s", "n_l", "n_t", "n_i", "n_o", "convergence_tol", "loess_degree"):
        val = getattr(args, key)
        if val is not None:
            cfg["stl"][key] = val
    if args.lowpass_literal:
        cfg["stl"]["lowpass_literal"] = True
    period = args.period or cfg["stl"]["period"] or series.samples_per_day
    cfg["stl"]["period"] = period
    dec = stl_decompose(series.counts.astype(float), stl_params_from(cfg))
    residual, repaired = dec.residual, []
    if args.repair:
        residual, repaired = sigma3_repair(dec.residual, series.samples_per_day)
    with open(run.path("decomposition.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "trend", "seasonal", "residual"])
        for ts, t, s, r in zip(series.timestamps(), dec.trend, dec.seasonal, residual):
            w.writerow([ts.strftime("%Y-%m-%d %H:%M:%S"), repr(float(t)), repr(float(s)), repr(float(r))])
    _dump_json(run.path("decomposition.json"), {
        "params": dec.params.to_dict(), "inner_iterations_used": dec.inner_iterations_used,
        "iterations_per_pass": dec.iterations_per_pass, "converged": dec.converged,
        "repaired_indices": repaired, "station": series.station, "scenario": series.scenario,
    })
    print(f"decomposed {len(series)} values, period {period}, {dec.inner_iterations_used} inner iterations")
    return EXIT_OK


def cmd_train(args, cfg, run: Run) -> int:
    series = FlowSeries.load(run.add_input(args.series))
    for key, cfg_key in (("epochs", "epochs"), ("batch", "batch_size"), ("lr", "learning_rate")):
        val = getattr(args, key)
        if val is not None:
            cfg["train"][cfg_key] = val
    if args.model:
        cfg["model"]["cell"] = args.model
    mc = model_cfg_from(cfg)
    values = series.counts.astype(float)
    scaler = MinMaxScaler.fit(values)
    windows, targets = sliding_windows(scaler.transform(values), mc.lookback)
    model = mc.build(run.seed)
    _, trace = train(model, WindowedDataset(windows, targets, mc.lookback, scaler), train_cfg_from(cfg, run.seed))
    ckpt = run.path("model.npz")
    model.save(ckpt, {"scaler": [scaler.lo, scaler.hi], "lookback": mc.lookback, "loss_trace": trace})
    print(f"trained {mc.cell} {list(mc.layer_sizes)}: final loss {trace[-1]:.6g}")
    return EXIT_OK


def cmd_predict(args, cfg, run: Run) -> int:
    series = FlowSeries.load(run.add_input(args.series))
    model, extra = RecurrentModel.load(run.add_input(args.checkpoint))
    scaler = MinMaxScaler(*extra["scaler"])
    L = int(extra["lookback"])
    values = series.counts.astype(float)
    pred = predict_series(model, values, L, scaler)
    stamps = series.timestamps()[L:]
    with open(run.path("predictions.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "actual", "predicted"])
        for ts, a, p in zip(stamps, values[L:], pred):
            w.writerow([ts.strftime("%Y-%m-%d %H:%M:%S"), a, repr(float(p))])
    ev = evaluate(values[L:], pred)
    _dump_json(run.path("metrics.json"), ev.to_dict(include_timing=False))
    print(f"MAPE {ev.mape:.2f}%  RMSE {ev.rmse:.3f}  n={ev.n}")
    return EXIT_OK


def bundled_benchmark_dir() -> Path:
    return Path(str(resources.files("metroflow") / "data" / "benchmark"))


def cmd_compare(args, cfg, run: Run) -> int:
    data_dir = Path(args.data_dir) if args.data_dir else bundled_benchmark_dir()
    run.add_input(data_dir)
    series = {s: FlowSeries.load(data_dir / f"{s}.csv") for s in SCENARIOS}
    stl = {s: stl_params_from(cfg, cfg["stl"]["period"] or series[s].samples_per_day) for s in SCENARIOS}
    pc = cfg["pipeline"]
    report = compare_models(series, model_cfg_from(cfg), train_cfg_from(cfg, run.seed), run.seed, stl,
                            pc["ratio"], day_start=pc["day_start"], jobs=args.jobs, repair=pc["repair"])
    run.path("report.json").write_text(report.to_json(include_timing=False), encoding="utf-8")
    run.path("report.txt").write_text(report.to_table(), encoding="utf-8")
    _dump_json(run.path("timings.json"), {
        f"{m}/{s}": c.evaluation.prediction_time for (m, s), c in sorted(report.cells.items())
        if c.evaluation is not None})
    pred_dir = run.path("predictions")
    pred_dir.mkdir(exist_ok=True)
    for (m, s), c in sorted(report.cells.items()):
        if c.predictions is None:
            continue
        with open(pred_dir / f"{m}_{s}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "actual", "predicted"])
            for i, (a, p) in enumerate(zip(c.actual, c.predictions)):
                w.writerow([i, repr(float(a)), repr(float(p))])
    print(report.to_table(), end="")
    failed = [k for k, c in report.cells.items() if c.error]
    if failed:
        log.warning("%d cell(s) failed", len(failed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="master seed (default: config 'seed')")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config value, e.g. stl.n_s=15")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="metroflow", description="Metro transfer-flow reconstruction and forecasting.")
    p.add_argument("--version", action="version", version=f"metroflow {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", parents=[common], help="generate synthetic AFC records or flow series")
    s.add_argument("kind", choices=["afc", "series"])

    s = sub.add_parser("ingest", parents=[common], help="parse and clean AFC records")
    s.add_argument("--input", required=True)
    s.add_argument("--network")
    s.add_argument("--report", help="report path (relative paths land in --out)")

    s = sub.add_parser("routes", parents=[common], help="rank candidate routes for an OD pair")
    s.add_argument("--network")
    s.add_argument("--od", required=True, metavar="ORIGIN,DEST")

    s = sub.add_parser("series", parents=[common], help="build transfer-flow series from cleaned records")
    s.add_argument("--input", required=True)
    s.add_argument("--network")
    s.add_argument("--stations", help="comma-separated station codes (default: all transfer stations)")
    s.add_argument("--split-scenarios", action="store_true")
    s.add_argument("--pad-overnight", action="store_true", help="zero-fill the overnight closure (00:00-24:00 grid)")

    s = sub.add_parser("decompose", parents=[common], help="STL-decompose a flow series")
    s.add_argument("--input", required=True)
    s.add_argument("--period", type=int)
    s.add_argument("--n-s", dest="n_s", type=int)
    s.add_argument("--n-l", dest="n_l", type=int)
    s.add_argument("--n-t", dest="n_t", type=int)
    s.add_argument("--n-i", dest="n_i", type=int)
    s.add_argument("--n-o", dest="n_o", type=int)
    s.add_argument("--convergence-tol", dest="convergence_tol", type=float)
    s.add_argument("--loess-degree", dest="loess_degree", type=int, choices=[0, 1, 2])
    s.add_argument("--lowpass-literal", action="store_true")
    s.add_argument("--repair", action="store_true", help="also apply 3-sigma residual repair")
    s.add_argument("--pad-overnight", action="store_true", help="zero-fill the overnight closure before decomposing")

    s = sub.add_parser("train", parents=[common], help="train a recurrent model on a flow series")
    s.add_argument("--series", required=True)
    s.add_argument("--model", choices=["gru", "lstm"])
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--lr", type=float)

    s = sub.add_parser("predict", parents=[common], help="one-step predictions from a checkpoint")
    s.add_argument("--series", required=True)
    s.add_argument("--checkpoint", required=True)

    s = sub.add_parser("compare", parents=[common], help="four-model comparison over three scenarios")
    s.add_argument("--data-dir", help="directory with <scenario>.csv series (default: bundled benchmark)")
    return p


COMMANDS = {
    "synth": cmd_synth, "ingest": cmd_ingest, "routes": cmd_routes, "series": cmd_series,
    "decompose": cmd_decompose, "train": cmd_train, "predict": cmd_predict, "compare": cmd_compare,
}


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, StageError):
        exc = exc.cause
    if isinstance(exc, (NumericalError, FloatingPointError, np.linalg.LinAlgError)):
        return EXIT_NUMERIC
    return EXIT_INPUT


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"{exc}\n\n{parser.format_usage()}", file=sys.stderr, end="")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if getattr(args, "pad_overnight", False):
            cfg["series"]["pad_overnight"] = True
        seed = args.seed if args.seed is not None else cfg["seed"]
        cfg["seed"] = seed
        run = Run(args.command, cfg, seed, Path(args.out) if args.out else None)
        if args.config:
            run.add_input(args.config)
        code = COMMANDS[args.command](args, cfg, run)
        run.write_manifest()
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MetroflowError, OSError, ValueError, KeyError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
