"""
Command-line driver.

Subcommands: simulate, train, predict, backtest, baseline, report, rerun.
Every command writes ``run_config.json`` into its output directory; ``rerun``
replays such a file. Exit codes: 0 success, 1 usage, 2 data error, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import numpy as np

from . import __version__, backtest, dataio, garch, lstm, pipeline, simulate, train
from .errors import DataError, NumericFailure
from .features import build_window_batch
from .numerics import DomainError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x) -> str:
    x = float(x)
    return f"{x:.9g}" if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))


def _tau_col(tau: float) -> str:
    return f"q_{tau:g}"


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _write_run_config(out_dir: str, command: str, args: argparse.Namespace):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    payload = {"tool": "lstm-htqf", "version": __version__, "command": command, "args": cfg}
    with open(os.path.join(out_dir, "run_config.json"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)


def _load_series(args) -> dataio.ReturnSeries:
    return dataio.load_csv(args.input, args.column, args.input_kind, args.timestamp_column)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def cmd_simulate(args):
    if args.n < 2:
        raise UsageError("--n must be at least 2")
    _ensure_dir(args.out_dir)
    sim = simulate.generate_htqf_benchmark(args.n, seed=args.seed)
    simulate.write_sim_csv(os.path.join(args.out_dir, "simulation.csv"), sim)
    _write_run_config(args.out_dir, "simulate", args)
    print(f"wrote {args.n} rows to {os.path.join(args.out_dir, 'simulation.csv')}")


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _head_bounds(args) -> lstm.HeadBounds:
    return lstm.HeadBounds(c_mu=args.c_mu, sigma_min=args.sigma_min, sigma_max=args.sigma_max,
                           u_max=args.u_max, v_max=args.v_max, c_q=args.c_q,
                           identity=args.strict_head)


def _train_config(args) -> train.TrainConfig:
    return train.TrainConfig(
        L=args.L, H=args.H, learning_rate=args.learning_rate, batch_size=args.batch_size,
        max_epochs=args.max_epochs, patience=args.patience, seed=args.seed,
        clip_norm=args.clip_norm, taus=train.TauGrid.parse(args.taus), bounds=_head_bounds(args),
        A=args.A, scale_features=not args.no_feature_scaling)


def cmd_train(args):
    series = _load_series(args)
    split = dataio.split_normalize(series)
    config = _train_config(args)
    _ensure_dir(args.out_dir)
    log = (lambda e, tr, va: print(f"epoch {e:4d}  train {tr:.6f}  validation {va:.6f}",
                                   file=sys.stderr)) if args.verbose else None
    if args.grid_L or args.grid_H:
        L_set = _int_list(args.grid_L) if args.grid_L else [config.L]
        H_set = _int_list(args.grid_H) if args.grid_H else [config.H]
        result = train.grid_search(split, L_set, H_set, args.head, args.seed, config,
                                   jobs=args.jobs)
        with open(os.path.join(args.out_dir, "grid_search.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["L", "H", "validation_loss", "status"])
            for row in result.table:
                w.writerow([row["L"], row["H"], _fmt(row["validation_loss"]), row["status"]])
        fitted = result.best
    else:
        fitted = train.fit(split, config, args.head, progress=log)
    norm = {"norm_mean": split.norm_mean, "norm_std": split.norm_std,
            "variance_convention": "population (1/n)"}
    meta = {
        "L": fitted.config.L,
        "taus": list(config.taus.levels),
        "normalization": norm,
        "best_epoch": fitted.best_epoch,
        "train_config": {"L": fitted.config.L, "H": fitted.config.H,
                         "learning_rate": config.learning_rate, "batch_size": config.batch_size,
                         "max_epochs": config.max_epochs, "patience": config.patience,
                         "seed": config.seed, "clip_norm": config.clip_norm},
    }
    lstm.save_model(os.path.join(args.out_dir, "model.json"), fitted.model, meta)
    with open(os.path.join(args.out_dir, "normalization.json"), "w", encoding="utf-8") as fh:
        json.dump(norm, fh, indent=2, sort_keys=True)
        fh.write("\n")
    train.write_history_csv(os.path.join(args.out_dir, "loss_history.csv"), fitted.history)
    _write_run_config(args.out_dir, "train", args)
    print(f"best epoch {fitted.best_epoch}, validation loss "
          f"{fitted.best_validation_loss:.6f}; model written to {args.out_dir}")


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def _write_quantiles(path, t_index, labels, realized, q, taus):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "label", "r"] + [_tau_col(t) for t in taus])
        for k in range(len(t_index)):
            w.writerow([int(t_index[k]), labels[k], _fmt(realized[k])] + [_fmt(x) for x in q[k]])


def cmd_predict(args):
    model, meta = lstm.load_model(args.model)
    try:
        L = int(meta["L"])
        taus = meta["taus"]
        norm = meta["normalization"]
    except KeyError as exc:
        raise DataError(f"model file lacks metadata field {exc}") from None
    series = _load_series(args)
    split = dataio.apply_split(series, norm["norm_mean"], norm["norm_std"])
    if args.segment == "all":
        w = build_window_batch(split.normalize(series.values), L)
        pred = train.predict(model, w, taus)
        realized = w.y
    else:
        pred, realized = pipeline.lstm_forecast(model, split, L, args.segment, taus)
    q = pred.quantiles
    if args.denormalize:
        q = split.denormalize(q)
        realized = split.denormalize(realized)
    _ensure_dir(args.out_dir)
    labels = [series.timestamps[i] for i in pred.t_index]
    _write_quantiles(os.path.join(args.out_dir, "quantiles.csv"), pred.t_index, labels,
                     realized, q, taus)
    if pred.params is not None:
        with open(os.path.join(args.out_dir, "htqf_params.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mu", "sigma", "u", "v"])
            for k, t in enumerate(pred.t_index):
                w.writerow([int(t)] + [_fmt(x) for x in pred.params[k]])
    _write_run_config(args.out_dir, "predict", args)
    print(f"wrote {len(pred.t_index)} forecast rows to {args.out_dir}")


# ---------------------------------------------------------------------------
# backtest / report
# ---------------------------------------------------------------------------

def _read_quantiles(path):
    """(t_index, realized, {tau: column}) from a quantiles CSV."""
    if not os.path.isfile(path):
        raise DataError(f"quantiles file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        rows = [row for row in reader if row]
    cols = {name: i for i, name in enumerate(header)}
    qcols = {float(name[2:]): i for name, i in cols.items() if name.startswith("q_")}
    if not qcols:
        raise DataError(f"{path}: no q_<tau> columns")
    numeric = [h for h in header if h != "label"]
    keep = [i for i, h in enumerate(header) if h != "label"]
    try:
        data = np.array([[float(row[i]) for i in keep] for row in rows]).reshape(-1, len(keep))
    except (ValueError, IndexError):
        raise DataError(f"{path}: malformed numeric cell") from None
    pos = {h: j for j, h in enumerate(numeric)}
    t_index = data[:, pos["t"]].astype(int) if "t" in pos else np.arange(len(rows))
    realized = data[:, pos["r"]] if "r" in pos else None
    q = {tau: data[:, pos[header[i]]] for tau, i in qcols.items()}
    return t_index, realized, q


def _select_levels(qmap, taus, path):
    out = []
    for tau in taus:
        match = [k for k in qmap if abs(k - tau) < 1e-12]
        if not match:
            raise DataError(f"{path}: no quantile column for tau={tau:g}")
        out.append(qmap[match[0]])
    return np.column_stack(out)


def cmd_backtest(args):
    taus = train.TauGrid.parse(args.taus).levels
    t_index, realized, qmap = _read_quantiles(args.quantiles)
    if args.returns:
        r = dataio.load_csv(args.returns, args.returns_column, "returns").values
        if r.size != t_index.size:
            raise DataError(f"length mismatch: {r.size} returns vs {t_index.size} forecasts")
        realized = r
    if realized is None:
        raise DataError("no realized values: give --returns or an 'r' column")
    q = _select_levels(qmap, taus, args.quantiles)
    reports = [backtest.backtest(realized, q[:, k], tau) for k, tau in enumerate(taus)]
    _ensure_dir(args.out_dir)
    backtest.write_report_csv(os.path.join(args.out_dir, "backtest.csv"), reports)
    text = backtest.format_report_text({args.model_name: reports})
    with open(os.path.join(args.out_dir, "backtest.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    _write_run_config(args.out_dir, "backtest", args)
    print(text, end="")


def cmd_report(args):
    models = {}
    for item in args.quantiles:
        name, sep, path = item.partition("=")
        if not sep:
            raise UsageError(f"--quantiles expects NAME=PATH, got {item!r}")
        models[name] = _read_quantiles(path) + (path,)
    common = None
    for t_index, realized, _, path in models.values():
        if realized is None:
            raise DataError(f"{path}: missing 'r' column")
        common = set(t_index) if common is None else common & set(t_index)
    common = np.array(sorted(common))
    if common.size < 2:
        raise DataError("forecast files share fewer than two time indices")
    full = train.TauGrid.parse(args.taus).levels
    var = train.TauGrid.parse(args.var_taus).levels
    reports, losses = {}, []
    realized_ref = None
    for name, (t_index, realized, qmap, path) in models.items():
        sel = np.searchsorted(t_index, common)
        if not np.array_equal(t_index[sel], common):
            raise DataError(f"{path}: time index must be sorted ascending")
        r = realized[sel]
        if realized_ref is None:
            realized_ref = r
        elif not np.allclose(r, realized_ref, rtol=0.0, atol=1e-6):
            raise DataError(f"{path}: realized values disagree with the other files")
        levels = [t for t in full if any(abs(t - k) < 1e-12 for k in qmap)]
        q_full = _select_levels(qmap, levels, path)[sel]
        row = {"model": name, "n": int(common.size),
               "full": backtest.pinball_table(r, q_full, levels)}
        row["var"] = backtest.pinball_table(r, _select_levels(qmap, var, path)[sel], var)
        losses.append(row)
        q_var = _select_levels(qmap, var, path)[sel]
        reports[name] = [backtest.backtest(r, q_var[:, k], tau) for k, tau in enumerate(var)]
    _ensure_dir(args.out_dir)
    with open(os.path.join(args.out_dir, "pinball.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model", "n", "full", "var"])
        for row in losses:
            w.writerow([row["model"], row["n"], _fmt(row["full"]), _fmt(row["var"])])
    with open(os.path.join(args.out_dir, "backtest.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["model"] + list(backtest.REPORT_COLUMNS))
        for name, reps in reports.items():
            for rep in reps:
                w.writerow([name] + backtest.report_row(rep))
    width = max(len(m) for m in models) + 2
    lines = [f"Pinball losses over {common.size} common test points",
             "Method".ljust(width) + f"{'full tau set':>14}{'VaR subset':>14}"]
    for row in losses:
        lines.append(row["model"].ljust(width) + f"{row['full']:>14.4f}{row['var']:>14.4f}")
    text = "\n".join(lines) + "\n\n" + backtest.format_report_text(reports)
    with open(os.path.join(args.out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write(text)
    _write_run_config(args.out_dir, "report", args)
    print(text, end="")


# ---------------------------------------------------------------------------
# baseline
# ---------------------------------------------------------------------------

def cmd_baseline(args):
    series = _load_series(args)
    split = dataio.split_normalize(series)
    taus = train.TauGrid.parse(args.taus)
    fc = pipeline.garch_forecast(split, args.innovation, taus)
    _ensure_dir(args.out_dir)
    garch.write_params(os.path.join(args.out_dir, "garch_params.txt"), fc.params)
    labels = [series.timestamps[i] for i in fc.t_index]
    _write_quantiles(os.path.join(args.out_dir, "quantiles.csv"), fc.t_index, labels,
                     fc.realized, fc.quantiles, taus.levels)
    start = args.skip
    summary = backtest.pinball_summary(fc.realized[start:], fc.quantiles[start:], taus.levels)
    with open(os.path.join(args.out_dir, "pinball.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau_set", "n", "loss"])
        for key, val in summary.items():
            w.writerow([key, fc.realized.size - start, _fmt(val)])
    _write_run_config(args.out_dir, "baseline", args)
    p = fc.params
    extra = f" nu={p.nu:.4f}" if p.nu is not None else ""
    print(f"GARCH(1,1)-{p.kind}: mu={p.mu:.6f} omega={p.omega:.6f} alpha={p.alpha:.6f} "
          f"beta={p.beta:.6f}{extra}")
    for key, val in summary.items():
        print(f"pinball[{key}] = {val:.6f}")


# ---------------------------------------------------------------------------
# rerun
# ---------------------------------------------------------------------------

def cmd_rerun(args):
    with open(args.config, encoding="utf-8") as fh:
        payload = json.load(fh)
    command = payload.get("command")
    if command not in COMMANDS or command == "rerun":
        raise DataError(f"{args.config}: unknown command {command!r}")
    ns = argparse.Namespace(**payload["args"])
    if args.out_dir:
        ns.out_dir = args.out_dir
    ns.command = command
    COMMANDS[command](ns)


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "predict": cmd_predict,
    "backtest": cmd_backtest,
    "baseline": cmd_baseline,
    "report": cmd_report,
    "rerun": cmd_rerun,
}


def _add_input(p, required=True):
    p.add_argument("--input", required=required, help="input CSV with a header row")
    p.add_argument("--column", default="r", help="value column name (default: r)")
    p.add_argument("--input-kind", choices=("returns", "prices"), default="returns",
                   help="'prices' converts P_t to P_t/P_{t-1} - 1 (default: returns)")
    p.add_argument("--timestamp-column", default=None, help="optional label column")


def build_parser() -> argparse.ArgumentParser:
    default_taus = ",".join(f"{t:g}" for t in train.DEFAULT_TAUS.levels)
    var_taus = ",".join(f"{t:g}" for t in train.VAR_TAUS.levels)
    hb = lstm.HeadBounds()
    tc = train.TrainConfig()
    parser = _Parser(prog="lstm-htqf", description=__doc__.strip().splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate the time-varying-tail benchmark series")
    p.add_argument("--n", type=int, default=simulate.DEFAULT_N, help="length (default: 10000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("train", help="fit an LSTM-HTQF or LSTM-TQR model")
    _add_input(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--head", choices=lstm.HEAD_KINDS, default="htqf")
    p.add_argument("--L", type=int, default=tc.L, help=f"window length (default: {tc.L})")
    p.add_argument("--H", type=int, default=tc.H, help=f"hidden size (default: {tc.H})")
    p.add_argument("--grid-L", default=None, help="comma list; enables grid search over L")
    p.add_argument("--grid-H", default=None, help="comma list; enables grid search over H")
    p.add_argument("--jobs", type=int, default=1, help="parallel grid-search workers")
    p.add_argument("--seed", type=int, default=tc.seed)
    p.add_argument("--learning-rate", type=float, default=tc.learning_rate)
    p.add_argument("--batch-size", type=int, default=tc.batch_size)
    p.add_argument("--max-epochs", type=int, default=tc.max_epochs)
    p.add_argument("--patience", type=int, default=tc.patience)
    p.add_argument("--clip-norm", type=float, default=tc.clip_norm)
    p.add_argument("--taus", default=default_taus, help="comma-separated probability levels")
    p.add_argument("--A", type=float, default=tc.A, help="HTQF constant, >= 3")
    p.add_argument("--c-mu", type=float, default=hb.c_mu)
    p.add_argument("--sigma-min", type=float, default=hb.sigma_min)
    p.add_argument("--sigma-max", type=float, default=hb.sigma_max)
    p.add_argument("--u-max", type=float, default=hb.u_max)
    p.add_argument("--v-max", type=float, default=hb.v_max)
    p.add_argument("--c-q", type=float, default=hb.c_q)
    p.add_argument("--strict-head", action="store_true",
                   help="use raw tanh outputs as parameters (no positivity map)")
    p.add_argument("--no-feature-scaling", action="store_true",
                   help="feed the raw moment features without per-column scaling")
    p.add_argument("--verbose", action="store_true", help="log losses per epoch")

    p = sub.add_parser("predict", help="forecast quantiles with a trained model")
    p.add_argument("--model", required=True)
    _add_input(p)
    p.add_argument("--segment", choices=("train", "validation", "test", "all"), default="test")
    p.add_argument("--denormalize", action="store_true",
                   help="report quantiles and realized values in input units")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("backtest", help="coverage tests for one forecast file")
    p.add_argument("--quantiles", required=True, help="quantiles CSV (predict/baseline output)")
    p.add_argument("--returns", default=None, help="optional CSV of realized values")
    p.add_argument("--returns-column", default="r")
    p.add_argument("--taus", default=var_taus)
    p.add_argument("--model-name", default="model")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("baseline", help="GARCH(1,1) baseline forecasts")
    _add_input(p)
    p.add_argument("--innovation", choices=garch.INNOVATIONS, default="normal")
    p.add_argument("--taus", default=default_taus)
    p.add_argument("--skip", type=int, default=0,
                   help="drop this many leading test points from the pinball table")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("report", help="compare several forecast files")
    p.add_argument("--quantiles", nargs="+", required=True, metavar="NAME=PATH")
    p.add_argument("--taus", default=default_taus)
    p.add_argument("--var-taus", default=var_taus)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("rerun", help="replay a run_config.json")
    p.add_argument("config")
    p.add_argument("--out-dir", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"lstm-htqf: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DomainError) as exc:
        print(f"lstm-htqf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericFailure as exc:
        print(f"lstm-htqf: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ValueError) as exc:
        print(f"lstm-htqf: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
