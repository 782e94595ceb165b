"""Command-line front end.

Subcommands: pretreat, design, benchmark, synth, predict. Every run is
deterministic given its configuration and seed; all tabular outputs are
CSV, comparison tables additionally as aligned text, and each report
renders a PNG figure next to its data unless --no-plots is given.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio, evaluate, plots, pretreat
from .config import (
    METHOD_LABELS,
    ExperimentConfig,
    build_fitters,
    load_config,
    load_plant_spec,
    model_from_json,
    model_to_json,
)
from .errors import ConfigError, DataError, OutputError, SoftSensorError
from .regress import predict as model_predict
from .synth import generate, write_dataset_csv, write_truth_csv


def _out_dir(args, cfg: ExperimentConfig | None = None) -> Path:
    out = args.out or (cfg.out_dir if cfg else ".")
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise OutputError(f"output directory {path} is not writable: {exc}") from exc
    return path


def _load_dataset(cfg: ExperimentConfig) -> dataio.Dataset:
    d = dataio.load_csv(cfg.dataset, cfg.output_column, cfg.time_column)
    return dataio.derive_features(d, cfg.features)


def _maybe_seed(args, cfg: ExperimentConfig) -> int:
    return cfg.seed if args.seed is None else args.seed


def cmd_pretreat(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    seed = _maybe_seed(args, cfg)
    d = _load_dataset(cfg)
    d = dataio.exclude_ranges(d, cfg.exclude_ranges)

    t = cfg.treatment
    methods = t.get("methods", ["mcd"])
    apply_method = t.get("apply", methods[0])
    if apply_method not in methods:
        raise ConfigError(f"treatment apply={apply_method!r} is not among {methods}")
    confidence = float(t.get("confidence", 0.997))

    scaler = dataio.fit_scaler(d, np.arange(d.n), cfg.scaler_kind)
    M_n = scaler.transform_inputs(d.M)

    reports = {}
    for method in methods:
        if method == "t2":
            report = pretreat.t2_detect(M_n, confidence)
        elif method == "mcd":
            mc = t.get("mcd", {}) or {}
            report = pretreat.mcd_fit(
                M_n,
                pretreat.McdConfig(
                    h=mc.get("h"),
                    restarts=int(mc.get("restarts", 100)),
                    max_csteps=int(mc.get("max_csteps", 100)),
                    confidence=confidence,
                    cutoff_family=mc.get("cutoff", "f_approx"),
                    seed=seed,
                ),
            )[1]
        elif method == "kmeans":
            km = t.get("kmeans", {}) or {}
            restarts = int(km.get("restarts", 100))
            k = km.get("k")
            if k is None:
                k = pretreat.elbow_select_k(
                    M_n, int(km.get("k_max", 8)), restarts=restarts, seed=seed
                )
            model = pretreat.kmeans_fit(M_n, int(k), restarts=restarts, seed=seed)
            report = pretreat.kmeans_detect(
                model, float(km.get("min_cluster_fraction", 0.02))
            )
        else:
            raise ConfigError(f"unknown treatment method {method!r}")
        reports[method] = report
        report.write_csv(out / f"pretreat_{method}.csv", index=d.orig_rows)
        if cfg.plots and not args.no_plots:
            plots.save_outlier_overview(report, d.orig_rows, out / f"pretreat_{method}.png")
        print(f"{method}: flagged {report.n_flagged()} of {d.n} rows")

    keep = reports[apply_method].keep
    if not keep.any():
        raise DataError("all rows flagged as outliers, empty cleaned dataset")
    cleaned = dataio.Dataset(
        columns=d.columns,
        M=d.M[keep],
        y=d.y[keep],
        y_mask=d.y_mask[keep],
        index=d.index[keep],
        orig_rows=d.orig_rows[keep],
    )
    write_path = out / "cleaned.csv"
    _write_dataset(cleaned, write_path, cfg)
    print(f"cleaned dataset ({cleaned.n} rows) -> {write_path}")
    return 0


def _write_dataset(d: dataio.Dataset, path, cfg: ExperimentConfig) -> None:
    derived = {f.name for f in cfg.features.features}
    cols = [c for c in d.columns if c not in derived]
    js = [d.columns.index(c) for c in cols]
    with open(path, "w", encoding="utf-8") as fh:
        header = ",".join(cols) + f",{cfg.output_column}"
        if cfg.time_column:
            header = f"{cfg.time_column}," + header
        fh.write(header + "\n")
        for i in range(d.n):
            cells = ",".join(f"{d.M[i, j]:.10g}" for j in js)
            outcell = f"{d.y[i]:.10g}" if d.y_mask[i] else ""
            line = f"{cells},{outcell}"
            if cfg.time_column:
                line = f"{d.index[i]:.10g}," + line
            fh.write(line + "\n")


def cmd_design(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    seed = _maybe_seed(args, cfg)
    d = _load_dataset(cfg)
    fitters = build_fitters(cfg.methods, seed)
    plan = dataio.split(
        d, cfg.split_kind, cfg.split_fraction,
        seed=cfg.split_seed if cfg.split_seed is not None else seed,
    )
    models, reports = evaluate.evaluate_split(
        d, plan, fitters, scaler_kind=cfg.scaler_kind, fit_scaler_on=cfg.scaler_fit_on,
        theta=cfg.theta, prune_threshold=cfg.prune_threshold, seed=seed,
    )
    for name, model in models.items():
        if model is None:
            continue
        log_text = model.info.pop("search_log", None)
        if log_text is not None:
            (out / f"{name}_search_log.txt").write_text(log_text, encoding="utf-8")
        model_to_json(model, out / f"model_{name}.json")
        reports[name].write_csv(out / f"design_trace_{name}.csv")

    table = _comparison_table(models, reports)
    (out / "design_comparison.csv").write_text(table["csv"], encoding="utf-8")
    (out / "design_comparison.txt").write_text(table["text"], encoding="utf-8")
    ok_reports = {METHOD_LABELS.get(n, n): r for n, r in reports.items() if r is not None}
    if cfg.plots and not args.no_plots and ok_reports:
        plots.save_prediction_trace(ok_reports, out / "design_predictions.png")
    print(table["text"], end="")
    return 0


def _comparison_table(models: dict, reports: dict) -> dict:
    names = list(models)
    csv_lines = ["method,n_inputs,latent_components,rmse,bc_percent"]
    rows = {"n_p*": [], "RMSE": [], "BC [%]": []}
    headers = []
    for name in names:
        model, rep = models[name], reports[name]
        label = METHOD_LABELS.get(name, name)
        headers.append(label)
        if model is None:
            csv_lines.append(f"{name},,,,")
            for key in rows:
                rows[key].append("failed")
            continue
        latent = model.n_components
        csv_lines.append(
            f"{name},{rep.n_inputs},{latent},{rep.rmse:.6g},{rep.bc_percent:.6g}"
        )
        rows["n_p*"].append(f"{rep.n_inputs}({latent})" if latent else f"{rep.n_inputs}")
        rows["RMSE"].append(f"{rep.rmse:.3f}")
        rows["BC [%]"].append(f"{rep.bc_percent:.1f}")

    width = max([8] + [len(h) + 2 for h in headers])
    label_w = 8
    text_lines = ["".ljust(label_w) + "".join(h.rjust(width) for h in headers)]
    for key, cells in rows.items():
        text_lines.append(key.ljust(label_w) + "".join(c.rjust(width) for c in cells))
    return {"csv": "\n".join(csv_lines) + "\n", "text": "\n".join(text_lines) + "\n"}


def cmd_benchmark(args) -> int:
    cfg = load_config(args.config)
    out = _out_dir(args, cfg)
    seed = _maybe_seed(args, cfg)
    d = _load_dataset(cfg)
    fitters = build_fitters(cfg.methods, seed)
    summary = evaluate.benchmark(
        d, fitters, split_kind=cfg.split_kind, fraction=cfg.split_fraction,
        repeats=cfg.eval_repeats, seed=seed, scaler_kind=cfg.scaler_kind,
        fit_scaler_on=cfg.scaler_fit_on, theta=cfg.theta,
        prune_threshold=cfg.prune_threshold, threads=args.threads,
    )
    summary.write_repeat_csv(out / "benchmark_repeats.csv")
    summary.write_stats_csv(out / "benchmark_stats.csv")
    if cfg.plots and not args.no_plots:
        plots.save_rmse_boxplot(summary, out / "benchmark_rmse.png", metric="rmse")
        plots.save_rmse_boxplot(summary, out / "benchmark_bc.png", metric="bc_percent")
    for m in summary.methods:
        st = summary.stats[m]["rmse"]
        print(
            f"{METHOD_LABELS.get(m, m)}: median RMSE {st['median']:.4g} "
            f"(q1 {st['q1']:.4g}, q3 {st['q3']:.4g})"
        )
    return 0


def cmd_synth(args) -> int:
    spec, n = load_plant_spec(args.config)
    out = _out_dir(args)
    d, truth = generate(spec, n)
    write_dataset_csv(d, out / "synth_data.csv")
    write_truth_csv(truth, out / "synth_truth.csv")
    print(
        f"generated {d.n} rows, {d.n_p} inputs, {int(d.y_mask.sum())} lab samples "
        f"-> {out / 'synth_data.csv'}"
    )
    return 0


def cmd_predict(args) -> int:
    if not args.model or not args.data:
        raise ConfigError("predict needs --model and --data")
    model = model_from_json(args.model)
    out = _out_dir(args)
    try:
        with open(args.data, encoding="utf-8") as fh:
            header = [h.strip() for h in fh.readline().split(",")]
    except OSError as exc:
        raise DataError(f"cannot read {args.data}: {exc}") from exc
    out_col = args.output_column if args.output_column in header else None
    d = dataio.load_csv(args.data, out_col, args.time_column)
    if args.config:
        # reuse the experiment's feature definitions for derived inputs
        d = dataio.derive_features(d, load_config(args.config).features)
    missing = [c for c in model.columns if c not in d.columns]
    if missing:
        raise DataError(f"dataset lacks model columns {missing}")
    M = d.M[:, [d.columns.index(c) for c in model.columns]]
    y_eng, y_norm = model_predict(model, M)
    path = out / "predictions.csv"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,prediction,prediction_normalized,measured\n")
        for i in range(d.n):
            meas = f"{d.y[i]:.10g}" if d.y_mask[i] else ""
            fh.write(f"{d.index[i]:.10g},{y_eng[i]:.10g},{y_norm[i]:.10g},{meas}\n")
    print(f"wrote {d.n} predictions -> {path}")
    return 0


COMMANDS = {
    "pretreat": cmd_pretreat,
    "design": cmd_design,
    "benchmark": cmd_benchmark,
    "synth": cmd_synth,
    "predict": cmd_predict,
}

_HELP = {
    "pretreat": "detect outliers and write the cleaned dataset",
    "design": "fit, prune and evaluate all configured sensors on one split",
    "benchmark": "accuracy statistics over repeated train/test splits",
    "synth": "generate a ground-truth synthetic plant dataset",
    "predict": "apply a saved model file to a dataset",
}


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="softsensor",
        description="Design and evaluate linear inferential sensors from process data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=_HELP[name])
        p.add_argument("--config", required=name != "predict",
                       help="experiment (or plant spec) YAML file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--no-plots", action="store_true", help="skip figure rendering")
        if name == "predict":
            p.add_argument("--model", help="model JSON file")
            p.add_argument("--data", help="input CSV file")
            p.add_argument("--output-column", default="y",
                           help="name of the output column in --data")
            p.add_argument("--time-column", default=None)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (OutputError, OSError) as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 4
    except SoftSensorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
