"""Command-line entry point.

Subcommands: synth, train, explain, eval, render. Every artifact lands in
the configured output directory and embeds the tool version, the full
config snapshot, and the master seed.

Exit codes: 0 success, 1 usage/config error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from . import metrics as mx
from .attribution import deeplift, integrated_gradients, lrp
from .config import ConfigError, load_config
from .data import SynthSpec, synthesize, write_csv
from .metrics import MetricReport
from .network import load_model, predict, save_model
from .render import render_report, render_summary
from .runner import (
    build_dataset,
    global_ranking,
    run_metric,
    train_model,
    training_report,
)


class CliError(Exception):
    """Usage-level failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; we reserve that
        raise CliError(message)


def _ensure_out(cfg) -> str:
    out = cfg["out_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, blob) -> None:
    with open(path, "w") as fh:
        json.dump(blob, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _load_cfg(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out", None):
        overrides["out_dir"] = args.out
    return load_config(args.config, overrides)


def cmd_synth(args) -> int:
    spec = SynthSpec.from_dict(json.loads(args.spec))
    ds = synthesize(spec, seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "synthetic.csv")
    write_csv(ds, csv_path)
    _write_json(
        os.path.join(args.out, "synthetic_schema.json"),
        {
            "label_column": "label",
            "class_names": list(ds.class_names),
            "categorical_columns": [],
            "drop_columns": [],
        },
    )
    _write_json(
        os.path.join(args.out, "synthetic_spec.json"),
        {"spec": spec.to_dict(), "seed": args.seed, "tool_version": __version__},
    )
    print(f"wrote {csv_path} ({ds.n_samples} rows, {ds.n_features} features)")
    return 0


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_out(cfg)
    train_ds, test_ds, ingest = build_dataset(cfg, with_reports=True)
    net = train_model(cfg, train_ds)
    model_path = os.path.join(out, "model.dnet")
    save_model(net, model_path)
    report = training_report(cfg, net, train_ds, test_ds)
    _write_json(os.path.join(out, "training_report.json"), report)
    if ingest:
        _write_json(os.path.join(out, "ingest_report.json"), ingest)
    print(
        f"model -> {model_path} | train acc {report['final_train_accuracy']:.4f}"
        f" | test acc {report['final_test_accuracy']:.4f}"
    )
    return 0


def _print_top10(entries) -> None:
    print(f"{'rank':>4}  {'feature':<32} {'raw':>12}  {'normalized':>10}")
    for i, rec in enumerate(entries[:10], start=1):
        print(f"{i:>4}  {rec['name']:<32} {rec['raw']:>12.6f}  {rec['normalized']:>10.4f}")


def cmd_explain(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_out(cfg)
    train_ds, test_ds = build_dataset(cfg)
    model_path = args.model or os.path.join(out, "model.dnet")
    if os.path.exists(model_path):
        net = load_model(model_path)
    else:
        net = train_model(cfg, train_ds)
    method = args.method

    if args.instance is None:  # global scope
        ranking = global_ranking(cfg, net, train_ds, test_ds, method)
        blob = ranking.to_dict()
        blob.update({"tool_version": __version__, "seed": cfg["seed"], "config": cfg})
        path = os.path.join(out, f"ranking_{method}.json")
        _write_json(path, blob)
        _print_top10(blob["features"])
        print(f"global ranking -> {path}")
        return 0

    if not 0 <= args.instance < test_ds.n_samples:
        raise CliError(
            f"instance {args.instance} outside the test split (0..{test_ds.n_samples - 1})"
        )
    x = test_ds.features[args.instance]
    target = int(predict(net, x))
    params = mx.resolve_method_params(method, cfg["method_params"].get(method), train_ds)
    if method == "ig":
        att = integrated_gradients(
            net, x, params["baseline"], params["steps"], target, str(args.instance)
        )
    elif method == "lrp":
        att = lrp(net, x, target, params["epsilon"], str(args.instance))
    else:
        att = deeplift(net, x, params["reference"], target, str(args.instance))
    blob = att.to_dict(net.feature_names)
    blob.update({"tool_version": __version__, "seed": cfg["seed"], "config": cfg})
    path = os.path.join(out, f"attribution_{method}_{args.instance}.json")
    _write_json(path, blob)
    _print_top10(blob["features"])
    print(f"local attribution -> {path}")
    return 0


def _estimate_rows(cfg) -> int:
    ds = cfg["dataset"]
    if "synthetic" in ds:
        return int(ds["synthetic"]["n"])
    spec = ds["csv"]
    total = 0
    for key in ("path", "train_path", "test_path"):
        p = spec.get(key)
        if p and os.path.exists(p):
            with open(p, "rb") as fh:
                total += sum(1 for _ in fh)
    return total


LARGE_ROW_GUARD = 50_000


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    out = _ensure_out(cfg)
    metric_names = list(mx.METRIC_ORDER) if "all" in args.metric else args.metric
    for m in metric_names:
        if m not in mx.METRIC_ORDER:
            raise CliError(f"unknown metric {m!r}; choose from {', '.join(mx.METRIC_ORDER)}")
    methods = args.method or cfg["methods"]

    rows = _estimate_rows(cfg)
    heavy = {"descriptive_accuracy", "robustness", "completeness"} & set(metric_names)
    if rows > LARGE_ROW_GUARD and heavy and not args.confirm_large:
        print(
            f"dataset has ~{rows} rows; metrics {sorted(heavy)} retrain models and/or\n"
            f"perturb per instance, which can take hours at this size.\n"
            f"Re-run with --confirm-large to proceed.",
            file=sys.stderr,
        )
        return 1

    failures = []
    written = []
    for metric in metric_names:
        for method in methods:
            try:
                report = run_metric(metric, method, cfg)
            except Exception as exc:  # isolate per-metric failures
                failures.append((metric, method, f"{type(exc).__name__}: {exc}"))
                print(f"[fail] {metric}/{method}: {exc}", file=sys.stderr)
                continue
            path = os.path.join(out, f"report_{metric}_{method}.json")
            with open(path, "w") as fh:
                fh.write(report.to_json())
                fh.write("\n")
            written.append(path)
            for name, text in render_report(report).items():
                csv_path = os.path.join(out, name)
                with open(csv_path, "w") as fh:
                    fh.write(text)
                written.append(csv_path)
            print(f"[ok] {metric}/{method} -> {path}")

    if failures:
        print(f"{len(failures)} metric run(s) failed:", file=sys.stderr)
        for metric, method, msg in failures:
            print(f"  {metric}/{method}: {msg}", file=sys.stderr)
        return 2
    print(f"wrote {len(written)} artifact(s) to {out}")
    return 0


def cmd_render(args) -> int:
    if not args.reports:
        raise CliError("no report files given")
    reports = []
    for path in args.reports:
        try:
            with open(path) as fh:
                reports.append(MetricReport.from_json(fh.read()))
        except FileNotFoundError:
            raise CliError(f"report file not found: {path}")
        except (ValueError, KeyError) as exc:
            raise CliError(f"cannot read report {path}: {exc}")
    os.makedirs(args.out, exist_ok=True)
    count = 0
    for report in reports:
        for name, text in render_report(report).items():
            with open(os.path.join(args.out, name), "w") as fh:
                fh.write(text)
            count += 1
    summary = render_summary(reports)
    summary_path = os.path.join(args.out, "summary.md")
    with open(summary_path, "w") as fh:
        fh.write(summary)
    print(f"wrote {count} CSV file(s) and {summary_path}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="flowxai", description=__doc__)
    parser.add_argument("--version", action="version", version=f"flowxai {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset CSV + schema")
    p.add_argument("--spec", required=True, help='JSON SynthSpec, e.g. {"n":1000,"d":10}')
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the classifier and save the model")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", help="local or global attribution")
    p.add_argument("--config", required=True)
    p.add_argument("--method", default="ig", choices=["ig", "lrp", "deeplift"])
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--instance", type=int, help="test-split row to explain")
    group.add_argument("--global", dest="global_scope", action="store_true")
    p.add_argument("--model", help="model file (defaults to <out>/model.dnet)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("eval", help="run evaluation metrics")
    p.add_argument("--config", required=True)
    p.add_argument(
        "--metric",
        nargs="+",
        default=["all"],
        help=f"metrics to run ({', '.join(mx.METRIC_ORDER)}) or 'all'",
    )
    p.add_argument("--method", nargs="+", choices=["ig", "lrp", "deeplift"])
    p.add_argument("--confirm-large", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", help="reports -> plot CSVs + summary tables")
    p.add_argument("reports", nargs="*")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except (CliError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
