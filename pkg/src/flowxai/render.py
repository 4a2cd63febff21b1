"""Turn metric reports into plot-ready CSVs and Markdown summary tables.

Plots are emitted as data, never images; any plotting tool can consume the
CSVs. Rendering is pure: the same report always yields the same bytes.
"""

from __future__ import annotations

import io
import csv

from .metrics import METRIC_ORDER, MetricReport


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def render_report(report: MetricReport) -> dict:
    """Per-figure CSV files for one report, keyed by file name."""
    stem = f"{report.metric}_{report.method}_{report.dataset_id}"
    payload = report.payload
    out = {}
    if report.metric == "descriptive_accuracy":
        out[f"{stem}.csv"] = _csv_text(
            ["k", "accuracy"], [(p["k"], p["accuracy"]) for p in payload["curve"]]
        )
    elif report.metric == "sparsity":
        out[f"{stem}.csv"] = _csv_text(
            ["threshold", "sparsity"],
            [(p["threshold"], p["sparsity"]) for p in payload["curve"]],
        )
    elif report.metric == "efficiency":
        out[f"{stem}.csv"] = _csv_text(
            ["samples", "label", "seconds"],
            [(r["samples"], r["label"], r["seconds"]) for r in payload["rows"]],
        )
    elif report.metric == "stability":
        rows = [(i + 1, ";".join(names)) for i, names in enumerate(payload["runs"])]
        rows.append(("intersection", ";".join(payload["intersection"])))
        rows.append(("score", payload["score"]))
        out[f"{stem}.csv"] = _csv_text(["run", "top_features"], rows)
    elif report.metric == "robustness":
        rows = []
        for model, rec in payload["models"].items():
            for rank in ("rank_1", "rank_2", "rank_3"):
                for category, pct in rec["occurrences"][rank].items():
                    rows.append((model, rank, category, pct))
        out[f"{stem}.csv"] = _csv_text(["model", "rank", "feature_category", "percentage"], rows)
    else:  # completeness
        out[f"{stem}_per_class.csv"] = _csv_text(
            ["class", "completeness_pct", "batch_size", "changed"],
            [
                (cls, rec["completeness_pct"], rec["batch_size"], rec["changed"])
                for cls, rec in payload["per_class"].items()
            ],
        )
        rows = []
        for cls, curve in payload["remaining_curves"].items():
            rows.extend((cls, p["step"], p["remaining"]) for p in curve)
        rows.extend(("all", p["step"], p["remaining"]) for p in payload["remaining_curve_pooled"])
        out[f"{stem}_remaining.csv"] = _csv_text(["class", "step", "remaining"], rows)
    return out


# Higher is better for every score below.
def _metric_score(report: MetricReport) -> float:
    p = report.payload
    if report.metric == "descriptive_accuracy":
        accs = [pt["accuracy"] for pt in p["curve"]]
        return p["baseline_accuracy"] - min(accs)  # steeper drop = more faithful
    if report.metric == "sparsity":
        values = [pt["sparsity"] for pt in p["curve"]]
        return sum(values) / len(values)  # area under the curve
    if report.metric == "stability":
        return p["score"]
    if report.metric == "efficiency":
        return -sum(r["seconds"] for r in p["rows"])
    if report.metric == "robustness":
        biased_rank1 = p["models"]["biased"]["occurrences"]["rank_1"]["biased"]
        infiltration = sum(
            p["models"]["adversarial"]["occurrences"][f"rank_{r}"]["unrelated"] for r in (1, 2, 3)
        )
        return biased_rank1 - infiltration
    # completeness: mean per-class percentage
    pcts = [rec["completeness_pct"] for rec in p["per_class"].values()]
    return sum(pcts) / len(pcts)


def render_summary(reports: list[MetricReport]) -> str:
    """Markdown tables marking the best method per metric per dataset."""
    if not reports:
        raise ValueError("no reports to summarize")
    datasets = sorted({r.dataset_id for r in reports})
    lines = ["# Method comparison", ""]
    for ds in datasets:
        ds_reports = [r for r in reports if r.dataset_id == ds]
        methods = sorted({r.method for r in ds_reports})
        metrics = [m for m in METRIC_ORDER if any(r.metric == m for r in ds_reports)]
        best = {}
        for metric in metrics:
            scored = {
                r.method: _metric_score(r) for r in ds_reports if r.metric == metric
            }
            top = max(scored.values())
            best[metric] = {m for m, s in scored.items() if s >= top - 1e-12}
        lines.append(f"## {ds}")
        lines.append("")
        header = "| Method | " + " | ".join(m.replace("_", " ") for m in metrics) + " |"
        lines.append(header)
        lines.append("|" + "---|" * (len(metrics) + 1))
        for method in methods:
            cells = [
                "x" if method in best.get(metric, set()) else "" for metric in metrics
            ]
            lines.append(f"| {method} | " + " | ".join(cells) + " |")
        lines.append("")
    return "\n".join(lines)
