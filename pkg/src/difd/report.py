"""Render run reports: markdown summary plus CSV tables and PNG figures.

Every figure is backed one-to-one by a delimited file written next to it, so
reported curves can be checked without parsing images.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .errors import DataError  # noqa: E402
from .metrics import CLASS_NAMES, macro_mean  # noqa: E402
from .train import read_metrics_csv  # noqa: E402

CURVE_COLUMNS = ("epoch", "split", "loss", "miou", "mf1")
SUMMARY_COLUMNS = ("run_id", "stop_reason", "best_epoch", "val_miou", "val_mf1",
                   "val_miou_foreground", "train_loss")


def load_run(run_dir) -> dict:
    """Read one run directory (run.json + metrics.csv) back into a record."""
    run_dir = Path(run_dir)
    meta_path = run_dir / "run.json"
    metrics_path = run_dir / "metrics.csv"
    if not meta_path.exists() or not metrics_path.exists():
        raise DataError(f"{run_dir} is not a run directory "
                        f"(needs run.json and metrics.csv)")
    meta = json.loads(meta_path.read_text())
    meta["rows"] = read_metrics_csv(metrics_path)
    return meta


def _best_val_row(rows):
    val = [r for r in rows if r["split"] == "val"]
    if not val:
        return None
    return max(val, key=lambda r: (r["miou"], -r["epoch"]))


def _series(rows, split, key):
    pts = [(r["epoch"], r[key]) for r in rows if r["split"] == split]
    return [p[0] for p in pts], [p[1] for p in pts]


def _curve_figure(rows, key, ylabel, path):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for split in ("train", "val"):
        xs, ys = _series(rows, split, key)
        if xs:
            ax.plot(xs, ys, marker="o", markersize=3, label=split)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _per_class_figure(row, path):
    vals = [row[f"iou_{n}"] for n in CLASS_NAMES]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.bar(range(len(CLASS_NAMES)), vals)
    ax.set_xticks(range(len(CLASS_NAMES)), CLASS_NAMES, rotation=30, ha="right")
    ax.set_ylabel("IoU")
    ax.set_ylim(0, 1)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_report(records, out_dir) -> list[Path]:
    """Write report.md, summary.csv, and per-run curve CSVs + figures.

    `records` may be RunRecord objects, run dicts, or run directories. An
    empty list still produces a valid, empty scaffold.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = []
    for rec in records:
        if isinstance(rec, (str, Path)):
            runs.append(load_run(rec))
        elif hasattr(rec, "to_dict"):
            runs.append(rec.to_dict())
        else:
            runs.append(dict(rec))

    written = []
    summary_rows = []
    md = ["# Run report", ""]
    if not runs:
        md.append("No runs to report.")
    for run in runs:
        run_id = run["run_id"]
        rows = run["rows"]
        curves_path = out_dir / f"curves_{run_id}.csv"
        with open(curves_path, "w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=CURVE_COLUMNS)
            writer.writeheader()
            for r in rows:
                writer.writerow({k: (repr(r[k]) if isinstance(r[k], float) else r[k])
                                 for k in CURVE_COLUMNS})
        written.append(curves_path)
        figures = []
        for key, ylabel in (("loss", "DiceCE loss"), ("miou", "mean IoU")):
            fig_path = out_dir / f"{run_id}_{key}.png"
            _curve_figure(rows, key, ylabel, fig_path)
            figures.append(fig_path)
            written.append(fig_path)
        best = _best_val_row(rows)
        if best is not None:
            bar_path = out_dir / f"{run_id}_per_class.png"
            _per_class_figure(best, bar_path)
            figures.append(bar_path)
            written.append(bar_path)
            train_rows = [r for r in rows if r["split"] == "train"]
            summary_rows.append({
                "run_id": run_id,
                "stop_reason": run.get("stop_reason", ""),
                "best_epoch": best["epoch"],
                "val_miou": best["miou"],
                "val_mf1": best["mf1"],
                "val_miou_foreground": macro_mean(
                    [best[f"iou_{n}"] for n in CLASS_NAMES], exclude=(0,)),
                "train_loss": train_rows[-1]["loss"] if train_rows else "",
            })
        md += [f"## {run_id}", "",
               f"- stop reason: {run.get('stop_reason', 'n/a')}",
               f"- best val mIoU: {best['miou']:.4f} (epoch {best['epoch']})"
               if best else "- no validation rows",
               ""]
        md += [f"![{p.stem}]({p.name})" for p in figures] + [""]

    summary_path = out_dir / "summary.csv"
    with open(summary_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SUMMARY_COLUMNS)
        writer.writeheader()
        for row in summary_rows:
            writer.writerow(row)
    written.append(summary_path)

    md += ["", "`val_miou` averages all five classes; `val_miou_foreground` "
               "drops the background class."]
    report_path = out_dir / "report.md"
    report_path.write_text("\n".join(md) + "\n")
    written.append(report_path)
    return written
