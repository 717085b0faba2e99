"""Cross-run comparison reports: delimited output plus rendered figures.

``write_comparison`` merges run records into one CSV (rows = runs, columns =
overall/macro/balanced scores and group accuracies at full precision) and
renders two PNG figures next to it: per-class accuracy curves with classes
ordered head to tail, and a grouped bar chart of the headline metrics.
A one-decimal text table goes to stdout for humans.
"""

from __future__ import annotations

import csv
import io
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .data import atomic_write_bytes
from .errors import FormatError

HEADLINE_COLUMNS = ("ovacc", "macro", "bscore")


def load_run_record(run_dir: str) -> dict:
    path = os.path.join(run_dir, "run_record.json")
    if not os.path.exists(path):
        raise FormatError(f"no run record at {path}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def run_objective(record: dict) -> str:
    head = record["config"]["head"]
    if head["kind"] == "dual":
        label = "dual(ce+la)"
        if head.get("fusion", "gated") != "gated":
            label += f"[{head['fusion']}]"
        return label
    return head["loss"]["kind"]


def comparison_rows(run_dirs: list[str]) -> list[dict]:
    rows = []
    for run_dir in run_dirs:
        record = load_run_record(run_dir)
        test = record["final"]["test"]
        rows.append(
            {
                "run": os.path.basename(os.path.normpath(run_dir)),
                "objective": run_objective(record),
                "ovacc": test["ovacc"],
                "macro": test["macro"],
                "bscore": test["bscore"],
                "groups": test.get("groups", {}),
                "per_class": test["per_class"],
                "class_counts": record["class_counts"],
            }
        )
    return rows


def write_comparison(run_dirs: list[str], out_dir: str) -> str:
    """Write comparison.csv and figures; returns the CSV path."""
    rows = comparison_rows(run_dirs)
    os.makedirs(out_dir, exist_ok=True)

    group_names = []
    for row in rows:
        for name in row["groups"]:
            if name not in group_names:
                group_names.append(name)

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["run", "objective", *HEADLINE_COLUMNS, *[g.lower() for g in group_names]])
    for row in rows:
        writer.writerow(
            [row["run"], row["objective"]]
            + [repr(float(row[c])) for c in HEADLINE_COLUMNS]
            + [
                repr(float(row["groups"][g])) if g in row["groups"] else ""
                for g in group_names
            ]
        )
    csv_path = os.path.join(out_dir, "comparison.csv")
    atomic_write_bytes(csv_path, buf.getvalue().encode("utf-8"))

    _plot_per_class(rows, os.path.join(out_dir, "per_class_accuracy.png"))
    _plot_headline(rows, os.path.join(out_dir, "metric_comparison.png"))
    return csv_path


def _plot_per_class(rows: list[dict], path: str):
    fig, ax = plt.subplots(figsize=(7, 4))
    for row in rows:
        counts = np.asarray(row["class_counts"])
        order = np.argsort(-counts, kind="stable")
        acc = np.asarray(row["per_class"])[order]
        ax.plot(np.arange(acc.size), acc, marker="o", markersize=3,
                label=f"{row['run']} ({row['objective']})")
    ax.set_xlabel("class index (sorted by training count, head to tail)")
    ax.set_ylabel("class accuracy [%]")
    ax.set_ylim(-2, 102)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_headline(rows: list[dict], path: str):
    fig, ax = plt.subplots(figsize=(7, 4))
    x = np.arange(len(rows))
    width = 0.8 / len(HEADLINE_COLUMNS)
    for j, col in enumerate(HEADLINE_COLUMNS):
        vals = [row[col] for row in rows]
        ax.bar(x + (j - 1) * width, vals, width, label=col)
    ax.set_xticks(x)
    ax.set_xticklabels([row["run"] for row in rows], rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("percent")
    ax.set_ylim(0, 102)
    ax.grid(axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def format_comparison_table(run_dirs: list[str]) -> str:
    """One-decimal text table for terminal display."""
    rows = comparison_rows(run_dirs)
    lines = [f"{'run':24s} {'objective':16s} {'OvAcc':>7s} {'Macro':>7s} {'BScore':>7s}"]
    for row in rows:
        lines.append(
            f"{row['run'][:24]:24s} {row['objective'][:16]:16s} "
            f"{row['ovacc']:7.1f} {row['macro']:7.1f} {row['bscore']:7.1f}"
        )
    return "\n".join(lines)
