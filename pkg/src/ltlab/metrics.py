"""Evaluation metrics for imbalanced classification.

Overall accuracy weighs every sample equally; macro accuracy weighs every
class equally; their harmonic mean (here ``bscore``) is high only when both
are, rewarding head/tail balance. Per-class recalls can additionally be
averaged within Many/Medium/Few count groups.

Percentages are carried at full precision; rounding to one decimal happens
only in human-facing rendering (see ``format_summary``).
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .data import FEW, MANY, MEDIUM, GroupAssignment, atomic_write_bytes
from .errors import ContractError, DegenerateClassError

GROUP_ORDER = (MANY, MEDIUM, FEW)


@dataclass
class EvalReport:
    ovacc: float  # percent
    macro: float  # percent
    bscore: float  # percent
    per_class: list[float]  # percent recalls, indexed by class
    groups: dict[str, float] | None = None  # percent per group, absent groups omitted

    def to_dict(self) -> dict:
        out = {
            "ovacc": self.ovacc,
            "macro": self.macro,
            "bscore": self.bscore,
            "per_class": list(self.per_class),
        }
        if self.groups is not None:
            out["groups"] = dict(self.groups)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            ovacc=d["ovacc"],
            macro=d["macro"],
            bscore=d["bscore"],
            per_class=list(d["per_class"]),
            groups=dict(d["groups"]) if "groups" in d else None,
        )


def ovacc(preds, labels) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ContractError(
            f"need equal-length nonempty preds/labels, got {preds.shape}/{labels.shape}"
        )
    return 100.0 * float(np.mean(preds == labels))


def per_class_acc(preds, labels, num_classes: int) -> np.ndarray:
    """Percent recall per class; every class must occur in the labels."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=num_classes)
    if np.any(counts == 0):
        missing = np.flatnonzero(counts == 0).tolist()
        raise DegenerateClassError(
            f"classes {missing} absent from labels; macro accuracy undefined"
        )
    correct = np.bincount(labels[preds == labels], minlength=num_classes)
    return 100.0 * correct / counts


def macro_acc(preds, labels, num_classes: int) -> float:
    return float(np.mean(per_class_acc(preds, labels, num_classes)))


def bscore(ovacc_pct: float, macro_pct: float) -> float:
    """Harmonic mean of overall and macro accuracy (0 when both are 0)."""
    if ovacc_pct < 0 or macro_pct < 0 or ovacc_pct > 100 or macro_pct > 100:
        raise ContractError(
            f"inputs must be percentages in [0, 100], got ({ovacc_pct}, {macro_pct})"
        )
    denom = ovacc_pct + macro_pct
    if denom == 0.0:
        return 0.0
    return 2.0 * ovacc_pct * macro_pct / denom

def group_acc(per_class: np.ndarray, assignment: GroupAssignment) -> dict[str, float]:
    """Unweighted mean class accuracy per Many/Medium/Few group.

    Groups with no classes are omitted from the result.
    """
    per_class = np.asarray(per_class, dtype=np.float64)
    if per_class.size != len(assignment.tags):
        raise ContractError(
            f"{per_class.size} class accuracies but {len(assignment.tags)} tags"
        )
    out: dict[str, float] = {}
    tags = np.asarray(assignment.tags)
    for group in GROUP_ORDER:
        mask = tags == group
        if mask.any():
            out[group] = float(per_class[mask].mean())
    return out


def evaluate_predictions(
    preds, labels, num_classes: int, assignment: GroupAssignment | None = None
) -> EvalReport:
    """Assemble the full report from raw predictions."""
    pc = per_class_acc(preds, labels, num_classes)
    ov = ovacc(preds, labels)
    mac = float(pc.mean())
    return EvalReport(
        ovacc=ov,
        macro=mac,
        bscore=bscore(ov, mac),
        per_class=pc.tolist(),
        groups=group_acc(pc, assignment) if assignment is not None else None,
    )


def write_report_json(report: EvalReport, path: str):
    atomic_write_bytes(path, json.dumps(report.to_dict(), indent=2).encode("utf-8"))


def write_per_class_csv(
    report: EvalReport,
    counts,
    path: str,
    assignment: GroupAssignment | None = None,
):
    """One row per class: class_id, count, accuracy, group."""
    counts = np.asarray(counts)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["class_id", "count", "accuracy", "group"])
    for k, acc in enumerate(report.per_class):
        tag = assignment.tags[k] if assignment is not None else ""
        writer.writerow([k, int(counts[k]), repr(float(acc)), tag])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def format_summary(report: EvalReport) -> str:
    """Table-style one-decimal rendering for terminals and logs."""
    parts = [
        f"OvAcc {report.ovacc:.1f}",
        f"Macro {report.macro:.1f}",
        f"BScore {report.bscore:.1f}",
    ]
    if report.groups:
        parts += [f"{name} {value:.1f}" for name, value in report.groups.items()]
    return " | ".join(parts)
