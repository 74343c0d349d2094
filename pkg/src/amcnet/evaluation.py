"""Classification metrics, confusion matrices, and report serialization."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .data import frames_to_batch, normalize_instance
from .errors import DataError
from .model import ModelParams, forward, param_count


@dataclass
class EvalReport:
    accuracy: float
    per_class_f1: Dict[str, float]
    macro_f1_mean: float
    macro_f1_std: float
    confusion: np.ndarray  # (K, K) counts, rows = true, cols = predicted
    class_names: List[str]
    param_count: int
    mean_latency_us: Optional[float] = None
    latency_std_us: Optional[float] = None


def predict(params: ModelParams, frames: Sequence, batch_size: int = 256) -> np.ndarray:
    """Argmax-of-logits predictions over normalized frames."""
    preds = []
    with ad.no_grad():
        for lo in range(0, len(frames), batch_size):
            chunk = [normalize_instance(f) for f in frames[lo : lo + batch_size]]
            x, _ = frames_to_batch(chunk)
            preds.append(forward(params, x, mode="eval").data.argmax(axis=1))
    return np.concatenate(preds)


def metrics_from_predictions(y_true: np.ndarray, y_pred: np.ndarray,
                             class_names: Sequence[str]) -> dict:
    """Confusion matrix, accuracy, and per-class F1 with the zero convention."""
    k = len(class_names)
    confusion = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(y_true, y_pred):
        confusion[t, p] += 1
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / total

    f1 = {}
    for c in range(k):
        tp = confusion[c, c]
        support = confusion[c, :].sum()
        predicted = confusion[:, c].sum()
        if support == 0 or predicted == 0 or tp == 0:
            f1[class_names[c]] = 0.0
            continue
        precision = tp / predicted
        recall = tp / support
        f1[class_names[c]] = float(2 * precision * recall / (precision + recall))
    values = np.array(list(f1.values()))
    return {
        "accuracy": accuracy,
        "per_class_f1": f1,
        "macro_f1_mean": float(values.mean()),
        "macro_f1_std": float(values.std()),
        "confusion": confusion,
    }


def evaluate(params: ModelParams, frames: Sequence, batch_size: int = 256) -> EvalReport:
    if not frames:
        raise DataError("evaluate() requires a non-empty test set")
    y_true = np.array([f.label for f in frames])
    y_pred = predict(params, frames, batch_size)
    names = _class_names_for(params, frames)
    stats = metrics_from_predictions(y_true, y_pred, names)
    return EvalReport(
        accuracy=stats["accuracy"],
        per_class_f1=stats["per_class_f1"],
        macro_f1_mean=stats["macro_f1_mean"],
        macro_f1_std=stats["macro_f1_std"],
        confusion=stats["confusion"],
        class_names=names,
        param_count=param_count(params.config),
    )


def _class_names_for(params: ModelParams, frames: Sequence) -> List[str]:
    k = params.config.n_classes
    names = [""] * k
    for f in frames:
        if f.label < k and not names[f.label]:
            names[f.label] = f.class_name
    return [n if n else f"class{i}" for i, n in enumerate(names)]


# ---------------------------------------------------------------------------
# report emitters (deterministic byte-for-byte for identical reports)
# ---------------------------------------------------------------------------

def emit_report(report: EvalReport, path, fmt: str = "text"):
    if fmt == "text":
        content = _render_text(report)
    elif fmt == "csv":
        content = _render_csv(report)
    elif fmt == "json-lines":
        content = _render_jsonl(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}; expected text, csv, or json-lines")
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(content)
    except OSError as exc:
        raise IOError(f"cannot write report to {path}: {exc}") from exc


def _render_text(r: EvalReport) -> str:
    lines = [
        f"accuracy: {r.accuracy:.6f}",
        f"macro f1: {r.macro_f1_mean:.6f} +/- {r.macro_f1_std:.6f}",
        f"parameters: {r.param_count}",
    ]
    if r.mean_latency_us is not None:
        lines.append(f"inference latency: {r.mean_latency_us:.2f} us +/- {r.latency_std_us:.2f} us")
    lines.append("")
    lines.append("per-class f1:")
    for name in r.class_names:
        lines.append(f"  {name:<8s} {r.per_class_f1[name]:.6f}")
    lines.append("")
    lines.append("confusion (rows true, cols predicted):")
    header = " " * 10 + " ".join(f"{n:>7s}" for n in r.class_names)
    lines.append(header)
    for i, name in enumerate(r.class_names):
        row = " ".join(f"{int(v):>7d}" for v in r.confusion[i])
        lines.append(f"{name:<10s}{row}")
    return "\n".join(lines) + "\n"


def _render_csv(r: EvalReport) -> str:
    lines = ["metric,value"]
    lines.append(f"accuracy,{r.accuracy!r}")
    lines.append(f"macro_f1_mean,{r.macro_f1_mean!r}")
    lines.append(f"macro_f1_std,{r.macro_f1_std!r}")
    lines.append(f"param_count,{r.param_count}")
    if r.mean_latency_us is not None:
        lines.append(f"mean_latency_us,{r.mean_latency_us!r}")
        lines.append(f"latency_std_us,{r.latency_std_us!r}")
    lines.append("class,f1")
    for name in r.class_names:
        lines.append(f"{name},{r.per_class_f1[name]!r}")
    lines.append("confusion_row," + ",".join(r.class_names))
    for i, name in enumerate(r.class_names):
        lines.append(f"{name}," + ",".join(str(int(v)) for v in r.confusion[i]))
    return "\n".join(lines) + "\n"


def _render_jsonl(r: EvalReport) -> str:
    records = [
        {
            "record": "summary",
            "accuracy": r.accuracy,
            "macro_f1_mean": r.macro_f1_mean,
            "macro_f1_std": r.macro_f1_std,
            "param_count": r.param_count,
            "mean_latency_us": r.mean_latency_us,
            "latency_std_us": r.latency_std_us,
            "class_names": r.class_names,
        }
    ]
    for name in r.class_names:
        records.append({"record": "class_f1", "class": name, "f1": r.per_class_f1[name]})
    for i, name in enumerate(r.class_names):
        records.append({"record": "confusion_row", "class": name,
                        "counts": [int(v) for v in r.confusion[i]]})
    return "\n".join(json.dumps(rec, sort_keys=True) for rec in records) + "\n"


def read_report_jsonl(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    summary = next(r for r in records if r["record"] == "summary")
    f1 = {r["class"]: r["f1"] for r in records if r["record"] == "class_f1"}
    rows = {r["class"]: r["counts"] for r in records if r["record"] == "confusion_row"}
    names = summary["class_names"]
    confusion = np.array([rows[n] for n in names], dtype=np.int64)
    return EvalReport(
        accuracy=summary["accuracy"],
        per_class_f1=f1,
        macro_f1_mean=summary["macro_f1_mean"],
        macro_f1_std=summary["macro_f1_std"],
        confusion=confusion,
        class_names=names,
        param_count=summary["param_count"],
        mean_latency_us=summary["mean_latency_us"],
        latency_std_us=summary["latency_std_us"],
    )


def emit_f1_comparison(reports: Dict[str, EvalReport], path):
    """Per-class F1 with one column per variant (comparison-table layout)."""
    variants = list(reports)
    names = reports[variants[0]].class_names
    lines = ["modulation," + ",".join(variants)]
    for name in names:
        lines.append(name + "," + ",".join(f"{reports[v].per_class_f1[name]:.3f}" for v in variants))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
