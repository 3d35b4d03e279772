"""Confusion-matrix based evaluation: per-class and macro precision/recall/F1."""
from __future__ import annotations

import numpy as np


def confusion(y_true, y_pred, C: int) -> np.ndarray:
    """``C x C`` counts with rows = true label and columns = predicted label."""
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= C):
            raise ValueError(f"{name} has labels outside [0, {C})")
    cm = np.zeros((C, C), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num, dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def macro_metrics(cm) -> dict:
    """Per-class precision/recall/F1 plus their unweighted means and accuracy.

    Any 0/0 evaluates to 0. Macro F1 is the mean of per-class F1 scores.
    """
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    actual = cm.sum(axis=1).astype(np.float64)
    precision = _safe_div(tp, predicted)
    recall = _safe_div(tp, actual)
    f1 = _safe_div(2 * precision * recall, precision + recall)
    total = cm.sum()
    return {
        "macro_f1": float(f1.mean()),
        "macro_precision": float(precision.mean()),
        "macro_recall": float(recall.mean()),
        "accuracy": float(tp.sum() / total) if total else 0.0,
        "per_class": [{"precision": float(p), "recall": float(r), "f1": float(f)}
                      for p, r, f in zip(precision, recall, f1)],
    }


def evaluate_predictions(y_true, y_pred, C: int) -> dict:
    cm = confusion(y_true, y_pred, C)
    report = macro_metrics(cm)
    report["confusion"] = cm.tolist()
    return report


def mean_stderr(values) -> tuple[float, float]:
    """Mean and standard error of the mean (sample std / sqrt(n); 0 for a single value)."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("no values to aggregate")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))
