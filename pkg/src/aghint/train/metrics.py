"""Micro/Macro-F1 and accuracy for multi-class and multi-label predictions."""

from __future__ import annotations

import numpy as np


def _indicator(values: np.ndarray, num_classes: int) -> np.ndarray:
    if values.ndim == 2:
        return values.astype(bool)
    out = np.zeros((values.size, num_classes), dtype=bool)
    out[np.arange(values.size), values] = True
    return out


def f1_scores(predictions, labels, num_classes: int | None = None,
              zero_division: str = "zero") -> tuple[float, float]:
    """Return ``(micro_f1, macro_f1)``.

    Inputs are class-index vectors (multi-class) or 0/1 indicator matrices
    (multi-label).  A class with no support and no predictions contributes
    F1 = 0 to the macro average (``zero_division="zero"``) or is left out
    (``"skip"``).
    """
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape != true.shape:
        raise ValueError(f"predictions {pred.shape} and labels {true.shape} differ in shape")
    if pred.shape[0] == 0:
        raise ValueError("f1 over zero samples")
    if num_classes is None:
        num_classes = pred.shape[1] if pred.ndim == 2 else int(max(pred.max(), true.max())) + 1
    P = _indicator(pred, num_classes)
    T = _indicator(true, num_classes)
    tp = (P & T).sum(axis=0).astype(float)
    fp = (P & ~T).sum(axis=0).astype(float)
    fn = (~P & T).sum(axis=0).astype(float)

    denom = 2 * tp.sum() + fp.sum() + fn.sum()
    micro = 2 * tp.sum() / denom if denom > 0 else 0.0

    per_class_denom = 2 * tp + fp + fn
    per_class = np.divide(2 * tp, per_class_denom, out=np.zeros_like(tp), where=per_class_denom > 0)
    if zero_division == "skip":
        keep = per_class_denom > 0
        macro = float(per_class[keep].mean()) if keep.any() else 0.0
    elif zero_division == "zero":
        macro = float(per_class.mean())
    else:
        raise ValueError("zero_division must be 'zero' or 'skip'")
    return float(micro), macro


def accuracy(predictions, labels) -> float:
    """Exact-match accuracy (whole label vector must match for multi-label)."""
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape[0] == 0:
        raise ValueError("accuracy over zero samples")
    hit = pred == true
    if hit.ndim == 2:
        hit = hit.all(axis=1)
    return float(hit.mean())
