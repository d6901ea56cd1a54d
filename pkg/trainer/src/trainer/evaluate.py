"""Accuracy report: mean/max absolute error (farads) and error ratio
(percent), with all/failed/non-failed cohorts when a baseline supplies
failure flags."""
from __future__ import annotations

from typing import Dict, Optional, Sequence

import numpy as np


class LengthMismatch(ValueError):
    pass


def error_stats(pred_f: Sequence[float], label_f: Sequence[float]) -> Dict[str, float]:
    pred = np.asarray(pred_f, dtype=float)
    label = np.asarray(label_f, dtype=float)
    if pred.shape != label.shape:
        raise LengthMismatch(f"{pred.shape} predictions vs {label.shape} labels")
    if pred.size == 0:
        return {"count": 0, "meae_f": 0.0, "maae_f": 0.0,
                "meaer_pct": 0.0, "maaer_pct": 0.0}
    abs_err = np.abs(pred - label)
    rel = abs_err / label * 100.0
    return {
        "count": int(pred.size),
        "meae_f": float(abs_err.mean()),
        "maae_f": float(abs_err.max()),
        "meaer_pct": float(rel.mean()),
        "maaer_pct": float(rel.max()),
    }


def evaluate(pred_f: Sequence[float], label_f: Sequence[float],
             failed: Optional[Sequence[bool]] = None) -> dict:
    report = {"all": error_stats(pred_f, label_f)}
    if failed is not None:
        flags = np.asarray(failed, dtype=bool)
        if flags.shape[0] != len(pred_f):
            raise LengthMismatch("failure flags do not align with predictions")
        pred = np.asarray(pred_f, dtype=float)
        label = np.asarray(label_f, dtype=float)
        report["failed"] = error_stats(pred[flags], label[flags])
        report["non_failed"] = error_stats(pred[~flags], label[~flags])
        report["fail_pct"] = float(flags.mean() * 100.0)
    return report


def meaer(pred_ratio: np.ndarray, label_ratio: np.ndarray) -> float:
    """Mean absolute error ratio in percent; identical on the ratio and
    capacitance scales because c_total cancels."""
    return float(
        (np.abs(pred_ratio - label_ratio) / label_ratio).mean() * 100.0
    )
