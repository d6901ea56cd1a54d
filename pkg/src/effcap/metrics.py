"""Accuracy reporting against oracle labels: mean/max absolute error in
farads and mean/max absolute error ratio in percent, optionally split into
all / failed / non-failed cohorts by a baseline's failure flags."""
from __future__ import annotations

from typing import Dict, Optional, Sequence

import numpy as np

from .errors import LengthMismatch


def error_stats(pred_f: Sequence[float], label_f: Sequence[float]) -> Dict[str, float]:
    pred = np.asarray(pred_f, dtype=float)
    label = np.asarray(label_f, dtype=float)
    if pred.shape != label.shape:
        raise LengthMismatch(f"{pred.shape} predictions vs {label.shape} labels")
    if pred.size == 0:
        return {"count": 0, "meae_f": 0.0, "maae_f": 0.0,
                "meaer_pct": 0.0, "maaer_pct": 0.0}
    abs_err = np.abs(pred - label)
    ratio = abs_err / label * 100.0
    return {
        "count": int(pred.size),
        "meae_f": float(abs_err.mean()),
        "maae_f": float(abs_err.max()),
        "meaer_pct": float(ratio.mean()),
        "maaer_pct": float(ratio.max()),
    }


def evaluate(
    pred_f: Sequence[float],
    label_f: Sequence[float],
    failed: Optional[Sequence[bool]] = None,
) -> dict:
    """Cohort report; `failed` flags come from a baseline run (the method
    under evaluation may itself be that baseline)."""
    report = {"all": error_stats(pred_f, label_f)}
    if failed is not None:
        failed = np.asarray(failed, dtype=bool)
        if failed.shape[0] != len(pred_f):
            raise LengthMismatch("failure flags do not align with predictions")
        pred = np.asarray(pred_f, dtype=float)
        label = np.asarray(label_f, dtype=float)
        report["failed"] = error_stats(pred[failed], label[failed])
        report["non_failed"] = error_stats(pred[~failed], label[~failed])
        report["fail_pct"] = float(failed.mean() * 100.0)
    return report
