"""Fit statistics for comparing model output with observations.

Implemented functions:
    rmse: root mean square error.
    nse: Nash-Sutcliffe efficiency.
    final_abs_diff: absolute difference of the last values.
    iou_f1: intersection over union and F1 of two masks.
"""
import csv

import numpy as np

from .errors import ArgumentError, ParseError, UndefinedNSEError


def _pair(observed, predicted):
    obs = np.asarray(observed, dtype=np.float64).ravel()
    pred = np.asarray(predicted, dtype=np.float64).ravel()
    if obs.shape != pred.shape:
        raise ArgumentError(f"series lengths differ: {obs.size} vs {pred.size}")
    if obs.size == 0:
        raise ArgumentError("series are empty")
    if not (np.all(np.isfinite(obs)) and np.all(np.isfinite(pred))):
        raise ArgumentError("series contain non-finite values")
    return obs, pred


def rmse(observed, predicted):
    obs, pred = _pair(observed, predicted)
    return float(np.sqrt(np.mean((obs - pred) ** 2)))


def nse(observed, predicted):
    """Nash-Sutcliffe efficiency, ``1 - SSE / SS_obs``.

    Raises:
        UndefinedNSEError: if the observations are constant.
    """
    obs, pred = _pair(observed, predicted)
    denom = np.sum((obs - obs.mean()) ** 2)
    if denom == 0:
        raise UndefinedNSEError("NSE is undefined for constant observations")
    return float(1.0 - np.sum((obs - pred) ** 2) / denom)


def final_abs_diff(observed, predicted):
    obs, pred = _pair(observed, predicted)
    return float(abs(obs[-1] - pred[-1]))


def _as_index_set(mask):
    if isinstance(mask, (set, frozenset)):
        return mask
    arr = np.asarray(mask)
    if arr.dtype == bool:
        return set(np.flatnonzero(arr.ravel()).tolist())
    return set(arr.ravel().tolist())


def iou_f1(predicted_mask, truth_mask):
    """IoU and F1 of two masks given as index sets or boolean arrays.

    Two empty masks score ``(1.0, 1.0)``.
    """
    if not isinstance(predicted_mask, (set, frozenset)) and not isinstance(truth_mask, (set, frozenset)):
        a, b = np.asarray(predicted_mask), np.asarray(truth_mask)
        if a.dtype == bool and b.dtype == bool and a.shape != b.shape:
            raise ArgumentError("masks are on different grids")
    p, t = _as_index_set(predicted_mask), _as_index_set(truth_mask)
    inter = len(p & t)
    union = len(p | t)
    if union == 0:
        return 1.0, 1.0
    return inter / union, 2.0 * inter / (len(p) + len(t))


def series_metrics(observed, predicted):
    return {
        "rmse": rmse(observed, predicted),
        "nse": nse(observed, predicted),
        "final_abs_diff": final_abs_diff(observed, predicted),
    }


def read_series_csv(path):
    """Read ``index,observed,predicted``; rows are ordered by index."""
    rows = []
    with open(path, newline="") as fh:
        for line, r in enumerate(csv.DictReader(fh), start=2):
            try:
                obs = r["observed"]
                pred = r["predicted"]
                if obs in (None, "") or pred in (None, ""):
                    raise ArgumentError(f"{path}: missing value on line {line}")
                rows.append((float(r["index"]), float(obs), float(pred)))
            except (KeyError, ValueError, TypeError) as exc:
                if isinstance(exc, ArgumentError):
                    raise
                raise ParseError(f"{path}: bad series row ({exc})", line=line) from None
    rows.sort(key=lambda r: r[0])
    return [r[1] for r in rows], [r[2] for r in rows]
