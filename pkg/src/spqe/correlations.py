"""Pearson and Spearman correlation for prediction accuracy/monotonicity."""

from __future__ import annotations

import numpy as np

from .errors import DataError, NumericError


def _as_vec(x, name):
    v = np.asarray(x, dtype=np.float64).ravel()
    if v.size < 3:
        raise DataError(f"{name}: need at least 3 points, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise NumericError(f"{name}: non-finite values")
    return v


def _pearson(a, b):
    a = a - a.mean()
    b = b - b.mean()
    va = np.dot(a, a)
    vb = np.dot(b, b)
    if va == 0.0 or vb == 0.0:
        raise NumericError("zero-variance input to correlation")
    return float(np.dot(a, b) / np.sqrt(va * vb))


def fractional_ranks(x):
    """Ranks starting at 1, ties replaced by the group average."""
    x = np.asarray(x, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def fit_logistic4(pred, gt, max_iter=2000):
    """Least-squares 4-parameter logistic mapping of pred onto gt.

    Returns the mapped predictions.  Falls back to the raw predictions if
    the fit fails to converge (degenerate inputs).
    """
    from scipy.optimize import curve_fit

    def logistic(x, b1, b2, b3, b4):
        return (b1 - b2) / (1.0 + np.exp(-(x - b3) / abs(b4))) + b2

    p0 = [float(np.max(gt)), float(np.min(gt)), float(np.median(pred)),
          max(float(np.std(pred)) / 4.0, 1e-3)]
    try:
        popt, _ = curve_fit(logistic, pred, gt, p0=p0, maxfev=max_iter)
        return logistic(pred, *popt)
    except (RuntimeError, ValueError):
        return np.asarray(pred, dtype=np.float64)


def plcc(pred, gt, logistic_fit=False):
    """Pearson linear correlation; optional 4-parameter logistic pre-map."""
    p = _as_vec(pred, "pred")
    g = _as_vec(gt, "gt")
    if p.size != g.size:
        raise DataError(f"length mismatch: {p.size} vs {g.size}")
    if logistic_fit:
        p = _as_vec(fit_logistic4(p, g), "pred(logistic)")
    return _pearson(p, g)


def srcc(pred, gt):
    """Spearman rank-order correlation with tie-averaged ranks."""
    p = _as_vec(pred, "pred")
    g = _as_vec(gt, "gt")
    if p.size != g.size:
        raise DataError(f"length mismatch: {p.size} vs {g.size}")
    return _pearson(fractional_ranks(p), fractional_ranks(g))
