"""Log-log regression used to turn O(n^-r) statements into testable slopes."""

from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError


def loglog_fit(x, y):
    """Ordinary least squares of ``log|y|`` on ``log x``; returns ``(slope, intercept)``."""
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        raise InvalidParameterError("need at least two positive points for a log-log fit")
    slope, intercept = np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)
    return float(slope), float(intercept)


def last_decade(n, lo_fraction: float = 0.1):
    """Boolean mask selecting ``n`` in the largest available decade ``[max/10, max]``."""
    n = np.asarray(n, dtype=float)
    return n >= lo_fraction * n.max()


def decade_slope(n, y):
    """Fitted exponent over the largest decade of ``n``; returns ``(slope, (lo, hi))``."""
    n = np.asarray(n, dtype=float)
    mask = last_decade(n)
    slope, _ = loglog_fit(n[mask], np.asarray(y)[mask])
    return slope, (float(n[mask].min()), float(n[mask].max()))
