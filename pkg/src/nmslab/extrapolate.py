"""Polynomial (Richardson/Neville) extrapolation of sampled limits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["neville_at", "linear_fit_at", "Extrapolation", "extrapolate"]


def neville_at(x, y, x0: float = 0.0) -> float:
    """Value at ``x0`` of the interpolating polynomial through ``(x, y)``."""
    xs = [float(v) for v in x]
    p = [float(v) for v in y]
    n = len(xs)
    for k in range(1, n):
        p = [((x0 - xs[i + k]) * p[i] - (x0 - xs[i]) * p[i + 1]) / (xs[i] - xs[i + k]) for i in range(n - k)]
    return p[0]


def linear_fit_at(x, y, x0: float = 0.0) -> float:
    """Least-squares line through ``(x, y)`` evaluated at ``x0``."""
    c = np.polyfit(np.asarray(x, dtype=float), np.asarray(y, dtype=float), 1)
    return float(np.polyval(c, x0))


@dataclass(frozen=True)
class Extrapolation:
    """Limit estimates of ``y(x)`` as ``x -> 0``.

    ``limit`` uses the full interpolating polynomial; ``two_point`` uses the two
    samples closest to the limit and ``linear`` a least-squares line, so the
    drift between models stays visible.
    """

    x: tuple[float, ...]
    y: tuple[float, ...]
    limit: float
    two_point: float
    linear: float


def extrapolate(x, y) -> Extrapolation:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(np.abs(x))
    xs, ys = x[order], y[order]
    two = neville_at(xs[:2], ys[:2]) if xs.size >= 2 else float(ys[0])
    lin = linear_fit_at(xs, ys) if xs.size >= 2 else float(ys[0])
    return Extrapolation(tuple(x.tolist()), tuple(y.tolist()), neville_at(xs, ys), two, lin)
