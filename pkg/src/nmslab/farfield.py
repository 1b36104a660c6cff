"""Far-field integrals of ``|x - q|^{-(n+s)}`` over tail models.

In polar coordinates around ``q`` the integral over the part of the tail
lying beyond an exclusion region becomes

    (1/s) * integral over directions of  sum_{in-intervals [a, b]} (a^{-s} - b^{-s}),

with the radial part done exactly.  The directional integral is computed
with composite Gauss-Legendre panels, geometrically graded toward every
angle where the crossing pattern changes (box corners, asymptotic
directions, tangencies, boundary/exclusion intersections).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from scipy import special

from .errors import NumericError, ParameterError
from .tails import TailModel, directions

__all__ = [
    "Exclusion",
    "PRECISION",
    "tail_measure",
    "tail_integrals",
    "tail_kernel_integral",
]


@dataclass(frozen=True)
class QuadratureRule:
    base_panels: int
    gauss: int
    ratio: float
    levels: int
    scan: int


PRECISION = {
    "high": QuadratureRule(1024, 10, 0.2, 24, 4096),
    "standard": QuadratureRule(512, 5, 0.2, 12, 1024),
}

_CHUNK = 1 << 20


@dataclass(frozen=True)
class Exclusion:
    """Region removed around ``q``: the ball of ``radius`` and/or an axis box."""

    radius: float = 0.0
    lower: tuple[float, ...] | None = None
    upper: tuple[float, ...] | None = None

    @classmethod
    def of_box(cls, grid, radius: float = 0.0) -> "Exclusion":
        return cls(radius, grid.lower, grid.upper)

    def distance(self, q: np.ndarray, omega: np.ndarray) -> np.ndarray:
        a = np.full(q.shape[0], float(self.radius))
        if self.lower is not None:
            lo = np.asarray(self.lower, dtype=float)
            hi = np.asarray(self.upper, dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                t = np.where(omega > 0, (hi - q) / omega, np.where(omega < 0, (lo - q) / omega, np.inf))
            a = np.maximum(a, np.min(t, axis=1))
        return a

    def breakpoints(self, q: np.ndarray) -> list[float]:
        out: list[float] = []
        if self.lower is None:
            return out
        lo, hi = self.lower, self.upper
        for cx in (lo[0], hi[0]):
            for cy in (lo[1], hi[1]):
                out.append(math.atan2(cy - q[1], cx - q[0]))
        r = self.radius
        if r > 0:
            # directions where the exclusion circle meets a box edge
            for k, vals in enumerate((lo, hi)):
                for axis in (0, 1):
                    d = vals[axis] - q[axis]
                    if abs(d) < r:
                        other = math.sqrt(r * r - d * d)
                        for sgn in (1.0, -1.0):
                            v = [0.0, 0.0]
                            v[axis] = d
                            v[1 - axis] = sgn * other
                            out.append(math.atan2(v[1], v[0]))
        return out


def _full_box_measure(pts: np.ndarray, lower, upper, s_arr: np.ndarray) -> np.ndarray:
    """Closed form of ``integral over directions of exit(omega)^{-s}`` for a planar box.

    Each face at distance d seen over normal-relative angles [p1, p2] gives
    ``d^{-s} (F(p2) - F(p1))`` with ``F(p) = int_0^p cos(t)^s dt``, an
    incomplete beta function.
    """
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    out = np.zeros((s_arr.size, pts.shape[0]))
    faces = []
    for axis in (0, 1):
        other = 1 - axis
        for val, sign in ((hi[axis], 1.0), (lo[axis], -1.0)):
            d = sign * (val - pts[:, axis])
            e1 = np.arctan2(lo[other] - pts[:, other], d)
            e2 = np.arctan2(hi[other] - pts[:, other], d)
            faces.append((d, e1, e2))
    for k, s in enumerate(s_arr):
        b = 0.5 * (1.0 + s)
        scale = 0.5 * special.beta(0.5, b)

        def prim(p):
            return np.sign(p) * scale * special.betainc(0.5, b, np.sin(p) ** 2)

        for d, e1, e2 in faces:
            out[k] += d ** (-s) * (prim(e2) - prim(e1))
    return out


def _measure_rays(
    tail: TailModel, q: np.ndarray, omega: np.ndarray, a: np.ndarray, s_values: np.ndarray
) -> np.ndarray:
    """``sum over in-intervals beyond a of (lo^{-s} - hi^{-s})``, shape (S, M)."""
    m = q.shape[0]
    if tail.is_empty:
        return np.zeros((s_values.size, m))
    if tail.is_full:
        return np.power(a[None, :], -s_values[:, None])
    cr = tail.crossings(q, omega)
    cr = np.where(cr > a[:, None], cr, np.inf)
    cr.sort(axis=1)
    inside = tail.contains(q + a[:, None] * omega)
    bounds = np.concatenate([a[:, None], cr, np.full((m, 1), np.inf)], axis=1)
    k = np.arange(bounds.shape[1] - 1)
    member = inside[:, None] ^ (k[None, :] % 2 == 1)
    out = np.empty((s_values.size, m))
    for i, s in enumerate(s_values):
        p = np.power(bounds, -s)
        seg = p[:, :-1] - p[:, 1:]
        out[i] = np.sum(np.where(member, seg, 0.0), axis=1)
    return out


def _signature(tail: TailModel, q: np.ndarray, omega: np.ndarray, a: np.ndarray) -> np.ndarray:
    cr = tail.crossings(q, omega)
    count = np.sum(cr > a[:, None], axis=1)
    inside = tail.contains(q + a[:, None] * omega)
    return 2 * count + inside.astype(int)


def _scan_events(tail: TailModel, pts: np.ndarray, excl: Exclusion, n_scan: int) -> list[list[float]]:
    """Locate angles where the crossing pattern changes, by scan plus bisection."""
    m = pts.shape[0]
    events: list[list[float]] = [[] for _ in range(m)]
    if tail.is_empty or tail.is_full:
        return events
    theta = (np.arange(n_scan) + 0.1234567) * (2 * math.pi / n_scan)
    om = directions(theta)
    per_chunk = max(1, _CHUNK // n_scan)
    for start in range(0, m, per_chunk):
        sl = slice(start, min(m, start + per_chunk))
        p = pts[sl]
        k = p.shape[0]
        qq = np.repeat(p, n_scan, axis=0)
        oo = np.tile(om, (k, 1))
        sig = _signature(tail, qq, oo, excl.distance(qq, oo)).reshape(k, n_scan)
        nxt = np.roll(sig, -1, axis=1)
        ii, jj = np.nonzero(sig != nxt)
        if ii.size == 0:
            continue
        lo = theta[jj].copy()
        hi = np.where(jj + 1 < n_scan, theta[(jj + 1) % n_scan], theta[0] + 2 * math.pi)
        s_lo = sig[ii, jj]
        qb = p[ii]
        for _ in range(52):
            mid = 0.5 * (lo + hi)
            omm = directions(mid)
            sm = _signature(tail, qb, omm, excl.distance(qb, omm))
            same = sm == s_lo
            lo = np.where(same, mid, lo)
            hi = np.where(same, hi, mid)
        for i, t in zip(ii, 0.5 * (lo + hi)):
            events[start + i].append(float(t))
    return events


def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _panels_for_point(bps: list[float], rule: QuadratureRule) -> tuple[np.ndarray, np.ndarray]:
    """Panel endpoints covering one full turn, graded toward each breakpoint."""
    two_pi = 2 * math.pi
    if not bps:
        e = np.linspace(0.0, two_pi, rule.base_panels + 1)
        return e[:-1], e[1:]
    b = np.sort(np.mod(np.asarray(bps, dtype=float), two_pi))
    keep = np.concatenate([[True], np.diff(b) > 1e-13])
    b = b[keep]
    if b.size > 1 and (b[0] + two_pi - b[-1]) <= 1e-13:
        b = b[:-1]
    ends = np.concatenate([b, [b[0] + two_pi]])
    grade = rule.ratio ** np.arange(1, rule.levels + 1)
    los, his = [], []
    for a, c in zip(ends[:-1], ends[1:]):
        length = c - a
        m = max(2, int(math.ceil(length * rule.base_panels / two_pi)))
        e = np.linspace(a, c, m + 1)
        ell = e[1] - e[0]
        left = a + ell * np.concatenate([[1.0], grade, [0.0]])
        right = c - ell * np.concatenate([[1.0], grade, [0.0]])
        los.append(left[1:])
        his.append(left[:-1])
        los.append(e[1:-2])
        his.append(e[2:-1])
        los.append(right[:-1])
        his.append(right[1:])
    lo = np.concatenate(los)
    hi = np.concatenate(his)
    ok = hi > lo
    return lo[ok], hi[ok]


def tail_measure(
    tail: TailModel,
    points,
    s_values,
    exclusion: Exclusion,
    *,
    precision: str = "high",
) -> np.ndarray:
    """``s * integral`` of ``|x - q|^{-(n+s)}`` over the tail beyond the exclusion.

    Returns an array of shape (len(s_values), len(points)).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s_arr = np.atleast_1d(np.asarray(s_values, dtype=float))
    if np.any((s_arr <= 0) | (s_arr >= 1)):
        raise ParameterError("s must lie in (0, 1)")
    n = pts.shape[1]
    tail.check_dim(n)
    m = pts.shape[0]
    if tail.is_empty:
        return np.zeros((s_arr.size, m))
    if n == 1:
        out = np.zeros((s_arr.size, m))
        for sign in (1.0, -1.0):
            om = np.full((m, 1), sign)
            a = exclusion.distance(pts, om)
            if np.any(a <= 0):
                raise ParameterError("exclusion region must contain a neighbourhood of q")
            out += _measure_rays(tail, pts, om, a, s_arr)
        return out
    rule = PRECISION[precision]
    if tail.is_full and exclusion.lower is None:
        return np.repeat(2 * math.pi * exclusion.radius ** (-s_arr)[:, None], m, axis=1)
    if tail.is_full:
        lo = np.asarray(exclusion.lower, dtype=float)
        hi = np.asarray(exclusion.upper, dtype=float)
        gap = np.min(np.minimum(pts - lo, hi - pts), axis=1)
        if np.all(gap > 0) and np.all(exclusion.radius <= gap):
            return _full_box_measure(pts, lo, hi, s_arr)
    events = _scan_events(tail, pts, exclusion, rule.scan)
    xg, wg = _gauss(rule.gauss)
    thetas, weights, owner = [], [], []
    for i in range(m):
        bps = list(events[i]) + exclusion.breakpoints(pts[i])
        if not (tail.is_full or tail.is_empty):
            bps += tail.critical_angles(pts[i])
        lo, hi = _panels_for_point(bps, rule)
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        thetas.append((mid[:, None] + half[:, None] * xg[None, :]).ravel())
        weights.append((half[:, None] * wg[None, :]).ravel())
        owner.append(np.full(lo.size * xg.size, i))
    theta = np.concatenate(thetas)
    weight = np.concatenate(weights)
    own = np.concatenate(owner)
    out = np.zeros((s_arr.size, m))
    for start in range(0, theta.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        om = directions(theta[sl])
        qq = pts[own[sl]]
        a = exclusion.distance(qq, om)
        if np.any(a <= 0):
            raise ParameterError("exclusion region must contain a neighbourhood of q")
        vals = _measure_rays(tail, qq, om, a, s_arr) * weight[sl][None, :]
        for k in range(s_arr.size):
            out[k] += np.bincount(own[sl], weights=vals[k], minlength=m)
    if not np.all(np.isfinite(out)):
        raise NumericError("angular quadrature produced non-finite values", {"tail": repr(tail)})
    return out


def tail_integrals(tail, points, s_values, exclusion: Exclusion, *, precision: str = "high") -> np.ndarray:
    """Integrals of ``|x - q|^{-(n+s)}`` over the tail beyond the exclusion, shape (S, M)."""
    s_arr = np.atleast_1d(np.asarray(s_values, dtype=float))
    return tail_measure(tail, points, s_arr, exclusion, precision=precision) / s_arr[:, None]


def tail_kernel_integral(
    tail: TailModel,
    q,
    s: float,
    R_cut: float = 0.0,
    *,
    grid=None,
    precision: str = "high",
) -> float:
    """``integral over tail minus B_{R_cut}(q) (minus the grid box, if given) of |x-q|^{-(n+s)}``."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    excl = Exclusion.of_box(grid, R_cut) if grid is not None else Exclusion(R_cut)
    if grid is None and R_cut <= 0:
        raise ParameterError("R_cut must be positive when no box is excluded")
    return float(tail_integrals(tail, q[None, :], [s], excl, precision=precision)[0, 0])
