"""Analytic descriptions of the set outside the computational box.

Every model answers two geometric questions: point membership, and the
sorted distances at which a ray ``q + t*omega`` (t > 0) crosses its
boundary.  Far-field integrals of ``|x - q|^{-(n+s)}`` reduce in polar
coordinates to sums of ``a^{-s} - b^{-s}`` over the in-intervals of each
ray, integrated over directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
import numpy as np

from .errors import ConfigurationError, ParameterError

__all__ = [
    "TailModel",
    "EmptyTail",
    "FullTail",
    "HalfSpaceTail",
    "SlabTail",
    "ConeTail",
    "SupgraphPolynomial",
    "SupgraphPiecewiseLinear",
    "SupgraphBounded",
    "ComplementOfBall",
    "ComplementTail",
    "as_tail",
    "sphere_measure",
]

_INF = np.inf


def sphere_measure(n: int) -> float:
    """omega_n, the measure of the unit sphere in R^n (2 for n=1, 2*pi for n=2)."""
    if n == 1:
        return 2.0
    if n == 2:
        return 2.0 * math.pi
    raise ParameterError(f"unsupported dimension {n}")


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _angle(v) -> float:
    return math.atan2(float(v[1]), float(v[0]))


def _pad(cols: list[np.ndarray], m: int) -> np.ndarray:
    if not cols:
        return np.full((m, 0), _INF)
    out = np.stack(cols, axis=1)
    out.sort(axis=1)
    return out


class TailModel:
    """Base class.  ``dim`` is 0 for models valid in any dimension."""

    dim: int = 0
    is_empty = False
    is_full = False

    def contains(self, points: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError

    def crossings(self, q: np.ndarray, omega: np.ndarray) -> np.ndarray:  # pragma: no cover
        """Sorted positive boundary-crossing distances, shape (M, K), inf padded."""
        raise NotImplementedError

    def critical_angles(self, q: np.ndarray) -> list[float]:
        """Directions from ``q`` where the crossing pattern may change (2D)."""
        return []

    def alpha(self, n: int = 2) -> float | None:
        """Contribution from infinity, when known in closed form."""
        return None

    def complement(self) -> "TailModel":
        return ComplementTail(self)

    def check_dim(self, n: int) -> None:
        if self.dim and self.dim != n:
            raise ConfigurationError(f"{type(self).__name__} is only defined in dimension {self.dim}")


@dataclass(frozen=True)
class EmptyTail(TailModel):
    is_empty = True

    def contains(self, points):
        return np.zeros(np.asarray(points).shape[0], dtype=bool)

    def crossings(self, q, omega):
        return np.full((q.shape[0], 0), _INF)

    def alpha(self, n=2):
        return 0.0

    def complement(self):
        return FullTail()


@dataclass(frozen=True)
class FullTail(TailModel):
    is_full = True

    def contains(self, points):
        return np.ones(np.asarray(points).shape[0], dtype=bool)

    def crossings(self, q, omega):
        return np.full((q.shape[0], 0), _INF)

    def alpha(self, n=2):
        return sphere_measure(n)

    def complement(self):
        return EmptyTail()


@dataclass(frozen=True)
class HalfSpaceTail(TailModel):
    """``{x : x . normal < offset}``."""

    normal: tuple[float, ...]
    offset: float = 0.0

    def _nu(self):
        nu = np.asarray(self.normal, dtype=float)
        return nu / np.linalg.norm(nu), self.offset / np.linalg.norm(nu)

    def contains(self, points):
        nu, off = self._nu()
        return np.asarray(points, dtype=float) @ nu < off

    def crossings(self, q, omega):
        nu, off = self._nu()
        den = omega @ nu
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (off - q @ nu) / den
        t = np.where((t > 0) & np.isfinite(t), t, _INF)
        return t[:, None]

    def critical_angles(self, q):
        nu, _ = self._nu()
        if nu.size != 2:
            return []
        a = _angle(nu)
        return [a + math.pi / 2, a - math.pi / 2]

    def alpha(self, n=2):
        return sphere_measure(n) / 2


@dataclass(frozen=True)
class SlabTail(TailModel):
    """``{x : lo < x . normal < hi}``."""

    normal: tuple[float, ...]
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParameterError("slab requires lo < hi")

    def contains(self, points):
        nu = np.asarray(self.normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        v = np.asarray(points, dtype=float) @ nu
        return (v > self.lo) & (v < self.hi)

    def crossings(self, q, omega):
        nu = np.asarray(self.normal, dtype=float)
        nu = nu / np.linalg.norm(nu)
        den = omega @ nu
        base = q @ nu
        cols = []
        for level in (self.lo, self.hi):
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (level - base) / den
            cols.append(np.where((t > 0) & np.isfinite(t), t, _INF))
        return _pad(cols, q.shape[0])

    def critical_angles(self, q):
        nu = np.asarray(self.normal, dtype=float)
        if nu.size != 2:
            return []
        a = _angle(nu)
        return [a + math.pi / 2, a - math.pi / 2]

    def alpha(self, n=2):
        return 0.0


@dataclass(frozen=True)
class ConeTail(TailModel):
    """Planar cone ``{x : angle(x - vertex, direction) < opening/2}``.

    ``opening`` may exceed pi (non-convex cone).  ``closed`` only records
    whether the boundary was meant to be included; it has measure zero.
    """

    vertex: tuple[float, float]
    direction: tuple[float, float]
    opening: float
    closed: bool = False
    dim = 2

    def __post_init__(self):
        if not (0 < self.opening < 2 * math.pi):
            raise ParameterError("cone opening must lie in (0, 2*pi)")

    def _edges(self):
        d = _angle(self.direction)
        half = 0.5 * self.opening
        return [
            np.array([math.cos(d - half), math.sin(d - half)]),
            np.array([math.cos(d + half), math.sin(d + half)]),
        ]

    def contains(self, points):
        p = np.asarray(points, dtype=float) - np.asarray(self.vertex, dtype=float)
        d = np.asarray(self.direction, dtype=float)
        d = d / np.linalg.norm(d)
        r = np.hypot(p[:, 0], p[:, 1])
        return p @ d > r * math.cos(0.5 * self.opening)

    def crossings(self, q, omega):
        v = np.asarray(self.vertex, dtype=float)
        cols = []
        vq = v[None, :] - q
        for e in self._edges():
            den = _cross(omega, np.broadcast_to(e, omega.shape))
            with np.errstate(divide="ignore", invalid="ignore"):
                t = _cross(vq, np.broadcast_to(e, vq.shape)) / den
                u = _cross(vq, omega) / den
            ok = (t > 0) & (u > 0) & np.isfinite(t)
            cols.append(np.where(ok, t, _INF))
        return _pad(cols, q.shape[0])

    def critical_angles(self, q):
        v = np.asarray(self.vertex, dtype=float)
        out = [_angle(e) for e in self._edges()]
        if np.linalg.norm(v - q) > 0:
            out.append(_angle(v - q))
        return out

    def alpha(self, n=2):
        return float(self.opening)


def _real_positive_roots(coef: np.ndarray) -> np.ndarray:
    """Real roots t > 0 of rows of polynomial coefficients (highest degree first).

    Returns an (M, deg) array padded with inf.  Roots come from batched
    companion-matrix eigenvalues and are polished by Newton steps.
    """
    m, k = coef.shape
    deg = k - 1
    out = np.full((m, max(deg, 0)), _INF)
    if deg <= 0:
        return out
    scale = np.max(np.abs(coef), axis=1)
    scale = np.where(scale > 0, scale, 1.0)
    lead = coef[:, 0]
    full = np.abs(lead) > 1e-200 * scale
    idx = np.nonzero(full)[0]
    if idx.size:
        c = coef[idx] / lead[idx, None]
        if deg == 1:
            roots = -c[:, 1:2].astype(complex)
        elif deg == 2:
            b, cc = c[:, 1], c[:, 2]
            disc = (b * b - 4 * cc).astype(complex)
            sq = np.sqrt(disc)
            sgn = np.where(b.real >= 0, 1.0, -1.0)
            qq = -0.5 * (b + sgn * sq)
            r1 = qq
            with np.errstate(divide="ignore", invalid="ignore"):
                r2 = np.where(qq != 0, cc / qq, 0.0)
            roots = np.stack([r1, r2], axis=1)
        else:
            comp = np.zeros((idx.size, deg, deg))
            comp[:, 0, :] = -c[:, 1:]
            comp[:, np.arange(1, deg), np.arange(deg - 1)] = 1.0
            roots = np.linalg.eigvals(comp)
        mag = np.maximum(np.abs(roots), 1.0)
        real = np.abs(roots.imag) <= 1e-7 * mag
        rr = np.where(real, roots.real, np.nan)
        # Newton polish on the original polynomial
        cf = coef[idx]
        for _ in range(3):
            p = np.zeros_like(rr)
            dp = np.zeros_like(rr)
            for j in range(deg + 1):
                dp = dp * rr + p
                p = p * rr + cf[:, j : j + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                step = np.where(dp != 0, p / dp, 0.0)
            rr = np.where(np.isfinite(step), rr - step, rr)
        rr = np.where((rr > 0) & np.isfinite(rr), rr, _INF)
        out[idx] = rr
    rest = np.nonzero(~full)[0]
    if rest.size:
        sub = _real_positive_roots(coef[rest, 1:])
        out[rest, : sub.shape[1]] = sub
    out.sort(axis=1)
    return out


@dataclass(frozen=True)
class SupgraphPolynomial(TailModel):
    """``{x : x2 > p(x1)}`` with ``p(x) = sum_k coefficients[k] x^k``, degree 1..3."""

    coefficients: tuple[float, ...]
    dim = 2

    def __post_init__(self):
        c = list(self.coefficients)
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        if not (2 <= len(c) <= 4):
            raise ParameterError("polynomial degree must be 1, 2 or 3")

    @property
    def degree(self) -> int:
        c = list(self.coefficients)
        while len(c) > 1 and c[-1] == 0:
            c.pop()
        return len(c) - 1

    def value(self, x):
        return np.polynomial.polynomial.polyval(x, np.asarray(self.coefficients, dtype=float))

    def contains(self, points):
        p = np.asarray(points, dtype=float)
        return p[:, 1] > self.value(p[:, 0])

    def crossings(self, q, omega):
        deg = self.degree
        c = np.asarray(self.coefficients[: deg + 1], dtype=float)
        # Taylor coefficients of p around q1: p^(k)(q1)/k!
        taylor = []
        pk = c.copy()
        for k in range(deg + 1):
            taylor.append(np.polynomial.polynomial.polyval(q[:, 0], pk) / math.factorial(k))
            pk = np.polynomial.polynomial.polyder(pk)
        # g(t) = p(q1 + t w1) - q2 - t w2, coefficients ascending in t
        asc = [taylor[k] * omega[:, 0] ** k for k in range(deg + 1)]
        asc[0] = asc[0] - q[:, 1]
        asc[1] = asc[1] - omega[:, 1]
        coef = np.stack(asc[::-1], axis=1)
        return _real_positive_roots(coef)

    def critical_angles(self, q):
        deg = self.degree
        if deg == 1:
            m = self.coefficients[1]
            a = math.atan(m)
            return [a, a + math.pi]
        return [math.pi / 2, -math.pi / 2]

    def alpha(self, n=2):
        deg = self.degree
        lead = self.coefficients[deg]
        if deg == 1:
            return math.pi
        if deg == 2:
            return 0.0 if lead > 0 else 2 * math.pi
        return math.pi


@dataclass(frozen=True)
class SupgraphPiecewiseLinear(TailModel):
    """``{x : x2 > f(x1)}`` for a continuous piecewise-linear ``f``.

    ``f`` interpolates ``(xs, ys)`` and continues linearly with slopes
    ``left_slope`` / ``right_slope`` beyond the first / last knot.
    """

    xs: tuple[float, ...]
    ys: tuple[float, ...]
    left_slope: float = 0.0
    right_slope: float = 0.0
    dim = 2

    def __post_init__(self):
        if len(self.xs) != len(self.ys) or len(self.xs) < 1:
            raise ParameterError("knot lists must be nonempty and of equal length")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise ParameterError("knots must be strictly increasing")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        out = np.interp(x, xs, ys)
        out = np.where(x < xs[0], ys[0] + self.left_slope * (x - xs[0]), out)
        return np.where(x > xs[-1], ys[-1] + self.right_slope * (x - xs[-1]), out)

    def contains(self, points):
        p = np.asarray(points, dtype=float)
        return p[:, 1] > self.value(p[:, 0])

    def _pieces(self):
        xs, ys = self.xs, self.ys
        pieces = [(-_INF, xs[0], xs[0], ys[0], self.left_slope)]
        for k in range(len(xs) - 1):
            m = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
            pieces.append((xs[k], xs[k + 1], xs[k], ys[k], m))
        pieces.append((xs[-1], _INF, xs[-1], ys[-1], self.right_slope))
        return pieces

    def crossings(self, q, omega):
        cols = []
        for lo, hi, x0, y0, m in self._pieces():
            den = omega[:, 1] - m * omega[:, 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (y0 + m * (q[:, 0] - x0) - q[:, 1]) / den
            x = q[:, 0] + t * omega[:, 0]
            ok = (t > 0) & np.isfinite(t) & (x >= lo) & (x < hi)
            cols.append(np.where(ok, t, _INF))
        return _pad(cols, q.shape[0])

    def critical_angles(self, q):
        out = [math.atan2(self.right_slope, 1.0), math.atan2(-self.left_slope, -1.0)]
        for x, y in zip(self.xs, self.ys):
            d = np.array([x, y]) - q
            if np.linalg.norm(d) > 0:
                out.append(_angle(d))
        return out

    def alpha(self, n=2):
        right = math.atan2(self.right_slope, 1.0)
        left = math.atan2(-self.left_slope, -1.0)
        return float((left - right) % (2 * math.pi))


class SupgraphBounded(SupgraphPiecewiseLinear):
    """Supergraph of the bounded ramp ``level + amplitude * clip(x / width, -1, 1)``."""

    def __init__(self, level: float = 0.0, amplitude: float = 0.0, width: float = 1.0):
        if width <= 0:
            raise ParameterError("width must be positive")
        object.__setattr__(self, "level", float(level))
        object.__setattr__(self, "amplitude", float(amplitude))
        object.__setattr__(self, "width", float(width))
        super().__init__(
            (-float(width), float(width)),
            (level - amplitude, level + amplitude),
            0.0,
            0.0,
        )

    def __repr__(self):
        return f"SupgraphBounded(level={self.level}, amplitude={self.amplitude}, width={self.width})"

    def __eq__(self, other):
        return isinstance(other, SupgraphBounded) and (self.level, self.amplitude, self.width) == (
            other.level,
            other.amplitude,
            other.width,
        )

    def __hash__(self):
        return hash(("SupgraphBounded", self.level, self.amplitude, self.width))

    @property
    def bound(self) -> float:
        return abs(self.level) + abs(self.amplitude)


@dataclass(frozen=True)
class ComplementOfBall(TailModel):
    """``{x : |x - center| > radius}``."""

    radius: float
    center: tuple[float, ...] = (0.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("radius must be positive")

    def contains(self, points):
        p = np.asarray(points, dtype=float) - np.asarray(self.center, dtype=float)
        return np.sum(p * p, axis=1) > self.radius**2

    def crossings(self, q, omega):
        d = q - np.asarray(self.center, dtype=float)[None, :]
        b = np.sum(d * omega, axis=1)
        c = np.sum(d * d, axis=1) - self.radius**2
        disc = b * b - c
        sq = np.sqrt(np.maximum(disc, 0.0))
        cols = []
        for t in (-b - sq, -b + sq):
            cols.append(np.where((disc > 0) & (t > 0), t, _INF))
        return _pad(cols, q.shape[0])

    def critical_angles(self, q):
        c = np.asarray(self.center, dtype=float)
        if c.size != 2:
            return []
        d = c - q
        dist = float(np.linalg.norm(d))
        if dist <= self.radius:
            return []
        a = _angle(d)
        half = math.asin(self.radius / dist)
        return [a - half, a + half]

    def alpha(self, n=2):
        return sphere_measure(n)


@dataclass(frozen=True)
class ComplementTail(TailModel):
    inner: TailModel

    @property
    def dim(self):  # type: ignore[override]
        return self.inner.dim

    @property
    def is_empty(self):  # type: ignore[override]
        return self.inner.is_full

    @property
    def is_full(self):  # type: ignore[override]
        return self.inner.is_empty

    def contains(self, points):
        return ~self.inner.contains(points)

    def crossings(self, q, omega):
        return self.inner.crossings(q, omega)

    def critical_angles(self, q):
        return self.inner.critical_angles(q)

    def alpha(self, n=2):
        a = self.inner.alpha(n)
        return None if a is None else sphere_measure(n) - a

    def complement(self):
        return self.inner


def as_tail(obj) -> TailModel:
    """Convert a shape (or tail) to a tail model describing it beyond the box."""
    if isinstance(obj, TailModel):
        return obj
    if hasattr(obj, "to_tail"):
        return obj.to_tail()
    raise ConfigurationError(
        f"{type(obj).__name__} has no analytic tail; use EmptyTail for bounded shapes inside the box"
    )


def make_tail(spec: dict) -> TailModel:
    """Build a tail model from a plain dictionary (used by configuration files)."""
    spec = dict(spec)
    kind = spec.pop("type")
    table = {
        "empty": EmptyTail,
        "full": FullTail,
        "halfspace": HalfSpaceTail,
        "slab": SlabTail,
        "cone": ConeTail,
        "supgraph_polynomial": SupgraphPolynomial,
        "supgraph_piecewise_linear": SupgraphPiecewiseLinear,
        "supgraph_bounded": SupgraphBounded,
        "complement_of_ball": ComplementOfBall,
    }
    if kind == "complement":
        return ComplementTail(make_tail(spec["of"]))
    if kind not in table:
        raise ConfigurationError(f"unknown tail type {kind!r}")
    for key in ("normal", "vertex", "direction", "coefficients", "xs", "ys", "center"):
        if key in spec:
            spec[key] = tuple(float(v) for v in spec[key])
    try:
        return table[kind](**spec)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for tail {kind!r}: {exc}") from None


def directions(theta: np.ndarray) -> np.ndarray:
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
