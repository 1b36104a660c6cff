"""Fractional mean curvature, contributions from infinity and their s -> 0 limits.

Sign convention: the integrand weights the complement minus the set, so
balls have positive curvature and the subgraph of a convex function has
negative curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, NumericError, ParameterError, UsageError, check_s
from .extrapolate import Extrapolation, extrapolate
from .farfield import Exclusion, tail_integrals, tail_measure
from .grid import IndicatorField
from .kernel import GsTable, build_gs_table, point_cell_weights
from .tails import EmptyTail, TailModel, sphere_measure

__all__ = [
    "CurvatureSample",
    "curvature_set",
    "interface_points",
    "curvature_graph_local",
    "GraphCurvature",
    "AlphaResult",
    "alpha_numeric",
    "CurvatureLimit",
    "curvature_s0_limit",
    "delta_threshold",
    "kernel_scale",
    "halfspace_band",
]

PARTS = ("part_core", "part_collar", "part_midrange", "part_far")


def kernel_scale(h: float) -> float:
    """Scale of the one-cell staircase defect of a curvature sample (1/h)."""
    return 1.0 / h


def halfspace_band(h: float, s: float, factor: float = 5.0) -> float:
    """Documented discretization band ``factor * h^{1-s} * kernel_scale(h)``."""
    return factor * h ** (1.0 - s) * kernel_scale(h)


@dataclass(frozen=True)
class CurvatureSample:
    q: tuple[float, ...]
    value: float
    pv_radius: float
    s: float
    near_field: float = 0.0
    unmatched: float = 0.0
    tail: float = 0.0
    parts: dict | None = None

    @property
    def parts_sum(self) -> float:
        return float(sum(self.parts.values())) if self.parts else float("nan")


def _face_cells(field: IndicatorField, q: np.ndarray) -> tuple[int, int, np.ndarray]:
    """The two cells sharing the face whose midpoint is ``q`` and the unit normal E -> CE."""
    grid = field.grid
    h = grid.h
    lo = np.asarray(grid.lower)
    coords = (q - lo) / h  # cell-index coordinates; centers at k + 1/2
    n = grid.n
    axis = None
    for k in range(n):
        on_line = abs(coords[k] - round(coords[k])) < 1e-9
        centered = all(abs(coords[j] - math.floor(coords[j]) - 0.5) < 1e-9 for j in range(n) if j != k)
        if on_line and centered:
            axis = k
            break
    if axis is None:
        raise UsageError(f"q={q.tolist()} is not the midpoint of a cell face")
    base = [int(math.floor(coords[j])) for j in range(n)]
    kk = int(round(coords[axis]))
    a = list(base)
    b = list(base)
    a[axis] = kk - 1
    b[axis] = kk
    for idx in (a, b):
        if not all(0 <= idx[j] < grid.cells[j] for j in range(n)):
            raise UsageError("q lies on the boundary of the box")
    ia, ib = grid.index_of(a), grid.index_of(b)
    va, vb = field.values[ia], field.values[ib]
    if va not in (0.0, 1.0) or vb not in (0.0, 1.0) or va == vb:
        raise UsageError("q is not on the discrete interface of a binary field")
    normal = np.zeros(n)
    normal[axis] = 1.0 if va == 1.0 else -1.0  # from the E cell toward the complement cell
    return ia, ib, normal


def interface_points(field: IndicatorField, mask: np.ndarray | None = None) -> np.ndarray:
    """Midpoints of faces separating 0 and 1 cells (optionally both cells in ``mask``)."""
    grid = field.grid
    arr = field.values.reshape(grid.shape)
    m = np.ones(grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(grid.shape)
    pts = []
    for axis in range(grid.n):
        sl_a = [slice(None)] * grid.n
        sl_b = [slice(None)] * grid.n
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        diff = (arr[tuple(sl_a)] != arr[tuple(sl_b)]) & m[tuple(sl_a)] & m[tuple(sl_b)]
        for idx in zip(*np.nonzero(diff)):
            p = [grid.lower[j] + (idx[j] + 0.5) * grid.h for j in range(grid.n)]
            p[axis] = grid.lower[axis] + (idx[axis] + 1) * grid.h
            pts.append(p)
    return np.asarray(pts, dtype=float).reshape(-1, grid.n)


def curvature_set(
    field: IndicatorField,
    tail: TailModel,
    q,
    s: float,
    pv_radius: float | None = None,
    *,
    diagnostic: dict | None = None,
    precision: str = "high",
) -> CurvatureSample:
    """Principal-value curvature of a rasterized set (plus tail) at a face midpoint ``q``.

    Cell contributions use exact point-to-cell integrals of the kernel near q
    and the midpoint rule beyond.  The two cells sharing the face carry
    opposite labels and are exchanged by the reflection through q, so their
    (individually divergent) contributions cancel.  Cells within
    ``pv_radius`` whose reflection falls outside the box are reported as the
    unmatched residue.

    ``diagnostic = {"delta": d, "R": R}`` adds the four-part split: core
    ``B_d(p) u B_d(p')`` (p = q + d*normal, p' its reflection), collar (the
    rest of their convex hull), mid-range (up to ``B_R(q)``) and far field.
    """
    s = check_s(s)
    grid = field.grid
    h = grid.h
    q = np.atleast_1d(np.asarray(q, dtype=float))
    pv_radius = 3.0 * h if pv_radius is None else float(pv_radius)
    if pv_radius < 2.0 * h - 1e-12:
        raise ParameterError("pv_radius must be at least 2h")
    ia, ib, normal = _face_cells(field, q)
    centers = grid.centers
    rel = centers - q
    sign = 1.0 - 2.0 * field.values  # +1 on the complement, -1 on the set
    mask = np.ones(grid.size, dtype=bool)
    mask[[ia, ib]] = False
    w = np.zeros(grid.size)
    w[mask] = point_cell_weights(rel[mask], h, s)
    contrib = w * sign
    dist = np.linalg.norm(rel, axis=1)
    inside_pv = (dist < pv_radius) & mask
    mirror = q - rel - np.asarray(grid.lower)
    mirror_ok = np.all((mirror > 0) & (mirror < np.asarray(grid.upper) - np.asarray(grid.lower)), axis=1)
    near = float(np.sum(contrib[inside_pv]))
    unmatched = float(np.sum(contrib[inside_pv & ~mirror_ok]))
    excl = Exclusion.of_box(grid)
    full_out = float(tail_integrals(EmptyTail().complement(), q[None, :], [s], excl, precision=precision)[0, 0])
    tail_in = 0.0
    if not tail.is_empty:
        tail_in = float(tail_integrals(tail, q[None, :], [s], excl, precision=precision)[0, 0])
    tail_part = full_out - 2.0 * tail_in
    value = float(np.sum(contrib)) + tail_part
    parts = None
    if diagnostic is not None:
        parts = _four_parts(grid, q, normal, s, contrib, tail, tail_part, diagnostic, precision)
    return CurvatureSample(tuple(q.tolist()), value, pv_radius, s, near, unmatched, tail_part, parts)


def _four_parts(grid, q, normal, s, contrib, tail, tail_part, diag, precision):
    delta = float(diag["delta"])
    R = float(diag["R"])
    if not (0 < delta and 2 * delta < R):
        raise ParameterError("four-part split needs 0 < 2*delta < R")
    p = q + delta * normal
    pp = q - delta * normal
    c = grid.centers
    in_core = (np.linalg.norm(c - p, axis=1) < delta) | (np.linalg.norm(c - pp, axis=1) < delta)
    # distance from the segment [pp, p]
    seg = p - pp
    t = np.clip(((c - pp) @ seg) / (seg @ seg), 0.0, 1.0)
    in_hull = np.linalg.norm(c - (pp + t[:, None] * seg), axis=1) < delta
    in_ball = np.linalg.norm(c - q, axis=1) < R
    in_collar = in_hull & ~in_core
    in_mid = in_ball & ~in_hull
    in_far = ~in_ball
    lo = np.asarray(grid.lower)
    hi = np.asarray(grid.upper)
    if np.any(p - delta < lo) or np.any(p + delta > hi) or np.any(pp - delta < lo) or np.any(pp + delta > hi):
        raise ParameterError("the core balls must lie inside the box")
    excl_far = Exclusion(R, grid.lower, grid.upper)
    full_far = float(tail_integrals(EmptyTail().complement(), q[None, :], [s], excl_far, precision=precision)[0, 0])
    t_far = 0.0
    if not tail.is_empty:
        t_far = float(tail_integrals(tail, q[None, :], [s], excl_far, precision=precision)[0, 0])
    far_tail = full_far - 2.0 * t_far
    return {
        "part_core": float(np.sum(contrib[in_core])),
        "part_collar": float(np.sum(contrib[in_collar])),
        "part_midrange": float(np.sum(contrib[in_mid])) + (tail_part - far_tail),
        "part_far": float(np.sum(contrib[in_far])) + far_tail,
    }


# --------------------------------------------------------------------------
# Graph-local formula (n = 1 graphs in the plane)


@dataclass(frozen=True)
class GraphCurvature:
    value: float
    cylinder: float
    outside_cylinder: float
    q: tuple[float, float]


def _profile_callable(u, tail) -> Callable[[np.ndarray], np.ndarray]:
    if callable(u):
        return u
    xs, us = (np.asarray(v, dtype=float) for v in u)
    if tail is None:
        beyond = lambda x: np.interp(x, xs, us)
    elif callable(tail):
        beyond = tail
    elif hasattr(tail, "value"):
        beyond = tail.value
    else:
        raise ConfigurationError("graph tail must be callable or provide value(x)")

    def f(x):
        x = np.asarray(x, dtype=float)
        inside = (x >= xs[0]) & (x <= xs[-1])
        return np.where(inside, np.interp(x, xs, us), beyond(x))

    return f


def _vgrid(panels: int, order: int = 8):
    xg, wg = np.polynomial.legendre.leggauss(order)
    e = np.linspace(0.0, 1.0, panels + 1)
    # geometric refinement toward v = 0
    e = np.unique(np.concatenate([e, e[1] * 0.25 ** np.arange(1, 16)]))
    lo, hi = e[:-1], e[1:]
    half = 0.5 * (hi - lo)
    v = (0.5 * (hi + lo))[:, None] + half[:, None] * xg[None, :]
    w = half[:, None] * wg[None, :]
    return v.ravel(), w.ravel()


def curvature_graph_local(
    u,
    tail,
    q_x: float,
    s: float,
    r: float,
    h_cut: float,
    *,
    table: GsTable | None = None,
    panels: int = 256,
) -> GraphCurvature:
    """Curvature of the subgraph ``{x2 < u(x1)}`` at ``Q = (q_x, u(q_x))``.

    ``u`` is a callable on R or a pair ``(xs, values)`` continued by ``tail``
    (a callable or an object with ``value(x)``).  Integrating the kernel over
    vertical lines gives ``-2 * PV int G_s(D(x)) |x - q|^{-1-s} dx`` with
    ``D = (u(x) - u(q)) / |x - q|``.  The part inside the cylinder
    ``B_r(q) x (u(q) - h_cut, u(q) + h_cut)`` uses the height-clipped
    difference; everything else forms the exterior term.
    """
    s = check_s(s)
    table = table or build_gs_table(s, 1)
    if table.n != 1:
        raise ConfigurationError("graph curvature needs a G_s table for n = 1")
    f = _profile_callable(u, tail)
    uq = float(f(np.array([q_x]))[0])
    # near part on [rho_min, r] with graded panels; below rho_min the
    # integrand is extrapolated linearly from two samples (difference quotients lose
    # all digits there) and integrated in closed form
    rho_min = 1e-4 * r
    edges = np.unique(np.concatenate([np.geomspace(rho_min, r, 33), np.linspace(0.0, r, panels + 1)[1:]]))
    edges = edges[edges >= rho_min]
    xg, wg = np.polynomial.legendre.leggauss(8)
    half = 0.5 * np.diff(edges)
    rho = ((0.5 * (edges[1:] + edges[:-1]))[:, None] + half[:, None] * xg[None, :]).ravel()
    wr = (half[:, None] * wg[None, :]).ravel() * rho ** (-1.0 - s)
    A = rho_min ** (1.0 - s) / (1.0 - s)
    B = rho_min ** (2.0 - s) / (2.0 - s)
    rho0 = np.array([rho_min, 2.0 * rho_min])
    w0 = np.array([2.0 * A - B / rho_min, -A + B / rho_min]) / rho0
    cyl = 0.0
    ext = 0.0
    for sgn in (1.0, -1.0):
        for pts, wts in ((rho, wr), (rho0, w0)):
            tau = f(q_x + sgn * pts) - uq
            clipped = np.clip(tau, -h_cut, h_cut)
            g_in = table.G(clipped / pts)
            g_all = table.G(tau / pts)
            cyl += float(np.dot(wts, g_in))
            ext += float(np.dot(wts, g_all - g_in))
    v, w = _vgrid(panels)
    # far part: rho = r v^{-1/s}, int_r^inf g rho^{-1-s} d rho = r^{-s}/s * int_0^1 g dv
    with np.errstate(over="ignore"):
        rho_f = r * v ** (-1.0 / s)
    ok = np.isfinite(rho_f) & (rho_f < 1e200)
    for sgn in (1.0, -1.0):
        tau = f(q_x + sgn * rho_f[ok]) - uq
        g = table.G(tau / rho_f[ok])
        ext += (r ** (-s) / s) * float(np.dot(w[ok], g))
    if not (math.isfinite(cyl) and math.isfinite(ext)):
        raise NumericError("graph curvature quadrature failed", {"q_x": q_x, "s": s})
    return GraphCurvature(-2.0 * (cyl + ext), -2.0 * cyl, -2.0 * ext, (float(q_x), uq))


# --------------------------------------------------------------------------
# Contributions from infinity


@dataclass(frozen=True)
class AlphaResult:
    s_values: tuple[float, ...]
    scaled: tuple[float, ...]
    extrapolation: Extrapolation
    analytic: float | None

    @property
    def alpha(self) -> float:
        return self.extrapolation.limit


DEFAULT_S_LADDER = (0.05, 0.025, 0.0125, 0.00625, 0.003125)


def alpha_numeric(
    tail_or_field,
    R: float,
    q,
    s_list=DEFAULT_S_LADDER,
    *,
    tail: TailModel | None = None,
    precision: str = "high",
) -> AlphaResult:
    """``s * alpha_s(E, R, q)`` along ``s_list`` and the extrapolated ``alpha(E)``.

    ``tail_or_field`` is a tail model (E given entirely analytically) or an
    IndicatorField whose cells form E inside the box, continued by ``tail``.
    """
    s_arr = np.asarray([check_s(s) for s in s_list], dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    if R <= 0:
        raise ParameterError("R must be positive")
    if isinstance(tail_or_field, TailModel):
        t = tail_or_field
        scaled = tail_measure(t, q[None, :], s_arr, Exclusion(R), precision=precision)[:, 0]
        analytic = t.alpha(q.size)
    elif isinstance(tail_or_field, IndicatorField):
        fld = tail_or_field
        grid = fld.grid
        t = tail if tail is not None else EmptyTail()
        rel = grid.centers - q
        dist = np.linalg.norm(rel, axis=1)
        sel = (dist >= R) & (fld.values > 0)
        scaled = np.empty(s_arr.size)
        tail_part = tail_measure(t, q[None, :], s_arr, Exclusion(R, grid.lower, grid.upper), precision=precision)[:, 0]
        for k, s in enumerate(s_arr):
            cells = grid.cell_measure * np.sum(fld.values[sel] * dist[sel] ** (-(grid.n + s)))
            scaled[k] = s * cells + tail_part[k]
        analytic = t.alpha(grid.n)
    else:
        raise ConfigurationError("alpha_numeric needs a tail model or an indicator field")
    ex = extrapolate(s_arr, scaled)
    return AlphaResult(tuple(s_arr.tolist()), tuple(float(v) for v in scaled), ex, analytic)


@dataclass(frozen=True)
class CurvatureLimit:
    s_values: tuple[float, ...]
    scaled: tuple[float, ...]
    samples: tuple[CurvatureSample, ...]
    extrapolation: Extrapolation
    target: float

    @property
    def limit(self) -> float:
        return self.extrapolation.limit


def curvature_s0_limit(
    field: IndicatorField,
    tail: TailModel,
    q,
    s_list=(0.1, 0.05, 0.025),
    *,
    alpha: float | None = None,
    precision: str = "high",
) -> CurvatureLimit:
    """Extrapolate ``s * I_s[E](q)`` to ``s = 0``; target ``omega_n - 2 alpha(E)``."""
    samples = tuple(curvature_set(field, tail, q, s, precision=precision) for s in s_list)
    scaled = tuple(s * c.value for s, c in zip(s_list, samples))
    n = field.grid.n
    a = tail.alpha(n) if alpha is None else alpha
    if a is None:
        raise ParameterError("alpha of the tail is unknown; pass it explicitly")
    ex = extrapolate(list(s_list), list(scaled))
    return CurvatureLimit(tuple(float(s) for s in s_list), scaled, samples, ex, sphere_measure(n) - 2.0 * a)


def delta_threshold(s: float, C: float, n: int = 2) -> float:
    """``exp(-(1/s) log((8 w_n + C) / (8 w_n + C/2)))`` (radius beyond which the far field wins)."""
    if not (0.0 < s <= 1.0):
        raise ParameterError("s must lie in (0, 1]")
    if not C > 0:
        raise ParameterError("C must be positive")
    w = sphere_measure(n)
    return math.exp(-(1.0 / s) * math.log((8 * w + C) / (8 * w + C / 2)))
