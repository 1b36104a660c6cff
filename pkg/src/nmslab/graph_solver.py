"""Nonlocal minimal graphs in one dimension and the classical annulus baseline.

The discrete energy over cells i, j (piecewise-constant u) is

    F(u) = sum over ordered pairs (i, j), i != j, not both frozen, of
           w_ij * calG_s((u_i - u_j) / d_ij)
         + 2 * sum over free i of int_{outside box} [calG_s((u_i - phi(x)) / |x - c_i|)
                                                    - calG_s(-phi(x) / |x - c_i|)] |x - c_i|^{-s} dx

with ``w_ij`` the cell-pair integral of ``|x - y|^{-s}`` and ``d_ij`` the
centre distance.  Frozen-frozen pairs and the tail interaction of the
reference profile u = 0 are constants and are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConfigurationError, IterationLimitError, NumericError, ParameterError, check_s
from .grid import Grid, build_grid
from .kernel import GsTable, build_gs_table, build_kernel_table

__all__ = [
    "GraphProblem",
    "GraphSolution",
    "make_graph_problem",
    "graph_energy",
    "graph_gradient",
    "graph_hessian",
    "minimize_graph",
    "trace_gap",
    "STICK_FACTOR",
    "AnnulusSolution",
    "annulus_threshold",
    "classical_annulus",
    "AnnulusProfile",
    "classical_annulus_numeric",
]

STICK_FACTOR = 5.0  # a wall gap counts as stickiness when it exceeds STICK_FACTOR * h
_V_PANELS = 48
_V_ORDER = 8
_RHO_CAP = 1e120


def _tail_function(tail) -> Callable[[np.ndarray], np.ndarray]:
    if tail is None:
        raise ConfigurationError("graph problems need exterior data beyond the box")
    if hasattr(tail, "value"):
        return tail.value
    if callable(tail):
        return tail
    raise ConfigurationError("graph tail must provide value(x) or be callable")


@dataclass
class GraphProblem:
    """Fixed exterior data ``phi`` on the frozen cells of a 1D grid plus a tail beyond it."""

    grid: Grid
    phi: np.ndarray
    s: float
    omega: tuple[tuple[float, float], ...]
    tail: object
    table: GsTable | None = None
    frozen: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.s = check_s(self.s)
        if self.grid.n != 1:
            raise ConfigurationError("graph problems are one-dimensional")
        self.omega = tuple((float(a), float(b)) for a, b in self.omega)
        for a, b in self.omega:
            if not (self.grid.lower[0] < a < b < self.grid.upper[0]):
                raise ParameterError("each interval of omega must lie strictly inside the box")
        self.phi = np.asarray(self.phi, dtype=float).ravel()
        if self.phi.size != self.grid.size:
            raise ConfigurationError("phi must have one value per cell")
        x = self.x
        inside = np.zeros(x.size, dtype=bool)
        for a, b in self.omega:
            inside |= (x > a) & (x < b)
        self.frozen = ~inside
        if not np.all(np.isfinite(self.phi[self.frozen])):
            raise ParameterError("exterior data must be finite on frozen cells")
        if not inside.any():
            raise ParameterError("omega contains no cell centre")
        self._tail_fn = _tail_function(self.tail)
        if self.table is None:
            self.table = build_gs_table(self.s, 1)
        elif self.table.n != 1 or abs(self.table.s - self.s) > 0:
            raise ConfigurationError("G_s table does not match (n = 1, s)")
        self._prepare()

    @property
    def x(self) -> np.ndarray:
        return self.grid.axis_centers(0)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def free(self) -> np.ndarray:
        return np.nonzero(~self.frozen)[0]

    def _prepare(self):
        s = self.s
        kt = build_kernel_table(self.grid, s, exponent=s)
        idx = np.arange(self.grid.size)
        free = self.free
        self._W = kt.pairwise(free[:, None], idx[None, :])  # (M, N)
        x = self.x
        D = np.abs(x[free][:, None] - x[None, :])
        D[D == 0] = np.inf
        self._D = D
        # tail nodes (cell measure h times the exterior line integral):
        # rho = rho0 * v^{-1/s}, int_{rho0}^inf f rho^{-1-s} d rho = rho0^{-s}/s int_0^1 f dv
        xg, wg = np.polynomial.legendre.leggauss(_V_ORDER)
        e = np.linspace(0.0, 1.0, _V_PANELS + 1)
        e = np.unique(np.concatenate([e, e[1] * 0.5 ** np.arange(1, 12)]))
        half = 0.5 * np.diff(e)
        v = ((0.5 * (e[1:] + e[:-1]))[:, None] + half[:, None] * xg[None, :]).ravel()
        wv = (half[:, None] * wg[None, :]).ravel()
        lo, hi = self.grid.lower[0], self.grid.upper[0]
        xf = x[free]
        rho_parts, phi_parts, w_parts = [], [], []
        for rho0, sgn in ((hi - xf, 1.0), (xf - lo, -1.0)):
            with np.errstate(over="ignore"):
                rho = rho0[:, None] * np.exp(-np.log(v)[None, :] / s)
            rho = np.minimum(rho, _RHO_CAP)
            rho_parts.append(rho)
            phi_parts.append(self._tail_fn(xf[:, None] + sgn * rho))
            w_parts.append(2.0 * self.grid.h * (rho0[:, None] ** (-s) / s) * wv[None, :])
        self._rho = np.concatenate(rho_parts, axis=1)
        self._phit = np.concatenate(phi_parts, axis=1)
        self._wt = np.concatenate(w_parts, axis=1)
        if not np.all(np.isfinite(self._phit)):
            raise NumericError("exterior data overflows far from the box", {})

    def full_values(self, u_free: np.ndarray) -> np.ndarray:
        u = self.phi.copy()
        u[self.free] = u_free
        return u


def make_graph_problem(
    omega,
    s: float,
    h: float,
    pad: float,
    phi: Callable[[np.ndarray], np.ndarray],
    tail=None,
) -> GraphProblem:
    """Grid ``[min a - pad, max b + pad]`` with spacing ``h``; ``phi`` sampled at frozen centres.

    ``tail`` defaults to ``phi`` itself (data given on all of R).
    """
    omega = [tuple(iv) for iv in (omega if isinstance(omega[0], (tuple, list)) else [omega])]
    a = min(iv[0] for iv in omega)
    b = max(iv[1] for iv in omega)
    lo, hi = a - pad, b + pad
    cells = int(round((hi - lo) / h))
    if abs(cells * h - (hi - lo)) > 1e-9 * (hi - lo):
        raise ParameterError("the box length must be a multiple of h")
    grid = build_grid([(lo, hi)], cells)
    phi_vals = np.asarray(phi(grid.axis_centers(0)), dtype=float)
    return GraphProblem(grid, phi_vals, s, tuple(omega), tail if tail is not None else phi)


def _split(problem: GraphProblem, u_free):
    u_free = np.asarray(u_free, dtype=float)
    if u_free.shape == (problem.grid.size,):
        u_free = u_free[problem.free]
    if u_free.shape != (problem.free.size,):
        raise ParameterError("u must hold one value per free cell (or per cell)")
    if not np.all(np.isfinite(u_free)):
        raise ParameterError("u must be finite")
    return u_free


def graph_energy(problem: GraphProblem, u) -> float:
    """Discrete nonlocal area (u-independent constants dropped)."""
    if problem.table is None:
        raise ConfigurationError("missing G_s table")
    uf = _split(problem, u)
    T = problem.table
    full = problem.full_values(uf)
    t = (uf[:, None] - full[None, :]) / problem._D
    G = T.Gg(t) * problem._W
    fr = problem.frozen
    pairs = 2.0 * G[:, fr].sum() + G[:, ~fr].sum()
    t0 = -problem._phit / problem._rho
    tail = np.sum(problem._wt * problem._rho * T.Gg_increment(t0, uf[:, None] / problem._rho))
    return float(pairs + tail)


def graph_gradient(problem: GraphProblem, u) -> np.ndarray:
    """Gradient of :func:`graph_energy` with respect to the free values."""
    uf = _split(problem, u)
    T = problem.table
    full = problem.full_values(uf)
    t = (uf[:, None] - full[None, :]) / problem._D
    g = 2.0 * np.sum(problem._W * T.Gg_prime(t) / problem._D, axis=1)
    tt = (uf[:, None] - problem._phit) / problem._rho
    g += np.sum(problem._wt * T.G(tt), axis=1)
    return g


def graph_hessian(problem: GraphProblem, u) -> np.ndarray:
    """Hessian with ``calG_s''`` replaced by the exact density (used for preconditioning)."""
    uf = _split(problem, u)
    T = problem.table
    full = problem.full_values(uf)
    t = (uf[:, None] - full[None, :]) / problem._D
    c = 2.0 * problem._W * T.density(t) / problem._D**2
    tt = (uf[:, None] - problem._phit) / problem._rho
    diag = c.sum(axis=1) + np.sum(problem._wt * T.density(tt) / problem._rho, axis=1)
    H = -c[:, problem.free]
    H[np.diag_indices_from(H)] = diag
    return H


_EXTRAP = np.array([15.0, -10.0, 3.0]) / 8.0  # quadratic extrapolation to x = wall from 3 centres


def trace_gap(problem: GraphProblem, u_full: np.ndarray, wall: float, side: str) -> float:
    """``|u(wall from inside) - phi(wall from outside)|`` by quadratic extrapolation."""
    x = problem.x
    h = problem.h
    if side == "right":  # omega lies to the right of the wall
        inner = wall + h * np.array([0.5, 1.5, 2.5])
        outer = wall - h * np.array([0.5, 1.5, 2.5])
    else:
        inner = wall - h * np.array([0.5, 1.5, 2.5])
        outer = wall + h * np.array([0.5, 1.5, 2.5])

    def pick(pts):
        k = np.rint((pts - x[0]) / h).astype(int)
        if np.any(k < 0) or np.any(k >= x.size) or np.any(np.abs(x[np.clip(k, 0, x.size - 1)] - pts) > 1e-6 * h):
            raise ParameterError("wall is too close to the box edge for trace extrapolation")
        return u_full[k]

    return float(abs(_EXTRAP @ pick(inner) - _EXTRAP @ pick(outer)))


@dataclass(frozen=True)
class GraphSolution:
    x: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    energy: float
    gradient_norm: float
    left_gap: float
    right_gap: float
    iterations: int
    h: float
    gaps: tuple[tuple[float, float], ...] = ()

    @property
    def sticks_left(self) -> bool:
        return self.left_gap > STICK_FACTOR * self.h

    @property
    def sticks_right(self) -> bool:
        return self.right_gap > STICK_FACTOR * self.h


def _initial_guess(problem: GraphProblem) -> np.ndarray:
    """Per interval, linear interpolation of the nearest frozen values."""
    x = problem.x
    u = problem.phi.copy()
    fr = problem.frozen
    for a, b in problem.omega:
        m = (x > a) & (x < b)
        left = np.nonzero(fr & (x < a))[0]
        right = np.nonzero(fr & (x > b))[0]
        ua = problem.phi[left[-1]] if left.size else problem.phi[right[0]]
        ub = problem.phi[right[0]] if right.size else ua
        u[m] = ua + (ub - ua) * (x[m] - a) / (b - a)
    return u[problem.free]


def minimize_graph(
    problem: GraphProblem,
    *,
    tol: float = 1e-8,
    max_iter: int = 50000,
    method: str = "newton",
    u0: np.ndarray | None = None,
) -> GraphSolution:
    """Minimize the convex discrete energy until ``max |gradient| <= tol``.

    ``method="descent"`` is diagonally preconditioned gradient descent with
    Barzilai-Borwein steps and Armijo backtracking; ``method="newton"`` uses
    the full Hessian as the preconditioner (same line search).
    """
    if method not in ("newton", "descent"):
        raise ParameterError(f"unknown method {method!r}")
    u = _initial_guess(problem) if u0 is None else _split(problem, u0).copy()
    E = graph_energy(problem, u)
    g = graph_gradient(problem, u)
    step = 1.0
    prev = None
    it = 0
    while np.max(np.abs(g)) > tol:
        if it >= max_iter:
            raise IterationLimitError("graph descent did not converge", float(np.max(np.abs(g))), it)
        it += 1
        if method == "newton":
            H = graph_hessian(problem, u)
            try:
                d = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                d = -g / np.maximum(np.diag(H), 1e-300)
            t = 1.0
        else:
            P = np.maximum(np.diag(graph_hessian(problem, u)), 1e-300)
            d = -g / P
            t = 1.0
            if prev is not None:
                # Barzilai-Borwein step in the metric defined by P
                du, dg = u - prev[0], g - prev[1]
                den = float(du @ dg)
                t = float(du @ (P * du)) / den if den > 0 else step
                t = min(max(t, 1e-6), 1e6)
        slope = float(g @ d)
        if slope >= 0:
            d = -g
            slope = -float(g @ g)
        gmax = float(np.max(np.abs(g)))
        noise = 1e-12 * max(1.0, abs(E))
        for _ in range(60):
            un = u + t * d
            En = graph_energy(problem, un)
            if En <= E + 1e-4 * t * slope:
                gn = graph_gradient(problem, un)
                break
            if En <= E + noise:
                # energy differences are at round-off level; fall back on the gradient
                gn = graph_gradient(problem, un)
                if np.max(np.abs(gn)) < gmax:
                    break
            t *= 0.5
        else:
            raise IterationLimitError("line search failed", gmax, it)
        prev = (u, g)
        step = t
        u, E, g = un, En, gn
    full = problem.full_values(u)
    gaps = []
    for a, b in problem.omega:
        gaps.append((a, trace_gap(problem, full, a, "right")))
        gaps.append((b, trace_gap(problem, full, b, "left")))
    return GraphSolution(
        problem.x.copy(), full, E, float(np.max(np.abs(g))), gaps[0][1], gaps[-1][1], it, problem.h, tuple(gaps)
    )


# --------------------------------------------------------------------------
# Classical annulus


def annulus_threshold(rho: float, R: float) -> float:
    """Largest inner-wall height reachable by a radial minimal graph vanishing at R."""
    _check_annulus(rho, R)
    return rho * math.log((math.sqrt(R * R - rho * rho) + R) / rho)


def _check_annulus(rho, R):
    if not (0 < rho < R) or not (math.isfinite(rho) and math.isfinite(R)):
        raise ParameterError("need 0 < rho < R")


def _catenoid(c: float, R: float, r):
    r = np.asarray(r, dtype=float)
    if c == 0:
        return np.zeros_like(r)
    return c * np.log((math.sqrt(R * R - c * c) + R) / (np.sqrt(np.maximum(r * r - c * c, 0.0)) + r))


@dataclass(frozen=True)
class AnnulusSolution:
    rho: float
    R: float
    M: float
    c: float
    M0: float
    sticks: bool
    gap: float

    def profile(self, r):
        return _catenoid(self.c, self.R, r)


def classical_annulus(rho: float, R: float, M: float) -> AnnulusSolution:
    """Radial minimal graph on ``rho < |x| < R`` with u = M inside and 0 outside."""
    _check_annulus(rho, R)
    if not (M >= 0 and math.isfinite(M)):
        raise ParameterError("M must be a nonnegative number")
    M0 = annulus_threshold(rho, R)
    if M > M0:
        return AnnulusSolution(rho, R, M, rho, M0, True, M - M0)
    if M == 0:
        return AnnulusSolution(rho, R, M, 0.0, M0, False, 0.0)

    # bisect in the angle th with c = rho sin(th): the boundary value is smooth in th
    # at both ends (square-root singularity in c at c = rho, no cancellation as c -> 0)
    def f(th):
        c, t = rho * math.sin(th), rho * math.cos(th)
        return c * math.log((math.sqrt(R * R - c * c) + R) / (t + rho))

    lo, hi = 0.0, 0.5 * math.pi  # f increases in th
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if f(mid) < M:
            lo = mid
        else:
            hi = mid
    return AnnulusSolution(rho, R, M, rho * math.sin(0.5 * (lo + hi)), M0, False, 0.0)


@dataclass(frozen=True)
class AnnulusProfile:
    r: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)
    M: float
    wall_value: float
    gap: float
    iterations: int


def classical_annulus_numeric(rho: float, R: float, M: float, mesh: int = 512, *, tol: float = 1e-10) -> AnnulusProfile:
    """Minimize ``sum r_mid * sqrt(dr^2 + du^2) + rho * (M - u(rho))`` by damped Newton.

    The mesh ``r = rho + (R - rho) xi^2`` is graded toward the inner wall,
    where the profile has a square-root singularity.  For ``M`` up to the
    threshold u(rho) = M is imposed; above it u(rho) is free and the wall
    term supplies the natural condition.
    """
    _check_annulus(rho, R)
    if mesh < 64:
        raise ParameterError("mesh must be at least 64")
    M0 = annulus_threshold(rho, R)
    free_wall = M > M0
    xi = np.linspace(0.0, 1.0, mesh + 1)
    r = rho + (R - rho) * xi**2
    dr = np.diff(r)
    rm = 0.5 * (r[1:] + r[:-1])
    u = M * (1.0 - xi)
    if M == 0:
        return AnnulusProfile(r, np.zeros_like(r), 0.0, 0.0, 0.0, 0)
    unknown = slice(0 if free_wall else 1, mesh)  # u[mesh] = 0 always

    def energy(v):
        return float(np.sum(rm * np.hypot(dr, np.diff(v)))) + (rho * (M - v[0]) if free_wall else 0.0)

    def grad_hess(v):
        du = np.diff(v)
        L = np.hypot(dr, du)
        e1 = rm * du / L  # d/d(du) of each element
        e2 = rm * dr**2 / L**3
        g = np.zeros_like(v)
        g[:-1] -= e1
        g[1:] += e1
        if free_wall:
            g[0] -= rho
        main = np.zeros_like(v)
        main[:-1] += e2
        main[1:] += e2
        off = -e2
        return g, main, off

    it = 0
    E = energy(u)
    for it in range(1, 200):
        g, main, off = grad_hess(u)
        gi = g[unknown]
        if np.max(np.abs(gi)) <= tol:
            break
        mi = main[unknown]
        oi = off[unknown][:-1] if free_wall else off[1:mesh][:-1]
        ab = np.zeros((3, mi.size))
        ab[0, 1:] = oi
        ab[1] = mi
        ab[2, :-1] = oi
        d = -solve_banded((1, 1), ab, gi)
        if abs(float(gi @ d)) < 1e-24:  # Newton decrement at round-off level
            break
        t = 1.0
        while True:
            un = u.copy()
            un[unknown] += t * d
            En = energy(un)
            if En <= E + 1e-4 * t * float(gi @ d) or t < 1e-14:
                break
            t *= 0.5
        if t < 1e-14 and En > E:
            break
        u, E = un, En
    else:
        raise NumericError("annulus Newton iteration did not converge", {"residual": float(np.max(np.abs(gi)))})
    wall = float(u[0])
    return AnnulusProfile(r, u, M, wall, max(M - wall, 0.0), it)
