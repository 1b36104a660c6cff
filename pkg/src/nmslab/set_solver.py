"""Minimizers of the fractional perimeter among sets with fixed exterior data.

For a cell i of the domain with label x_i in {0, 1} the objective is

    sum_{i < j in Omega} w_ij |x_i - x_j| + sum_i [x_i a_i + (1 - x_i) b_i]

with ``a_i`` (``b_i``) the interaction of cell i with the complement (set) part
of the exterior data, box cells and tail together.  Pairwise weights are
nonnegative, so the binary problem is a two-terminal min cut and its convex
relaxation over [0, 1] is exact by the coarea formula.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from .errors import CapacityError, ConfigurationError, IterationLimitError, NumericError, ParameterError, check_s
from .grid import Grid, IndicatorField
from .kernel import KernelTable, build_kernel_table
from .perimeter import PerimeterBreakdown, correlate, perimeter, tail_unaries
from .tails import TailModel, as_tail

__all__ = [
    "SetProblem",
    "SetSolution",
    "mincut_minimize",
    "relaxed_minimize",
    "threshold",
    "brute_force",
    "binary_energy",
    "stickiness_sweep",
    "transition_estimate",
    "BRUTE_FORCE_LIMIT",
    "CAPACITY_BUDGET",
]

BRUTE_FORCE_LIMIT = 20
CAPACITY_BUDGET = 2**30  # flow values stay inside int32
_THRESHOLDS = np.round(np.arange(1, 100) * 0.01, 2)


@dataclass
class SetProblem:
    """Domain mask on a grid, exterior data on the remaining cells, a tail and s."""

    grid: Grid
    omega: np.ndarray
    exterior: IndicatorField
    tail: TailModel
    s: float
    precision: str = "standard"
    tail_values: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.s = check_s(self.s)
        self.omega = np.asarray(self.omega, dtype=bool).ravel()
        if self.omega.size != self.grid.size:
            raise ConfigurationError("domain mask does not match the grid")
        if self.exterior.grid.key() != self.grid.key():
            raise ConfigurationError("exterior field lives on another grid")
        self.tail = as_tail(self.tail)
        self.tail.check_dim(self.grid.n)
        ext = self.exterior.values[~self.omega]
        if np.any((ext != 0) & (ext != 1)):
            raise ParameterError("exterior data must be binary on frozen cells")
        if self.omega.any():
            labels, count = ndimage.label(self.omega.reshape(self.grid.shape))
            if count != 1:
                raise ParameterError("the domain must be connected")
        self._table: KernelTable | None = None
        self._unaries: tuple[np.ndarray, np.ndarray] | None = None

    @property
    def free(self) -> np.ndarray:
        return np.nonzero(self.omega)[0]

    @property
    def table(self) -> KernelTable:
        if self._table is None:
            self._table = build_kernel_table(self.grid, self.s)
        return self._table

    def tail_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """``(T, T^c)`` from the cells of Omega (flat-index order)."""
        if self.tail_values is None:
            t, tc = tail_unaries(self.tail, self.grid, self.free, [self.s], precision=self.precision)
            self.tail_values = (t[0], tc[0])
        return self.tail_values

    def unaries(self) -> tuple[np.ndarray, np.ndarray]:
        """Costs ``(a, b)`` of labelling each free cell 1 or 0."""
        if self._unaries is None:
            out = ~self.omega
            e = self.exterior.values
            set_part = correlate(self.table, np.where(out, e, 0.0))[self.free]
            comp_part = correlate(self.table, np.where(out, 1.0 - e, 0.0))[self.free]
            t, tc = self.tail_terms()
            m = self.grid.cell_measure
            self._unaries = (comp_part + m * tc, set_part + m * t)
        return self._unaries

    def pair_weights(self) -> np.ndarray:
        return self.table.dense(self.free)

    def field_from(self, labels: np.ndarray) -> IndicatorField:
        v = self.exterior.values.copy()
        v[self.free] = labels
        return IndicatorField(v, ~self.omega, self.grid)

    def complement(self) -> "SetProblem":
        p = SetProblem(self.grid, self.omega, self.exterior.complement(), self.tail.complement(), self.s, self.precision)
        if self.tail_values is not None:
            p.tail_values = (self.tail_values[1], self.tail_values[0])
        p._table = self._table
        return p


@dataclass(frozen=True)
class SetSolution:
    field: IndicatorField = field(repr=False)
    energy: PerimeterBreakdown
    occupancy: float
    method: str
    certificate: float | None = None

    @property
    def labels(self) -> np.ndarray:
        return self.field.values


def binary_energy(problem: SetProblem, labels: np.ndarray) -> float:
    """Objective of labels on the free cells (equals P_s of the completed set)."""
    x = np.asarray(labels, dtype=float)
    a, b = problem.unaries()
    W = problem.pair_weights()
    return float(x @ a + (1.0 - x) @ b + 0.5 * np.sum(W * np.abs(x[:, None] - x[None, :])))


def _solution(problem: SetProblem, labels: np.ndarray, method: str, certificate=None) -> SetSolution:
    fld = problem.field_from(labels)
    br = perimeter(fld, problem.omega, problem.tail, problem.table, tail_values=problem.tail_terms())
    occ = float(np.mean(labels)) if labels.size else 0.0
    return SetSolution(fld, br, occ, method, certificate)


# --------------------------------------------------------------------------
# Exact min cut


def mincut_minimize(problem: SetProblem) -> SetSolution:
    """Global binary optimum via max flow (ties resolved toward the empty label)."""
    m = problem.free.size
    if m == 0:
        return _solution(problem, np.zeros(0), "mincut", 0.0)
    a, b = problem.unaries()
    W = problem.pair_weights()
    base = np.minimum(a, b)
    cap_src = b - base  # paid when the cell ends on the sink side (label 0)
    cap_snk = a - base  # paid when the cell stays on the source side (label 1)
    iu, ju = np.triu_indices(m, 1)
    wp = W[iu, ju]
    keep = wp > 0
    iu, ju, wp = iu[keep], ju[keep], wp[keep]
    # int32 flow values: total capacity leaving the source bounds every flow
    budget = max(float(cap_src.sum()), float(cap_snk.sum()), float(wp.max(initial=0.0)), 1e-300)
    scale = CAPACITY_BUDGET / budget
    if not np.isfinite(scale):
        raise CapacityError("capacities cannot be scaled into the fixed-point range")
    q_src = np.rint(cap_src * scale).astype(np.int64)
    q_snk = np.rint(cap_snk * scale).astype(np.int64)
    q_pair = np.rint(wp * scale).astype(np.int64)
    if max(q_src.sum(), q_snk.sum()) >= 2**31 - 1:
        raise NumericError("flow capacity overflow", {"scale": scale})
    S, T = m, m + 1
    nz = q_pair > 0
    rows = np.concatenate([np.full(m, S), np.arange(m), iu[nz], ju[nz]])
    cols = np.concatenate([np.arange(m), np.full(m, T), ju[nz], iu[nz]])
    caps = np.concatenate([q_src, q_snk, q_pair[nz], q_pair[nz]]).astype(np.int32)
    graph = csr_matrix((caps, (rows, cols)), shape=(m + 2, m + 2))
    graph.sum_duplicates()
    res = maximum_flow(graph, S, T)
    residual = graph - res.flow
    residual.eliminate_zeros()
    # smallest source set: cells reachable from the source in the residual graph
    reach = np.zeros(m + 2, dtype=bool)
    reach[S] = True
    frontier = [S]
    indptr, indices, data = residual.indptr, residual.indices, residual.data
    while frontier:
        nxt = []
        for v in frontier:
            nb = indices[indptr[v] : indptr[v + 1]][data[indptr[v] : indptr[v + 1]] > 0]
            new = nb[~reach[nb]]
            reach[new] = True
            nxt.extend(new.tolist())
        frontier = nxt
    labels = reach[:m].astype(float)
    certificate = res.flow_value / scale + float(base.sum())
    return _solution(problem, labels, "mincut", certificate)


# --------------------------------------------------------------------------
# Convex relaxation


def _relaxed_energy(x, a, b, iu, ju, wp):
    return float(x @ a + (1.0 - x) @ b + np.sum(wp * np.abs(x[iu] - x[ju])))


def relaxed_minimize(
    problem: SetProblem,
    tol: float = 1e-10,
    *,
    max_iter: int = 200000,
) -> tuple[np.ndarray, float]:
    """Primal-dual hybrid gradient on the relaxed objective over [0, 1]^Omega.

    Stops when the duality gap is below ``tol * max(1, energy)``; returns the
    relaxed labels and their energy.
    """
    if tol <= 0:
        raise ParameterError("tol must be positive")
    m = problem.free.size
    a, b = problem.unaries()
    if m == 0:
        return np.zeros(0), float(b.sum())
    W = problem.pair_weights()
    iu, ju = np.triu_indices(m, 1)
    wp = W[iu, ju]
    keep = wp > 0
    iu, ju, wp = iu[keep], ju[keep], wp[keep]
    c = a - b
    const = float(b.sum())
    scale = max(float(np.max(np.abs(c), initial=0.0)), float(wp.max(initial=0.0)), 1e-300)
    # rescale so that the objective is O(1); the operator D x = w * (x_i - x_j)
    cs, ws = c / scale, wp / scale
    deg = np.bincount(iu, weights=ws**2, minlength=m) + np.bincount(ju, weights=ws**2, minlength=m)
    L = np.sqrt(2.0 * max(float(deg.max(initial=0.0)), 1e-300))
    tau = sigma = 0.99 / L
    x = np.clip(np.where(cs < 0, 1.0, 0.0), 0, 1)
    xbar = x.copy()
    p = np.zeros(iu.size)

    def Dt(q):
        return np.bincount(iu, weights=ws * q, minlength=m) - np.bincount(ju, weights=ws * q, minlength=m)

    gap = np.inf
    for it in range(1, max_iter + 1):
        p = np.clip(p + sigma * ws * (xbar[iu] - xbar[ju]), -1.0, 1.0)
        x_new = np.clip(x - tau * (Dt(p) + cs), 0.0, 1.0)
        xbar = 2.0 * x_new - x
        x = x_new
        if it % 50 == 0:
            primal = float(cs @ x + np.sum(ws * np.abs(x[iu] - x[ju])))
            dual = float(np.sum(np.minimum(0.0, Dt(p) + cs)))
            gap = primal - dual
            if gap <= tol * max(1.0, abs(primal) + abs(const) / scale):
                break
    else:
        raise IterationLimitError("relaxed solver did not converge", gap * scale, max_iter)
    return x, _relaxed_energy(x, a, b, iu, ju, wp)


def threshold(problem: SetProblem, relaxed: np.ndarray) -> SetSolution:
    """Best superlevel set over the levels {0.01 k} and the distinct relaxed values."""
    relaxed = np.asarray(relaxed, dtype=float)
    levels = np.unique(np.concatenate([_THRESHOLDS, relaxed[(relaxed > 0) & (relaxed <= 1)], [1.0]]))
    best, best_e = np.zeros(relaxed.size), binary_energy(problem, np.zeros(relaxed.size))
    for t in levels:
        lab = (relaxed >= t).astype(float)
        e = binary_energy(problem, lab)
        if e < best_e - 1e-15 * abs(best_e):
            best, best_e = lab, e
    return _solution(problem, best, "relaxed+threshold")


# --------------------------------------------------------------------------
# Exhaustive search


def brute_force(problem: SetProblem, *, landscape: bool = False):
    """Exact optimum by enumeration (at most BRUTE_FORCE_LIMIT free cells).

    With ``landscape=True`` also returns the energies of all 2^m labellings
    (bit i of the configuration index = label of free cell i).
    """
    m = problem.free.size
    if m > BRUTE_FORCE_LIMIT:
        raise CapacityError(f"brute force is limited to {BRUTE_FORCE_LIMIT} free cells (got {m})")
    a, b = problem.unaries()
    W = problem.pair_weights()
    energies = np.empty(2**m)
    chunk = 1 << 14
    bits = 1 << np.arange(m)
    for start in range(0, 2**m, chunk):
        idx = np.arange(start, min(start + chunk, 2**m))
        X = ((idx[:, None] & bits[None, :]) > 0).astype(float)
        energies[idx] = X @ a + (1.0 - X) @ b + np.einsum("ki,ij,kj->k", X, W, 1.0 - X)
    best_e = float(energies.min())
    ties = np.nonzero(energies <= best_e + 1e-12 * max(1.0, abs(best_e)))[0]
    # prefer the tied labelling with the fewest set cells (empty wins ties)
    k = int(min(ties, key=lambda t: (bin(int(t)).count("1"), int(t))))
    labels = ((k & bits) > 0).astype(float)
    sol = _solution(problem, labels, "brute")
    return (sol, energies) if landscape else sol


# --------------------------------------------------------------------------
# Sweeps


def transition_estimate(values, occupancies, *, low: float = 0.01, high: float = 0.99):
    """First value (in sweep order) whose occupancy regime differs from the first one.

    Regimes: empty (occupancy <= low), full (>= high) and partial.  Returns
    None when the whole sweep stays in one regime.
    """

    def regime(o):
        return 0 if o <= low else (2 if o >= high else 1)

    occ = list(occupancies)
    if not occ:
        return None
    start = regime(occ[0])
    for v, o in zip(values, occ):
        if regime(o) != start:
            return v
    return None


def stickiness_sweep(family, parameter: str, values, *, solver=mincut_minimize) -> list[dict]:
    """Solve ``family(value)`` for each value; one row per value.

    Each row carries the occupancy, the energy split and the transition
    estimate of the whole sweep.
    """
    if parameter not in ("s", "delta", "M"):
        raise ParameterError(f"unknown sweep parameter {parameter!r}")
    rows = []
    for v in values:
        sol = solver(family(v))
        rows.append({parameter: float(v), "occupancy": sol.occupancy, **sol.energy.as_dict(), "method": sol.method})
    tr = transition_estimate([r[parameter] for r in rows], [r["occupancy"] for r in rows])
    for r in rows:
        r["transition"] = float("nan") if tr is None else float(tr)
    return rows
