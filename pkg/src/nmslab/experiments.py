"""Named experiments: configuration -> rows -> CSV + JSON summary."""

from __future__ import annotations

import json
import math
import os
import platform
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig
from .errors import ConfigurationError, NmsError, ParameterError, check_s
from .extrapolate import extrapolate
from .grid import (
    Annulus,
    Ball,
    ComplementShape,
    Cone,
    HalfRing,
    HalfSpace,
    IndicatorField,
    IntersectionShape,
    UnionShape,
    build_grid,
    rasterize,
)
from .tails import EmptyTail, SupgraphBounded, SupgraphPiecewiseLinear, as_tail, make_tail, sphere_measure

__all__ = [
    "ExperimentReport",
    "run",
    "write_report",
    "run_and_write",
    "cylinder_demo",
    "make_shape",
    "csv_schema",
    "format_value",
    "rle_encode",
    "rle_decode",
    "CACHE_ENV",
]

CACHE_ENV = "NMS_CACHE_DIR"
FLOAT_FORMAT = "%.17g"


def csv_schema() -> dict:
    text = resources.files("nmslab").joinpath("data/csv_schema.json").read_text(encoding="utf-8")
    return json.loads(text)


@dataclass
class ExperimentReport:
    experiment: str
    config_hash: str
    columns: list[str]
    rows: list[dict]
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)
    profiles: dict = field(default_factory=dict)  # file name -> (header, 2D array)
    cached: bool = False

    def header(self) -> dict:
        import scipy

        from . import __version__

        return {
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "versions": {
                "nmslab": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
            "wall_time": self.wall_time,
            "cached": self.cached,
        }

    def provenance_notes(self) -> dict:
        tags: dict[str, int] = {}
        for r in self.rows:
            tags[r.get("provenance", "none")] = tags.get(r.get("provenance", "none"), 0) + 1
        return tags


# --------------------------------------------------------------------------
# Formatting


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FORMAT % float(v)
    return str(v)


def csv_text(columns: list[str], rows: list[dict]) -> str:
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(format_value(r.get(c)) for c in columns))
    return "\n".join(lines) + "\n"


def rle_encode(mask) -> list[int]:
    """Run lengths of a flat binary mask, starting with a run of zeros (possibly empty)."""
    m = np.asarray(mask).ravel() > 0.5
    if m.size == 0:
        return []
    change = np.nonzero(np.diff(m.astype(np.int8)))[0] + 1
    bounds = np.concatenate([[0], change, [m.size]])
    runs = np.diff(bounds).tolist()
    return ([0] + runs) if m[0] else runs


def rle_decode(runs, size: int) -> np.ndarray:
    out = np.zeros(size, dtype=bool)
    pos, val = 0, False
    for n in runs:
        out[pos : pos + n] = val
        pos += n
        val = not val
    if pos != size:
        raise ConfigurationError("run lengths do not add up to the mask size")
    return out


def _json_plain(v):
    if isinstance(v, dict):
        return {k: _json_plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_plain(x) for x in v]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else None
    return v


# --------------------------------------------------------------------------
# Geometry from dictionaries


def _fields(spec: dict, kind: str, required: tuple, optional: tuple = ()) -> dict:
    extra = set(spec) - set(required) - set(optional) - {"type"}
    if extra:
        raise ConfigurationError(f"unknown keys {sorted(extra)} for shape {kind!r}")
    missing = [k for k in required if k not in spec]
    if missing:
        raise ConfigurationError(f"shape {kind!r} needs {missing}")
    return {k: spec[k] for k in required + optional if k in spec}


def make_shape(spec: dict):
    """Build a shape from a dictionary such as ``{"type": "ball", "center": [0, 0], "radius": 1}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ConfigurationError(f"a shape needs a 'type': {spec!r}")
    kind = spec["type"]
    if kind == "ball":
        f = _fields(spec, kind, ("center", "radius"))
        return Ball(tuple(float(c) for c in f["center"]), float(f["radius"]))
    if kind == "halfspace":
        f = _fields(spec, kind, ("normal",), ("offset",))
        return HalfSpace(tuple(float(c) for c in f["normal"]), float(f.get("offset", 0.0)))
    if kind == "annulus":
        f = _fields(spec, kind, ("rho", "R"), ("center",))
        return Annulus(float(f["rho"]), float(f["R"]), tuple(float(c) for c in f.get("center", (0.0, 0.0))))
    if kind == "cone":
        f = _fields(spec, kind, (), ("h", "theta"))
        return Cone(float(f.get("h", 1.0)), float(f.get("theta", math.pi / 8)))
    if kind == "half_ring":
        f = _fields(spec, kind, ("delta",))
        return HalfRing(float(f["delta"]))
    if kind in ("union", "intersection"):
        f = _fields(spec, kind, ("parts",))
        parts = tuple(make_shape(p) for p in f["parts"])
        return UnionShape(parts) if kind == "union" else IntersectionShape(parts)
    if kind == "complement":
        f = _fields(spec, kind, ("of",))
        return ComplementShape(make_shape(f["of"]))
    raise ConfigurationError(f"unknown shape type {kind!r}")


def _tail_for(spec, shape=None):
    """Explicit tail dictionary, or (when null) the shape's own tail / the empty tail."""
    if spec is not None:
        if not isinstance(spec, dict) or "type" not in spec:
            raise ConfigurationError(f"a tail needs a 'type': {spec!r}")
        return make_tail(spec)
    if shape is not None and hasattr(shape, "to_tail"):
        return as_tail(shape)
    return EmptyTail()


def _grid(geo: dict):
    return build_grid(geo["box"], geo["cells"])


def _domain(spec, grid):
    if spec is None:
        return None, np.ones(grid.size, dtype=bool)
    shape = make_shape(spec)
    return shape, np.asarray(shape.contains(grid.centers), dtype=bool)


def _s_list(v) -> list[float]:
    vals = v if isinstance(v, (list, tuple)) else [v]
    if not vals:
        raise ParameterError("at least one value of s is required")
    return [check_s(s) for s in vals]


# --------------------------------------------------------------------------
# Runners: each returns (rows, extras, profiles)


def _run_perimeter(cfg: ExperimentConfig):
    from .kernel import build_kernel_table
    from .perimeter import perimeter, tail_unaries

    geo, par = cfg.geometry, cfg.parameters
    grid = _grid(geo)
    shape = make_shape(geo["shape"])
    _, omega = _domain(geo["domain"], grid)
    tail = _tail_for(geo["tail"], shape)
    field_ = rasterize(shape, grid, ~omega)
    s_vals = _s_list(par["s"])
    idx = np.nonzero(omega)[0]
    t_in, t_out = tail_unaries(tail, grid, idx, s_vals, precision=par["precision"])
    rows = []
    for k, s in enumerate(s_vals):
        p = perimeter(field_, omega, tail, build_kernel_table(grid, s), tail_values=(t_in[k], t_out[k]))
        rows.append({"s": s, **p.as_dict(), "provenance": "none"})
    return rows, {}, {}


def _run_asymptotics_s1(cfg: ExperimentConfig):
    from .perimeter import asymptotic_s_to_1

    geo, par = cfg.geometry, cfg.parameters
    shape = make_shape(geo["shape"])
    domain = make_shape(geo["domain"]) if geo["domain"] is not None else None
    tail = make_tail(geo["tail"]) if geo["tail"] is not None else None
    res = asymptotic_s_to_1(
        shape, domain, _s_list(par["s"]), cells=geo["cells"], box=geo["box"], tail=tail,
        precision=par["precision"], method=par["method"], compare_grid=bool(par["compare_grid"]),
    )
    nan = float("nan")
    gs = res.grid_scaled_values
    rows = []
    for k, s in enumerate(res.s_values):
        rows.append({"kind": "point", "s": s, "scaled": res.scaled_values[k],
                     "grid_scaled": gs[k] if gs else nan, "target": nan, "relative_error": nan,
                     "method": res.method, "provenance": "none"})
    grid_limit = extrapolate([1 - s for s in res.s_values], list(gs)).limit if gs else nan
    known = math.isfinite(res.target)
    rows.append({"kind": "limit", "s": 1.0, "scaled": res.limit, "grid_scaled": grid_limit,
                 "target": res.target, "relative_error": res.relative_error if known else nan,
                 "method": res.method, "provenance": "paper" if known else "none"})
    ex = res.extrapolation
    return rows, {"linear_fit": ex.linear, "two_point": ex.two_point}, {}


def _run_asymptotics_s0(cfg: ExperimentConfig):
    from .perimeter import asymptotic_s_to_0

    geo, par = cfg.geometry, cfg.parameters
    grid = _grid(geo)
    shape = make_shape(geo["shape"])
    dshape, omega = _domain(geo["domain"], grid)
    tail = _tail_for(geo["tail"], shape)
    field_ = rasterize(shape, grid, ~omega)
    measure = grid.box_volume if dshape is None else getattr(dshape, "measure", None)
    res = asymptotic_s_to_0(field_, tail, omega, _s_list(par["s"]), omega_measure=measure,
                            precision=par["precision"])
    target, rel = res.target, res.relative_error
    inside = isinstance(shape, Ball) and all(
        lo <= c - shape.radius and c + shape.radius <= hi
        for c, lo, hi in zip(shape.center, grid.lower, grid.upper)
    )
    if inside and dshape is None:
        exact = shape.measure
        # exact |E| in place of the cell count when E lies in the box
        a_e = tail.alpha(grid.n)
        target = (sphere_measure(grid.n) - a_e) * exact + a_e * (measure - exact)
        rel = abs(res.limit - target) / abs(target)
    nan = float("nan")
    rows = [{"kind": "point", "s": s, "scaled": v, "target": nan, "relative_error": nan, "provenance": "none"}
            for s, v in zip(res.s_values, res.scaled_values)]
    rows.append({"kind": "limit", "s": 0.0, "scaled": res.limit, "target": target,
                 "relative_error": rel, "provenance": "paper"})
    ex = res.extrapolation
    return rows, {"linear_fit": ex.linear, "two_point": ex.two_point}, {}


def _run_alpha(cfg: ExperimentConfig):
    from .curvature import alpha_numeric

    geo, par = cfg.geometry, cfg.parameters
    tail = make_tail(geo["tail"])
    R_vals = par["R"] if isinstance(par["R"], list) else [par["R"]]
    q_vals = par["q"]
    if q_vals and not isinstance(q_vals[0], list):
        q_vals = [q_vals]
    s_vals = _s_list(par["s"])
    nan = float("nan")
    rows = []
    for R in R_vals:
        for q in q_vals:
            res = alpha_numeric(tail, float(R), q, s_vals, precision=par["precision"])
            qx, qy = float(q[0]), (float(q[1]) if len(q) > 1 else nan)
            analytic = nan if res.analytic is None else float(res.analytic)
            base = {"R": float(R), "qx": qx, "qy": qy, "analytic": analytic}
            for s, v in zip(res.s_values, res.scaled):
                rows.append({**base, "kind": "point", "s": s, "scaled": v, "linear_fit": nan,
                             "two_point": nan, "provenance": "none"})
            ex = res.extrapolation
            rows.append({**base, "kind": "limit", "s": 0.0, "scaled": ex.limit, "linear_fit": ex.linear,
                         "two_point": ex.two_point, "provenance": "paper" if math.isfinite(analytic) else "none"})
    return rows, {}, {}


def _run_curvature(cfg: ExperimentConfig):
    from .curvature import PARTS, curvature_set, interface_points

    geo, par = cfg.geometry, cfg.parameters
    grid = _grid(geo)
    shape = make_shape(geo["shape"])
    tail = _tail_for(geo["tail"], shape)
    field_ = rasterize(shape, grid)
    if par["q"] is not None:
        q = np.asarray(par["q"], dtype=float)
    else:
        pts = interface_points(field_)
        if pts.size == 0:
            raise ParameterError("the set has no interface inside the box")
        near = np.asarray(par["near"], dtype=float)
        q = pts[int(np.argmin(np.linalg.norm(pts - near, axis=1)))]
    s_vals = _s_list(par["s"])
    nan = float("nan")
    rows = []
    samples = []
    for s in s_vals:
        c = curvature_set(field_, tail, q, s, par["pv_radius"], diagnostic=par["diagnostic"],
                          precision=par["precision"])
        samples.append(c)
        parts = c.parts or {}
        rows.append({"kind": "point", "s": s, "qx": float(q[0]), "qy": float(q[1]) if q.size > 1 else nan,
                     "value": c.value, "near_field": c.near_field, "unmatched": c.unmatched, "tail": c.tail,
                     **{p: parts.get(p, nan) for p in PARTS}, "target": nan, "provenance": "none"})
    extras = {}
    if par["limit"] and len(s_vals) >= 2:
        a = tail.alpha(grid.n)
        target = sphere_measure(grid.n) - 2.0 * a if a is not None else nan
        ex = extrapolate(s_vals, [s * c.value for s, c in zip(s_vals, samples)])
        rows.append({"kind": "limit", "s": 0.0, "qx": float(q[0]), "qy": float(q[1]) if q.size > 1 else nan,
                     "value": ex.limit, "near_field": nan, "unmatched": nan, "tail": nan,
                     **{p: nan for p in PARTS}, "target": target,
                     "provenance": "paper" if math.isfinite(target) else "none"})
        extras = {"linear_fit": ex.linear, "two_point": ex.two_point}
    return rows, extras, {}


def _graph_data(spec: dict) -> Callable[[np.ndarray], np.ndarray]:
    kind = spec.get("type")
    if kind == "constant":
        _fields(spec, kind, ("value",))
        value = float(spec["value"])
        return lambda x: np.full(np.shape(x), value)
    if kind == "bumps":
        _fields(spec, kind, ("height", "intervals"), ("base",))
        height, base = float(spec["height"]), float(spec.get("base", 0.0))
        ivs = [(float(a), float(b)) for a, b in spec["intervals"]]

        def phi(x):
            x = np.asarray(x, dtype=float)
            on = np.zeros(x.shape, dtype=bool)
            for a, b in ivs:
                on |= (x > a) & (x < b)
            return np.where(on, base + height, base)

        return phi
    raise ConfigurationError(f"unknown graph data type {kind!r}")


def _graph_row(problem, sol, s, h):
    free = problem.free
    return {"s": s, "h": h, "energy": sol.energy, "gradient_norm": sol.gradient_norm,
            "left_gap": sol.left_gap, "right_gap": sol.right_gap, "sticks_left": sol.sticks_left,
            "sticks_right": sol.sticks_right, "min_u": float(sol.u[free].min()),
            "max_u": float(sol.u[free].max()), "iterations": sol.iterations, "provenance": "none"}


def _run_graph(cfg: ExperimentConfig):
    from .graph_solver import make_graph_problem, minimize_graph

    geo, par = cfg.geometry, cfg.parameters
    phi = _graph_data(geo["data"])
    tail = make_tail(geo["tail"]) if geo["tail"] is not None else None
    h = float(geo["h"])
    rows, profiles = [], {}
    for s in _s_list(par["s"]):
        prob = make_graph_problem(geo["omega"], s, h, float(geo["pad"]), phi, tail)
        sol = minimize_graph(prob, tol=float(par["tol"]), method=par["method"])
        rows.append(_graph_row(prob, sol, s, h))
        profiles[f"graph_profile_s{format_value(s)}.csv"] = (["x", "u"], np.column_stack([sol.x, sol.u]))
    return rows, {}, profiles


def _run_annulus(cfg: ExperimentConfig):
    from .graph_solver import annulus_threshold, classical_annulus, classical_annulus_numeric

    par = cfg.parameters
    rho, R = float(par["rho"]), float(par["R"])
    M0 = annulus_threshold(rho, R)
    if par["M"] is not None:
        Ms = [float(m) for m in (par["M"] if isinstance(par["M"], list) else [par["M"]])]
    else:
        Ms = [float(f) * M0 for f in par["M_over_M0"]]
    rows, profiles = [], {}
    for M in Ms:
        exact = classical_annulus(rho, R, M)
        num = classical_annulus_numeric(rho, R, M, int(par["mesh"]))
        # the wall node carries a first-order error; compare on the interior nodes
        err = float(np.max(np.abs(num.u[1:] - exact.profile(num.r[1:]))))
        rows.append({"M": M, "M0": M0, "c": exact.c, "sticks": exact.sticks, "gap": exact.gap,
                     "numeric_gap": num.gap, "numeric_sup_error": err, "provenance": "derived"})
        profiles[f"annulus_profile_M{format_value(M)}.csv"] = (["r", "u"], np.column_stack([num.r, num.u]))
    return rows, {"M0": M0}, profiles


def _set_setup(geo: dict):
    grid = _grid(geo)
    dshape, omega = _domain(geo["domain"], grid)
    ext_shape = make_shape(geo["exterior"])
    ext = rasterize(ext_shape, grid)
    ext.values[omega] = 0.0
    tail = _tail_for(geo["tail"], ext_shape)
    return grid, omega, IndicatorField(ext.values, ~omega, grid), tail


def _solve_set(problem, solver: str, relaxed_tol: float = 1e-10):
    from .set_solver import brute_force, mincut_minimize, relaxed_minimize, threshold

    if solver == "mincut":
        return mincut_minimize(problem)
    if solver == "relaxed":
        x, _ = relaxed_minimize(problem, tol=relaxed_tol)
        return threshold(problem, x)
    if solver == "brute":
        return brute_force(problem)
    raise ParameterError(f"unknown set solver {solver!r}")


def _run_set(cfg: ExperimentConfig):
    from .perimeter import tail_unaries
    from .set_solver import SetProblem

    geo, par = cfg.geometry, cfg.parameters
    grid, omega, ext, tail = _set_setup(geo)
    s_vals = _s_list(par["s"])
    t_in, t_out = tail_unaries(tail, grid, np.nonzero(omega)[0], s_vals)
    rows, masks, profiles = [], {}, {}
    centers = grid.centers
    nan = float("nan")
    for k, s in enumerate(s_vals):
        prob = SetProblem(grid, omega, ext, tail, s, tail_values=(t_in[k], t_out[k]))
        sol = _solve_set(prob, par["solver"], float(par["relaxed_tol"]))
        rows.append({"s": s, "method": sol.method, "occupancy": sol.occupancy, **sol.energy.as_dict(),
                     "certificate": nan if sol.certificate is None else sol.certificate, "provenance": "none"})
        masks[format_value(s)] = rle_encode(sol.labels)
        profiles[f"set_cells_s{format_value(s)}.csv"] = (
            ["x", "value"] if grid.n == 1 else ["x", "y", "value"],
            np.column_stack([centers, sol.labels]),
        )
    extras = {"grid": {"shape": list(grid.shape), "lower": list(grid.lower), "upper": list(grid.upper)},
              "masks_rle": masks}
    return rows, extras, profiles


_SWEEP_DEFAULTS = {
    "half-ring": ([[-1.8, 1.8], [-1.8, 1.8]], 96),
    "cone": ([[-1.5, 1.5], [-1.5, 1.5]], 64),
    "cone-complement": ([[-1.5, 1.5], [-1.5, 1.5]], 64),
}


def _run_sweep(cfg: ExperimentConfig):
    from .graph_solver import STICK_FACTOR, make_graph_problem, minimize_graph
    from .perimeter import tail_unaries
    from .set_solver import SetProblem, mincut_minimize, stickiness_sweep

    geo, par = cfg.geometry, cfg.parameters
    fam, param = par["family"], par["parameter"]
    values = [float(v) for v in par["values"]]
    if not values:
        raise ParameterError("the sweep needs at least one value")
    nan = float("nan")
    if fam == "bump":
        if param not in ("delta", "s"):
            raise ParameterError("the bump family sweeps 'delta' (bump height) or 's'")
        h = float(geo["h"])
        rows = []
        for v in values:
            s = v if param == "s" else float(par["s"])
            height = v if param == "delta" else float(par["delta"])
            phi = _graph_data({"type": "bumps", "height": height, "intervals": [[-3.0, -2.0], [2.0, 3.0]]})
            prob = make_graph_problem((-1.0, 1.0), s, h, float(geo["pad"]), phi, SupgraphBounded(0.0))
            sol = minimize_graph(prob, tol=float(par["tol"]))
            rows.append({"family": fam, "parameter": param, "value": v, "occupancy": nan,
                         "left_gap": sol.left_gap, "right_gap": sol.right_gap, "total": sol.energy,
                         "provenance": "none"})
        tr = next((r["value"] for r in rows if min(r["left_gap"], r["right_gap"]) > STICK_FACTOR * h), None)
        for r in rows:
            r["transition"] = nan if tr is None else float(tr)
        return rows, {"stick_threshold": STICK_FACTOR * h}, {}
    if fam not in _SWEEP_DEFAULTS:
        raise ParameterError(f"unknown sweep family {fam!r}")
    box = geo["box"] if geo["box"] is not None else _SWEEP_DEFAULTS[fam][0]
    cells = geo["cells"] if geo["cells"] is not None else _SWEEP_DEFAULTS[fam][1]
    grid = build_grid(box, cells)
    omega = np.asarray(Ball((0.0, 0.0), 1.0).contains(grid.centers), dtype=bool)
    idx = np.nonzero(omega)[0]

    if fam == "half-ring":
        if param not in ("delta", "s"):
            raise ParameterError("the half-ring family sweeps 'delta' or 's'")

        def exterior(delta):
            e = rasterize(HalfRing(delta), grid)
            e.values[omega] = 0.0
            return IndicatorField(e.values, ~omega, grid)

        fixed = exterior(float(par["delta"])) if param == "s" else None

        def family(v):
            if param == "s":
                return SetProblem(grid, omega, fixed, EmptyTail(), v)
            return SetProblem(grid, omega, exterior(v), EmptyTail(), float(par["s"]))

    else:
        if param != "s":
            raise ParameterError("the cone families sweep 's'")
        cone = Cone(float(par["cone_h"]), float(par["theta"]))
        e = rasterize(cone, grid)
        e.values[omega] = 0.0
        ext = IndicatorField(e.values, ~omega, grid)
        tail = cone.to_tail()
        t_in, t_out = tail_unaries(tail, grid, idx, values)
        pre = {v: (t_in[k], t_out[k]) for k, v in enumerate(values)}
        flip = fam == "cone-complement"

        def family(v):
            p = SetProblem(grid, omega, ext, tail, v, tail_values=pre[v])
            return p.complement() if flip else p

    out = stickiness_sweep(family, "delta" if param == "delta" else "s", values, solver=mincut_minimize)
    rows = [{"family": fam, "parameter": param, "value": r[param], "occupancy": r["occupancy"],
             "left_gap": nan, "right_gap": nan, "total": r["total"], "transition": r["transition"],
             "provenance": "none"} for r in out]
    return rows, {}, {}


def cylinder_demo(cfg: ExperimentConfig):
    """Cross-section of the cut annular cylinder: u = M on [-rho, rho], 0 on the collar.

    Beyond the box the data continue as ``-tail_slope * (|x| - L)`` (``tail="v"``)
    or stay at 0 (``tail="bounded"``).  Returns rows with min u and both wall gaps
    per s plus a running monotonicity flag.
    """
    from .graph_solver import make_graph_problem, minimize_graph

    par = cfg.parameters
    rho, R, M = float(par["rho"]), float(par["R"]), float(par["M"])
    if not (0 < rho < R):
        raise ParameterError("the cylinder needs 0 < rho < R")
    collar, slope, h = float(par["collar"]), float(par["tail_slope"]), float(par["h"])
    L = R + collar
    kind = par["tail"]
    if kind == "v":
        tail = SupgraphPiecewiseLinear((-L, L), (0.0, 0.0), slope, -slope)
    elif kind == "bounded":
        tail = SupgraphBounded(0.0)
    else:
        raise ParameterError(f"unknown cylinder tail {kind!r}")

    def phi(x):
        return np.where(np.abs(np.asarray(x, dtype=float)) <= rho, M, 0.0)

    rows, profiles = [], {}
    prev = math.inf
    mono = True
    for s in _s_list(par["s"]):
        prob = make_graph_problem([(-R, -rho), (rho, R)], s, h, collar, phi, tail)
        sol = minimize_graph(prob, tol=float(par["tol"]))
        min_u = float(sol.u[prob.free].min())
        mono = mono and min_u <= prev
        prev = min_u
        # gaps at the inner walls x = -rho (right side of interval 1) and x = rho
        inner = min(sol.gaps[1][1], sol.gaps[2][1])
        outer = min(sol.gaps[0][1], sol.gaps[3][1])
        rows.append({"s": s, "min_u": min_u, "inner_gap": inner, "outer_gap": outer,
                     "monotone_so_far": mono, "iterations": sol.iterations, "provenance": "derived"})
        profiles[f"cylinder_profile_s{format_value(s)}.csv"] = (["x", "u"], np.column_stack([sol.x, sol.u]))
    return rows, {"monotone": mono}, profiles


RUNNERS: dict[str, Callable] = {
    "perimeter": _run_perimeter,
    "asymptotics-s1": _run_asymptotics_s1,
    "asymptotics-s0": _run_asymptotics_s0,
    "alpha": _run_alpha,
    "curvature": _run_curvature,
    "graph": _run_graph,
    "annulus": _run_annulus,
    "set": _run_set,
    "sweep": _run_sweep,
    "cylinder-demo": cylinder_demo,
}


# --------------------------------------------------------------------------
# Running, caching, writing


def _cache_dir(cache) -> Path | None:
    c = cache if cache is not None else os.environ.get(CACHE_ENV)
    return Path(c) if c else None


def run(cfg: ExperimentConfig, *, cache=None) -> ExperimentReport:
    """Run one experiment.  With a cache directory, rows are memoized by config hash."""
    schema = csv_schema()["experiments"][cfg.experiment]
    columns = list(schema["columns"])
    digest = cfg.hash()
    cdir = _cache_dir(cache)
    entry = cdir / f"{digest}.json" if cdir else None
    if entry is not None and entry.is_file():
        data = json.loads(entry.read_text(encoding="utf-8"))
        rows = [{k: (float("nan") if v is None else v) for k, v in r.items()} for r in data["rows"]]
        return ExperimentReport(cfg.experiment, digest, columns, rows, 0.0, data["extras"], cached=True)
    t0 = time.perf_counter()
    try:
        rows, extras, profiles = RUNNERS[cfg.experiment](cfg)
    except NmsError as exc:
        exc.args = (f"{cfg.experiment}: {exc.args[0]}",) + exc.args[1:] if exc.args else exc.args
        raise
    wall = time.perf_counter() - t0
    for r in rows:
        missing = [c for c in columns if c not in r]
        if missing:
            raise ConfigurationError(f"row lacks columns {missing}")
    report = ExperimentReport(cfg.experiment, digest, columns, rows, wall, extras, profiles)
    if entry is not None:
        cdir.mkdir(parents=True, exist_ok=True)
        tmp = entry.with_suffix(".tmp")
        tmp.write_text(json.dumps({"rows": _json_plain(rows), "extras": _json_plain(extras)}), encoding="utf-8")
        tmp.replace(entry)
    return report


def write_report(report: ExperimentReport, cfg: ExperimentConfig, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / cfg.csv_name
    csv_path.write_text(csv_text(report.columns, report.rows), encoding="utf-8")
    if cfg.output.get("profiles"):
        for name, (header, arr) in report.profiles.items():
            lines = [",".join(header)] + [",".join(FLOAT_FORMAT % v for v in row) for row in arr]
            (out / name).write_text("\n".join(lines) + "\n", encoding="utf-8")
    summary = {
        "header": report.header(),
        "config": cfg.to_dict(),
        "columns": report.columns,
        "rows": _json_plain(report.rows),
        "provenance": report.provenance_notes(),
        "extras": _json_plain(report.extras),
        "status": "ok",
    }
    sum_path = out / cfg.summary_name
    sum_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, sum_path


def run_and_write(cfg: ExperimentConfig, out_dir, *, cache=None) -> ExperimentReport:
    report = run(cfg, cache=cache)
    write_report(report, cfg, out_dir)
    return report
