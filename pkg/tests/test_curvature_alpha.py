from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmslab.curvature import (
    alpha_numeric,
    curvature_graph_local,
    curvature_s0_limit,
    curvature_set,
    delta_threshold,
    halfspace_band,
    interface_points,
    kernel_scale,
)
from nmslab.errors import ParameterError, UsageError
from nmslab.grid import Ball, Cone, HalfSpace, IndicatorField, build_grid, rasterize
from nmslab.set_solver import SetProblem, mincut_minimize
from nmslab.tails import (
    ComplementTail,
    ConeTail,
    EmptyTail,
    HalfSpaceTail,
    SlabTail,
    SupgraphBounded,
    SupgraphPolynomial,
)

G64 = build_grid([(-1, 1), (-1, 1)], 64)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_halfspace_curvature_within_band(s):
    f = rasterize(HalfSpace((0.0, 1.0)), G64)
    c = curvature_set(f, HalfSpaceTail((0.0, 1.0)), (G64.h / 2, 0.0), s)
    assert abs(c.value) <= halfspace_band(G64.h, s)
    assert halfspace_band(G64.h, s) == 5 * G64.h ** (1 - s) * kernel_scale(G64.h)


def test_ball_curvature_positive():
    f = rasterize(Ball((0.0, 0.0), 0.5), G64)
    for q in interface_points(f)[::17]:
        assert curvature_set(f, EmptyTail(), q, 0.4).value > 0


def test_q_must_be_on_a_face():
    f = rasterize(Ball((0.0, 0.0), 0.5), G64)
    with pytest.raises(UsageError):
        curvature_set(f, EmptyTail(), (0.0, 0.0), 0.5)
    with pytest.raises(ParameterError):
        curvature_set(f, EmptyTail(), interface_points(f)[0], 0.5, pv_radius=G64.h)


def _random_binary(seed, grid, density=0.4):
    rng = np.random.default_rng(seed)
    return (rng.random(grid.size) < density).astype(float), rng


G16 = build_grid([(-1, 1), (-1, 1)], 16)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.floats(0.1, 0.9))
def test_inclusion_monotonicity(seed, s):
    u, rng = _random_binary(seed, G16)
    f = IndicatorField(u, np.zeros(G16.size, bool), G16)
    pts = interface_points(f)
    if pts.size == 0:
        return
    q = pts[int(rng.integers(len(pts)))]
    # F = E plus random extra cells, keeping the two cells at q
    extra = (rng.random(G16.size) < 0.3).astype(float)
    near = np.linalg.norm(G16.centers - q, axis=1) < G16.h
    v = np.where(near, u, np.maximum(u, extra))
    F = IndicatorField(v, np.zeros(G16.size, bool), G16)
    tail = HalfSpaceTail((0.0, 1.0), -0.3)
    assert curvature_set(f, tail, q, s).value >= curvature_set(F, tail, q, s).value - 1e-9


def test_inclusion_tangent_balls():
    E = rasterize(Ball((0.25, 0.0), 0.25), G64)
    F = rasterize(Ball((0.0, 0.0), 0.5), G64)
    q = (0.5, G64.h / 2)
    for s in (0.2, 0.6):
        assert curvature_set(E, EmptyTail(), q, s).value >= curvature_set(F, EmptyTail(), q, s).value - 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.floats(0.1, 0.9))
def test_complement_antisymmetry(seed, s):
    u, rng = _random_binary(seed, G16)
    f = IndicatorField(u, np.zeros(G16.size, bool), G16)
    pts = interface_points(f)
    if pts.size == 0:
        return
    q = pts[int(rng.integers(len(pts)))]
    tail = ConeTail((0.0, -2.0), (0.3, 1.0), 2.0)
    a = curvature_set(f, tail, q, s).value
    b = curvature_set(f.complement(), ComplementTail(tail), q, s).value
    assert b == pytest.approx(-a, abs=1e-9 * max(1.0, abs(a)))


@settings(max_examples=20, deadline=None)
@given(tx=st.integers(-40, 40), ty=st.integers(-40, 40), s=st.floats(0.1, 0.9))
def test_translation_invariance(tx, ty, s):
    h = G16.h
    t = np.array([tx * h * 0.75, ty * h * 1.25])
    moved = build_grid([(-1 + t[0], 1 + t[0]), (-1 + t[1], 1 + t[1])], 16)
    f0 = rasterize(Ball((0.1, -0.05), 0.55), G16)
    f1 = IndicatorField(f0.values, f0.frozen, moved)
    q = interface_points(f0)[3]
    tail0 = HalfSpaceTail((0.4, 1.0), -1.3)
    n = np.asarray(tail0.normal)
    tail1 = HalfSpaceTail(tail0.normal, tail0.offset + float(n @ t))
    a = curvature_set(f0, tail0, q, s).value
    b = curvature_set(f1, tail1, q + t, s).value
    assert b == pytest.approx(a, abs=1e-9 * max(1.0, abs(a)))


def test_four_part_split_sums_to_value():
    f = rasterize(Ball((0.0, 0.0), 0.5), G64)
    q = interface_points(f)[10]
    for s in (0.1, 0.5):
        c = curvature_set(f, HalfSpaceTail((0.0, 1.0), -0.9), q, s, diagnostic={"delta": 0.1, "R": 0.4})
        assert c.parts_sum == pytest.approx(c.value, abs=1e-9 * max(1.0, abs(c.value)))


@pytest.mark.parametrize("s", [0.5, 0.2, 0.1])
def test_cone_far_field_lower_bound(s):
    g = build_grid([(-1.5, 1.5), (-1.5, 1.5)], 64)
    theta = math.pi / 8
    cone = Cone(1.0, theta)
    f = rasterize(cone, g)
    for R in (0.5, 1.0):
        c = curvature_set(f, cone.to_tail(), (g.h / 2, 0.0), s, diagnostic={"delta": 0.1, "R": R})
        assert c.parts["part_far"] >= (theta / 2) * R ** (-s) / s


@pytest.mark.parametrize("s", [0.5, 0.3])
def test_euler_lagrange_residual_of_minimizer(s):
    g = build_grid([(-1.5, 1.5), (-1.5, 1.5)], 64)
    omega = Ball((0.0, 0.0), 1.0).contains(g.centers)
    cone = Cone(1.0, math.pi / 8)
    ext = rasterize(cone, g)
    ext.values[omega] = 0
    tail = cone.to_tail()
    sol = mincut_minimize(SetProblem(g, omega, IndicatorField(ext.values, ~omega, g), tail, s))
    assert 0.05 < sol.occupancy < 0.95
    deep = np.linalg.norm(g.centers, axis=1) < 1.0 - 4 * g.h
    pts = interface_points(sol.field, deep)
    assert len(pts) > 10
    tol = 10 * g.h ** (1 - s) * kernel_scale(g.h)
    for q in pts:
        assert abs(curvature_set(sol.field, tail, q, s).value) <= tol


# ---------------------------------------------------------------- graph-local


def test_graph_curvature_flat_zero():
    c = curvature_graph_local(lambda x: np.zeros_like(x), None, 0.3, 0.5, 1.0, 0.5)
    assert abs(c.value) <= 1e-8


@pytest.mark.parametrize("slope,q", [(0.7, 0.0), (-2.0, 1.3), (5.0, -0.4)])
def test_graph_curvature_linear_zero(slope, q):
    for s in (0.2, 0.6):
        c = curvature_graph_local(lambda x: slope * x + 0.25, None, q, s, 1.0, 0.5)
        assert abs(c.value) <= 1e-6


def test_graph_curvature_parabola_sign_matches_set_oracle():
    s = 0.5
    c = curvature_graph_local(lambda x: x * x, None, 0.0, s, 1.0, 0.5)
    assert c.value < 0
    # oracle: rasterized subgraph {x2 < x1^2} plus its exact continuation
    g = build_grid([(-1, 1), (-1, 1)], 128)
    sub = IndicatorField((g.centers[:, 1] < g.centers[:, 0] ** 2).astype(float), np.zeros(g.size, bool), g)
    tail = ComplementTail(SupgraphPolynomial((0.0, 0.0, 1.0)))
    oracle = curvature_set(sub, tail, (g.h / 2, 0.0), s).value
    assert np.sign(oracle) == np.sign(c.value)


def test_graph_curvature_split():
    c = curvature_graph_local(lambda x: np.sin(2 * x), None, 0.2, 0.4, 0.5, 0.3)
    assert c.value == pytest.approx(c.cylinder + c.outside_cylinder, rel=1e-14)


# ---------------------------------------------------------------- alpha


@pytest.mark.parametrize("gamma", [0.5, 1.0, 2.5, 4.0])
def test_alpha_cone(gamma):
    res = alpha_numeric(ConeTail((0.0, 0.0), (0.2, 1.0), gamma), 2.0, (0.1, 0.2))
    assert res.alpha == pytest.approx(gamma, rel=0.02)


@pytest.mark.parametrize(
    "tail,target,tol",
    [
        (SupgraphBounded(0.2, 0.5, 1.0), math.pi, 0.02 * math.pi),
        (SupgraphPolynomial((0.0, 0.0, 0.0, 1.0)), math.pi, 0.02 * math.pi),
        (SlabTail((0.0, 1.0), -0.5, 0.5), 0.0, 0.05),
        (SupgraphPolynomial((0.0, 0.0, 1.0)), 0.0, 0.05),
    ],
)
def test_alpha_catalogue(tail, target, tol):
    for R in (2.0, 4.0):
        assert abs(alpha_numeric(tail, R, (0.0, 0.0)).alpha - target) <= tol


def test_alpha_from_field_matches_tail():
    g = build_grid([(-1, 1), (-1, 1)], 32)
    hs = HalfSpace((0.0, 1.0))
    res = alpha_numeric(rasterize(hs, g), 0.5, (0.0, 0.0), tail=hs.to_tail())
    assert res.alpha == pytest.approx(math.pi, rel=0.02)


# ---------------------------------------------------------------- s -> 0 limits


def test_s0_limit_halfspace():
    f = rasterize(HalfSpace((0.0, 1.0)), G64)
    res = curvature_s0_limit(f, HalfSpaceTail((0.0, 1.0)), (G64.h / 2, 0.0))
    assert res.target == pytest.approx(0.0, abs=1e-12)
    assert abs(res.limit) <= 0.1


def test_s0_limit_bounded_set():
    f = rasterize(Ball((0.0, 0.0), 0.5), G64)
    res = curvature_s0_limit(f, EmptyTail(), interface_points(f)[0])
    assert res.limit == pytest.approx(2 * math.pi, rel=0.05)


def test_s0_limit_cone_against_alpha_cross_oracle():
    gamma = 1.0
    tail = ConeTail((0.0, -0.5), (0.0, 1.0), gamma)
    f = rasterize(tail, G64)
    pts = interface_points(f)
    q = pts[int(np.argmin(np.linalg.norm(pts - np.array([0.0, -0.3]), axis=1)))]
    alpha = alpha_numeric(tail, 2.0, q).alpha
    res = curvature_s0_limit(f, tail, q, alpha=alpha)
    assert res.limit == pytest.approx(2 * math.pi - 2 * alpha, rel=0.10)


# ---------------------------------------------------------------- delta_s


@settings(max_examples=50, deadline=None)
@given(s=st.floats(0.01, 0.99), C=st.floats(1e-3, 1e3))
def test_delta_threshold_in_unit_interval(s, C):
    d = delta_threshold(s, C)
    assert 0.0 < d < 1.0


@pytest.mark.parametrize("C", [0.1, 1.0, 10.0])
def test_delta_threshold_decreases_with_s(C):
    vals = [delta_threshold(s, C) for s in (0.2, 0.1, 0.05)]
    assert vals[0] > vals[1] > vals[2] > 0


@pytest.mark.parametrize("C,n", [(1.0, 2), (7.5, 2), (3.0, 1)])
def test_delta_threshold_at_s_one(C, n):
    w = 2 * math.pi if n == 2 else 2.0
    assert delta_threshold(1.0, C, n) == pytest.approx((8 * w + C / 2) / (8 * w + C), rel=1e-14)
