from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from nmslab.curvature import curvature_graph_local, kernel_scale
from nmslab.errors import ParameterError
from nmslab.graph_solver import (
    STICK_FACTOR,
    annulus_threshold,
    classical_annulus,
    classical_annulus_numeric,
    graph_energy,
    graph_gradient,
    make_graph_problem,
    minimize_graph,
)
from nmslab.tails import SupgraphBounded, SupgraphPiecewiseLinear

# log(sqrt(3) + 2) evaluated with mpmath at 30 digits
M0_RHO1_R2 = 1.3169578969248167086


def bumps(height, base=0.0):
    return lambda x: np.where((np.abs(x) > 2) & (np.abs(x) < 3), base + height, base)


def _problem(s=0.3, h=1 / 32, pad=3.0, phi=None, tail=None, omega=(-1.0, 1.0)):
    phi = phi or bumps(1.0)
    return make_graph_problem(omega, s, h, pad, phi, tail if tail is not None else SupgraphBounded(0.0))


# ---------------------------------------------------------------- energy


def test_zero_energy():
    P = _problem(phi=lambda x: np.zeros_like(x))
    assert graph_energy(P, np.zeros(P.free.size)) == 0.0


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), s=st.sampled_from([0.1, 0.4, 0.8]))
def test_energy_even(seed, s):
    rng = np.random.default_rng(seed)
    P = _problem(s=s, phi=bumps(1.5, 0.2), tail=SupgraphBounded(0.3, 0.2, 1.0))
    N = _problem(s=s, phi=lambda x: -bumps(1.5, 0.2)(x), tail=SupgraphBounded(-0.3, -0.2, 1.0))
    u = rng.normal(size=P.free.size)
    assert graph_energy(N, -u) == pytest.approx(graph_energy(P, u), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), c=st.floats(-3.0, 3.0))
def test_energy_translation(seed, c):
    # the energy carries a dropped data-dependent constant, so compare differences and gradients
    rng = np.random.default_rng(seed)
    P = _problem(phi=bumps(1.0), tail=SupgraphBounded(0.0, 0.4, 2.0))
    Q = _problem(phi=lambda x: bumps(1.0)(x) + c, tail=SupgraphBounded(c, 0.4, 2.0))
    u = rng.normal(size=P.free.size)
    v = rng.normal(size=P.free.size)
    dP = graph_energy(P, u) - graph_energy(P, v)
    dQ = graph_energy(Q, u + c) - graph_energy(Q, v + c)
    assert dQ == pytest.approx(dP, rel=1e-10, abs=1e-10 * abs(graph_energy(P, u)))
    np.testing.assert_allclose(graph_gradient(Q, u + c), graph_gradient(P, u), rtol=1e-10, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_energy_midpoint_convexity(seed):
    rng = np.random.default_rng(seed)
    P = _problem(s=float(rng.choice([0.1, 0.5, 0.9])))
    u = rng.normal(scale=2.0, size=P.free.size)
    v = rng.normal(scale=2.0, size=P.free.size)
    assert graph_energy(P, 0.5 * (u + v)) <= 0.5 * (graph_energy(P, u) + graph_energy(P, v)) + 1e-12


# ---------------------------------------------------------------- gradient


def test_gradient_zero_for_zero_data():
    P = _problem(phi=lambda x: np.zeros_like(x))
    assert np.max(np.abs(graph_gradient(P, np.zeros(P.free.size)))) <= 1e-10


def test_gradient_odd_for_odd_data():
    odd = lambda x: np.sign(x) * bumps(1.0)(x)
    tail = SupgraphPiecewiseLinear((-1.0, 1.0), (-1.0, 1.0), 0.0, 0.0)
    P = _problem(phi=odd, tail=tail)
    g = graph_gradient(P, np.zeros(P.free.size))
    np.testing.assert_allclose(g, -g[::-1], rtol=0, atol=1e-10)
    assert np.max(np.abs(g)) > 1e-3


@pytest.mark.parametrize("s", [0.1, 0.3, 0.7])
def test_gradient_against_finite_differences(s):
    rng = np.random.default_rng(5)
    P = make_graph_problem((-1, 1), s, 1 / 16, 1.0, bumps(2.0), SupgraphBounded(0.0))
    assert P.grid.size == 64
    u = rng.normal(size=P.free.size)
    g = graph_gradient(P, u)
    step = 1e-6
    fd = np.array([(graph_energy(P, u + step * e) - graph_energy(P, u - step * e)) / (2 * step)
                   for e in np.eye(u.size)])
    assert np.all(np.abs(g - fd) <= 1e-5 * np.abs(g))


# ---------------------------------------------------------------- minimizer


def test_constant_data_is_a_minimizer():
    c = 0.7
    P = _problem(phi=lambda x: np.full_like(x, c), tail=SupgraphBounded(c))
    sol = minimize_graph(P)
    np.testing.assert_allclose(sol.u, c, atol=1e-9)
    assert sol.left_gap <= 1e-9 and sol.right_gap <= 1e-9


def test_flat_data_gives_flat_minimizer():
    P = _problem(phi=lambda x: np.zeros_like(x))
    sol = minimize_graph(P)
    assert np.max(np.abs(sol.u)) <= 1e-12
    assert sol.iterations == 0


@pytest.mark.parametrize("method", ["newton", "descent"])
def test_solver_contract(method):
    P = _problem(s=0.4, h=1 / 16)
    sol = minimize_graph(P, tol=1e-8, method=method)
    assert sol.gradient_norm <= 1e-8
    assert np.max(np.abs(graph_gradient(P, sol.u[P.free]))) <= 1e-8
    assert np.array_equal(sol.u[P.frozen], P.phi[P.frozen])


def test_methods_agree():
    P = _problem(s=0.4, h=1 / 16)
    a = minimize_graph(P, method="newton")
    b = minimize_graph(P, method="descent")
    assert np.max(np.abs(a.u - b.u)) < 1e-6


def test_unknown_method():
    with pytest.raises(ParameterError):
        minimize_graph(_problem(), method="sgd")


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_comparison_bound(seed):
    rng = np.random.default_rng(seed)
    level = float(rng.uniform(-1, 1))
    heights = rng.uniform(-2, 2, size=2)
    phi = lambda x: np.where((x > 2) & (x < 3), heights[1], np.where((x < -2) & (x > -3), heights[0], level))
    P = _problem(s=float(rng.choice([0.2, 0.5])), h=1 / 16, phi=phi, tail=SupgraphBounded(level))
    sol = minimize_graph(P)
    lo = min(level, heights.min())
    hi = max(level, heights.max())
    uf = sol.u[P.free]
    assert np.all(uf >= lo - 1e-8) and np.all(uf <= hi + 1e-8)


def test_monotone_data_monotone_solution():
    phi = lambda x: np.tanh(x)
    tail = SupgraphPiecewiseLinear((-1.0, 1.0), (-1.0, 1.0), 0.0, 0.0)
    for s in (0.2, 0.6):
        P = _problem(s=s, h=1 / 32, phi=phi, tail=tail)
        sol = minimize_graph(P)
        assert np.all(np.diff(sol.u[P.free]) >= -1e-10)


@pytest.mark.parametrize("s", [0.5, 0.1])
def test_euler_lagrange_residual(s):
    h = 1 / 64
    P = make_graph_problem((-1, 1), s, h, 3.0, bumps(4.0), SupgraphBounded(0.0))
    sol = minimize_graph(P)
    assert np.max(np.abs(graph_gradient(P, sol.u[P.free]))) <= 1e-8
    tol_el = 10 * h ** (1 - s) * kernel_scale(h)
    for i in P.free[4:-4:3]:
        c = curvature_graph_local((sol.x, sol.u), P.tail, sol.x[i], s, 0.25, 0.25)
        assert abs(c.value) <= 10 * tol_el


def test_bump_gaps_grow_with_height():
    h = 1 / 64
    gaps = []
    for d in (0.5, 2.0, 8.0, 32.0):
        sol = minimize_graph(make_graph_problem((-1, 1), 0.1, h, 3.0, bumps(d), SupgraphBounded(0.0)))
        assert sol.left_gap > 0 and sol.right_gap > 0
        assert sol.left_gap == pytest.approx(sol.right_gap, rel=1e-6)
        gaps.append(sol.left_gap)
    assert all(a < b for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] > STICK_FACTOR * h


@pytest.mark.parametrize("height", [0.25, 16.0])
def test_classification_stable_under_halving(height):
    out = []
    for h in (1 / 64, 1 / 128):
        sol = minimize_graph(make_graph_problem((-1, 1), 0.1, h, 3.0, bumps(height), SupgraphBounded(0.0)))
        out.append((sol.sticks_left, sol.sticks_right))
    assert out[0] == out[1]


# ---------------------------------------------------------------- classical annulus


def test_annulus_threshold_fixture():
    assert annulus_threshold(1.0, 2.0) == pytest.approx(M0_RHO1_R2, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(rho=st.floats(0.1, 5.0), ratio=st.floats(1.05, 4.0), frac=st.floats(0.0, 3.0))
@example(rho=1.05, ratio=2.0, frac=1e-200)
@example(rho=1.0, ratio=2.0, frac=1.0)
def test_annulus_invariants(rho, ratio, frac):
    R = rho * ratio
    M0 = annulus_threshold(rho, R)
    M = frac * M0
    sol = classical_annulus(rho, R, M)
    r = np.linspace(rho, R, 101)
    u = sol.profile(r)
    assert abs(u[-1]) <= 1e-12 * max(1.0, M)
    assert np.all(np.diff(u) <= 1e-12)
    if M <= M0:
        assert not sol.sticks and sol.gap == 0.0
        assert u[0] == pytest.approx(M, abs=1e-9 * max(1.0, M))
    else:
        assert sol.sticks and sol.c == rho
        assert sol.gap == pytest.approx(M - M0, rel=1e-12)


def test_annulus_degenerate():
    sol = classical_annulus(1.0, 2.0, 0.0)
    assert sol.c == 0.0
    assert np.all(sol.profile(np.linspace(1, 2, 11)) == 0.0)


def test_annulus_twice_threshold():
    sol = classical_annulus(1.0, 2.0, 2 * M0_RHO1_R2)
    assert sol.sticks
    assert sol.gap == pytest.approx(M0_RHO1_R2, rel=1e-12)


def test_annulus_numeric_half_threshold():
    exact = classical_annulus(1.0, 2.0, M0_RHO1_R2 / 2)
    num = classical_annulus_numeric(1.0, 2.0, M0_RHO1_R2 / 2, 512)
    assert np.max(np.abs(num.u - exact.profile(num.r))) <= 1e-3


def test_annulus_numeric_zero():
    num = classical_annulus_numeric(1.0, 2.0, 0.0, 512)
    assert np.all(num.u == 0.0)


def test_annulus_numeric_above_threshold():
    M = 2 * M0_RHO1_R2
    exact = classical_annulus(1.0, 2.0, M)
    num = classical_annulus_numeric(1.0, 2.0, M, 512)
    interior = slice(1, None)
    assert np.max(np.abs(num.u[interior] - exact.profile(num.r[interior]))) <= 1e-3
    assert num.gap == pytest.approx(M - M0_RHO1_R2, rel=0.01)
