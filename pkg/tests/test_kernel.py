from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmslab.extrapolate import extrapolate
from nmslab.farfield import tail_kernel_integral
from nmslab.grid import build_grid
from nmslab.kernel import build_gs_table, build_kernel_table, gs_closed_form, pair_weight
from nmslab.tails import (
    ComplementOfBall,
    ConeTail,
    EmptyTail,
    FullTail,
    HalfSpaceTail,
    SlabTail,
    SupgraphBounded,
    SupgraphPolynomial,
)

# order-16 Gauss-Legendre product rule for two cells of width 0.1 ten cells apart, |x - y|^{-1.5}
GAUSS16_OFFSET10 = 0.010031415117338613
# F(2h) - 2F(h) with F(t) = t^{2-b} / ((1-b)(2-b)), b = 1.5, h = 0.1 (mpmath, 30 digits)
CLOSED_FORM_OFFSET1 = 0.74096774613487170847
# integral_0^inf (1 + r^2)^{-1.25} dr (mpmath adaptive quadrature)
G_INFINITY_N1_S05 = 1.1981402347355922074


def test_offset_zero_is_zero():
    g = build_grid([(0, 1), (0, 1)], 8)
    assert pair_weight((0, 0), g, 0.5) == 0.0


def test_far_offset_against_gauss_oracle():
    g = build_grid([(0.0, 1.6)], 16)
    w = pair_weight(10, g, 0.5)
    assert abs(w - 0.01) / 0.01 < 0.005
    assert abs(w - GAUSS16_OFFSET10) / GAUSS16_OFFSET10 < 0.005


def test_adjacent_offset_closed_form():
    g = build_grid([(0.0, 1.6)], 16)
    assert pair_weight(1, g, 0.5) == pytest.approx(CLOSED_FORM_OFFSET1, abs=1e-10)


def test_table_1d_four_cells():
    g = build_grid([(0.0, 1.0)], 4)
    t = build_kernel_table(g, 0.5)
    assert t.weights.shape == (7,)
    assert t.weight(0) == 0.0
    vals = [t.weight(d) for d in range(4)]
    assert len(set(vals)) == 4
    for d in range(1, 4):
        assert t.weight(d) == t.weight(-d)


@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
def test_weights_positive_symmetric_monotone(s):
    g1 = build_grid([(0.0, 1.0)], 64)
    w1 = np.array([build_kernel_table(g1, s).weight(d) for d in range(1, 64)])
    assert np.all(w1 > 0) and np.all(np.diff(w1) < 0)
    g2 = build_grid([(0, 1), (0, 1)], 24)
    t2 = build_kernel_table(g2, s)
    W = t2.weights
    assert np.array_equal(W, W[::-1, ::-1]) and np.array_equal(W, W.T)
    assert np.all(W[W != W[23, 23]] > 0)
    ax = np.array([t2.weight((d, 0)) for d in range(1, 24)])
    diag = np.array([t2.weight((d, d)) for d in range(1, 24)])
    assert np.all(np.diff(ax) < 0) and np.all(np.diff(diag) < 0)
    # beyond the near field the weights decrease with the distance
    i, j = np.meshgrid(np.arange(-23, 24), np.arange(-23, 24), indexing="ij")
    far = np.maximum(abs(i), abs(j)) > 4
    d = np.hypot(i[far], j[far])
    order = np.argsort(d, kind="stable")
    wf = W[far][order]
    ds = d[order]
    strict = np.diff(ds) > 1e-12
    assert np.all(np.diff(wf)[strict] < 0)


@pytest.mark.parametrize("n", [1, 2])
def test_doubling_resolution_scaling(n):
    box = [(0.0, 1.0)] * n
    coarse = build_grid(box, 32)
    fine = build_grid(box, 64)
    off_c = (16,) + (8,) * (n - 1)
    off_f = tuple(2 * v for v in off_c)
    wc = build_kernel_table(coarse, 0.4).weight(off_c)
    wf = build_kernel_table(fine, 0.4).weight(off_f)
    assert wf / wc == pytest.approx(0.5 ** (2 * n), rel=1e-12)
    # the table entry is the direct per-offset evaluation
    assert wf == pytest.approx(pair_weight(off_f, fine, 0.4), rel=1e-14)


def _annulus_sum(n, cells, a, b, s):
    g = build_grid([(-2.0, 2.0)] * n, cells)
    t = build_kernel_table(g, s)
    axes = [np.arange(-(c - 1), c) for c in g.cells]
    mesh = np.meshgrid(*axes, indexing="ij")
    dist = g.h * np.sqrt(sum(m.astype(float) ** 2 for m in mesh))
    sel = (dist >= a) & (dist <= b)
    return float(np.sum(t.weights[sel])) / g.h**n


def test_weight_consistency_1d():
    s, a, b = 0.5, 0.25, 1.0
    exact = 2 * (a ** (-s) - b ** (-s)) / s
    errs = [abs(_annulus_sum(1, c, a, b, s) - exact) for c in (64, 128, 256)]
    for e0, e1 in zip(errs, errs[1:]):
        assert 1.4 <= e0 / e1 <= 2.6


def test_gs_table_basics():
    tab = build_gs_table(0.5, 1)
    assert tab.G(0.0) == 0.0 and tab.Gg(0.0) == 0.0
    assert tab.G_infinity == pytest.approx(G_INFINITY_N1_S05, abs=1e-9)


@pytest.mark.parametrize("s,n", [(0.1, 1), (0.5, 1), (0.9, 1), (0.3, 2)])
def test_gs_table_derivative_identity(s, n):
    tab = build_gs_table(s, n)
    t = np.random.default_rng(7).uniform(0.0, tab.T_max, 100)
    np.testing.assert_allclose(tab.Gg_prime(t), tab.G(t), rtol=0, atol=1e-8)


@pytest.mark.parametrize("s,n", [(0.1, 1), (0.5, 1), (0.9, 2)])
def test_gs_table_shape_invariants(s, n):
    tab = build_gs_table(s, n)
    k = tab.knots
    gg = tab.Gg(k)
    # second differences on the non-uniform knots, scaled to divided differences
    d1 = np.diff(gg) / np.diff(k)
    assert np.all(np.diff(d1) >= -1e-12)
    G = tab.G(k)
    assert np.all(np.diff(G) > 0) and np.all(G <= tab.G_infinity + 1e-15)
    t = np.linspace(0.0, 3 * tab.T_max, 301)
    np.testing.assert_array_equal(tab.G(-t), -tab.G(t))
    np.testing.assert_array_equal(tab.Gg(-t), tab.Gg(t))


@pytest.mark.parametrize("s", [0.2, 0.7])
def test_gs_table_against_hypergeometric(s):
    tab = build_gs_table(s, 1)
    t = np.linspace(0.0, 120.0, 241)
    g, gg = gs_closed_form(t, s, 1)
    np.testing.assert_allclose(tab.G(t), g, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(tab.Gg(t), gg, rtol=1e-9, atol=1e-12)


def test_tail_integral_trivial_cases():
    q = (0.3, -0.2)
    s = 0.4
    assert tail_kernel_integral(EmptyTail(), q, s, 1.0) == 0.0
    assert tail_kernel_integral(FullTail(), q, s, 1.0) == pytest.approx(2 * math.pi / s, rel=1e-10)
    hs = HalfSpaceTail((0.0, 1.0), q[1])
    assert tail_kernel_integral(hs, q, s, 1.0) == pytest.approx(math.pi / s, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-50.0, 50.0), s=st.floats(0.05, 0.95))
def test_halfspace_tail_translation(shift, s):
    hs = HalfSpaceTail((1.0, 1.0), 0.0)
    q0 = np.array([0.3, -0.5])
    q1 = q0 + shift * np.array([1.0, -1.0]) / math.sqrt(2)
    a = tail_kernel_integral(hs, q0, s, 2.0)
    b = tail_kernel_integral(hs, q1, s, 2.0)
    assert a == pytest.approx(b, rel=1e-8)


ALPHA_CASES = [
    (ConeTail((0.0, 0.0), (0.0, 1.0), 1.0), 1.0),
    (HalfSpaceTail((0.0, 1.0), 0.0), math.pi),
    (ComplementOfBall(1.0), 2 * math.pi),
]


@pytest.mark.parametrize("tail,alpha", ALPHA_CASES)
def test_scaled_tail_integral_tends_to_alpha(tail, alpha):
    s_list = [0.1, 0.05, 0.025]
    vals = [s * tail_kernel_integral(tail, (0.2, 0.1), s, 2.0) for s in s_list]
    assert extrapolate(s_list, vals).limit == pytest.approx(alpha, rel=0.01)


def test_scaled_tail_integral_independent_of_R_and_q():
    # s * integral = alpha + O(s log R): the s -> 0 extrapolation removes the dependence
    tail = ConeTail((0.0, 0.0), (0.0, 1.0), 1.0)
    s_list = [0.05, 0.025, 0.0125, 0.00625, 0.003125]
    limits = []
    for R in (2.0, 4.0):
        for q in ((0.0, 0.0), (0.5, 0.5)):
            vals = [s * tail_kernel_integral(tail, q, s, R) for s in s_list]
            limits.append(extrapolate(s_list, vals).limit)
    assert max(limits) - min(limits) < 1e-6


def test_alpha_of_models_in_range():
    models = [
        EmptyTail(), FullTail(), HalfSpaceTail((0.0, 1.0)), SlabTail((0.0, 1.0), -1.0, 1.0),
        ConeTail((0.0, 0.0), (1.0, 0.0), 5.0), SupgraphPolynomial((0.0, 0.0, 1.0)),
        SupgraphPolynomial((0.0, 0.0, 0.0, 1.0)), SupgraphBounded(0.3, 0.2), ComplementOfBall(2.0),
    ]
    assert EmptyTail().alpha(2) == 0.0 and FullTail().alpha(2) == pytest.approx(2 * math.pi)
    for m in models:
        a = m.alpha(2)
        assert 0.0 <= a <= 2 * math.pi + 1e-12
        assert m.complement().alpha(2) == pytest.approx(2 * math.pi - a, abs=1e-12)
