from __future__ import annotations

import numpy as np
import pytest

from nmslab.grid import IndicatorField, build_grid
from nmslab.set_solver import SetProblem
from nmslab.tails import EmptyTail, FullTail, HalfSpaceTail


def random_set_problem(rng: np.random.Generator, max_free: int = 16) -> SetProblem:
    """Random 1D interval or 2D connected blob with random binary exterior data."""
    s = float(rng.uniform(0.1, 0.9))
    if rng.random() < 0.5:
        N = int(rng.integers(max_free + 1, max_free + 9))
        g = build_grid([(0.0, 1.0)], N)
        m = int(rng.integers(1, max_free + 1))
        a = int(rng.integers(0, N - m + 1))
        om = np.zeros(N, bool)
        om[a : a + m] = True
        tails = [EmptyTail(), FullTail(), HalfSpaceTail((1.0,), 0.5)]
    else:
        N = int(rng.integers(5, 8))
        g = build_grid([(-1, 1), (-1, 1)], N)
        om = np.zeros((N, N), bool)
        om[int(rng.integers(0, N)), int(rng.integers(0, N))] = True
        target = int(rng.integers(1, max_free + 1))
        steps = [(0, 1), (1, 0), (0, -1), (-1, 0)]
        while om.sum() < target:
            ii, jj = np.nonzero(om)
            k = int(rng.integers(ii.size))
            d = steps[int(rng.integers(4))]
            p = (ii[k] + d[0], jj[k] + d[1])
            if 0 <= p[0] < N and 0 <= p[1] < N:
                om[p] = True
        om = om.ravel()
        tails = [EmptyTail(), FullTail(), HalfSpaceTail((0.0, 1.0), 0.1)]
    ext = (rng.random(g.size) < 0.5).astype(float)
    ext[om] = 0
    tail = tails[int(rng.integers(len(tails)))]
    return SetProblem(g, om, IndicatorField(ext, ~om, g), tail, s)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
