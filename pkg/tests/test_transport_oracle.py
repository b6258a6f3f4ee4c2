import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meanfield_lab._lp import assignment_value, transport_value
from meanfield_lab.errors import InputError, OracleRefused
from meanfield_lab.transport_oracle import (
    CostMatrix,
    dual_ball_vertices_bruteforce,
    hungarian,
    transport_lp_bruteforce,
)


def test_one_by_one():
    assert transport_lp_bruteforce([[3.5]], [1.0], [1.0]) == 3.5


def test_identity_coupling():
    assert transport_lp_bruteforce([[0, 1], [1, 0]], [0.5, 0.5], [0.5, 0.5]) == 0.0


def test_refuses_large():
    with pytest.raises(OracleRefused):
        transport_lp_bruteforce(np.zeros((9, 2)), np.full(9, 1 / 9), [0.5, 0.5])
    with pytest.raises(OracleRefused):
        hungarian(np.zeros((257, 257)))


def test_cost_matrix_validation():
    with pytest.raises(InputError):
        CostMatrix([[np.nan]])
    with pytest.raises(InputError):
        hungarian([[1.0, 2.0]])


@pytest.mark.parametrize("shape", [(2, 3), (3, 3), (4, 2), (5, 6), (6, 6), (8, 7)])
def test_transport_matches_production(shape, rng):
    for _ in range(10):
        a = rng.dirichlet(np.ones(shape[0]))
        b = rng.dirichlet(np.ones(shape[1]))
        c = rng.uniform(0, 5, size=shape)
        assert transport_lp_bruteforce(c, a, b) == pytest.approx(transport_value(a, b, c), abs=1e-9)


def test_enumeration_and_simplex_agree(rng):
    # 3x4 is enumerated exhaustively; run the pivoting route on the same data
    from meanfield_lab.transport_oracle import _enumerate_bases, _transport_simplex

    for _ in range(20):
        a = rng.dirichlet(np.ones(3))
        b = rng.dirichlet(np.ones(4))
        c = rng.uniform(0, 5, size=(3, 4))
        assert _enumerate_bases(c, a, b) == pytest.approx(_transport_simplex(c, a, b), abs=1e-12)


def test_degenerate_weights(rng):
    # equal marginals and point masses make the north-west corner degenerate
    a = np.array([0.5, 0.5, 0.0])
    b = np.array([0.25, 0.25, 0.5])
    c = rng.uniform(0, 1, size=(3, 3))
    assert transport_lp_bruteforce(c, a, b) == pytest.approx(transport_value(a, b, c), abs=1e-9)


def test_hungarian_small_cases():
    value, perm = hungarian(np.ones((4, 4)) - np.eye(4))
    assert value == 0.0 and perm.tolist() == [0, 1, 2, 3]
    value, perm = hungarian([[1, 0], [0, 1]])
    assert value == 0.0 and perm.tolist() == [1, 0]


def test_hungarian_against_permutations(rng):
    for n in range(1, 7):
        c = rng.uniform(0, 10, size=(n, n))
        best = min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        value, perm = hungarian(c)
        assert value == pytest.approx(best, abs=1e-12)
        assert sorted(perm.tolist()) == list(range(n))


def test_hungarian_equals_uniform_transport_6x6(rng):
    c = rng.uniform(0, 10, size=(6, 6))
    value, _ = hungarian(c)
    u = np.full(6, 1 / 6)
    assert value == pytest.approx(6 * transport_lp_bruteforce(c, u, u), abs=1e-9)


@given(st.integers(1, 40), st.integers(0, 2**32 - 1))
def test_hungarian_properties(n, seed):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0, 10, size=(n, n))
    value, perm = hungarian(c)
    assert sorted(perm.tolist()) == list(range(n))
    assert value >= c.min(axis=1).max() - 1e-12
    prod, _ = assignment_value(c)
    assert value / n == pytest.approx(prod, abs=1e-9)
    rows, cols = rng.permutation(n), rng.permutation(n)
    shuffled, _ = hungarian(c[rows][:, cols])
    assert shuffled == pytest.approx(value, abs=1e-9)


def test_dual_ball_vertices_m2():
    verts = dual_ball_vertices_bruteforce([[0, 1], [1, 0]])
    # max|phi| + |phi_1 - phi_2| <= 1: constant corners (+-1, +-1) and, along
    # phi = (t, -t), 3t = 1
    expect = np.array([[-1.0, -1.0], [-1 / 3, 1 / 3], [1 / 3, -1 / 3], [1.0, 1.0]])
    got = verts[np.lexsort(verts.T[::-1])]
    np.testing.assert_allclose(got, expect, atol=1e-12)
