import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from meanfield_lab.agent_state import (
    AgentState,
    Ensemble,
    TrajectoryBundle,
    path_sup_cost,
    state_norm,
    time_marginal,
    w2_path,
    w_product,
)
from meanfield_lab.errors import InputError
from meanfield_lab.strategy_space import MixedStrategy, PureStrategySpace
from meanfield_lab.transport_oracle import hungarian, transport_lp_bruteforce

UNIT2 = PureStrategySpace.discrete(2)


def random_ensemble(rng, n, d=2, m=2):
    return Ensemble(rng.standard_normal((n, d)), rng.dirichlet(np.ones(m), size=n))


def test_state_norm_examples():
    a = AgentState([0.0, 0.0], [1.0, 0.0])
    assert state_norm(a, a, UNIT2) == 0.0
    b = AgentState([1.0, 0.0], [1.0, 0.0])
    assert state_norm(a, b, UNIT2) == pytest.approx(1.0, abs=1e-15)
    c = AgentState([0.0, 0.0], [0.0, 1.0])
    assert state_norm(a, c, UNIT2) == pytest.approx(2 / 3, abs=1e-12)


def test_state_norm_dimension_mismatch():
    with pytest.raises(InputError):
        state_norm(AgentState([0.0], [1.0, 0.0]), AgentState([0.0, 0.0], [1.0, 0.0]), UNIT2)
    with pytest.raises(InputError):
        state_norm(AgentState([0.0], [1.0]), AgentState([0.0], [1.0]), UNIT2)


def test_ensemble_invariants():
    with pytest.raises(InputError):
        Ensemble(np.zeros((0, 2)), np.zeros((0, 2)))
    with pytest.raises(InputError):
        Ensemble([[0.0]], [[0.6, 0.6]])
    ens = Ensemble([[1.0, 2.0]], [[0.5, 0.5]])
    assert ens.N == 1 and ens.d == 2 and ens.M == 2
    assert ens[0].strategy == MixedStrategy([0.5, 0.5])
    assert Ensemble.from_json(ens.to_json()).equals(ens)
    assert Ensemble.from_states(ens.states).equals(ens)


def test_w_product_identical_is_zero(rng):
    A = random_ensemble(rng, 7)
    assert w_product(1, A, A, UNIT2) == pytest.approx(0.0, abs=1e-12)
    assert w_product(2, A, A, UNIT2) == pytest.approx(0.0, abs=1e-12)


def test_w_product_single_states(rng):
    a = AgentState(rng.standard_normal(2), [0.3, 0.7])
    b = AgentState(rng.standard_normal(2), [0.9, 0.1])
    A, B = Ensemble.from_states([a]), Ensemble.from_states([b])
    dist = state_norm(a, b, UNIT2)
    assert w_product(1, A, B, UNIT2) == pytest.approx(dist, abs=1e-12)
    assert w_product(2, A, B, UNIT2) == pytest.approx(dist, abs=1e-12)


def test_w_product_equal_size_is_hungarian(rng):
    for _ in range(10):
        A, B = random_ensemble(rng, 5), random_ensemble(rng, 5)
        cost = np.array([[state_norm(a, b, UNIT2) for b in B.states] for a in A.states])
        value, _ = hungarian(cost)
        assert w_product(1, A, B, UNIT2) == pytest.approx(value / 5, abs=1e-9)


def test_w_product_unequal_size_is_transport(rng):
    space = PureStrategySpace(("a", "b", "c"), [[0, 1, 2], [1, 0, 1.5], [2, 1.5, 0]])
    for na, nb in [(2, 5), (6, 3), (1, 4)]:
        A, B = random_ensemble(rng, na, m=3), random_ensemble(rng, nb, m=3)
        cost = np.array([[state_norm(a, b, space) ** 2 for b in B.states] for a in A.states])
        oracle = transport_lp_bruteforce(cost, np.full(na, 1 / na), np.full(nb, 1 / nb)) ** 0.5
        assert w_product(2, A, B, space) == pytest.approx(oracle, abs=1e-9)


def test_w_product_errors(rng):
    with pytest.raises(InputError):
        w_product(3, random_ensemble(rng, 2), random_ensemble(rng, 2), UNIT2)
    with pytest.raises(InputError):
        w_product(1, random_ensemble(rng, 2, d=1), random_ensemble(rng, 2, d=2), UNIT2)


@given(st.integers(0, 2**32 - 1), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))
def test_w_product_metric_and_jensen(seed, na, nb, nc):
    rng = np.random.default_rng(seed)
    A, B, C = (random_ensemble(rng, n) for n in (na, nb, nc))
    for p in (1, 2):
        ab = w_product(p, A, B, UNIT2)
        assert ab == pytest.approx(w_product(p, B, A, UNIT2), abs=1e-9)
        assert ab <= w_product(p, A, C, UNIT2) + w_product(p, C, B, UNIT2) + 1e-9
    assert w_product(1, A, B, UNIT2) <= w_product(2, A, B, UNIT2) + 1e-9


def make_bundle(rng, n=3, k=4, d=2, m=2, T=1.0):
    times = np.linspace(0, T, k + 1)
    x = rng.standard_normal((n, k + 1, d))
    lam = rng.dirichlet(np.ones(m), size=(n, k + 1))
    return TrajectoryBundle(times, x, lam)


def test_bundle_grid_validation():
    x = np.zeros((1, 3, 1))
    lam = np.ones((1, 3, 1))
    with pytest.raises(InputError):
        TrajectoryBundle([0.0, 0.5, 0.4], x, lam)
    with pytest.raises(InputError):
        TrajectoryBundle([0.0, 0.1, 1.0], x, lam)
    with pytest.raises(InputError):
        TrajectoryBundle([0.1, 0.5, 0.9], x, lam)
    TrajectoryBundle([0.0, 0.5, 1.0], x, lam)


def test_time_marginal(rng):
    bundle = make_bundle(rng)
    first = time_marginal(bundle, 0)
    np.testing.assert_array_equal(first.positions, bundle.positions[:, 0])
    with pytest.raises(InputError):
        time_marginal(bundle, bundle.K + 1)
    const = TrajectoryBundle.constant(first, bundle.times)
    for k in range(const.K + 1):
        assert time_marginal(const, k).equals(first)


def test_time_marginal_of_concatenation(rng):
    left = make_bundle(rng, k=3, T=0.3)
    # second piece starts where the first ends
    right_x = rng.standard_normal((3, 4, 2))
    right_l = rng.dirichlet(np.ones(2), size=(3, 4))
    right_x[:, 0] = left.positions[:, -1]
    right_l[:, 0] = left.strategies[:, -1]
    whole = TrajectoryBundle(
        np.linspace(0, 0.6, 7),
        np.concatenate([left.positions, right_x[:, 1:]], axis=1),
        np.concatenate([left.strategies, right_l[:, 1:]], axis=1),
    )
    for k in range(7):
        if k <= 3:
            assert time_marginal(whole, k).equals(time_marginal(left, k))
        else:
            np.testing.assert_array_equal(time_marginal(whole, k).positions, right_x[:, k - 3])


def test_csv_round_trip(rng):
    bundle = make_bundle(rng, n=4, k=5, d=3, m=3)
    text = bundle.to_csv()
    assert text.splitlines()[0] == "path_id,t,x_1,x_2,x_3,w_1,w_2,w_3"
    assert "\r" not in text
    assert TrajectoryBundle.from_csv(text).equals(bundle)


def test_path_w2(rng):
    A = make_bundle(rng)
    assert w2_path(UNIT2, A, A) == pytest.approx(0.0, abs=1e-12)
    B = make_bundle(rng)
    cost = path_sup_cost(UNIT2, A, B)
    # brute force over the 3! couplings
    best = min(np.mean([cost[i, p[i]] for i in range(3)]) for p in itertools.permutations(range(3)))
    assert w2_path(UNIT2, A, B) == pytest.approx(best**0.5, abs=1e-12)
    # path distance dominates every time marginal's W2
    for k in range(A.K + 1):
        assert w_product(2, time_marginal(A, k), time_marginal(B, k), UNIT2) <= w2_path(UNIT2, A, B) + 1e-12
