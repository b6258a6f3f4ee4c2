import math

import numpy as np
import pytest

from meanfield_lab.agent_state import state_distance_aligned
from meanfield_lab.chaos import (
    chaos_sweep,
    coupled_run,
    empirical_law_convergence,
    mean_field_sample,
    rep_seeds,
)
from meanfield_lab.errors import InputError
from meanfield_lab.fields import FieldSet, builtin_field
from meanfield_lab.meanfield import fixed_point
from meanfield_lab.sde_engine import BrownianSource, InitialLaw, SimConfig, solve_frozen, solve_n_particle
from meanfield_lab.strategy_space import PureStrategySpace

UNIT2 = PureStrategySpace.discrete(2)
CFG = SimConfig(d=2, m=2, M=2, N=8, T=1.0, K=40, theta=0.5, seed=0)
INIT = InitialLaw(2, 2)


@pytest.fixture(scope="module")
def leader():
    f = builtin_field("leader_follower", {}, theta=0.5, d=2, M=2)
    law, _ = fixed_point(f, INIT, CFG.replace(N=128, seed=99), 1e-4, 20, space=UNIT2)
    return f, law


@pytest.fixture(scope="module")
def decoupled():
    f = builtin_field("strategy_mean_reversion", {"sigma": 0.5}, theta=0.5, d=2, M=2)
    law, _ = fixed_point(f, INIT, CFG.replace(N=64, seed=98), 1e-8, 5, space=UNIT2)
    return f, law


def test_null_coupling_is_exactly_zero(decoupled):
    f, law = decoupled
    for n in (1, 4, 16):
        gaps = coupled_run(f, CFG.replace(N=n), law, INIT, seed=n, space=UNIT2)
        assert np.all(gaps == 0.0)


def test_single_agent_gap_matches_direct_runs(leader):
    f, law = leader
    cfg = CFG.replace(N=1, seed=5)
    gaps = coupled_run(f, cfg, law, INIT, seed=5, space=UNIT2)
    # oracle: run both solvers by hand on the same inputs
    init = INIT.draw(5, [0])
    noise = BrownianSource(5).increments([0], cfg.K, cfg.m, cfg.dt)
    a = solve_n_particle(init, f, cfg, noise=noise)
    b = solve_frozen(init, f, law.bundle, cfg, noise)
    sup = max(
        state_distance_aligned(UNIT2, *a.marginal_arrays(k), *b.marginal_arrays(k))[0]
        for k in range(cfg.K + 1)
    )
    assert gaps[0] == sup**2
    assert gaps[0] > 0


def test_gaps_are_exchangeable(leader):
    f, law = leader
    cfg = CFG.replace(N=6)
    gaps, particles, copies = coupled_run(f, cfg, law, INIT, seed=3, space=UNIT2, return_paths=True)
    # relabel agents: feed the permuted inputs through the solvers directly
    perm = np.array([4, 0, 5, 2, 1, 3])
    init = INIT.draw(3, range(6)).subset(perm)
    noise = BrownianSource(3).increments(range(6), cfg.K, cfg.m, cfg.dt)[perm]
    pa = solve_n_particle(init, f, cfg.replace(seed=3), noise=noise)
    np.testing.assert_allclose(pa.positions, particles.positions[perm], atol=1e-12)
    assert gaps[perm].max() == gaps.max()


def test_repetitions_are_independent_and_average(leader):
    f, law = leader
    seeds = rep_seeds(17, 16)
    assert len(set(seeds)) == 16
    vals = np.array([coupled_run(f, CFG, law, INIT, s, UNIT2).max() for s in seeds])
    assert len(set(vals.tolist())) == 16
    sweep = chaos_sweep(f, CFG, [8], 16, seed=17, init_law=INIT, space=UNIT2, law=law)
    res = sweep.results[0]
    np.testing.assert_array_equal(res.per_rep, vals)
    assert res.err == pytest.approx(vals.mean(), abs=1e-15)
    assert res.stderr == pytest.approx(vals.std(ddof=1) / 4, abs=1e-15)
    # R=1 estimate sits within 3 standard deviations of the difference
    one = chaos_sweep(f, CFG, [8], 1, seed=18, init_law=INIT, space=UNIT2, law=law).results[0]
    sd = vals.std(ddof=1)
    assert abs(one.err - res.err) <= 3 * sd * math.sqrt(1 + 1 / 16)
    assert math.isnan(one.stderr)


def test_decoupled_sweep_reports_undefined_slope(decoupled):
    f, law = decoupled
    sweep = chaos_sweep(f, CFG, [2, 4, 8], 3, seed=1, init_law=INIT, space=UNIT2, law=law)
    assert sweep.errs == [0.0, 0.0, 0.0]
    assert sweep.slope is None and sweep.intercept is None


def test_sweep_records_divergence_and_continues(decoupled):
    _, law = decoupled
    base = builtin_field("strategy_mean_reversion", {"sigma": 0.5}, theta=0.5, d=2, M=2)

    def drift(X, L, x, lam):
        # blows up only when the measure has exactly three atoms
        return np.full_like(x, np.inf) if X.shape[0] == 3 else base.drift(X, L, x, lam)

    f = FieldSet(drift, base.diffusion, base.flux, 0.5)
    sweep = chaos_sweep(f, CFG, [2, 3, 4], 2, seed=1, init_law=INIT, space=UNIT2, law=law)
    bad = sweep.results[1]
    assert bad.reps == 0 and len(bad.failures) == 2 and math.isnan(bad.err)
    assert bad.failures[0]["error"] == "divergence"
    assert sweep.results[0].reps == 2 and sweep.results[2].reps == 2
    assert sweep.slope is None


def test_sweep_input_checks(decoupled):
    f, law = decoupled
    with pytest.raises(InputError):
        chaos_sweep(f, CFG, [8, 4], 2, seed=0, init_law=INIT, law=law)
    with pytest.raises(InputError):
        chaos_sweep(f, CFG, [4], 0, seed=0, init_law=INIT, law=law)
    with pytest.raises(InputError):
        coupled_run(f, CFG.replace(K=20), law, INIT, seed=0)
    with pytest.raises(InputError):
        coupled_run(f, CFG, law, InitialLaw(1, 2), seed=0)


def test_sweep_rows_and_summary(leader):
    f, law = leader
    sweep = chaos_sweep(f, CFG, [2, 4], 3, seed=2, init_law=INIT, space=UNIT2, law=law, reference_w2=True)
    rows = list(sweep.rows())
    assert [(n, r) for n, r, _, _ in rows] == [(2, 0), (2, 1), (2, 2), (4, 0), (4, 1), (4, 2)]
    summary = sweep.summary()
    assert summary["seed"] == 2 and len(summary["per_N"]) == 2
    assert all(r.w2_sq > 0 and r.constant_ratio > 0 for r in sweep.results)


def test_law_is_solved_when_not_supplied():
    f = builtin_field("leader_follower", {}, theta=0.5, d=2, M=2)
    cfg = CFG.replace(K=10)
    sweep = chaos_sweep(f, cfg, [2, 4], 2, seed=4, init_law=INIT, space=UNIT2, law_factor=4)
    assert sweep.law_size == 16
    assert sweep.law_report["converged"]


def test_empirical_law_convergence_against_itself(leader):
    f, law = leader
    sample = mean_field_sample(f, law, CFG, INIT, 16, seed=3)
    w = empirical_law_convergence(f, law, CFG, INIT, [16, 32], seed=3, reference=sample, space=UNIT2)
    assert w[0] == pytest.approx(0.0, abs=1e-12)
    assert w[1] > 0
