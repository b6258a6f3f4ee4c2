import math

import numpy as np
import pytest

from meanfield_lab.agent_state import TrajectoryBundle, time_marginal, w2_path, w_product
from meanfield_lab.errors import InputError
from meanfield_lab.fields import FieldSet, builtin_field
from meanfield_lab.meanfield import (
    LawEnsemble,
    LawInputs,
    apply_S,
    fixed_point,
    initial_law_ensemble,
    solve_auxiliary,
)
from meanfield_lab.sde_engine import InitialLaw, SimConfig, solve_n_particle
from meanfield_lab.strategy_space import PureStrategySpace

UNIT2 = PureStrategySpace.discrete(2)
UNIT3 = PureStrategySpace.discrete(3)


def coupled_reversion(d=1, M=2, **extra):
    params = {"coupling": 0.5, "drift_coupling": 0.5, "sigma": 0.5}
    params.update(extra)
    return builtin_field("strategy_mean_reversion", params, theta=0.5, d=d, M=M)


def decoupled(d=1, M=2):
    return builtin_field("strategy_mean_reversion", {"sigma": 0.4}, theta=0.5, d=d, M=M)


def random_law(rng, cfg):
    x = rng.standard_normal((cfg.N, cfg.K + 1, cfg.d))
    lam = rng.dirichlet(np.ones(cfg.M), size=(cfg.N, cfg.K + 1))
    return LawEnsemble(TrajectoryBundle(cfg.times, x, lam))


CFG = SimConfig(d=1, m=1, M=2, N=64, T=1.0, K=20, theta=0.5, seed=3)
INIT = InitialLaw(1, 2, position_mean=(1.0,))


def test_auxiliary_ignores_law_for_decoupled_fields(rng):
    f = decoupled()
    a = solve_auxiliary(random_law(rng, CFG), f, INIT, CFG)
    b = solve_auxiliary(random_law(rng, CFG), f, INIT, CFG)
    assert a.bundle.equals(b.bundle)


def test_auxiliary_relaxes_to_frozen_barycentre():
    tau = 0.8
    f = builtin_field(
        "strategy_mean_reversion", {"coupling": 1.0, "tau": tau, "drift_rate": 0.0}, theta=0.5, M=3
    )
    cfg = SimConfig(d=1, m=1, M=3, N=5, T=1.0, K=10, theta=0.5, seed=0)
    b = np.array([0.2, 0.5, 0.3])
    psi = LawEnsemble(
        TrajectoryBundle(
            cfg.times, np.zeros((4, 11, 1)), np.broadcast_to(b, (4, 11, 3)).copy()
        )
    )
    init = InitialLaw(1, 3)
    out = solve_auxiliary(psi, f, init, cfg)
    lam0 = out.bundle.strategies[:, 0]
    for k in range(cfg.K + 1):
        # scalar linear recurrence lam_k - b = (1 - dt/tau)^k (lam_0 - b)
        expect = b + (1 - cfg.dt / tau) ** k * (lam0 - b)
        np.testing.assert_allclose(out.bundle.strategies[:, k], expect, atol=1e-14)
    # zero drift and diffusion: positions never move
    np.testing.assert_array_equal(out.bundle.positions, np.repeat(out.bundle.positions[:, :1], 11, 1))


def test_auxiliary_grid_mismatch(rng):
    psi = random_law(rng, CFG.replace(K=10))
    with pytest.raises(InputError):
        solve_auxiliary(psi, decoupled(), INIT, CFG)


def test_apply_S_constant_map_and_deterministic(rng):
    f = decoupled()
    first = apply_S(random_law(rng, CFG), f, INIT, CFG)
    assert first.bundle.equals(apply_S(random_law(rng, CFG), f, INIT, CFG).bundle)
    g = coupled_reversion()
    psi = random_law(rng, CFG)
    assert apply_S(psi, g, INIT, CFG).bundle.equals(apply_S(psi, g, INIT, CFG).bundle)


def test_apply_S_contracts_between_two_laws(rng):
    f = coupled_reversion()
    inputs = LawInputs.draw(INIT, CFG)
    p, q = random_law(rng, CFG), random_law(rng, CFG)
    gaps = [w2_path(UNIT2, p.bundle, q.bundle)]
    for _ in range(3):
        p, q = apply_S(p, f, inputs, CFG), apply_S(q, f, inputs, CFG)
        gaps.append(w2_path(UNIT2, p.bundle, q.bundle))
    assert all(b < a for a, b in zip(gaps, gaps[1:])), gaps


def test_fixed_point_decoupled_converges_in_two():
    law, report = fixed_point(decoupled(), INIT, CFG, tol=1e-10, max_iter=5, space=UNIT2)
    assert report.converged and report.iterations == 2
    assert report.gaps[1] == 0.0
    assert report.gaps[0] > 0


def test_fixed_point_infinite_tolerance():
    _, report = fixed_point(coupled_reversion(), INIT, CFG, tol=math.inf, max_iter=5, space=UNIT2)
    assert report.iterations == 1 and report.converged


def test_fixed_point_reports_non_convergence():
    _, report = fixed_point(coupled_reversion(), INIT, CFG, tol=1e-12, max_iter=2, space=UNIT2)
    assert not report.converged and report.iterations == 2 and len(report.gaps) == 2


def test_fixed_point_argument_checks():
    with pytest.raises(InputError):
        fixed_point(decoupled(), INIT, CFG, tol=0.0, max_iter=3)
    with pytest.raises(InputError):
        fixed_point(decoupled(), INIT, CFG, tol=1e-3, max_iter=0)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_gap_sequence_contracts(seed):
    cfg = SimConfig(d=2, m=2, M=3, N=128, T=1.0, K=25, theta=0.5, seed=seed)
    f = coupled_reversion(d=2, M=3)
    _, report = fixed_point(f, InitialLaw(2, 3, position_mean=(1.0,)), cfg, 1e-6, 12, space=UNIT3)
    gaps = report.gaps
    assert report.converged
    assert all(b <= a for a, b in zip(gaps, gaps[1:])), gaps
    assert all(g >= 0 for g in gaps)
    assert all(b / a < 1 for a, b in zip(gaps[1:], gaps[2:]) if a > 0)


def test_fixed_point_is_idempotent():
    f = coupled_reversion()
    law, report = fixed_point(f, INIT, CFG, 1e-8, 30, space=UNIT2)
    again = apply_S(law, f, INIT, CFG)
    assert w2_path(UNIT2, law.bundle, again.bundle) <= report.tol


def test_initial_iterate_is_constant_bundle():
    psi = initial_law_ensemble(INIT, CFG)
    first = time_marginal(psi.bundle, 0)
    for k in (1, CFG.K):
        assert time_marginal(psi.bundle, k).equals(first)


@pytest.mark.slow
def test_particle_system_approaches_fixed_point():
    f = coupled_reversion()
    cfg = SimConfig(d=1, m=1, M=2, N=1024, T=1.0, K=50, theta=0.5, seed=1)
    law, _ = fixed_point(f, INIT, cfg, 1e-4, 20, space=UNIT2)
    target = law.terminal()
    means = []
    for n in (32, 64, 128, 256):
        vals = []
        for s in range(8):
            c = cfg.replace(N=n, seed=500 + s)
            b = solve_n_particle(INIT.draw(c.seed, range(n)), f, c, store_path=False)
            vals.append(w_product(2, time_marginal(b, 1), target, UNIT2) ** 2)
        means.append(float(np.mean(vals)))
    assert all(b < a for a, b in zip(means, means[1:])), means
