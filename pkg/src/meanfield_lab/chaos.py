"""Synchronous-coupling experiments for propagation of chaos.

The N-particle system and N independent mean-field copies share initial
states and Brownian increments agent by agent; only the measure seen by each
agent differs (live empirical measure versus the frozen mean-field law).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .agent_state import Ensemble, state_distance_aligned, state_distance_matrix, wp_from_cost
from .errors import DivergenceError, GeometryViolation, InputError
from .fields import FieldSet
from .meanfield import LawEnsemble, fixed_point
from .sde_engine import (
    ROLE_AGENTS,
    ROLE_REFERENCE,
    BrownianSource,
    InitialLaw,
    SimConfig,
    solve_frozen,
    solve_n_particle,
)
from .strategy_space import PureStrategySpace


@dataclass
class CouplingResult:
    """Coupling gaps at one N, aggregated over repetitions.

    ``err`` is the mean over repetitions of the largest per-agent gap; the
    per-agent mean gap and the max over agents of the rep-averaged gap are
    kept alongside.
    """

    N: int
    reps: int
    err: float
    per_rep: list
    stderr: float
    mean_agent_gap: float
    max_agent_mean: float
    wall_ms: list
    seeds: list
    failures: list = field(default_factory=list)
    w2_sq: float | None = None

    @property
    def constant_ratio(self) -> float | None:
        """err / E[W2^2(empirical, law)] when the reference W2 was computed."""
        if self.w2_sq is None or self.w2_sq == 0:
            return None
        return self.err / self.w2_sq

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "reps": self.reps,
            "err": self.err,
            "stderr": self.stderr,
            "mean_agent_gap": self.mean_agent_gap,
            "max_agent_mean": self.max_agent_mean,
            "w2_sq": self.w2_sq,
            "constant_ratio": self.constant_ratio,
            "failures": self.failures,
        }


@dataclass
class SweepResult:
    results: list
    slope: float | None
    intercept: float | None
    seed: int
    law_size: int
    law_report: dict | None = None

    def __post_init__(self):
        ns = [r.N for r in self.results]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise InputError("N grid must be strictly increasing", n_grid=ns)

    @property
    def n_grid(self) -> list:
        return [r.N for r in self.results]

    @property
    def errs(self) -> list:
        return [r.err for r in self.results]

    def rows(self):
        """(N, rep, err, wall_ms) in (N, rep) order."""
        for r in self.results:
            for k, (e, ms) in enumerate(zip(r.per_rep, r.wall_ms)):
                yield r.N, k, e, ms

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "law_size": self.law_size,
            "slope": self.slope,
            "intercept": self.intercept,
            "per_N": [r.to_dict() for r in self.results],
            "law_report": self.law_report,
        }


def coupled_run(
    f: FieldSet,
    cfg: SimConfig,
    law: LawEnsemble,
    init_law: InitialLaw,
    seed: int,
    space: PureStrategySpace | None = None,
    workers: int = 1,
    return_paths: bool = False,
):
    """Per-agent sup-over-grid squared gaps between coupled N-particle and mean-field paths.

    ``cfg.N`` sets the number of agents; ``seed`` overrides ``cfg.seed``.
    """
    space = space or PureStrategySpace.discrete(cfg.M)
    if law.bundle.K != cfg.K or not np.allclose(law.bundle.times, cfg.times, rtol=0, atol=1e-12):
        raise InputError("mean-field law uses a different time grid", law_K=law.bundle.K, K=cfg.K)
    if law.bundle.d != cfg.d or law.bundle.M != cfg.M or init_law.d != cfg.d or init_law.M != cfg.M:
        raise InputError("mean-field law and configuration have different dimensions")
    cfg = cfg.replace(seed=seed)
    agents = range(cfg.N)
    init = init_law.draw(seed, agents, role=ROLE_AGENTS)
    noise = BrownianSource(seed, ROLE_AGENTS).increments(agents, cfg.K, cfg.m, cfg.dt)
    particles = solve_n_particle(init, f, cfg, workers=workers, noise=noise)
    copies = solve_frozen(init, f, law.bundle, cfg, noise, workers=workers)
    gaps = np.zeros(cfg.N)
    for k in range(cfg.K + 1):
        xa, la = particles.marginal_arrays(k)
        xb, lb = copies.marginal_arrays(k)
        np.maximum(gaps, state_distance_aligned(space, xa, la, xb, lb), out=gaps)
    gaps = gaps**2
    if return_paths:
        return gaps, particles, copies
    return gaps


def rep_seeds(seed: int, reps: int) -> list:
    """Independent master seeds for the repetitions, shared across the N grid."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(reps)]


def _regression(ns, errs):
    if len(ns) < 2 or any(not (e > 0 and math.isfinite(e)) for e in errs):
        return None, None
    slope, intercept = np.polyfit(np.log(ns), np.log(errs), 1)
    return float(slope), float(intercept)


def chaos_sweep(
    f: FieldSet,
    cfg: SimConfig,
    n_grid,
    reps: int,
    seed: int,
    init_law: InitialLaw,
    space: PureStrategySpace | None = None,
    law: LawEnsemble | None = None,
    law_factor: int = 4,
    law_tol: float = 1e-4,
    law_max_iter: int = 20,
    reference_w2: bool = False,
    workers: int = 1,
) -> SweepResult:
    """Coupling error across an N grid.

    The mean-field law is solved once (unless supplied) with
    ``law_factor * max(n_grid)`` paths.  A divergence or geometry failure in
    one (N, rep) cell is recorded and the sweep moves on.
    """
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 1:
        raise InputError("N grid must be strictly increasing positive integers", n_grid=n_grid)
    if reps < 1:
        raise InputError("reps must be >= 1", reps=reps)
    space = space or PureStrategySpace.discrete(cfg.M)
    law_report = None
    if law is None:
        law_cfg = cfg.replace(N=law_factor * n_grid[-1], seed=seed)
        law, report = fixed_point(f, init_law, law_cfg, law_tol, law_max_iter, space=space, workers=workers)
        law_report = report.to_dict()
    law_terminal = law.terminal()
    seeds = rep_seeds(seed, reps)
    results = []
    for n in n_grid:
        per_rep, walls, failures, agent_gaps, w2s = [], [], [], [], []
        ok_seeds = []
        for rep, s in enumerate(seeds):
            start = time.perf_counter()
            try:
                gaps, _, copies = coupled_run(
                    f, cfg.replace(N=n), law, init_law, s, space, workers, return_paths=True
                )
            except (DivergenceError, GeometryViolation) as exc:
                failures.append({"rep": rep, "seed": s, **exc.to_dict()})
                continue
            walls.append((time.perf_counter() - start) * 1e3)
            per_rep.append(float(gaps.max()))
            agent_gaps.append(gaps)
            ok_seeds.append(s)
            if reference_w2:
                x, lam = copies.marginal_arrays(copies.K)
                cost = state_distance_matrix(
                    space, x, lam, law_terminal.positions, law_terminal.strategies
                ) ** 2
                w2s.append(wp_from_cost(cost, 2) ** 2)
        if per_rep:
            vals = np.asarray(per_rep)
            err = float(vals.mean())
            stderr = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else float("nan")
            stacked = np.vstack(agent_gaps)
            mean_gap = float(stacked.mean())
            max_mean = float(stacked.mean(axis=0).max())
        else:
            err = stderr = mean_gap = max_mean = float("nan")
        results.append(
            CouplingResult(
                N=n,
                reps=len(per_rep),
                err=err,
                per_rep=per_rep,
                stderr=stderr,
                mean_agent_gap=mean_gap,
                max_agent_mean=max_mean,
                wall_ms=walls,
                seeds=ok_seeds,
                failures=failures,
                w2_sq=float(np.mean(w2s)) if w2s else None,
            )
        )
    slope, intercept = _regression(n_grid, [r.err for r in results])
    return SweepResult(results, slope, intercept, seed, law.size, law_report)


def mean_field_sample(
    f: FieldSet,
    law: LawEnsemble,
    cfg: SimConfig,
    init_law: InitialLaw,
    n: int,
    seed: int,
    role: int = ROLE_AGENTS,
    workers: int = 1,
) -> Ensemble:
    """Time-T states of ``n`` i.i.d. agents following the mean-field dynamics."""
    cfg = cfg.replace(N=n, seed=seed)
    agents = range(n)
    init = init_law.draw(seed, agents, role=role)
    noise = BrownianSource(seed, role).increments(agents, cfg.K, cfg.m, cfg.dt)
    paths = solve_frozen(init, f, law.bundle, cfg, noise, workers=workers)
    x, lam = paths.marginal_arrays(paths.K)
    return Ensemble(x, lam, check=False)


def empirical_law_convergence(
    f: FieldSet,
    law: LawEnsemble,
    cfg: SimConfig,
    init_law: InitialLaw,
    n_grid,
    seed: int,
    reference: Ensemble | None = None,
    reference_size: int = 4096,
    space: PureStrategySpace | None = None,
    workers: int = 1,
) -> list:
    """W2 between N i.i.d. mean-field states at time T and a large reference sample."""
    space = space or PureStrategySpace.discrete(cfg.M)
    if reference is None:
        reference = mean_field_sample(f, law, cfg, init_law, reference_size, seed, ROLE_REFERENCE, workers)
    out = []
    for n in n_grid:
        sample = mean_field_sample(f, law, cfg, init_law, int(n), seed, ROLE_AGENTS, workers)
        cost = state_distance_matrix(
            space, sample.positions, sample.strategies, reference.positions, reference.strategies
        ) ** 2
        out.append(wp_from_cost(cost, 2))
    return out
