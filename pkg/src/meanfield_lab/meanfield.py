"""McKean-Vlasov solver: candidate laws as path ensembles, iterated to a fixed point.

A law over paths is represented by M_law independent paths on the simulation
grid.  The map S freezes such a law, integrates fresh single-agent paths
against its time marginals and returns their ensemble.  The Brownian paths
and initial data are the same at every application, so S is a deterministic
self-map on ensembles and its iterates can be compared directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .agent_state import Ensemble, TrajectoryBundle, w2_path
from .errors import InputError
from .fields import FieldSet
from .sde_engine import ROLE_LAW, BrownianSource, InitialLaw, SimConfig, solve_frozen, sup_moment
from .strategy_space import PureStrategySpace


@dataclass(frozen=True)
class LawEnsemble:
    bundle: TrajectoryBundle
    iteration: int = 0
    seed: int = 0

    @property
    def size(self) -> int:
        return self.bundle.N

    def terminal(self) -> Ensemble:
        x, lam = self.bundle.marginal_arrays(self.bundle.K)
        return Ensemble(x, lam, check=False)


@dataclass
class FixedPointReport:
    """Trace of the outer iteration.

    ``gaps[n]`` is the path-space W2 distance between iterates n and n+1;
    ``second_moments`` tracks the sup-over-grid second moment of each iterate
    as an early warning for blow-up.
    """

    gaps: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    tol: float = 0.0
    seed: int = 0
    second_moments: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "gaps": [float(g) for g in self.gaps],
            "iterations": self.iterations,
            "converged": self.converged,
            "tol": self.tol if math.isfinite(self.tol) else "inf",
            "seed": self.seed,
            "second_moments": [float(m) for m in self.second_moments],
        }


@dataclass(frozen=True)
class LawInputs:
    """Initial states and Brownian increments of the M_law law paths."""

    init: Ensemble
    noise: np.ndarray

    @classmethod
    def draw(cls, init_law: InitialLaw, cfg: SimConfig) -> "LawInputs":
        agents = range(cfg.N)
        init = init_law.draw(cfg.seed, agents, role=ROLE_LAW)
        noise = BrownianSource(cfg.seed, ROLE_LAW).increments(agents, cfg.K, cfg.m, cfg.dt)
        return cls(init, noise)


def _inputs(init, cfg: SimConfig) -> LawInputs:
    if isinstance(init, LawInputs):
        if init.init.N != cfg.N or init.noise.shape != (cfg.N, cfg.K, cfg.m):
            raise InputError("law inputs do not match the configuration")
        return init
    if isinstance(init, InitialLaw):
        if init.d != cfg.d or init.M != cfg.M:
            raise InputError("initial law does not match the configuration")
        return LawInputs.draw(init, cfg)
    raise InputError("init must be an InitialLaw or LawInputs")


def initial_law_ensemble(init, cfg: SimConfig) -> LawEnsemble:
    """Constant-in-time bundle of the initial data: the start of the iteration."""
    inputs = _inputs(init, cfg)
    return LawEnsemble(TrajectoryBundle.constant(inputs.init, cfg.times), 0, cfg.seed)


def solve_auxiliary(psi: LawEnsemble, f: FieldSet, init, cfg: SimConfig, workers: int = 1) -> LawEnsemble:
    """Integrate cfg.N independent paths against the frozen marginals of ``psi``."""
    inputs = _inputs(init, cfg)
    if psi.bundle.K != cfg.K or not np.allclose(psi.bundle.times, cfg.times, rtol=0, atol=1e-12):
        raise InputError("frozen law and configuration use different grids", law_K=psi.bundle.K, K=cfg.K)
    bundle = solve_frozen(inputs.init, f, psi.bundle, cfg, inputs.noise, workers=workers)
    return LawEnsemble(bundle, psi.iteration + 1, cfg.seed)


def apply_S(psi: LawEnsemble, f: FieldSet, init, cfg: SimConfig, workers: int = 1) -> LawEnsemble:
    """One application of S.  Noise is keyed by cfg.seed only, hence fixed across calls."""
    return solve_auxiliary(psi, f, init, cfg, workers=workers)


def fixed_point(
    f: FieldSet,
    init,
    cfg: SimConfig,
    tol: float,
    max_iter: int,
    space: PureStrategySpace | None = None,
    workers: int = 1,
    psi0: LawEnsemble | None = None,
):
    """Picard iteration of S from the constant initial bundle.

    Stops as soon as the W2 gap between successive iterates is <= tol.
    Returns ``(law, report)``; running out of iterations is reported, not raised.
    """
    if not tol > 0:
        raise InputError("tol must be positive", tol=tol)
    if max_iter < 1:
        raise InputError("max_iter must be >= 1", max_iter=max_iter)
    space = space or PureStrategySpace.discrete(cfg.M)
    inputs = _inputs(init, cfg)
    psi = psi0 if psi0 is not None else initial_law_ensemble(inputs, cfg)
    report = FixedPointReport(tol=float(tol), seed=cfg.seed)
    for _ in range(max_iter):
        nxt = apply_S(psi, f, inputs, cfg, workers=workers)
        gap = w2_path(space, psi.bundle, nxt.bundle)
        report.gaps.append(gap)
        report.second_moments.append(sup_moment(nxt.bundle, 2, space))
        report.iterations += 1
        psi = nxt
        if gap <= tol:
            report.converged = True
            break
    return psi, report
