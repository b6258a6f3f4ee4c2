"""Random cross-checks of the production metrics against the slow oracles."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._lp import assignment_value, transport_value
from .agent_state import Ensemble, state_distance_matrix, w_product
from .errors import InputError, OracleRefused
from .strategy_space import PureStrategySpace, bl_norm, bl_norm_batch, w1_strategy
from .transport_oracle import (
    MAX_ENUM,
    MAX_HUNGARIAN,
    bl_norm_bruteforce,
    hungarian,
    transport_lp_bruteforce,
)

KINDS = ("transport", "w1_strategy", "w_product", "assignment", "bl_norm")
# active-set enumeration gets slow quickly with M
_MAX_BL_M = 3


@dataclass
class OracleReport:
    n_instances: int
    worst_error: float
    worst: dict | None
    seed: int
    tol: float
    counts: dict = field(default_factory=dict)
    seconds: float = 0.0

    @property
    def passed(self) -> bool:
        return self.worst_error <= self.tol

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "n_instances": self.n_instances,
            "worst_error": self.worst_error,
            "tol": self.tol,
            "seed": self.seed,
            "counts": self.counts,
            "seconds": self.seconds,
            "worst": self.worst,
        }


def random_space(rng, m: int) -> PureStrategySpace:
    """Metric from random points in the plane (so the triangle inequality holds)."""
    pts = rng.uniform(0, 2, size=(m, 2))
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    np.fill_diagonal(dist, 0.0)
    dist[dist == 0] = 1e-3  # coincident points, vanishingly unlikely
    np.fill_diagonal(dist, 0.0)
    return PureStrategySpace(tuple(f"u{i}" for i in range(m)), dist)


def _ensemble(rng, n, d, m):
    return Ensemble(rng.standard_normal((n, d)), rng.dirichlet(np.ones(m), size=n))


def run_oracle_check(
    n_instances: int = 200,
    max_support: int = 6,
    max_assignment: int = 64,
    seed: int = 0,
    tol: float = 1e-9,
    inject_fault: bool = False,
) -> OracleReport:
    """Compare production values with the oracles on random instances.

    Instance kinds cycle through :data:`KINDS`.  ``inject_fault`` perturbs one
    cost entry after the production solve of the first assignment instance, a
    negative control that must be caught.
    """
    if not 1 <= max_support <= MAX_ENUM:
        raise OracleRefused(f"max_support must be in 1..{MAX_ENUM}", max_support=max_support)
    if not 1 <= max_assignment <= MAX_HUNGARIAN:
        raise OracleRefused(f"max_assignment must be in 1..{MAX_HUNGARIAN}", max_assignment=max_assignment)
    if n_instances < 1:
        raise InputError("n_instances must be >= 1")
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst_err, worst = 0.0, None
    counts = dict.fromkeys(KINDS, 0)
    fault_pending = inject_fault

    def record(kind, prod, oracle, **data):
        nonlocal worst_err, worst
        err = abs(prod - oracle)
        counts[kind] += 1
        if worst is None or err > worst_err:
            worst_err = err
            worst = {"kind": kind, "production": prod, "oracle": oracle, "error": err, **data}

    for k in range(n_instances):
        kind = KINDS[k % len(KINDS)]
        if kind == "transport":
            m, n = rng.integers(1, max_support + 1, size=2)
            a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n))
            cost = rng.uniform(0, 10, size=(m, n))
            record(
                kind,
                transport_value(a, b, cost),
                transport_lp_bruteforce(cost, a, b),
                cost=cost.tolist(), a=a.tolist(), b=b.tolist(),
            )
        elif kind == "w1_strategy":
            m = int(rng.integers(1, max_support + 1))
            space = random_space(rng, m)
            a, b = rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(m))
            record(
                kind,
                w1_strategy(space, a, b),
                transport_lp_bruteforce(space.dist, a, b),
                dist=space.dist.tolist(), a=a.tolist(), b=b.tolist(),
            )
        elif kind == "w_product":
            na, nb = rng.integers(1, max_support + 1, size=2)
            p = int(rng.integers(1, 3))
            M = int(rng.integers(1, 4))
            space = random_space(rng, M)
            A, B = _ensemble(rng, na, 2, M), _ensemble(rng, nb, 2, M)
            cost = state_distance_matrix(space, A.positions, A.strategies, B.positions, B.strategies) ** p
            oracle = transport_lp_bruteforce(cost, np.full(na, 1 / na), np.full(nb, 1 / nb)) ** (1 / p)
            record(kind, w_product(p, A, B, space), oracle, p=p, cost=cost.tolist())
        elif kind == "assignment":
            n = int(rng.integers(1, max_assignment + 1))
            cost = rng.uniform(0, 10, size=(n, n))
            prod, cols = assignment_value(cost)
            if fault_pending:
                cost = cost.copy()
                cost[0, cols[0]] += 1.0
                fault_pending = False
            value, _ = hungarian(cost)
            record(kind, prod, value / n, n=n, cost=cost.tolist())
        else:
            m = int(rng.integers(1, _MAX_BL_M + 1))
            space = random_space(rng, m)
            mu = rng.dirichlet(np.ones(m)) - rng.dirichlet(np.ones(m))
            oracle = bl_norm_bruteforce(space.dist, mu)
            data = {"dist": space.dist.tolist(), "mu": mu.tolist()}
            record(kind, bl_norm(space, mu), oracle, route="lp", **data)
            record(kind, float(bl_norm_batch(space, mu[None, :])[0]), oracle, route="vertices", **data)
    return OracleReport(
        n_instances=n_instances,
        worst_error=worst_err,
        worst=worst,
        seed=seed,
        tol=tol,
        counts=counts,
        seconds=time.perf_counter() - start,
    )
