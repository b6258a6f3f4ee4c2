"""States in R^d x P(U), empirical measures over them, and their distances."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from ._lp import assignment_value, transport_value
from .errors import InputError
from .strategy_space import (
    SIMPLEX_TOL,
    MixedStrategy,
    PureStrategySpace,
    bl_norm,
    bl_norm_batch,
    simplex_violations,
)


@dataclass(frozen=True, eq=False)
class AgentState:
    position: np.ndarray
    strategy: MixedStrategy

    def __post_init__(self):
        x = np.array(self.position, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise InputError("position entries must be finite")
        x.setflags(write=False)
        object.__setattr__(self, "position", x)
        if not isinstance(self.strategy, MixedStrategy):
            object.__setattr__(self, "strategy", MixedStrategy(self.strategy))

    @property
    def d(self) -> int:
        return self.position.shape[0]

    @property
    def M(self) -> int:
        return self.strategy.size

    def to_dict(self) -> dict:
        return {"x": self.position.tolist(), "w": self.strategy.to_list()}


class Ensemble:
    """N agent states with uniform weight 1/N, stored column-wise.

    ``positions`` has shape (N, d) and ``strategies`` shape (N, M).  Doubles as
    the empirical measure of a particle system and as a Monte Carlo law.
    """

    __slots__ = ("positions", "strategies")

    def __init__(self, positions, strategies, check: bool = True):
        x = np.array(positions, dtype=np.float64)
        lam = np.array(strategies, dtype=np.float64)
        if x.ndim != 2 or lam.ndim != 2 or x.shape[0] != lam.shape[0]:
            raise InputError("positions (N, d) and strategies (N, M) must share N")
        if x.shape[0] < 1:
            raise InputError("an ensemble needs at least one state")
        if check:
            if not np.all(np.isfinite(x)):
                raise InputError("positions must be finite")
            bad = simplex_violations(lam, SIMPLEX_TOL)
            if np.any(bad):
                raise InputError("strategy outside the simplex", agent=int(np.argmax(bad)))
        x.setflags(write=False)
        lam.setflags(write=False)
        self.positions = x
        self.strategies = lam

    @classmethod
    def from_states(cls, states) -> "Ensemble":
        states = list(states)
        if not states:
            raise InputError("an ensemble needs at least one state")
        d, m = states[0].d, states[0].M
        if any(s.d != d or s.M != m for s in states):
            raise InputError("all states must share d and M")
        return cls([s.position for s in states], [s.strategy.weights for s in states])

    def __len__(self):
        return self.positions.shape[0]

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def M(self) -> int:
        return self.strategies.shape[1]

    @property
    def states(self) -> list:
        return [
            AgentState(x, MixedStrategy(w)) for x, w in zip(self.positions, self.strategies)
        ]

    def __getitem__(self, i) -> AgentState:
        return AgentState(self.positions[i], MixedStrategy(self.strategies[i]))

    def subset(self, idx) -> "Ensemble":
        return Ensemble(self.positions[idx], self.strategies[idx], check=False)

    def equals(self, other: "Ensemble") -> bool:
        return np.array_equal(self.positions, other.positions) and np.array_equal(
            self.strategies, other.strategies
        )

    def to_json(self) -> str:
        return json.dumps(
            [{"x": x.tolist(), "w": w.tolist()} for x, w in zip(self.positions, self.strategies)]
        )

    @classmethod
    def from_json(cls, text: str) -> "Ensemble":
        rows = json.loads(text)
        return cls([r["x"] for r in rows], [r["w"] for r in rows])


class TrajectoryBundle:
    """N paths sampled on a uniform grid ``times`` of K+1 points."""

    __slots__ = ("times", "positions", "strategies")

    def __init__(self, times, positions, strategies):
        t = np.asarray(times, dtype=np.float64)
        x = np.asarray(positions, dtype=np.float64)
        lam = np.asarray(strategies, dtype=np.float64)
        if t.ndim != 1 or t.shape[0] < 2:
            raise InputError("time grid needs at least two points")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise InputError("time grid must start at 0 and increase strictly")
        k = t.shape[0] - 1
        step = t[-1] / k
        if np.max(np.abs(np.diff(t) - step)) > 1e-12 * max(1.0, t[-1]):
            raise InputError("time grid must be uniform")
        if x.ndim != 3 or lam.ndim != 3 or x.shape[:2] != lam.shape[:2] or x.shape[1] != k + 1:
            raise InputError("paths must have shape (N, K+1, d) and (N, K+1, M)")
        self.times = t
        self.positions = x
        self.strategies = lam

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def K(self) -> int:
        return self.times.shape[0] - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def d(self) -> int:
        return self.positions.shape[2]

    @property
    def M(self) -> int:
        return self.strategies.shape[2]

    @classmethod
    def constant(cls, ens: Ensemble, times) -> "TrajectoryBundle":
        """Every path frozen at its initial state."""
        k1 = len(times)
        return cls(
            times,
            np.repeat(ens.positions[:, None, :], k1, axis=1),
            np.repeat(ens.strategies[:, None, :], k1, axis=1),
        )

    def marginal_arrays(self, k: int):
        return self.positions[:, k, :], self.strategies[:, k, :]

    def equals(self, other: "TrajectoryBundle") -> bool:
        return (
            np.array_equal(self.times, other.times)
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.strategies, other.strategies)
        )

    def to_csv(self, fh=None) -> str | None:
        """Columns path_id, t, x_1..x_d, w_1..w_M; floats printed round-trip exact."""
        own = fh is None
        if own:
            fh = io.StringIO()
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["path_id", "t"]
            + [f"x_{i + 1}" for i in range(self.d)]
            + [f"w_{j + 1}" for j in range(self.M)]
        )
        times = [repr(float(t)) for t in self.times]
        for n in range(self.N):
            xs = self.positions[n]
            ws = self.strategies[n]
            for k, t in enumerate(times):
                writer.writerow(
                    [n, t] + [repr(float(v)) for v in xs[k]] + [repr(float(v)) for v in ws[k]]
                )
        return fh.getvalue() if own else None

    @classmethod
    def from_csv(cls, text: str) -> "TrajectoryBundle":
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        d = sum(h.startswith("x_") for h in header)
        m = sum(h.startswith("w_") for h in header)
        data = np.array([[float(v) for v in r] for r in body])
        n = int(data[:, 0].max()) + 1
        k1 = data.shape[0] // n
        data = data.reshape(n, k1, -1)
        return cls(data[0, :, 1], data[:, :, 2 : 2 + d], data[:, :, 2 + d : 2 + d + m])


def _check_pair(a: AgentState, b: AgentState, space: PureStrategySpace):
    if a.d != b.d:
        raise InputError("states have different spatial dimension", d=[a.d, b.d])
    if a.M != b.M or a.M != space.size:
        raise InputError("states do not live on the same strategy space")


def state_norm(a: AgentState, b: AgentState, space: PureStrategySpace) -> float:
    """||x_a - x_b||_2 + ||lambda_a - lambda_b||_BL."""
    _check_pair(a, b, space)
    return float(np.linalg.norm(a.position - b.position)) + bl_norm(
        space, a.strategy.weights - b.strategy.weights
    )


def state_distance_matrix(space, xa, la, xb, lb) -> np.ndarray:
    """Pairwise product-norm distances between two state clouds, shape (NA, NB)."""
    dx = xa[:, None, :] - xb[None, :, :]
    spatial = np.sqrt(np.einsum("abk,abk->ab", dx, dx))
    return spatial + bl_norm_batch(space, la[:, None, :] - lb[None, :, :])


def state_distance_aligned(space, xa, la, xb, lb) -> np.ndarray:
    """Row-wise product-norm distances between paired states."""
    dx = xa - xb
    return np.sqrt((dx * dx).sum(axis=-1)) + bl_norm_batch(space, la - lb)


def _check_ensembles(A: Ensemble, B: Ensemble, space: PureStrategySpace):
    if A.N < 1 or B.N < 1:
        raise InputError("ensembles must be non-empty")
    if A.d != B.d or A.M != B.M or A.M != space.size:
        raise InputError("ensembles live on different state spaces")


def w_product(p: int, A: Ensemble, B: Ensemble, space: PureStrategySpace) -> float:
    """W_p between two uniform ensembles on R^d x P(U)."""
    if p not in (1, 2):
        raise InputError("p must be 1 or 2", p=p)
    _check_ensembles(A, B, space)
    cost = state_distance_matrix(space, A.positions, A.strategies, B.positions, B.strategies) ** p
    return wp_from_cost(cost, p)


def wp_from_cost(cost: np.ndarray, p: int) -> float:
    """W_p from a matrix of distance**p between two uniform point clouds."""
    na, nb = cost.shape
    if na == nb:
        value, _ = assignment_value(cost)
    else:
        value = transport_value(np.full(na, 1.0 / na), np.full(nb, 1.0 / nb), cost)
    return max(value, 0.0) ** (1.0 / p)


def time_marginal(bundle: TrajectoryBundle, k: int) -> Ensemble:
    """Ensemble of the N states at grid time t_k."""
    if not 0 <= k <= bundle.K:
        raise InputError(f"grid index {k} outside 0..{bundle.K}")
    x, lam = bundle.marginal_arrays(k)
    return Ensemble(x, lam, check=False)


def path_sup_cost(space, A: TrajectoryBundle, B: TrajectoryBundle, p: int = 2) -> np.ndarray:
    """(NA, NB) matrix of max over grid times of state distance**p between paths."""
    if not np.array_equal(A.times, B.times):
        raise InputError("bundles live on different time grids")
    if A.d != B.d or A.M != B.M:
        raise InputError("bundles live on different state spaces")
    out = np.zeros((A.N, B.N))
    for k in range(A.K + 1):
        xa, la = A.marginal_arrays(k)
        xb, lb = B.marginal_arrays(k)
        np.maximum(out, state_distance_matrix(space, xa, la, xb, lb), out=out)
    return out**p


def w2_path(space, A: TrajectoryBundle, B: TrajectoryBundle) -> float:
    """Path-space W_2 with the grid-sup cost; exact assignment for equal sizes."""
    return wp_from_cost(path_sup_cost(space, A, B, p=2), 2)
