"""Finite pure-strategy spaces and the metric structure on measures over them.

A mixed strategy is a probability vector on a finite metric space ``U``.
Signed measures on ``U`` are measured with the bounded-Lipschitz (BL) norm

    ||mu||_BL = sup { <phi, mu> : max|phi| + Lip(phi) <= 1 },

and probability vectors are compared with the order-1 Wasserstein distance.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

from ._lp import transport_value
from .errors import ContractViolation, GeometryViolation, InputError

SIMPLEX_TOL = 1e-12

# qhull facet enumeration stays cheap up to here; above it bl_norm_batch loops the LP
_MAX_VERTEX_DIM = 7


@dataclass(frozen=True, eq=False)
class PureStrategySpace:
    """Finite metric space (U, d_U) of pure strategies."""

    labels: tuple
    dist: np.ndarray

    def __post_init__(self):
        labels = tuple(self.labels)
        dist = np.array(self.dist, dtype=np.float64)
        m = len(labels)
        if m < 1:
            raise InputError("strategy space needs at least one label")
        if len(set(labels)) != m:
            raise InputError("strategy labels must be distinct", labels=list(labels))
        if dist.shape != (m, m):
            raise InputError(f"dist must be {m}x{m}, got {dist.shape}")
        if not np.all(np.isfinite(dist)):
            raise InputError("dist entries must be finite")
        if not np.array_equal(dist, dist.T):
            raise InputError("dist must be symmetric")
        if np.any(np.diag(dist) != 0):
            raise InputError("dist must have a zero diagonal")
        off = ~np.eye(m, dtype=bool)
        if np.any(dist[off] <= 0):
            raise InputError("distinct strategies must be at positive distance")
        # d[i,k] <= d[i,j] + d[j,k] for every j
        via = dist[:, :, None] + dist[None, :, :]
        slack = via.min(axis=1) - dist
        if np.any(slack < -1e-12 * max(1.0, dist.max())):
            i, k = np.unravel_index(np.argmin(slack), slack.shape)
            raise InputError("dist violates the triangle inequality", i=int(i), k=int(k))
        dist.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dist", dist)

    @property
    def size(self) -> int:
        return len(self.labels)

    @classmethod
    def discrete(cls, m: int, scale: float = 1.0, labels=None) -> "PureStrategySpace":
        """``m`` strategies, all pairwise at distance ``scale``."""
        labels = labels if labels is not None else [f"u{i + 1}" for i in range(m)]
        return cls(tuple(labels), scale * (1.0 - np.eye(m)))

    @classmethod
    def from_dict(cls, data: dict) -> "PureStrategySpace":
        unknown = set(data) - {"labels", "dist"}
        if unknown:
            raise InputError(f"unknown strategy-space keys: {sorted(unknown)}")
        try:
            return cls(tuple(data["labels"]), np.asarray(data["dist"], dtype=float))
        except KeyError as exc:
            raise InputError(f"strategy space is missing {exc.args[0]!r}") from None

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "dist": self.dist.tolist()}

    @classmethod
    def from_json(cls, text: str) -> "PureStrategySpace":
        return cls.from_dict(json.loads(text))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __eq__(self, other):
        if not isinstance(other, PureStrategySpace):
            return NotImplemented
        return self.labels == other.labels and np.array_equal(self.dist, other.dist)

    def __hash__(self):
        return hash((self.labels, self.dist.tobytes()))

    @cached_property
    def dual_constraints(self) -> np.ndarray:
        """Rows ``a`` with ``{phi : a.phi <= 1 for all rows}`` the unit ball of ||.||_Lip.

        max|phi| + Lip(phi) = max over (k, sign, i != j) of
        sign*phi_k + (phi_i - phi_j)/d_ij, since the pairwise term is >= 0.
        """
        m = self.size
        eye = np.eye(m)
        if m == 1:
            return np.array([[1.0], [-1.0]])
        rows = []
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                lip = (eye[i] - eye[j]) / self.dist[i, j]
                for k in range(m):
                    rows.append(lip + eye[k])
                    rows.append(lip - eye[k])
        return np.array(rows)

    @cached_property
    def dual_ball_vertices(self) -> np.ndarray:
        """Vertices of the unit ball of ||.||_Lip on R^M (qhull, then refined)."""
        m = self.size
        if m == 1:
            return np.array([[1.0], [-1.0]])
        if m > _MAX_VERTEX_DIM:
            raise InputError(f"vertex route limited to M <= {_MAX_VERTEX_DIM}")
        a = self.dual_constraints
        hs = HalfspaceIntersection(np.hstack([a, -np.ones((len(a), 1))]), np.zeros(m))
        raw = hs.intersections
        refined = []
        for v in raw:
            active = np.abs(a @ v - 1.0) < 1e-7
            sol, *_ = np.linalg.lstsq(a[active], np.ones(active.sum()), rcond=None)
            refined.append(sol)
        verts = np.unique(np.round(np.array(refined), 12), axis=0)
        verts.setflags(write=False)
        return verts


def _as_weights(weights, m=None, what="weights") -> np.ndarray:
    arr = np.asarray(weights, dtype=np.float64)
    if arr.ndim != 1:
        raise InputError(f"{what} must be a 1-D array")
    if m is not None and arr.shape[0] != m:
        raise InputError(f"{what} has length {arr.shape[0]}, expected {m}")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{what} must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class MixedStrategy:
    """Probability vector on a finite strategy space."""

    weights: np.ndarray = field()

    def __post_init__(self):
        w = _as_weights(self.weights, what="mixed strategy")
        if w.size < 1:
            raise InputError("mixed strategy must be non-empty")
        if np.any(w < 0):
            raise InputError("mixed strategy has negative weights", entry=int(np.argmin(w)))
        if abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise InputError("mixed strategy does not sum to 1", total=float(w.sum()))
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def vertex(cls, m: int, i: int) -> "MixedStrategy":
        w = np.zeros(m)
        w[i] = 1.0
        return cls(w)

    @classmethod
    def uniform(cls, m: int) -> "MixedStrategy":
        return cls(np.full(m, 1.0 / m))

    def __eq__(self, other):
        if not isinstance(other, MixedStrategy):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    __hash__ = None

    def to_list(self) -> list:
        return self.weights.tolist()


@dataclass(frozen=True, eq=False)
class ZeroMassMeasure:
    """Signed measure on U with total mass zero (the values of a strategy flux)."""

    weights: np.ndarray

    def __post_init__(self):
        w = _as_weights(self.weights, what="zero-mass measure").copy()
        if abs(w.sum()) > SIMPLEX_TOL:
            raise InputError("measure does not have zero mass", total=float(w.sum()))
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zero(cls, m: int) -> "ZeroMassMeasure":
        return cls(np.zeros(m))


def simplex_violations(lam, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Boolean mask of rows of ``lam`` (shape (n, M)) that are not in the simplex."""
    lam = np.atleast_2d(lam)
    bad = np.any(lam < 0.0, axis=1) | (np.abs(lam.sum(axis=1) - 1.0) > tol)
    return bad | ~np.all(np.isfinite(lam), axis=1)


def bl_norm(space: PureStrategySpace, mu) -> float:
    """BL norm of a signed measure, by the LP over (phi, s, l).

    maximise <phi, mu> subject to |phi_i| <= s, phi_i - phi_j <= l*d_ij, s + l <= 1.
    """
    m = space.size
    mu = _as_weights(mu, m, what="signed measure")
    if not np.any(mu):
        return 0.0
    n_var = m + 2
    rows, rhs = [], []
    for i in range(m):
        r = np.zeros(n_var)
        r[i], r[m] = 1.0, -1.0
        rows.append(r)
        r = np.zeros(n_var)
        r[i], r[m] = -1.0, -1.0
        rows.append(r)
        rhs += [0.0, 0.0]
    for i in range(m):
        for j in range(m):
            if i != j:
                r = np.zeros(n_var)
                r[i], r[j], r[m + 1] = 1.0, -1.0, -space.dist[i, j]
                rows.append(r)
                rhs.append(0.0)
    r = np.zeros(n_var)
    r[m] = r[m + 1] = 1.0
    rows.append(r)
    rhs.append(1.0)
    c = np.concatenate([-mu, [0.0, 0.0]])
    bounds = [(None, None)] * m + [(0.0, None), (0.0, None)]
    res = linprog(
        c,
        A_ub=np.array(rows),
        b_ub=np.array(rhs),
        bounds=bounds,
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        # phi = 0 is always feasible and the objective is bounded by sum|mu|
        raise RuntimeError(f"BL-norm LP failed unexpectedly: {res.message}")
    return max(0.0, float(-res.fun))


def bl_norm_batch(space: PureStrategySpace, mus) -> np.ndarray:
    """BL norms of many signed measures at once; ``mus`` has shape (..., M).

    Uses the support function of the dual unit ball, ``max_v <v, mu>`` over its
    vertices, so the whole batch is one matrix product.
    """
    mus = np.asarray(mus, dtype=np.float64)
    if mus.shape[-1] != space.size:
        raise InputError(f"last axis must have length {space.size}")
    if space.size > _MAX_VERTEX_DIM:
        flat = mus.reshape(-1, space.size)
        return np.array([bl_norm(space, mu) for mu in flat]).reshape(mus.shape[:-1])
    verts = space.dual_ball_vertices
    if space.size == 2 and verts.shape[0] <= 8:
        # tiny M: explicit loop over vertices beats a matmul with a 2-wide inner axis
        out = mus[..., 0] * verts[0, 0] + mus[..., 1] * verts[0, 1]
        for v in verts[1:]:
            out = np.maximum(out, mus[..., 0] * v[0] + mus[..., 1] * v[1])
        return np.maximum(out, 0.0)
    return np.maximum((mus @ verts.T).max(axis=-1), 0.0)


def w1_strategy(space: PureStrategySpace, a, b) -> float:
    """Order-1 Wasserstein distance between two mixed strategies on ``space``."""
    wa = a.weights if isinstance(a, MixedStrategy) else _as_weights(a)
    wb = b.weights if isinstance(b, MixedStrategy) else _as_weights(b)
    if wa.shape != (space.size,) or wb.shape != (space.size,):
        raise InputError(
            "mixed strategies must live on the given space",
            expected=space.size,
            got=[int(wa.shape[0]), int(wb.shape[0])],
        )
    if np.array_equal(wa, wb):
        return 0.0
    return transport_value(wa, wb, space.dist)


def convex_step(lam, flux, dt: float, theta: float):
    """Advance a mixed strategy by ``dt * flux`` written as a convex combination.

    lam + dt*flux = (1 - dt/theta) * lam + (dt/theta) * (lam + theta*flux), which
    stays in the simplex whenever lam + theta*flux does and dt <= theta.
    Accepts a single strategy or a batch of shape (n, M).
    """
    single = isinstance(lam, MixedStrategy)
    lam_arr = lam.weights if single else np.asarray(lam, dtype=np.float64)
    flux_arr = flux.weights if isinstance(flux, ZeroMassMeasure) else np.asarray(flux, dtype=np.float64)
    out = convex_step_array(np.atleast_2d(lam_arr), np.atleast_2d(flux_arr), dt, theta)
    if lam_arr.ndim == 1:
        out = out[0]
        return MixedStrategy(out) if single else out
    return out


def convex_step_array(lam: np.ndarray, flux: np.ndarray, dt: float, theta: float) -> np.ndarray:
    """Array kernel of :func:`convex_step`; rows are agents."""
    if not dt > 0 or not theta > 0:
        raise ContractViolation("dt and theta must be positive", dt=dt, theta=theta)
    if dt > theta:
        raise ContractViolation("time step exceeds theta", dt=dt, theta=theta)
    target = lam + theta * flux
    check_geometry(lam, target)
    r = dt / theta
    out = target.copy() if r == 1.0 else lam + r * (target - lam)
    neg = out < 0.0
    if np.any(neg):
        if np.any(out < -SIMPLEX_TOL):
            row, col = np.unravel_index(np.argmin(out), out.shape)
            raise GeometryViolation(
                "strategy update left the simplex",
                row=int(row),
                entry=int(col),
                value=float(out[row, col]),
            )
        rows = np.any(neg, axis=1)
        clipped = np.where(neg[rows], 0.0, out[rows])
        out[rows] = clipped / clipped.sum(axis=1, keepdims=True)
    drift = np.abs(out.sum(axis=1) - 1.0)
    if np.any(drift > SIMPLEX_TOL):
        row = int(np.argmax(drift))
        raise GeometryViolation(
            "strategy update lost unit mass", row=row, total=float(out[row].sum())
        )
    return out


def check_geometry(lam: np.ndarray, target: np.ndarray, states=None) -> None:
    """Raise :class:`GeometryViolation` if any row of ``target`` is outside the simplex."""
    low = target.min(axis=1)
    mass = np.abs(target.sum(axis=1) - 1.0)
    bad = (low < -SIMPLEX_TOL) | (mass > SIMPLEX_TOL) | ~np.all(np.isfinite(target), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad))
        entry = int(np.argmin(target[row]))
        details = {
            "row": row,
            "entry": entry,
            "value": float(target[row, entry]),
            "lambda": lam[row].tolist(),
            "lambda_plus_theta_flux": target[row].tolist(),
        }
        if states is not None:
            details["x"] = np.asarray(states)[row].tolist()
        raise GeometryViolation(
            f"lambda + theta*flux outside the simplex at entry {entry}", **details
        )
