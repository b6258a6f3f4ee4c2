"""Interaction fields (drift, diffusion, strategy flux) and their audits.

Every field component is a vectorised callable

    f(ens_x, ens_lam, x, lam) -> array

where ``(ens_x, ens_lam)`` (shapes (N, d), (N, M)) is the measure the agents
see and ``(x, lam)`` (shapes (q, d), (q, M)) is a batch of query states.
Drift returns (q, d), diffusion (q, d, m), flux (q, M) with rows summing to 0.

Row i of the output must depend only on row i of the query and on the
measure, with a summation order that does not change with q.  The engine
splits agents across workers and relies on this for bit-identical results.
Reductions over the ensemble axis should therefore be written on a
contiguous last axis (see :func:`weighted_mean`) rather than with matmul.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .agent_state import AgentState, Ensemble, state_distance_aligned, w_product
from .errors import ConfigError, GeometryViolation, InputError
from .strategy_space import (
    SIMPLEX_TOL,
    MixedStrategy,
    PureStrategySpace,
    bl_norm_batch,
    check_geometry,
)

FieldFn = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class FieldSet:
    drift: FieldFn
    diffusion: FieldFn
    flux: FieldFn
    theta: float
    declared_lipschitz: tuple | None = None
    measure_dependent: bool = True
    name: str = "custom"
    params: dict = field(default_factory=dict)
    debug: bool = False

    def __post_init__(self):
        if not (isinstance(self.theta, (int, float)) and self.theta > 0 and math.isfinite(self.theta)):
            raise InputError("theta must be a positive finite number", theta=self.theta)

    def evaluate(self, ens_x, ens_lam, x, lam):
        v = self.drift(ens_x, ens_lam, x, lam)
        sig = self.diffusion(ens_x, ens_lam, x, lam)
        t = self.flux(ens_x, ens_lam, x, lam)
        if self.debug:
            mass = np.abs(t.sum(axis=1))
            if np.any(mass > SIMPLEX_TOL):
                row = int(np.argmax(mass))
                raise GeometryViolation(
                    "strategy flux does not have zero mass", row=row, mass=float(t[row].sum())
                )
        return v, sig, t

    @classmethod
    def zero(cls, d: int, m: int, M: int, theta: float = 1.0) -> "FieldSet":
        return cls(
            drift=lambda X, L, x, lam: np.zeros((x.shape[0], d)),
            diffusion=lambda X, L, x, lam: np.zeros((x.shape[0], d, m)),
            flux=lambda X, L, x, lam: np.zeros((x.shape[0], M)),
            theta=theta,
            declared_lipschitz=(0.0, 0.0, 0.0),
            measure_dependent=False,
            name="zero",
        )


def weighted_mean(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Row-wise weighted average: weights (q, N), values (N, k) -> (q, k).

    The reduction runs over a contiguous last axis so that each output row is
    computed the same way whatever q is.
    """
    total = weights.sum(axis=1)
    prod = weights[:, None, :] * np.ascontiguousarray(values.T)[None, :, :]
    return prod.sum(axis=-1) / total[:, None]


def _sq_dists(x: np.ndarray, X: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - X[None, :, :]
    return (diff * diff).sum(axis=-1)


def _scaled_identity(q: int, d: int, m: int, scale) -> np.ndarray:
    eye = np.eye(d, m)
    scale = np.asarray(scale, dtype=np.float64)
    if scale.ndim == 0:
        return np.broadcast_to(scale * eye, (q, d, m)).copy()
    return scale[:, None, None] * eye[None, :, :]


# ---------------------------------------------------------------------------
# builtins

_DEFAULTS = {
    "strategy_mean_reversion": {
        "tau": 1.0,
        "coupling": 0.0,
        "drift_rate": 1.0,
        "drift_coupling": 0.0,
        "sigma": 0.0,
    },
    "leader_follower": {
        "kappa": 1.0,
        "leader_floor": 0.1,
        "confinement": 0.5,
        "sigma": 0.5,
        "tau": 0.5,
        "bandwidth": 1.0,
        "beta": 4.0,
    },
    "attraction_repulsion": {
        "attraction": 1.0,
        "repulsion": 2.0,
        "range": 0.5,
        "sigma": 0.3,
        "tau": 1.0,
        "bandwidth": 1.0,
    },
    "cbo_style": {
        "kappa": 1.0,
        "sigma": 0.7,
        "alpha": 10.0,
        "beta": 1.0,
        "tau": 0.5,
        "rastrigin_a": 10.0,
        "center": 1.0,
    },
}

# documented ranges; tau >= theta is checked separately against the field's theta
_RANGES = {
    "tau": (1e-12, math.inf),
    "coupling": (0.0, 1.0),
    "drift_rate": (0.0, math.inf),
    "drift_coupling": (0.0, 1.0),
    "sigma": (0.0, math.inf),
    "kappa": (0.0, math.inf),
    "leader_floor": (1e-6, math.inf),
    "confinement": (0.0, math.inf),
    "bandwidth": (1e-9, math.inf),
    "beta": (0.0, math.inf),
    "attraction": (0.0, math.inf),
    "repulsion": (0.0, math.inf),
    "range": (1e-9, math.inf),
    "alpha": (0.0, math.inf),
    "rastrigin_a": (0.0, math.inf),
    "center": (-math.inf, math.inf),
}

VARIANTS = tuple(_DEFAULTS)


@dataclass(frozen=True)
class BuiltinField:
    """Tag plus real-valued parameters of one of the shipped field families."""

    variant: str
    params: dict

    def resolved(self) -> dict:
        if self.variant not in _DEFAULTS:
            raise ConfigError(f"unknown field variant {self.variant!r}", known=list(VARIANTS))
        allowed = set(_DEFAULTS[self.variant])
        if self.variant == "strategy_mean_reversion":
            allowed.add("target")
        extra = sorted(set(self.params) - allowed)
        if extra:
            raise ConfigError(f"unknown parameters for {self.variant}: {extra}")
        out = dict(_DEFAULTS[self.variant])
        out.update(self.params)
        return out

    def check(self, theta: float) -> list:
        """Problems with the parameters, as human-readable strings (empty if fine)."""
        problems = []
        for key, value in self.resolved().items():
            if key == "target":
                continue
            lo, hi = _RANGES[key]
            if not (isinstance(value, (int, float)) and lo <= value <= hi):
                problems.append(f"{key}={value!r} outside [{lo}, {hi}]")
        tau = self.resolved().get("tau")
        if tau is not None and tau < theta:
            problems.append(f"tau={tau} < theta={theta}: flux may leave the simplex")
        return problems


def builtin_field(
    variant: str,
    params: dict | None = None,
    theta: float = 0.1,
    d: int = 1,
    m: int | None = None,
    M: int = 2,
    strict: bool = True,
) -> FieldSet:
    """Build one of the shipped fields.

    ``strict=False`` skips the range checks so that deliberately broken fields
    can be handed to :func:`validate_geometry`.
    """
    spec = BuiltinField(variant, dict(params or {}))
    p = spec.resolved()
    m = d if m is None else m
    if strict:
        problems = spec.check(theta)
        if problems:
            raise ConfigError(f"invalid {variant} parameters", problems=problems)
    build = {
        "strategy_mean_reversion": _mean_reversion,
        "leader_follower": _leader_follower,
        "attraction_repulsion": _attraction_repulsion,
        "cbo_style": _cbo_style,
    }[variant]
    return build(p, theta, d, m, M)


def _mean_reversion(p, theta, d, m, M):
    tau = p["tau"]
    c = p["coupling"]
    a = p["drift_rate"]
    b = p["drift_coupling"]
    s = p["sigma"]
    target = np.asarray(p.get("target", np.full(M, 1.0 / M)), dtype=np.float64)
    if target.shape != (M,) or np.any(target < 0) or abs(target.sum() - 1) > SIMPLEX_TOL:
        raise ConfigError("mean-reversion target must be a probability vector of length M")

    def drift(X, L, x, lam):
        if b == 0.0:
            return -a * x
        centre = X.mean(axis=0)
        return -a * (x - b * centre)

    def diffusion(X, L, x, lam):
        return _scaled_identity(x.shape[0], d, m, s)

    def flux(X, L, x, lam):
        goal = target if c == 0.0 else (1.0 - c) * target + c * L.mean(axis=0)
        return (goal[None, :] - lam) / tau

    return FieldSet(
        drift,
        diffusion,
        flux,
        theta,
        declared_lipschitz=(a * (1 + b), 0.0, (1 + c) / tau),
        measure_dependent=(c != 0.0 or b != 0.0),
        name="strategy_mean_reversion",
        params=dict(p, target=target.tolist()),
    )


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _leader_follower(p, theta, d, m, M):
    if M != 2:
        raise ConfigError("leader_follower needs exactly two pure strategies (F, L)", M=M)
    kappa, floor, gamma = p["kappa"], p["leader_floor"], p["confinement"]
    s, tau, h, beta = p["sigma"], p["tau"], p["bandwidth"], p["beta"]

    def drift(X, L, x, lam):
        # leadership-weighted centre of mass; followers are pulled towards it
        w = floor + L[:, 1]
        centre = (w[:, None] * X).sum(axis=0) / w.sum()
        return kappa * (1.0 - lam[:, 1:2]) * (centre[None, :] - x) - gamma * x

    def diffusion(X, L, x, lam):
        return _scaled_identity(x.shape[0], d, m, s)

    def flux(X, L, x, lam):
        kern = np.exp(-_sq_dists(x, X) / (2.0 * h * h))
        local = weighted_mean(kern, L[:, 1:2])[:, 0]
        lead = _logistic(beta * (local - 0.5))
        goal = np.stack([1.0 - lead, lead], axis=1)
        return (goal - lam) / tau

    return FieldSet(
        drift,
        diffusion,
        flux,
        theta,
        declared_lipschitz=None,
        measure_dependent=True,
        name="leader_follower",
        params=dict(p),
    )


def _attraction_repulsion(p, theta, d, m, M):
    a, r, rng_, s = p["attraction"], p["repulsion"], p["range"], p["sigma"]
    tau, h = p["tau"], p["bandwidth"]

    def drift(X, L, x, lam):
        diff = X[None, :, :] - x[:, None, :]
        sq = (diff * diff).sum(axis=-1)
        coef = a - r * np.exp(-sq / (rng_ * rng_))
        # mean over the ensemble axis, reduced along a contiguous last axis
        terms = np.ascontiguousarray(np.moveaxis(coef[:, :, None] * diff, 1, 2))
        return terms.sum(axis=-1) / X.shape[0]

    def diffusion(X, L, x, lam):
        return _scaled_identity(x.shape[0], d, m, s)

    def flux(X, L, x, lam):
        kern = np.exp(-_sq_dists(x, X) / (2.0 * h * h))
        return (weighted_mean(kern, L) - lam) / tau

    return FieldSet(
        drift,
        diffusion,
        flux,
        theta,
        declared_lipschitz=None,
        measure_dependent=True,
        name="attraction_repulsion",
        params=dict(p),
    )


def rastrigin(x: np.ndarray, a: float = 10.0, center: float = 0.0) -> np.ndarray:
    y = x - center
    return (y * y - a * np.cos(2.0 * np.pi * y) + a).sum(axis=-1)


def _cbo_style(p, theta, d, m, M):
    if M != 2:
        raise ConfigError("cbo_style needs two pure strategies (explore, exploit)", M=M)
    kappa, s, alpha, beta = p["kappa"], p["sigma"], p["alpha"], p["beta"]
    tau, ra, centre0 = p["tau"], p["rastrigin_a"], p["center"]

    def consensus(X):
        fx = rastrigin(X, ra, centre0)
        w = np.exp(-alpha * (fx - fx.min()))
        return (w[:, None] * X).sum(axis=0) / w.sum()

    def drift(X, L, x, lam):
        return -kappa * (x - consensus(X)[None, :])

    def diffusion(X, L, x, lam):
        # anisotropic CBO noise, amplified for agents that mostly explore
        spread = np.abs(x - consensus(X)[None, :]) * (s * (1.0 + lam[:, 0:1]))
        eye = np.eye(d, m)
        return spread[:, :, None] * eye[None, :, :]

    def flux(X, L, x, lam):
        cons = consensus(X)
        gap = rastrigin(x, ra, centre0) - rastrigin(cons[None, :], ra, centre0)[0]
        exploit = np.exp(-beta * np.maximum(gap, 0.0))
        goal = np.stack([1.0 - exploit, exploit], axis=1)
        return (goal - lam) / tau

    return FieldSet(
        drift,
        diffusion,
        flux,
        theta,
        declared_lipschitz=None,
        measure_dependent=True,
        name="cbo_style",
        params=dict(p),
    )


# ---------------------------------------------------------------------------
# operations


def apply_G(f: FieldSet, sigma_emp: Ensemble, y: AgentState) -> MixedStrategy:
    """lambda + theta * flux for one state against an empirical measure."""
    x = y.position[None, :]
    lam = y.strategy.weights[None, :]
    t = f.flux(sigma_emp.positions, sigma_emp.strategies, x, lam)
    target = lam + f.theta * t
    check_geometry(lam, target, states=x)
    out = target[0].copy()
    out[out < 0] = 0.0
    return MixedStrategy(out / out.sum())


@dataclass
class StateSampler:
    """Random ensembles and states used by the field audits."""

    d: int
    M: int
    ensemble_size: int = 16
    position_scale: float = 2.0
    vary_measure: bool = True
    vary_position: bool = True
    vary_strategy: bool = True

    def ensemble(self, rng) -> Ensemble:
        n = self.ensemble_size
        x = self.position_scale * rng.standard_normal((n, self.d))
        lam = rng.dirichlet(np.ones(self.M), size=n)
        # some agents sit exactly on vertices
        corner = rng.random(n) < 0.25
        lam[corner] = np.eye(self.M)[rng.integers(0, self.M, corner.sum())]
        return Ensemble(x, lam)

    def states(self, rng, n: int):
        x = self.position_scale * rng.standard_normal((n, self.d))
        alpha = np.where(rng.random(n) < 0.5, 1.0, 0.2)
        lam = np.array([rng.dirichlet(np.full(self.M, a)) for a in alpha])
        return x, lam

    def structured(self, rng):
        """Simplex vertices, edge midpoints and the barycentre."""
        eye = np.eye(self.M)
        pts = [eye[i] for i in range(self.M)]
        for i in range(self.M):
            for j in range(i + 1, self.M):
                pts.append(0.5 * (eye[i] + eye[j]))
        pts.append(np.full(self.M, 1.0 / self.M))
        lam = np.array(pts)
        x = self.position_scale * rng.standard_normal((lam.shape[0], self.d))
        return x, lam

    def pair(self, rng, space: PureStrategySpace):
        """Two (measure, state) inputs; each coordinate perturbed at a random scale."""
        ens1 = self.ensemble(rng)
        x1, lam1 = self.states(rng, 1)
        eps = 10.0 ** rng.uniform(-3, 0)
        if self.vary_measure:
            ens2 = self.ensemble(rng) if rng.random() < 0.3 else _perturb(ens1, rng, eps)
        else:
            ens2 = ens1
        x2 = x1 + eps * rng.standard_normal(x1.shape) if self.vary_position else x1.copy()
        if self.vary_strategy:
            lam2 = (1 - eps) * lam1 + eps * rng.dirichlet(np.ones(self.M))[None, :]
        else:
            lam2 = lam1.copy()
        return (ens1, x1, lam1), (ens2, x2, lam2)


def _perturb(ens: Ensemble, rng, eps: float) -> Ensemble:
    x = ens.positions + eps * rng.standard_normal(ens.positions.shape)
    mix = rng.dirichlet(np.ones(ens.M), size=ens.N)
    lam = (1 - eps) * ens.strategies + eps * mix
    return Ensemble(x, lam / lam.sum(axis=1, keepdims=True))


@dataclass
class GeometryReport:
    passed: bool
    worst_margin: float
    worst_mass_error: float
    n_samples: int
    seed: int
    counterexample: dict | None = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "worst_mass_error": self.worst_mass_error,
            "n_samples": self.n_samples,
            "seed": self.seed,
            "counterexample": self.counterexample,
        }


def validate_geometry(f: FieldSet, sampler: StateSampler, n_samples: int, seed: int, batch: int = 512) -> GeometryReport:
    """Check lambda + theta*flux in the simplex over sampled (measure, state) inputs.

    The margin of a sample is ``min_i (lambda + theta*flux)_i``; the report
    carries the worst one and, on failure, the offending input.
    """
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    worst = math.inf
    worst_mass = 0.0
    counter = None
    done = 0
    while done < n_samples:
        ens = sampler.ensemble(rng)
        xs, ls = sampler.structured(rng)
        xr, lr = sampler.states(rng, max(0, batch - xs.shape[0]))
        x = np.vstack([xs, xr])[: n_samples - done]
        lam = np.vstack([ls, lr])[: n_samples - done]
        t = f.flux(ens.positions, ens.strategies, x, lam)
        target = lam + f.theta * t
        margins = target.min(axis=1)
        mass = np.abs(target.sum(axis=1) - 1.0)
        k = int(np.argmin(margins))
        if margins[k] < worst:
            worst = float(margins[k])
            entry = int(np.argmin(target[k]))
            counter = {
                "x": x[k].tolist(),
                "lambda": lam[k].tolist(),
                "entry": entry,
                "value": float(target[k, entry]),
                "is_vertex": bool(np.isclose(lam[k].max(), 1.0)),
            }
        worst_mass = max(worst_mass, float(mass.max()))
        done += x.shape[0]
    passed = worst >= -SIMPLEX_TOL and worst_mass <= SIMPLEX_TOL
    return GeometryReport(
        passed=passed,
        worst_margin=worst,
        worst_mass_error=worst_mass,
        n_samples=done,
        seed=seed,
        counterexample=None if passed else counter,
    )


@dataclass
class LipschitzEstimate:
    v: float
    sigma: float
    flux: float
    n_pairs: int
    skipped: int

    def as_tuple(self):
        return (self.v, self.sigma, self.flux)


def estimate_lipschitz(
    f: FieldSet, space: PureStrategySpace, sampler: StateSampler, n_pairs: int, seed: int
) -> LipschitzEstimate:
    """Empirical lower bounds on (L_v, L_sigma, L_T) from sampled input pairs.

    Pair k is drawn from its own generator seeded by (seed, k), so a larger
    ``n_pairs`` only adds pairs and the estimates never decrease.
    """
    if n_pairs < 2:
        raise InputError("n_pairs must be >= 2")
    best = np.zeros(3)
    skipped = 0
    for k in range(n_pairs):
        rng = np.random.default_rng([seed, k])
        (e1, x1, l1), (e2, x2, l2) = sampler.pair(rng, space)
        denom = float(state_distance_aligned(space, x1, l1, x2, l2)[0])
        if sampler.vary_measure and e1 is not e2:
            denom += w_product(1, e1, e2, space)
        if denom <= 0.0:
            skipped += 1
            continue
        v1, s1, t1 = f.evaluate(e1.positions, e1.strategies, x1, l1)
        v2, s2, t2 = f.evaluate(e2.positions, e2.strategies, x2, l2)
        num = np.array(
            [
                np.linalg.norm(v1 - v2),
                np.linalg.norm(s1 - s2),
                float(bl_norm_batch(space, (t1 - t2)[0])),
            ]
        )
        np.maximum(best, num / denom, out=best)
    est = LipschitzEstimate(float(best[0]), float(best[1]), float(best[2]), n_pairs, skipped)
    if f.declared_lipschitz is not None:
        names = ("L_v", "L_sigma", "L_T")
        for name, seen, declared in zip(names, est.as_tuple(), f.declared_lipschitz):
            if declared is not None and seen > declared * (1 + 1e-9):
                warnings.warn(
                    f"{f.name}: empirical {name} = {seen:.4g} exceeds declared {declared:.4g}",
                    stacklevel=2,
                )
    return est
