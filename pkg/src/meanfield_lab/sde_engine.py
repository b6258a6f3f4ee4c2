"""Euler-Maruyama solver for the N-particle system with strategy components.

Positions follow  dX = v dt + sigma dB  (explicit Euler-Maruyama); strategies
follow  dLambda = T dt  through :func:`convex_step_array`, which keeps them in
the simplex whenever dt <= theta.  All agents see the pre-step ensemble.

Noise and initial data come from per-agent counter-based streams keyed by
(seed, role, agent), so a run is reproducible bit for bit regardless of how
agents are split across workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .agent_state import Ensemble, TrajectoryBundle
from .errors import ConfigError, DivergenceError, GeometryViolation, InputError
from .fields import FieldSet
from .strategy_space import PureStrategySpace, bl_norm_batch, convex_step_array

# stream roles: which population an (agent index) refers to
ROLE_AGENTS = 0
ROLE_LAW = 1
ROLE_REFERENCE = 2

_NOISE_TAG = 0x6E6F
_INIT_TAG = 0x696E


@dataclass(frozen=True)
class BrownianSource:
    """Brownian increments indexed by (agent, step).

    Agent ``a`` owns the generator seeded by (seed, role, a); its k-th
    increment is the k-th block of m standard normals, times sqrt(dt).
    """

    seed: int
    role: int = ROLE_AGENTS

    def _rng(self, agent: int):
        return np.random.default_rng([_NOISE_TAG, self.seed, self.role, int(agent)])

    def increments(self, agents, K: int, m: int, dt: float) -> np.ndarray:
        """Array of shape (len(agents), K, m)."""
        agents = list(agents)
        out = np.empty((len(agents), K, m))
        for row, a in enumerate(agents):
            out[row] = self._rng(a).standard_normal((K, m))
        out *= math.sqrt(dt)
        return out

    def increment(self, agent: int, step: int, m: int, dt: float) -> np.ndarray:
        z = self._rng(agent).standard_normal((step + 1, m))[step]
        return z * math.sqrt(dt)


@dataclass(frozen=True)
class InitialLaw:
    """i.i.d. initial states: Gaussian positions and Dirichlet (or fixed) strategies.

    Agent ``a`` of population ``role`` gets its state from its own generator,
    so the initial ensemble for N agents is a prefix of the one for N' > N.
    """

    d: int
    M: int
    position_mean: tuple = (0.0,)
    position_std: float = 1.0
    dirichlet_alpha: float = 1.0
    strategy: tuple | None = None

    def __post_init__(self):
        mean = np.broadcast_to(np.asarray(self.position_mean, dtype=float), (self.d,))
        object.__setattr__(self, "position_mean", tuple(mean.tolist()))
        if self.position_std < 0:
            raise ConfigError("position_std must be >= 0")
        if self.strategy is not None:
            s = np.asarray(self.strategy, dtype=float)
            if s.shape != (self.M,) or np.any(s < 0) or abs(s.sum() - 1) > 1e-12:
                raise ConfigError("initial strategy must be a probability vector of length M")
            object.__setattr__(self, "strategy", tuple(s.tolist()))
        elif self.dirichlet_alpha <= 0:
            raise ConfigError("dirichlet_alpha must be positive")

    def draw(self, seed: int, agents, role: int = ROLE_AGENTS) -> Ensemble:
        agents = list(agents)
        x = np.empty((len(agents), self.d))
        lam = np.empty((len(agents), self.M))
        mean = np.asarray(self.position_mean)
        for row, a in enumerate(agents):
            rng = np.random.default_rng([_INIT_TAG, seed, role, int(a)])
            x[row] = mean + self.position_std * rng.standard_normal(self.d)
            if self.strategy is None:
                lam[row] = rng.dirichlet(np.full(self.M, self.dirichlet_alpha))
            else:
                lam[row] = self.strategy
        return Ensemble(x, lam)

    def to_dict(self) -> dict:
        return {
            "position_mean": list(self.position_mean),
            "position_std": self.position_std,
            "dirichlet_alpha": self.dirichlet_alpha,
            "strategy": None if self.strategy is None else list(self.strategy),
        }


@dataclass(frozen=True)
class SimConfig:
    d: int
    m: int
    M: int
    N: int
    T: float
    K: int
    theta: float
    seed: int = 0

    def __post_init__(self):
        for name in ("d", "m", "M", "N", "K"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ConfigError(f"{name} must be a positive integer", value=value)
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ConfigError("T must be positive", T=self.T)
        if not self.theta > 0:
            raise ConfigError("theta must be positive", theta=self.theta)
        if self.dt > self.theta * (1 + 1e-12):
            raise ConfigError(
                "time step T/K exceeds theta; strategies could leave the simplex",
                dt=self.dt,
                theta=self.theta,
            )

    @property
    def dt(self) -> float:
        return self.T / self.K

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.K + 1) * self.dt

    def replace(self, **changes) -> "SimConfig":
        data = {k: getattr(self, k) for k in ("d", "m", "M", "N", "T", "K", "theta", "seed")}
        data.update(changes)
        return SimConfig(**data)

    def check_field(self, f: FieldSet) -> None:
        if f.theta != self.theta:
            raise ConfigError("field theta differs from the simulation theta", field=f.theta, sim=self.theta)


def default_workers() -> int:
    env = os.environ.get("MEANFIELD_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


class _Stepper:
    """Evaluates one Euler step, optionally splitting agents across threads."""

    def __init__(self, f: FieldSet, dt: float, workers: int = 1):
        self.f = f
        self.dt = dt
        self.workers = max(1, int(workers))
        self.pool = ThreadPoolExecutor(self.workers) if self.workers > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _chunk(self, measure, x, lam, dB, lo, hi):
        X, L = measure
        xs, ls = x[lo:hi], lam[lo:hi]
        v, sig, t = self.f.evaluate(X, L, xs, ls)
        noise = (sig * dB[lo:hi, None, :]).sum(axis=-1)
        x_new = xs + v * self.dt + noise
        try:
            lam_new = convex_step_array(ls, t, self.dt, self.f.theta)
        except GeometryViolation as exc:
            exc.details["agent"] = lo + exc.details.get("row", 0)
            raise
        return x_new, lam_new

    def __call__(self, measure, x, lam, dB):
        n = x.shape[0]
        if self.pool is None or n < 2:
            return self._chunk(measure, x, lam, dB, 0, n)
        bounds = np.linspace(0, n, min(self.workers, n) + 1).astype(int)
        jobs = [
            self.pool.submit(self._chunk, measure, x, lam, dB, lo, hi)
            for lo, hi in zip(bounds[:-1], bounds[1:])
        ]
        parts = [j.result() for j in jobs]
        return np.vstack([p[0] for p in parts]), np.vstack([p[1] for p in parts])


def step(states: Ensemble, f: FieldSet, noise: np.ndarray, dt: float, workers: int = 1) -> Ensemble:
    """One synchronous Euler step of the N-particle system.

    ``noise`` holds the Brownian increments of this step, shape (N, m).
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim != 2 or noise.shape[0] != states.N:
        raise InputError("noise must have shape (N, m)")
    with _Stepper(f, dt, workers) as stepper:
        x, lam = stepper((states.positions, states.strategies), states.positions, states.strategies, noise)
    bad = ~np.all(np.isfinite(x), axis=1)
    if np.any(bad):
        raise DivergenceError("non-finite position", last_finite=states, agent=int(np.argmax(bad)), step=0)
    return Ensemble(x, lam, check=False)


def _integrate(init: Ensemble, f: FieldSet, dB: np.ndarray, dt: float, frozen=None, workers=1, store=True):
    """Shared time loop.  ``frozen`` is a TrajectoryBundle whose marginals replace
    the live ensemble as the measure (the auxiliary problem)."""
    n, K, _ = dB.shape
    x = init.positions.copy()
    lam = init.strategies.copy()
    if store:
        xs = np.empty((n, K + 1, x.shape[1]))
        ls = np.empty((n, K + 1, lam.shape[1]))
        xs[:, 0], ls[:, 0] = x, lam
    with _Stepper(f, dt, workers) as stepper:
        for k in range(K):
            measure = (x, lam) if frozen is None else frozen.marginal_arrays(k)
            try:
                x_new, lam_new = stepper(measure, x, lam, dB[:, k, :])
            except GeometryViolation as exc:
                exc.details["step"] = k
                raise
            bad = ~np.all(np.isfinite(x_new), axis=1)
            if np.any(bad):
                raise DivergenceError(
                    f"position became non-finite at step {k}",
                    last_finite=Ensemble(x, lam, check=False),
                    agent=int(np.argmax(bad)),
                    step=k,
                )
            x, lam = x_new, lam_new
            if store:
                xs[:, k + 1], ls[:, k + 1] = x, lam
    if not store:
        xs = np.stack([init.positions, x], axis=1)
        ls = np.stack([init.strategies, lam], axis=1)
    return xs, ls


def solve_n_particle(
    init: Ensemble,
    f: FieldSet,
    cfg: SimConfig,
    workers: int = 1,
    noise: np.ndarray | None = None,
    store_path: bool = True,
) -> TrajectoryBundle:
    """Integrate the N-particle system over cfg's grid.

    Increments come from ``BrownianSource(cfg.seed)`` unless ``noise`` (shape
    (N, K, m)) is given.  With ``store_path=False`` only t=0 and t=T are kept.
    """
    if init.N != cfg.N or init.d != cfg.d or init.M != cfg.M:
        raise InputError("initial ensemble does not match the configuration")
    cfg.check_field(f)
    if noise is None:
        noise = BrownianSource(cfg.seed, ROLE_AGENTS).increments(range(cfg.N), cfg.K, cfg.m, cfg.dt)
    xs, ls = _integrate(init, f, noise, cfg.dt, workers=workers, store=store_path)
    times = cfg.times if store_path else np.array([0.0, cfg.T])
    return TrajectoryBundle(times, xs, ls)


def solve_frozen(
    init: Ensemble,
    f: FieldSet,
    frozen: TrajectoryBundle,
    cfg: SimConfig,
    noise: np.ndarray,
    workers: int = 1,
) -> TrajectoryBundle:
    """Independent single-agent paths driven by the marginals of ``frozen``."""
    if not np.allclose(frozen.times, cfg.times, rtol=0, atol=1e-12 * max(1.0, cfg.T)):
        raise InputError("frozen law lives on a different time grid")
    if frozen.d != init.d or frozen.M != init.M:
        raise InputError("frozen law lives on a different state space")
    cfg.check_field(f)
    xs, ls = _integrate(init, f, noise, cfg.dt, frozen=frozen, workers=workers)
    return TrajectoryBundle(cfg.times, xs, ls)


def sup_moment(bundle: TrajectoryBundle, p: int, space: PureStrategySpace) -> float:
    """Monte Carlo estimate of E[ sup over grid of ||Y_t||^p ] with the product norm."""
    if p not in (2, 4):
        raise InputError("p must be 2 or 4", p=p)
    spatial = np.sqrt((bundle.positions**2).sum(axis=-1))
    strat = bl_norm_batch(space, bundle.strategies)
    return float(((spatial + strat).max(axis=1) ** p).mean())
