"""Experiment configuration: a versioned JSON document with strict keys.

    {
      "schema_version": 1,
      "seed": 0,
      "space": {"labels": [...], "dist": [[...]]},
      "field": {"variant": "leader_follower", "params": {...}},
      "theta": 0.5,
      "sim": {"d": 2, "m": 2, "N": 64, "T": 1.0, "K": 200},
      "init": {"position_mean": [0.0], "position_std": 1.0, "dirichlet_alpha": 1.0, "strategy": null},
      "experiment": {"kind": "simulate", ...knobs}
    }

M is the size of the strategy space.  ``init`` and the experiment knobs are
optional and filled with defaults on parse, so parse(serialize(parse(x)))
equals parse(x).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, InputError
from .fields import BuiltinField, FieldSet, builtin_field
from .sde_engine import InitialLaw, SimConfig
from .strategy_space import PureStrategySpace

SCHEMA_VERSION = 1
EXPERIMENTS = ("simulate", "meanfield", "chaos", "validate")

_TOP_KEYS = {"schema_version", "seed", "space", "field", "theta", "sim", "init", "experiment"}
_FIELD_KEYS = {"variant", "params"}
_SIM_KEYS = {"d", "m", "N", "T", "K"}
_INIT_KEYS = {"position_mean", "position_std", "dirichlet_alpha", "strategy"}
_KNOBS = {
    "simulate": {},
    "meanfield": {"tol": 1e-3, "max_iter": 20},
    "chaos": {
        "n_grid": [8, 16, 32, 64, 128],
        "reps": 64,
        "law_factor": 4,
        "law_tol": 1e-4,
        "law_max_iter": 20,
        "reference_w2": False,
    },
    "validate": {"n_samples": 10_000, "n_pairs": 2000},
}


def _reject_unknown(data: dict, allowed: set, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"unknown keys in {where}: {extra}", where=where, keys=extra)


def _require(data: dict, keys, where: str):
    missing = [k for k in keys if k not in data]
    if missing:
        raise ConfigError(f"missing keys in {where}: {missing}", where=where, keys=missing)


@dataclass(frozen=True)
class ExperimentConfig:
    space: PureStrategySpace
    field_spec: BuiltinField
    theta: float
    sim: dict
    init: InitialLaw
    kind: str = "simulate"
    knobs: dict = field(default_factory=dict)
    seed: int = 0
    schema_version: int = SCHEMA_VERSION

    @property
    def M(self) -> int:
        return self.space.size

    def sim_config(self, **changes) -> SimConfig:
        data = dict(self.sim, M=self.M, theta=self.theta, seed=self.seed)
        data.update(changes)
        return SimConfig(**data)

    def build_field(self, strict: bool = True) -> FieldSet:
        return builtin_field(
            self.field_spec.variant,
            self.field_spec.params,
            theta=self.theta,
            d=self.sim["d"],
            m=self.sim["m"],
            M=self.M,
            strict=strict,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        _reject_unknown(data, _TOP_KEYS, "config")
        _require(data, ["schema_version", "space", "field", "theta", "sim"], "config")
        if data["schema_version"] != SCHEMA_VERSION:
            raise ConfigError(
                f"unsupported schema_version {data['schema_version']!r}", expected=SCHEMA_VERSION
            )
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer", seed=seed)
        try:
            space = PureStrategySpace.from_dict(data["space"])
        except InputError as exc:
            raise ConfigError(f"space: {exc}") from None

        fld = data["field"]
        _reject_unknown(fld, _FIELD_KEYS, "field")
        _require(fld, ["variant"], "field")
        theta = data["theta"]
        if not isinstance(theta, (int, float)) or not theta > 0 or not math.isfinite(theta):
            raise ConfigError("theta must be a positive number", theta=theta)
        spec = BuiltinField(fld["variant"], dict(fld.get("params", {})))
        spec.resolved()

        sim = data["sim"]
        _reject_unknown(sim, _SIM_KEYS, "sim")
        _require(sim, sorted(_SIM_KEYS), "sim")

        init_data = dict(data.get("init", {}))
        _reject_unknown(init_data, _INIT_KEYS, "init")
        init = InitialLaw(
            d=sim["d"],
            M=space.size,
            position_mean=tuple(init_data.get("position_mean", [0.0])),
            position_std=float(init_data.get("position_std", 1.0)),
            dirichlet_alpha=float(init_data.get("dirichlet_alpha", 1.0)),
            strategy=None if init_data.get("strategy") is None else tuple(init_data["strategy"]),
        )

        exp = dict(data.get("experiment", {"kind": "simulate"}))
        kind = exp.pop("kind", None)
        if kind not in EXPERIMENTS:
            raise ConfigError(f"experiment.kind must be one of {list(EXPERIMENTS)}", kind=kind)
        _reject_unknown(exp, set(_KNOBS[kind]), f"experiment ({kind})")
        knobs = dict(_KNOBS[kind])
        knobs.update(exp)

        cfg = cls(space, spec, float(theta), dict(sim), init, kind, knobs, seed)
        cfg.sim_config()  # revalidates dt <= theta
        return cfg

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "seed": self.seed,
            "space": self.space.to_dict(),
            "field": {
                "variant": self.field_spec.variant,
                "params": dict(self.field_spec.params),
            },
            "theta": self.theta,
            "sim": dict(self.sim),
            "init": self.init.to_dict(),
            "experiment": {"kind": self.kind, **self.knobs},
        }

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from None
        return cls.from_json(text)
