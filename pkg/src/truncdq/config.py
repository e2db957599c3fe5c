"""Run configuration: JSON schema, dataclass wrapper and environment factory."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from truncdq import rng as rngmod
from truncdq.envs.queue import QueueConfig, build_queue
from truncdq.envs.random_env import random_finite
from truncdq.envs.rideshare import RideshareConfig, RideshareSim
from truncdq.envs.two_state import TwoStateConfig, build_two_state
from truncdq.mdp import Bernoulli, ConfigurationError, Switchback

ENV_TYPES = ("two_state", "queue", "rideshare", "random_finite")
ESTIMATORS = (
    "dm",
    "truncated_dq",
    "untruncated_dq",
    "truncated_dq_blocks",
    "switchback_bc",
    "model_ope",
    "stationary_dq",
)

_K = {"oneOf": [{"type": "integer", "minimum": 0}, {"const": "T"}]}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "truncdq run config",
    "type": "object",
    "additionalProperties": False,
    "required": ["env"],
    "properties": {
        "env": {
            "type": "object",
            "additionalProperties": False,
            "required": ["type"],
            "properties": {
                "type": {"enum": list(ENV_TYPES)},
                "params": {"type": "object"},
            },
        },
        "design": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy": {"enum": ["bernoulli", "switchback"]},
                "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "block_len": {"type": "integer", "minimum": 1},
            },
        },
        "estimators": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["name"],
                "properties": {
                    "name": {"enum": list(ESTIMATORS)},
                    "k": {"oneOf": [_K, {"type": "array", "items": _K, "minItems": 1}]},
                    "burn_in": {"type": "number", "minimum": 0},
                    "block_len": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "replications": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "regenerate_env_per_trial": {"type": "boolean"},
        "truth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["exact", "mc", "none"]},
                "reps": {"type": "integer", "minimum": 2},
                "paired": {"type": "boolean"},
                "ks": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
        },
        "env_grid": {
            "oneOf": [
                {"type": "null"},
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["param", "values"],
                    "properties": {
                        "param": {"type": "string"},
                        "values": {"type": "array", "minItems": 1},
                    },
                },
            ]
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}},
        },
    },
}

DEFAULTS = {
    "design": {"policy": "bernoulli", "theta": 0.5, "block_len": 1},
    "estimators": [{"name": "dm"}],
    "replications": 1,
    "master_seed": 0,
    "regenerate_env_per_trial": False,
    "truth": {"method": "exact", "reps": 100, "paired": True, "ks": []},
    "env_grid": None,
    "output": {"dir": "out"},
}


def _format_error(err: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    return f"field {where}: {err.message}"


def validate_dict(d: dict) -> None:
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(d), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigurationError("invalid config:\n  " + "\n  ".join(_format_error(e) for e in errors))


@dataclass
class RunConfig:
    env: dict
    design: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["design"]))
    estimators: list = field(default_factory=lambda: copy.deepcopy(DEFAULTS["estimators"]))
    replications: int = 1
    master_seed: int = 0
    regenerate_env_per_trial: bool = False
    truth: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["truth"]))
    env_grid: dict | None = None
    output: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS["output"]))

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        validate_dict(d)
        full = copy.deepcopy(DEFAULTS)
        for key, val in d.items():
            if isinstance(val, dict) and isinstance(full.get(key), dict):
                full[key].update(copy.deepcopy(val))
            else:
                full[key] = copy.deepcopy(val)
        full["env"].setdefault("params", {})
        cfg = cls(**full)
        cfg.check()
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_json(Path(path).read_text())

    def to_dict(self) -> dict:
        return {
            "env": copy.deepcopy(self.env),
            "design": copy.deepcopy(self.design),
            "estimators": copy.deepcopy(self.estimators),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "regenerate_env_per_trial": self.regenerate_env_per_trial,
            "truth": copy.deepcopy(self.truth),
            "env_grid": copy.deepcopy(self.env_grid),
            "output": copy.deepcopy(self.output),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    # ------------------------------------------------------------------

    def env_sections(self) -> list[tuple[object, dict]]:
        """(grid value, env section) pairs; a single pair with value None without a grid."""
        if not self.env_grid:
            return [(None, self.env)]
        out = []
        for v in self.env_grid["values"]:
            sec = copy.deepcopy(self.env)
            sec["params"][self.env_grid["param"]] = v
            out.append((v, sec))
        return out

    def check(self) -> None:
        """Semantic checks beyond the schema: known params, k <= T - 1, truth method."""
        for _, sec in self.env_sections():
            T = env_horizon(sec)
            for est in self.estimators:
                ks = est.get("k", [])
                ks = ks if isinstance(ks, list) else [ks]
                for k in ks:
                    if k != "T" and T is not None and est["name"] != "truncated_dq_blocks" and k > T - 1:
                        raise ConfigurationError(f"estimator {est['name']}: k={k} exceeds T-1={T - 1}")
                if est["name"] in ("truncated_dq", "truncated_dq_blocks") and not ks:
                    raise ConfigurationError(f"estimator {est['name']} needs k")
                if est["name"] == "switchback_bc" and "burn_in" not in est:
                    raise ConfigurationError("estimator switchback_bc needs burn_in")
        if self.env["type"] == "rideshare" and self.truth["method"] == "exact":
            raise ConfigurationError(
                "exact truth is unavailable for the ride-share simulator; use truth.method = \"mc\""
            )
        if self.design["policy"] == "switchback" and "block_len" not in self.design:
            raise ConfigurationError("switchback design needs block_len")

    def policy(self):
        d = self.design
        if d["policy"] == "switchback":
            return Switchback(int(d["block_len"]), float(d["theta"]))
        return Bernoulli(float(d["theta"]))


# ----------------------------------------------------------------------
# environment factory

_PARAM_TYPES = {
    "two_state": TwoStateConfig,
    "queue": QueueConfig,
    "rideshare": RideshareConfig,
}


def _typed(cls, params: dict):
    known = set(cls.__dataclass_fields__)
    bad = sorted(set(params) - known)
    if bad:
        raise ConfigurationError(f"unknown {cls.__name__} field(s): {', '.join(bad)}")
    p = {k: tuple(v) if isinstance(v, list) else v for k, v in params.items()}
    return cls(**p)


def env_horizon(section: dict) -> int | None:
    """Horizon of a finite env section without building it; None for ride-share."""
    kind, params = section["type"], section.get("params", {})
    if kind == "two_state":
        return _typed(TwoStateConfig, params).horizon
    if kind == "queue":
        return _typed(QueueConfig, params).horizon
    if kind == "random_finite":
        return int(params.get("horizon", 20))
    if kind == "rideshare":
        _typed(RideshareConfig, params)
        return None
    raise ConfigurationError(f"unknown env type {kind!r}")


def trial_env_seed(master_seed: int, trial: int) -> int:
    """Env-building seed for one trial, derived from (master_seed, trial, ENV)."""
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(int(trial), rngmod.ENV))
    return int(ss.generate_state(1, np.uint64)[0])


def make_env(section: dict, seed: int | None = None):
    """Build a NonstationaryMdp (finite types) or a RideshareSim.

    ``seed`` overrides the section's own seed for randomly generated envs.
    """
    kind, params = section["type"], dict(section.get("params", {}))
    if kind == "two_state":
        if seed is not None:
            params["seed"] = seed
        return build_two_state(_typed(TwoStateConfig, params))
    if kind == "queue":
        return build_queue(_typed(QueueConfig, params))
    if kind == "rideshare":
        return RideshareSim(_typed(RideshareConfig, params))
    if kind == "random_finite":
        allowed = {"num_states", "horizon", "seed", "concentration", "reward_noise", "noise_scale"}
        bad = sorted(set(params) - allowed)
        if bad:
            raise ConfigurationError(f"unknown random_finite field(s): {', '.join(bad)}")
        if seed is not None:
            params["seed"] = seed
        return random_finite(
            int(params.get("num_states", 3)),
            int(params.get("horizon", 20)),
            int(params.get("seed", 0)),
            float(params.get("concentration", 1.0)),
            params.get("reward_noise", "none"),
            float(params.get("noise_scale", 0.0)),
        )
    raise ConfigurationError(f"unknown env type {kind!r}")
