"""Experiment configuration: strict YAML schema, hashing, round-trip.

Unknown keys are errors rather than warnings so a typo cannot silently
change an experiment.  parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import yaml

from .problems import make_problem
from .training import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULT_GRIDS = {
    "ode": [201],
    "heat": [65, 33],
    "burgers": [65, 33],
    "allen-cahn": [65, 65],
}

SLICE_LOCATIONS = {
    "ode": [[-1.0], [0.0], [1.0]],
    "heat": [[-0.25, 0.0], [0.0, 0.0], [0.25, 0.0]],
    "burgers": [[-0.25, 0.0], [0.0, 0.0], [0.25, 0.0]],
    "allen-cahn": [[0.0, -1.0], [-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
}


@dataclass
class EvalConfig:
    grid: Optional[list] = None  # nodes per coordinate; problem default if None
    z_count: int = 1000
    w1_samples: int = 2000
    slice_z_count: int = 10_000
    residual_samples: int = 2000

    def __post_init__(self):
        for name in ("z_count", "w1_samples", "slice_z_count", "residual_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"eval.{name} must be positive")


@dataclass
class SweepSpec:
    key: str
    values: list

    VALID_KEYS = ("m", "n", "k", "W_f", "D_f", "W_g", "D_g", "lambda", "sigma")

    def __post_init__(self):
        if self.key not in self.VALID_KEYS:
            raise ConfigError(f"sweep.key must be one of {self.VALID_KEYS}, got {self.key!r}")
        if not self.values:
            raise ConfigError("sweep.values must be nonempty")
        if list(self.values) != sorted(self.values):
            raise ConfigError("sweep.values must be strictly increasing")
        if len(set(self.values)) != len(self.values):
            raise ConfigError("sweep.values must be strictly increasing")


@dataclass
class ExperimentConfig:
    problem: str
    sigma: object = 0.0  # scalar or per-segment list
    train: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    repeat: int = 10
    sweep: Optional[SweepSpec] = None

    def __post_init__(self):
        make_problem(self.problem, self.sigma)  # validates problem and sigma shape
        if self.repeat < 1:
            raise ConfigError("repeat must be >= 1")

    def grid(self):
        return self.eval.grid or DEFAULT_GRIDS[make_problem(self.problem).name]

    def slice_locations(self):
        return SLICE_LOCATIONS[make_problem(self.problem).name]


_TRAIN_KEYS = {
    "lambda": "lam",
    "m": "m",
    "n": "n",
    "k": "k",
    "latent_dim": "latent_dim",
    "gen_depth": "gen_depth",
    "gen_width": "gen_width",
    "disc_depth": "disc_depth",
    "disc_width": "disc_width",
    "lr": "lr",
    "beta1": "beta1",
    "beta2": "beta2",
    "eps": "eps",
    "n_critic": "n_critic",
    "iterations": "iterations",
    "seed": "seed",
    "clip_bound": "clip_bound",
    "constraint_mode": "constraint_mode",
    "bjorck_steps": "bjorck_steps",
    "bjorck_order": "bjorck_order",
    "batch_boundary": "batch_boundary",
    "batch_interior": "batch_interior",
    "trace_every": "trace_every",
}
_EVAL_KEYS = ("grid", "z_count", "w1_samples", "slice_z_count", "residual_samples")
_TOP_KEYS = ("problem", "sigma", "train", "eval", "repeat", "sweep")


def _reject_unknown(mapping, allowed, where):
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    _reject_unknown(data, _TOP_KEYS, "config")
    if "problem" not in data:
        raise ConfigError("missing required key 'problem'")
    train_map = data.get("train", {}) or {}
    _reject_unknown(train_map, _TRAIN_KEYS, "train")
    if "lambda" not in train_map:
        raise ConfigError("missing required key 'lambda' in train")
    try:
        train = TrainConfig(**{_TRAIN_KEYS[k]: v for k, v in train_map.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from None
    eval_map = data.get("eval", {}) or {}
    _reject_unknown(eval_map, _EVAL_KEYS, "eval")
    sweep = None
    if data.get("sweep") is not None:
        _reject_unknown(data["sweep"], ("key", "values"), "sweep")
        sweep = SweepSpec(**data["sweep"])
    return ExperimentConfig(
        problem=data["problem"],
        sigma=data.get("sigma", 0.0),
        train=train,
        eval=EvalConfig(**eval_map),
        repeat=data.get("repeat", 10),
        sweep=sweep,
    )


def to_dict(cfg):
    train = {}
    for yaml_key, attr in _TRAIN_KEYS.items():
        train[yaml_key] = getattr(cfg.train, attr)
    out = {
        "problem": cfg.problem,
        "sigma": cfg.sigma,
        "train": train,
        "eval": {
            "grid": cfg.eval.grid,
            "z_count": cfg.eval.z_count,
            "w1_samples": cfg.eval.w1_samples,
            "slice_z_count": cfg.eval.slice_z_count,
            "residual_samples": cfg.eval.residual_samples,
        },
        "repeat": cfg.repeat,
    }
    if cfg.sweep is not None:
        out["sweep"] = {"key": cfg.sweep.key, "values": list(cfg.sweep.values)}
    return out


def load(path):
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return from_dict(data)


def loads(text):
    return from_dict(yaml.safe_load(text))


def dumps(cfg):
    return yaml.safe_dump(to_dict(cfg), sort_keys=True)


def config_hash(cfg):
    return hashlib.sha256(json.dumps(to_dict(cfg), sort_keys=True).encode()).hexdigest()[:16]


def format_float(x):
    """Fixed 17-significant-digit formatting; parses back bit-exact."""
    return format(float(x), ".17g")


def dump_json_17g(obj, fh_or_path):
    """JSON writer emitting every float with 17 significant digits."""

    def render(node, indent):
        if hasattr(node, "item") and not hasattr(node, "__len__"):
            node = node.item()  # numpy scalars
        pad = "  " * indent
        if isinstance(node, dict):
            if not node:
                return "{}"
            items = [
                f'{pad}  {json.dumps(str(k))}: {render(v, indent + 1)}' for k, v in node.items()
            ]
            return "{\n" + ",\n".join(items) + "\n" + pad + "}"
        if isinstance(node, (list, tuple)):
            if len(node) == 0:
                return "[]"
            items = [f"{pad}  {render(v, indent + 1)}" for v in node]
            return "[\n" + ",\n".join(items) + "\n" + pad + "]"
        if isinstance(node, bool) or node is None:
            return json.dumps(node)
        if isinstance(node, float):
            return format_float(node)
        if isinstance(node, int):
            return str(node)
        return json.dumps(node)

    text = render(obj, 0) + "\n"
    if hasattr(fh_or_path, "write"):
        fh_or_path.write(text)
    else:
        with open(fh_or_path, "w") as fh:
            fh.write(text)
