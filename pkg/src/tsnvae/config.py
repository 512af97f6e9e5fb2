"""Run configuration and deterministic seed derivation.

A run config is plain JSON mirroring the dataclass tree below; every field
has a default reproducing the desk-scale experiment, and unknown keys are
rejected so typos cannot silently fall back to defaults.

Stage seeds fan out from one master seed through a splitmix64-style mix, so
each stage (collection, per-episode, training, per-trial) is independently
reproducible: rerunning one stage with the same master seed regenerates the
same stream without running the others.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

from .control import ControllerConfig
from .model import HyperParams, hyperparams_for_variant
from .sim import SimConfig

__all__ = [
    "CollectConfig",
    "ModelConfig",
    "BenchConfig",
    "RunConfig",
    "derive_seed",
    "default_config",
    "config_to_json",
    "config_from_json",
    "hyperparams_from_config",
]

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    """splitmix64 output mix."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & _MASK
    return h


def derive_seed(master_seed: int, *path) -> int:
    """Derive a stage seed from the master seed and a label path.

    Components may be strings (stage names) or integers (indices); the
    derivation is splitmix64 over the running state, so distinct paths give
    independent, platform-stable streams.
    """
    state = _mix((int(master_seed) + _GOLDEN) & _MASK)
    for part in path:
        v = part & _MASK if isinstance(part, int) else _fnv1a(str(part))
        state = _mix((state + _GOLDEN + v) & _MASK)
    return state


@dataclass(frozen=True)
class CollectConfig:
    episodes: int = 100
    train_episodes: int = 30


@dataclass(frozen=True)
class ModelConfig:
    latent_dim: int = 2
    sigma_x: float = 0.0001
    sigma_g: float = 0.0015
    learning_rate: float = 3e-4
    batch_episodes: int = 8
    train_steps: int = 20000
    nvae_sigma: float = 0.1


@dataclass(frozen=True)
class BenchConfig:
    trials: int = 40
    mounting_error: float = 0.0003  # gTm perturbation injected in the bench preset
    cfil_steps: int = 4000          # training budget of the inline CFIL fit


@dataclass(frozen=True)
class RunConfig:
    master_seed: int = 0
    sim: SimConfig = field(default_factory=SimConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    collect: CollectConfig = field(default_factory=CollectConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)


def default_config() -> RunConfig:
    return RunConfig()


def hyperparams_from_config(cfg: RunConfig, variant: str, **overrides) -> HyperParams:
    """Build variant hyperparameters consistent with the sim configuration."""
    values = dict(
        latent_dim=cfg.model.latent_dim,
        dt=cfg.sim.dt_collect,
        sigma_x=cfg.model.sigma_x,
        sigma_g=cfg.model.sigma_g,
        learning_rate=cfg.model.learning_rate,
        batch_episodes=cfg.model.batch_episodes,
        train_steps=cfg.model.train_steps,
        nvae_sigma=cfg.model.nvae_sigma,
        camera_size=cfg.sim.camera_size,
        tactile_size=cfg.sim.tactile_size,
    )
    values.update(overrides)
    return hyperparams_for_variant(variant, **values)


def config_to_json(cfg: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n"


def _build(cls, data: dict, where: str):
    """Construct a flat config section, rejecting unknown keys."""
    if not isinstance(data, dict):
        raise ValueError(f"config section {where!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config key(s) in {where!r}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        if name == "socket_pos":
            kwargs[name] = tuple(float(v) for v in value)
        elif isinstance(value, dict):
            raise ValueError(f"config key {where}.{name} does not take an object")
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTIONS = {
    "sim": SimConfig,
    "model": ModelConfig,
    "controller": ControllerConfig,
    "collect": CollectConfig,
    "bench": BenchConfig,
}


def config_from_json(text: str) -> RunConfig:
    """Parse a config, rejecting unknown keys at every level."""
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValueError("config root must be a JSON object")
    unknown = set(data) - (set(_SECTIONS) | {"master_seed"})
    if unknown:
        raise ValueError(f"unknown config key(s): {sorted(unknown)}")
    kwargs = {}
    if "master_seed" in data:
        kwargs["master_seed"] = int(data["master_seed"])
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _build(cls, data[name], name)
    return RunConfig(**kwargs)
