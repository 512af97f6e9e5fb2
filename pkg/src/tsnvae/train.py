"""Checkpoint persistence for trained bundles.

Same container style as datasets: magic ``TSNVCKPT``, version, a JSON header
with the hyperparameters and parameter declaration order, then little-endian
float64 parameter blocks (plus the training loss curve).
"""

from __future__ import annotations

from dataclasses import asdict

import numpy as np

from .autodiff import Tensor
from .container import read_container, write_container
from .model import HyperParams, ModelBundle

__all__ = ["CHECKPOINT_MAGIC", "save_checkpoint", "load_checkpoint"]

CHECKPOINT_MAGIC = b"TSNVCKPT"


def save_checkpoint(bundle: ModelBundle, path, losses: np.ndarray | None = None) -> None:
    blocks = {f"param/{name}": p.data for name, p in bundle.params.items()}
    if losses is not None:
        blocks["loss_curve"] = np.asarray(losses, dtype=np.float64)
    meta = {
        "kind": "checkpoint",
        "hyperparams": asdict(bundle.hp),
        "param_order": list(bundle.params.keys()),
    }
    write_container(path, CHECKPOINT_MAGIC, meta, blocks)


def load_checkpoint(path) -> tuple[ModelBundle, np.ndarray | None]:
    manifest, blocks = read_container(path, CHECKPOINT_MAGIC)
    hp = HyperParams(**manifest["hyperparams"])
    params = {
        name: Tensor(blocks[f"param/{name}"], requires_grad=True)
        for name in manifest["param_order"]
    }
    losses = blocks.get("loss_curve")
    return ModelBundle(hp=hp, params=params), losses
