"""Episode collection protocol and the on-disk dataset format.

An episode starts pulled out at the insertion position, records the tactile
image and the initial camera view (which doubles as the goal image), then
random-walks above the socket for H steps with per-axis uniform velocity
actions, recording one (camera image, action) pair per step.  Ground-truth
poses ride along in a separate eval section that the training losses never
read; only the supervised baselines and the diagnostics touch it.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .container import read_container, write_container
from .sim import PlanarInsertionEnv, SimConfig

__all__ = [
    "HORIZON",
    "ACTION_RANGE",
    "EpisodeTruth",
    "EpisodeRecord",
    "collect_episode",
    "collect_dataset",
    "save_dataset",
    "load_dataset",
    "split_dataset",
    "sim_config_fingerprint",
]

DATASET_MAGIC = b"TSNV"
HORIZON = 20
ACTION_RANGE = 0.01


@dataclass
class EpisodeTruth:
    """Evaluation-only ground truth; kept apart from the training payload."""

    ee_pos: np.ndarray          # (H, 2) at the instant each frame was taken
    insertion_pos: np.ndarray   # (2,)
    grasp_offset: np.ndarray    # (2,)
    tilt: float
    socket_pos: np.ndarray      # (2,)


@dataclass
class EpisodeRecord:
    tactile: np.ndarray         # (T, T, 3) tactile image at grasp time
    goal_image: np.ndarray      # (H_cam, W_cam, 3) camera view at the insertion position
    frames: list                # H tuples (camera image, action m/s)
    truth: EpisodeTruth

    def __eq__(self, other):
        if not isinstance(other, EpisodeRecord):
            return NotImplemented
        return (
            np.array_equal(self.tactile, other.tactile)
            and np.array_equal(self.goal_image, other.goal_image)
            and len(self.frames) == len(other.frames)
            and all(
                np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
                for a, b in zip(self.frames, other.frames)
            )
            and np.array_equal(self.truth.ee_pos, other.truth.ee_pos)
            and np.array_equal(self.truth.insertion_pos, other.truth.insertion_pos)
            and np.array_equal(self.truth.grasp_offset, other.truth.grasp_offset)
            and self.truth.tilt == other.truth.tilt
            and np.array_equal(self.truth.socket_pos, other.truth.socket_pos)
        )


def collect_episode(env: PlanarInsertionEnv, seed: int, horizon: int = HORIZON) -> EpisodeRecord:
    """Run the random-walk protocol for one episode, deterministically in seed."""
    state = env.reset(seed)
    action_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xAC710]))
    tactile = env.render_tactile(state)
    goal_image = env.render_camera(state)
    insertion = env.insertion_position(state)
    frames = []
    ee_track = np.empty((horizon, 2))
    for t in range(horizon):
        ee_track[t] = state.ee_pos
        image = goal_image if t == 0 else env.render_camera(state)
        u = action_rng.uniform(-ACTION_RANGE, ACTION_RANGE, size=2)
        frames.append((image, u))
        state = env.step(state, u, env.config.dt_collect)
    truth = EpisodeTruth(
        ee_pos=ee_track,
        insertion_pos=insertion,
        grasp_offset=state.grasp_offset.copy(),
        tilt=state.tilt,
        socket_pos=state.socket_pos.copy(),
    )
    return EpisodeRecord(tactile=tactile, goal_image=goal_image, frames=frames, truth=truth)


def collect_dataset(config: SimConfig, n_episodes: int, seeds) -> list[EpisodeRecord]:
    """Collect independent episodes; each gets its own env instance and seed."""
    seeds = list(seeds)
    if len(seeds) != n_episodes:
        raise ValueError(f"collect_dataset: need {n_episodes} seeds, got {len(seeds)}")
    episodes = []
    for s in seeds:
        env = PlanarInsertionEnv(config)
        episodes.append(collect_episode(env, s))
    return episodes


def sim_config_fingerprint(config: SimConfig) -> str:
    import hashlib
    import json

    payload = json.dumps(asdict(config), sort_keys=True).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


def save_dataset(episodes: list[EpisodeRecord], path, config: SimConfig | None = None,
                 split=None, dt: float | None = None) -> None:
    """Write episodes losslessly; ``split`` optionally tags each episode train/val."""
    blocks = {}
    for i, ep in enumerate(episodes):
        images = np.stack([f[0] for f in ep.frames]) if ep.frames else np.zeros((0, 0, 0, 3))
        actions = np.stack([f[1] for f in ep.frames]) if ep.frames else np.zeros((0, 2))
        blocks[f"train/ep{i}/tactile"] = ep.tactile
        blocks[f"train/ep{i}/goal_image"] = ep.goal_image
        blocks[f"train/ep{i}/images"] = images
        blocks[f"train/ep{i}/actions"] = actions
        blocks[f"eval/ep{i}/ee_pos"] = ep.truth.ee_pos
        blocks[f"eval/ep{i}/insertion_pos"] = ep.truth.insertion_pos
        blocks[f"eval/ep{i}/grasp_offset"] = ep.truth.grasp_offset
        blocks[f"eval/ep{i}/tilt"] = np.array([ep.truth.tilt])
        blocks[f"eval/ep{i}/socket_pos"] = ep.truth.socket_pos
    meta = {
        "kind": "dataset",
        "episode_count": len(episodes),
        "horizon": len(episodes[0].frames) if episodes else HORIZON,
        "dt": dt if dt is not None else (config.dt_collect if config else SimConfig.dt_collect),
        "sim_config": asdict(config) if config else None,
        "sim_config_hash": sim_config_fingerprint(config) if config else None,
        "split": list(split) if split is not None else None,
    }
    write_container(path, DATASET_MAGIC, meta, blocks)


def load_dataset(path) -> tuple[list[EpisodeRecord], dict]:
    """Read a dataset back; returns (episodes, manifest)."""
    manifest, blocks = read_container(path, DATASET_MAGIC)
    episodes = []
    for i in range(manifest["episode_count"]):
        images = blocks[f"train/ep{i}/images"]
        actions = blocks[f"train/ep{i}/actions"]
        frames = [(images[t], actions[t]) for t in range(images.shape[0])]
        truth = EpisodeTruth(
            ee_pos=blocks[f"eval/ep{i}/ee_pos"],
            insertion_pos=blocks[f"eval/ep{i}/insertion_pos"],
            grasp_offset=blocks[f"eval/ep{i}/grasp_offset"],
            tilt=float(blocks[f"eval/ep{i}/tilt"][0]),
            socket_pos=blocks[f"eval/ep{i}/socket_pos"],
        )
        episodes.append(
            EpisodeRecord(
                tactile=blocks[f"train/ep{i}/tactile"],
                goal_image=blocks[f"train/ep{i}/goal_image"],
                frames=frames,
                truth=truth,
            )
        )
    return episodes, manifest


def split_dataset(episodes: list[EpisodeRecord], train_count: int, seed: int):
    """Deterministic disjoint train/validation split."""
    if train_count > len(episodes):
        raise ValueError(
            f"split_dataset: train_count {train_count} exceeds {len(episodes)} episodes"
        )
    order = np.random.default_rng(seed).permutation(len(episodes))
    train_idx = np.sort(order[:train_count])
    val_idx = np.sort(order[train_count:])
    return [episodes[i] for i in train_idx], [episodes[i] for i in val_idx]
