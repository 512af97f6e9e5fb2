"""Closed-loop proportional positioning in latent space.

A trial starts from a fresh grasp: the arm observes the tactile image once,
latches the latent goal x_g = p(x_g | q(z|I_z).mean).mean, is displaced to a
random start pose, and then ticks at the control rate commanding
u = alpha * (x_g - x_t) from the current camera latent until the time
budget runs out.  The final positioning error is measured against the
ground-truth insertion position, which the controller itself never sees.

NVAE-family bundles emit acceleration-style actions; their commands are
integrated to a reference velocity through the learned transition before
being sent to the arm, mirroring how those baselines are driven.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .model import ModelBundle, camera_latent, goal_latent, nvae_velocity_update
from .autodiff import Tape
from .sim import PlanarInsertionEnv, SimConfig

__all__ = [
    "ControllerConfig",
    "ControlTrace",
    "ModelCoder",
    "TruthCoder",
    "run_episode",
    "run_benchmark",
    "trial_seed",
    "worker_count",
]


@dataclass(frozen=True)
class ControllerConfig:
    alpha: float = 1.0
    control_hz: float = 20.0
    max_duration: float = 5.0
    success_tol: float = 0.001
    start_offset: float = 0.01  # per-axis uniform displacement of the start pose


@dataclass
class ControlTrace:
    positions: np.ndarray   # (T+1, 2) truth ee per tick, including the start pose
    latents: np.ndarray     # (T, 2) encoded camera latents
    actions: np.ndarray     # (T, 2) commanded (clamped) velocities
    goal_latent: np.ndarray
    final_error: float
    success: bool


class ModelCoder:
    """Observation-to-latent interface of a trained bundle."""

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle
        self._v = None

    def start(self):
        self._v = np.zeros(self.bundle.hp.latent_dim)

    def goal(self, tactile_image, state):
        return goal_latent(self.bundle, tactile_image)

    def encode(self, camera_image, state):
        return camera_latent(self.bundle, camera_image.reshape(1, -1))[0]

    def to_velocity(self, u, dt):
        """Map the model-space action to a velocity command.

        TS-family actions are velocities already; NVAE-family actions are
        accelerations integrated through the learned transition.
        """
        if not self.bundle.hp.is_nvae_family:
            return u
        v = nvae_velocity_update(
            Tape(), self.bundle, np.zeros((1, 2)), self._v.reshape(1, 2),
            u.reshape(1, 2), dt, trainable=self.bundle.hp.trainable_abc,
        ).data[0]
        self._v = v
        return v


class TruthCoder:
    """Evaluation-only oracle: latents are the ground-truth coordinates.

    Gives the controller perfect perception, isolating the control law's
    own convergence from model quality.
    """

    def __init__(self, env: PlanarInsertionEnv):
        self.env = env

    def start(self):
        pass

    def goal(self, tactile_image, state):
        return self.env.insertion_position(state)

    def encode(self, camera_image, state):
        return state.ee_pos.copy()

    def to_velocity(self, u, dt):
        return u


def run_episode(coder, env: PlanarInsertionEnv, cfg: ControllerConfig, seed: int) -> ControlTrace:
    """One positioning trial; deterministic in (coder, env config, seed)."""
    state = env.reset(seed)
    i_z = env.render_tactile(state)  # tactile depends only on the grasp
    start_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x57A7]))
    displacement = start_rng.uniform(-cfg.start_offset, cfg.start_offset, size=2)
    state = env.move_to(state, env.insertion_position(state) + displacement)

    coder.start()
    x_g = np.asarray(coder.goal(i_z, state), dtype=np.float64)
    dt = 1.0 / cfg.control_hz
    n_ticks = int(round(cfg.max_duration * cfg.control_hz))
    limit = env.config.action_limit

    positions = np.empty((n_ticks + 1, 2))
    latents = np.empty((n_ticks, 2))
    actions = np.empty((n_ticks, 2))
    positions[0] = state.ee_pos
    for t in range(n_ticks):
        image = env.render_camera(state)
        x_t = np.asarray(coder.encode(image, state), dtype=np.float64)
        if x_t.shape != x_g.shape:
            raise ValueError(f"latent shape {x_t.shape} does not match goal {x_g.shape}")
        u = cfg.alpha * (x_g - x_t)
        cmd = np.clip(coder.to_velocity(u, dt), -limit, limit)
        latents[t] = x_t
        actions[t] = cmd
        state = env.step(state, cmd, dt)
        positions[t + 1] = state.ee_pos

    final_error = float(np.linalg.norm(state.ee_pos - env.insertion_position(state)))
    return ControlTrace(
        positions=positions,
        latents=latents,
        actions=actions,
        goal_latent=x_g,
        final_error=final_error,
        success=final_error <= cfg.success_tol,
    )


def trial_seed(master_seed: int, index: int) -> int:
    """Per-trial seed shared across methods so comparisons are paired."""
    from .config import derive_seed

    return derive_seed(master_seed, "trial", index)


def worker_count() -> int:
    """Worker cap from TSNVAE_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("TSNVAE_THREADS", "1")))
    except ValueError:
        return 1


def run_benchmark(bundles: dict, sim_config: SimConfig, cfg: ControllerConfig,
                  n_trials: int, master_seed: int = 0):
    """Paired trials for every bundle; returns an evalvis.BenchmarkReport.

    Trial i uses the same seed (same grasp, same start pose) for every
    method.  Episodes are independent, so they may run on parallel workers
    without changing any result.
    """
    from concurrent.futures import ThreadPoolExecutor

    from .evalvis import BenchmarkReport, MethodResult

    if n_trials < 1:
        raise ValueError(f"run_benchmark: n_trials must be >= 1, got {n_trials}")
    seeds = [trial_seed(master_seed, i) for i in range(n_trials)]

    def one(tag_bundle_seed):
        tag, bundle, seed = tag_bundle_seed
        env = PlanarInsertionEnv(sim_config)
        trace = run_episode(ModelCoder(bundle), env, cfg, seed)
        return tag, trace

    jobs = [(tag, bundle, seed) for tag, bundle in bundles.items() for seed in seeds]
    workers = worker_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, jobs))
    else:
        outcomes = [one(j) for j in jobs]

    rows = []
    for tag in bundles:
        errs = np.array([tr.final_error for t, tr in outcomes if t == tag])
        rows.append(
            MethodResult(
                method=tag,
                trials=n_trials,
                successes=int((errs <= cfg.success_tol).sum()),
                mean_error=float(errs.mean()),
                std_error=float(errs.std(ddof=1)) if n_trials > 1 else 0.0,
            )
        )
    rows.sort(key=lambda r: (-r.successes / r.trials, r.mean_error))
    return BenchmarkReport(methods=rows, trials=n_trials)
