"""Regression-baseline stack: two-stage goal-pose regression, tactile grasp
estimators, and planar coordinate-transform compensation.

The comparison pipeline is open-loop single-shot positioning: regress the
nominal insertion pose from the initial camera view (coarse net on the full
image, fine net on a crop centered at the coarse prediction), optionally
estimate the in-hand plug pose from the tactile image (supervised CNN-style
regressor, or template matching), compensate through the transform algebra,
and command the arm straight to the computed pose.

Unlike the world-model variants these baselines are supervised: they train
on the dataset's eval block (ground-truth poses).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import (
    Tape,
    Tensor,
    affine,
    avg_pool2d,
    backward,
    leaky_relu,
    mul,
    reshape,
    scale,
    sub,
    sum_elems,
)
from .optim import AdamState, adam_step
from .sim import PlanarInsertionEnv

__all__ = [
    "Transform2D",
    "CfilFrames",
    "CfilRegressor",
    "NoMatchError",
    "identity_transform",
    "compose",
    "invert",
    "transform_matrix",
    "compensated_goal",
    "mounted_frames",
    "train_cfil",
    "regress_goal_displacement",
    "regress_grasp_offset",
    "reference_template",
    "ncc_map",
    "template_match",
    "run_cfil_trial",
    "CFIL_VARIANTS",
]

CFIL_VARIANTS = ("CFIL", "CFIL+Template", "CFIL+TactileCNN")

COARSE_HIDDEN = (64, 32)
FINE_HIDDEN = (64, 32)
TACTILE_HIDDEN = (32, 16)
# per-net input pooling: the fine stage lives off sub-pixel detail, the
# other two generalize better downsampled
COARSE_POOL = 2
FINE_POOL = 1
TACTILE_POOL = 2
# augmentation against small-data overfitting: pixel noise per step, extra
# roll-shifted copies for the coarse stage (targets shifted to match), and
# jittered crops for the fine stage (covering the coarse error range)
COARSE_NOISE = 0.01
FINE_NOISE = 0.005
TACTILE_NOISE = 0.02
COARSE_SHIFT_COPIES = 4
COARSE_SHIFT_PX = 5
FINE_CROPS_PER_FRAME = 8
FINE_JITTER_PX = 4
TRAIN_STEPS = 4000
BATCH = 64
LEAKY = 0.2
# fixed direction for the optional sensor-mounting perturbation of gTm
_MOUNT_DIR = np.array([math.cos(0.6), math.sin(0.6)])


@dataclass(frozen=True)
class Transform2D:
    """Planar rigid motion: rotation by theta, then translation."""

    theta: float
    translation: tuple

    def __post_init__(self):
        object.__setattr__(self, "translation", tuple(float(v) for v in self.translation))
        if len(self.translation) != 2:
            raise ValueError(f"Transform2D translation must be XY, got {self.translation}")

    @property
    def t(self) -> np.ndarray:
        return np.array(self.translation)


def identity_transform() -> Transform2D:
    return Transform2D(0.0, (0.0, 0.0))


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def compose(a: Transform2D, b: Transform2D) -> Transform2D:
    """a then b in a's frame: result maps a point through b, then a."""
    t = a.t + _rot(a.theta) @ b.t
    return Transform2D(a.theta + b.theta, tuple(t))


def invert(x: Transform2D) -> Transform2D:
    t = -(_rot(-x.theta) @ x.t)
    return Transform2D(-x.theta, tuple(t))


def transform_matrix(x: Transform2D) -> np.ndarray:
    """3x3 homogeneous matrix (the oracle representation)."""
    m = np.eye(3)
    m[:2, :2] = _rot(x.theta)
    m[:2, 2] = x.t
    return m


@dataclass(frozen=True)
class CfilFrames:
    """Constant frames of the compensation: sensor-in-gripper pose and the
    expert grasp pose the demonstration was recorded with."""

    gTm: Transform2D = field(default_factory=identity_transform)
    mTo_expert: Transform2D = field(default_factory=identity_transform)


def compensated_goal(frames: CfilFrames, bTg_cf: Transform2D,
                     mTo_current: Transform2D) -> Transform2D:
    """Grasp-pose-compensated insertion pose.

    bTo = bTg_cf . gTm . mTo_expert reconstructs the target plug pose the
    uncompensated regression implies; the compensated gripper pose is then
    bTg = bTo . mTo_current^-1 . gTm^-1.
    """
    bTo = compose(compose(bTg_cf, frames.gTm), frames.mTo_expert)
    return compose(compose(bTo, invert(mTo_current)), invert(frames.gTm))


def mounted_frames(mounting_error: float = 0.0) -> CfilFrames:
    """Default frames; a positive mounting error displaces gTm by that many
    meters along a fixed direction (the CAD-vs-reality gap)."""
    g_t_m = identity_transform()
    if mounting_error:
        g_t_m = Transform2D(0.0, tuple(mounting_error * _MOUNT_DIR))
    return CfilFrames(gTm=g_t_m, mTo_expert=identity_transform())


# -- regressors ------------------------------------------------------------------


@dataclass
class CfilRegressor:
    params: dict
    camera_size: int
    tactile_size: int
    crop: int              # fine-stage crop side length, pixels
    camera_px_per_m: float
    tactile_px_per_m: float

    def finite(self) -> bool:
        return all(np.isfinite(p.data).all() for p in self.params.values())


def _init_mlp(params, rng, prefix, sizes):
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        s = math.sqrt(2.0 / ((1.0 + LEAKY**2) * n_in)) if i < len(sizes) - 2 else 1.0 / math.sqrt(n_in)
        params[f"{prefix}.w{i}"] = Tensor(rng.standard_normal((n_in, n_out)) * s, requires_grad=True)
        params[f"{prefix}.b{i}"] = Tensor(np.zeros(n_out), requires_grad=True)


def _mlp(tape, params, prefix, x, n_layers):
    h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    for i in range(n_layers):
        h = affine(tape, h, params[f"{prefix}.w{i}"], params[f"{prefix}.b{i}"])
        if i < n_layers - 1:
            h = leaky_relu(tape, h, LEAKY)
    return h


def _fit(params, prefix, n_layers, inputs, targets, rng, steps=TRAIN_STEPS,
         noise=0.0, pool=1):
    """Adam on mean squared error; returns the per-step loss curve.

    ``noise`` adds per-step Gaussian pixel augmentation (regularizes the
    data-poor tactile fit); ``pool`` average-pools image-shaped inputs.
    """
    state = AdamState(lr=3e-4)
    n = inputs.shape[0]
    losses = np.empty(steps)
    trainable = {k: p for k, p in params.items() if k.startswith(prefix)}
    for step in range(steps):
        idx = rng.choice(n, size=min(BATCH, n), replace=False)
        x = inputs[idx]
        if noise:
            x = x + noise * rng.standard_normal(x.shape)
        tape = Tape()
        pred = _net(tape, params, prefix, n_layers, x, pool)
        err = sub(tape, pred, Tensor(targets[idx]))
        loss = scale(tape, sum_elems(tape, mul(tape, err, err)), 1.0 / idx.size)
        losses[step] = float(loss.data)
        backward(tape, loss)
        grads = {k: p.grad for k, p in trainable.items() if p.grad is not None}
        adam_step(trainable, grads, state)
        for p in trainable.values():
            p.grad = None
    return losses


def _net(tape, params, prefix, n_layers, x, pool=1):
    h = x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))
    if pool > 1:
        h = avg_pool2d(tape, h, pool)
    if len(h.data.shape) > 2:
        flat = int(np.prod(h.data.shape[1:]))
        h = reshape(tape, h, (h.data.shape[0], flat))
    return _mlp(tape, params, prefix, h, n_layers)


def _crop_center_px(image_size: int, crop: int, cx: float, cy: float):
    """Integer top-left corner of a crop aimed at (cx, cy), clamped in frame."""
    x0 = min(max(int(round(cx)) - crop // 2, 0), image_size - crop)
    y0 = min(max(int(round(cy)) - crop // 2, 0), image_size - crop)
    return x0, y0


def train_cfil(train_episodes, seed: int, env: PlanarInsertionEnv,
               steps: int = TRAIN_STEPS):
    """Fit coarse, fine, and tactile regressors on the supervised eval block.

    Coarse regresses the displacement to the nominal socket pose from the
    full camera image.  Fine trains on crops centered near the true target
    with pixel jitter matching the coarse error range, regressing the
    residual from the crop center; at inference the crop is taken at the
    coarse prediction.  The tactile net regresses the grasp offset.
    Returns (regressor, loss curves dict).
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xCF11]))
    cam = env.config.camera_size
    tac = env.config.tactile_size
    crop = cam // 2
    s = env.camera_px_per_m
    center = (cam - 1) / 2.0

    images = np.concatenate(
        [np.stack([f[0] for f in ep.frames]) for ep in train_episodes]
    )
    disp = np.concatenate(
        [ep.truth.socket_pos - ep.truth.ee_pos for ep in train_episodes]
    )
    tactiles = np.stack([ep.tactile for ep in train_episodes])
    offsets = np.stack([ep.truth.grasp_offset for ep in train_episodes])

    params: dict = {}
    _init_mlp(params, rng, "coarse", [(cam // COARSE_POOL) ** 2 * 3, *COARSE_HIDDEN, 2])
    _init_mlp(params, rng, "fine", [(crop // FINE_POOL) ** 2 * 3, *FINE_HIDDEN, 2])
    _init_mlp(params, rng, "tactile", [(tac // TACTILE_POOL) ** 2 * 3, *TACTILE_HIDDEN, 2])
    reg = CfilRegressor(
        params=params,
        camera_size=cam,
        tactile_size=tac,
        crop=crop,
        camera_px_per_m=env.camera_px_per_m,
        tactile_px_per_m=env.tactile_px_per_m,
    )

    curves = {}
    aug_imgs, aug_disp = [images], [disp]
    for _ in range(COARSE_SHIFT_COPIES):
        sh = rng.integers(-COARSE_SHIFT_PX, COARSE_SHIFT_PX + 1, size=(images.shape[0], 2))
        rolled = np.stack([
            np.roll(np.roll(images[i], sh[i, 1], axis=0), sh[i, 0], axis=1)
            for i in range(images.shape[0])
        ])
        aug_imgs.append(rolled)
        aug_disp.append(disp + sh / s)
    curves["coarse"] = _fit(params, "coarse", 3, np.concatenate(aug_imgs),
                            np.concatenate(aug_disp), rng, 2 * steps,
                            noise=COARSE_NOISE, pool=COARSE_POOL)

    # fine stage: crops jittered around the true socket pixel, residual target
    n = images.shape[0]
    m = n * FINE_CROPS_PER_FRAME
    crops = np.empty((m, crop, crop, 3))
    residuals = np.empty((m, 2))
    jitter = rng.integers(-FINE_JITTER_PX, FINE_JITTER_PX + 1, size=(m, 2))
    for i in range(m):
        j = i % n
        tx = center + disp[j, 0] * s + jitter[i, 0]
        ty = center + disp[j, 1] * s + jitter[i, 1]
        x0, y0 = _crop_center_px(cam, crop, tx, ty)
        crops[i] = images[j, y0 : y0 + crop, x0 : x0 + crop]
        crop_center = np.array([x0 + (crop - 1) / 2.0, y0 + (crop - 1) / 2.0])
        residuals[i] = disp[j] - (crop_center - center) / s
    curves["fine"] = _fit(params, "fine", 3, crops, residuals, rng, 3 * steps,
                          noise=FINE_NOISE, pool=FINE_POOL)

    # the tactile fit gets one sample per episode, so it runs longer with
    # pixel-noise augmentation to interpolate rather than memorize
    curves["tactile"] = _fit(params, "tactile", 3, tactiles, offsets, rng,
                             steps=3 * steps, noise=TACTILE_NOISE, pool=TACTILE_POOL)
    return reg, curves


def regress_goal_displacement(reg: CfilRegressor, camera_image: np.ndarray,
                              two_stage: bool = True) -> np.ndarray:
    """Displacement from the current pose to the nominal insertion pose."""
    cam = reg.camera_size
    x = camera_image.reshape(1, cam, cam, 3)
    d = _net(Tape(), reg.params, "coarse", 3, x, COARSE_POOL).data[0]
    if not two_stage:
        return d
    center = (cam - 1) / 2.0
    s = reg.camera_px_per_m
    x0, y0 = _crop_center_px(cam, reg.crop, center + d[0] * s, center + d[1] * s)
    patch = camera_image[y0 : y0 + reg.crop, x0 : x0 + reg.crop]
    crop_center = np.array([x0 + (reg.crop - 1) / 2.0, y0 + (reg.crop - 1) / 2.0])
    residual = _net(Tape(), reg.params, "fine", 3,
                    patch.reshape(1, *patch.shape), FINE_POOL).data[0]
    return (crop_center - center) / s + residual


def regress_grasp_offset(reg: CfilRegressor, tactile_image: np.ndarray) -> np.ndarray:
    t = reg.tactile_size
    x = tactile_image.reshape(1, t, t, 3)
    return _net(Tape(), reg.params, "tactile", 3, x, TACTILE_POOL).data[0]


# -- template matching -------------------------------------------------------------


class NoMatchError(ValueError):
    """Template matching cannot score a zero-variance window."""


def reference_template(env: PlanarInsertionEnv) -> np.ndarray:
    """Center crop of a zero-offset, zero-tilt tactile image (the expert grasp)."""
    scratch = PlanarInsertionEnv(env.config)  # leave the caller's rng untouched
    state = scratch.reset(0)
    state.grasp_offset = np.zeros(2)
    state.tilt = 0.0
    img = scratch.render_tactile(state)
    t = env.config.tactile_size
    side = t // 2
    lo = (t - side) // 2
    return img[lo : lo + side, lo : lo + side]


def ncc_map(image: np.ndarray, template: np.ndarray) -> np.ndarray:
    """Normalized cross-correlation of the template at every valid shift."""
    th, tw = template.shape[:2]
    h, w = image.shape[:2]
    tm = template - template.mean()
    t_norm = float(np.sqrt((tm * tm).sum()))
    if t_norm == 0.0:
        raise NoMatchError("template has zero variance")
    out = np.full((h - th + 1, w - tw + 1), -np.inf)
    for y in range(out.shape[0]):
        for x in range(out.shape[1]):
            win = image[y : y + th, x : x + tw]
            wm = win - win.mean()
            w_norm = float(np.sqrt((wm * wm).sum()))
            if w_norm == 0.0:
                continue
            out[y, x] = float((wm * tm).sum()) / (w_norm * t_norm)
    if not np.isfinite(out).any():
        raise NoMatchError("image has zero variance at every window")
    return out


def template_match(tactile_image: np.ndarray, template: np.ndarray,
                   px_per_m: float) -> np.ndarray:
    """Grasp-offset estimate from the NCC argmax, in meters."""
    scores = ncc_map(tactile_image, template)
    peak = np.unravel_index(int(np.argmax(scores)), scores.shape)
    th, tw = template.shape[:2]
    h, w = tactile_image.shape[:2]
    # template centered at the glyph: shift of the window center vs image center
    cy = peak[0] + (th - 1) / 2.0 - (h - 1) / 2.0
    cx = peak[1] + (tw - 1) / 2.0 - (w - 1) / 2.0
    return np.array([cx, cy]) / px_per_m


# -- trials -------------------------------------------------------------------------


def run_cfil_trial(reg: CfilRegressor, frames: CfilFrames, env: PlanarInsertionEnv,
                   variant: str, seed: int, template: np.ndarray | None = None,
                   start_offset: float = 0.01, success_tol: float = 0.001):
    """One open-loop positioning trial; returns (final_error_m, success).

    Matches the closed-loop benchmark protocol (same reset seed, same start
    displacement derivation) so trials pair across methods.
    """
    if variant not in CFIL_VARIANTS:
        raise ValueError(f"unknown CFIL variant {variant!r}")
    state = env.reset(seed)
    i_z = env.render_tactile(state)
    start_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x57A7]))
    displacement = start_rng.uniform(-start_offset, start_offset, size=2)
    state = env.move_to(state, env.insertion_position(state) + displacement)

    d = regress_goal_displacement(reg, env.render_camera(state))
    bTg_cf = Transform2D(0.0, tuple(state.ee_pos + d))
    if variant == "CFIL":
        target = bTg_cf
    else:
        if variant == "CFIL+Template":
            if template is None:
                template = reference_template(PlanarInsertionEnv(env.config))
            offset_est = template_match(i_z, template, reg.tactile_px_per_m)
        else:
            offset_est = regress_grasp_offset(reg, i_z)
        mTo_current = Transform2D(0.0, tuple(offset_est))
        target = compensated_goal(frames, bTg_cf, mTo_current)

    state = env.move_to(state, target.t)
    err = float(np.linalg.norm(state.ee_pos - env.insertion_position(state)))
    return err, err <= success_tol
