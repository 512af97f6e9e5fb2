"""Latent world-model family: encoders, decoders, transition priors, losses.

Six variants share one parameter inventory and differ only in which loss
terms and transition model are active:

- ``TS-NVAE``: velocity actions, fixed-metric transition prior
  N(x + dt*u, sigma_x^2), tactile branch, and the extra zero-centered
  KL anchors on both goal heads.
- ``TS-NVAE/sigma_x=1``: same with sigma_x = 1 (no transition-accuracy
  domain knowledge).
- ``TS-NVAE/NoAdditionalKL``: same as TS-NVAE without the goal anchors.
- ``NVAE``: double-integrator prior with A=0, B=0, C=1, acceleration
  actions, N(0,1) latent regularizer, no tactile branch.
- ``NVAE/trainABC``: as NVAE with diagonal A, B, C produced by small
  networks (B < 0 and C > 0 by construction).
- ``NVAE+tactile``: NVAE objective plus the tactile branch loss.

Latents are 2-D and, for the TS variants, live directly in meters: the
tight transition prior pins the axes and scale of the latent space to the
physical coordinate system.  The camera decoder therefore rescales its
latent input by a fixed factor of 100 for those variants so first-layer
activations are O(1); this is pure reparameterization and changes no
distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import (
    Tape,
    Tensor,
    add,
    affine,
    concat,
    constant,
    exp,
    gather_rows,
    leaky_relu,
    mul,
    neg,
    scale,
    sigmoid,
    sub,
    sum_elems,
)
from .gaussian import DiagGaussian, diag_gaussian_kl, gaussian_log_prob, sample_reparameterized

__all__ = [
    "VARIANTS",
    "HyperParams",
    "ModelBundle",
    "TrainingDiverged",
    "hyperparams_for_variant",
    "init_bundle",
    "encode_camera",
    "encode_tactile",
    "predict_goal",
    "decode_camera",
    "decode_tactile",
    "transition_prior",
    "nvae_velocity_update",
    "loss_lx",
    "loss_lz",
    "loss_additional_kl",
    "loss_nvae",
    "variant_loss",
    "collate_episodes",
    "make_batch",
    "train",
    "acceleration_actions",
    "camera_latent",
    "tactile_latent",
    "goal_latent",
]

VARIANTS = (
    "TS-NVAE",
    "NVAE",
    "NVAE/trainABC",
    "NVAE+tactile",
    "TS-NVAE/sigma_x=1",
    "TS-NVAE/NoAdditionalKL",
)

LEAKY_SLOPE = 0.2
ENC_HIDDEN = (256, 64)
GOAL_HIDDEN = (16, 16)
ABC_HIDDEN = (16, 16)
LATENT_INPUT_SCALE = 100.0
LOG_STD_BIAS_INIT = -3.0


@dataclass(frozen=True)
class HyperParams:
    latent_dim: int = 2
    dt: float = 0.5
    sigma_x: float = 0.0001
    sigma_g: float = 0.0015
    learning_rate: float = 3e-4
    batch_episodes: int = 8
    train_steps: int = 20000
    variant: str = "TS-NVAE"
    nvae_sigma: float = 0.1
    camera_size: int = 32
    tactile_size: int = 24

    @property
    def camera_dim(self) -> int:
        return self.camera_size * self.camera_size * 3

    @property
    def tactile_dim(self) -> int:
        return self.tactile_size * self.tactile_size * 3

    @property
    def is_nvae_family(self) -> bool:
        return self.variant in ("NVAE", "NVAE/trainABC", "NVAE+tactile")

    @property
    def trains_tactile(self) -> bool:
        return self.variant in (
            "TS-NVAE",
            "NVAE+tactile",
            "TS-NVAE/sigma_x=1",
            "TS-NVAE/NoAdditionalKL",
        )

    @property
    def uses_additional_kl(self) -> bool:
        return self.variant in ("TS-NVAE", "TS-NVAE/sigma_x=1")

    @property
    def trainable_abc(self) -> bool:
        return self.variant == "NVAE/trainABC"

    @property
    def camera_latent_scale(self) -> float:
        """Fixed input gain for the camera decoder.

        TS-family latents are meters (~1e-2), so they are rescaled to O(1)
        before the first layer; NVAE-family latents already sit at O(1)
        under the N(0,1) regularizer.
        """
        return 1.0 if self.is_nvae_family else LATENT_INPUT_SCALE


def hyperparams_for_variant(variant: str, **overrides) -> HyperParams:
    """Build hyperparameters for a variant tag, applying its forced values."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    hp = HyperParams(variant=variant, **overrides)
    if variant == "TS-NVAE/sigma_x=1":
        hp = replace(hp, sigma_x=1.0)
    return hp


class TrainingDiverged(RuntimeError):
    def __init__(self, step: int, value: float):
        super().__init__(f"training loss became non-finite at step {step}: {value}")
        self.step = step
        self.value = value


@dataclass
class ModelBundle:
    """All learnable parameters for one variant plus its hyperparameters."""

    hp: HyperParams
    params: dict = field(default_factory=dict)

    def trainable(self) -> dict:
        return self.params

    def zero_grads(self) -> None:
        for p in self.params.values():
            p.grad = None

    def all_finite(self) -> bool:
        return all(np.isfinite(p.data).all() for p in self.params.values())


# -- initialization ----------------------------------------------------------


def _init_linear(params, rng, name, n_in, n_out, w_scale=None, b_value=0.0):
    if w_scale is None:
        w_scale = math.sqrt(2.0 / ((1.0 + LEAKY_SLOPE**2) * n_in))
    params[f"{name}.w"] = Tensor(rng.standard_normal((n_in, n_out)) * w_scale, requires_grad=True)
    params[f"{name}.b"] = Tensor(np.full(n_out, b_value), requires_grad=True)


def _init_encoder(params, rng, prefix, in_dim, d):
    h1, h2 = ENC_HIDDEN
    _init_linear(params, rng, f"{prefix}.l0", in_dim, h1)
    _init_linear(params, rng, f"{prefix}.l1", h1, h2)
    _init_linear(params, rng, f"{prefix}.mean", h2, d, w_scale=1.0 / math.sqrt(h2))
    _init_linear(params, rng, f"{prefix}.logstd", h2, d,
                 w_scale=1.0 / math.sqrt(h2), b_value=LOG_STD_BIAS_INIT)


def _init_decoder(params, rng, prefix, d, out_dim):
    h1, h2 = ENC_HIDDEN
    _init_linear(params, rng, f"{prefix}.l0", d, h2)
    _init_linear(params, rng, f"{prefix}.l1", h2, h1)
    _init_linear(params, rng, f"{prefix}.out", h1, out_dim, w_scale=1.0 / math.sqrt(h1))


def init_bundle(hp: HyperParams, seed: int) -> ModelBundle:
    """Deterministic parameter init; every variant shares this inventory."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1B1D]))
    d = hp.latent_dim
    params: dict = {}
    _init_encoder(params, rng, "cam_enc", hp.camera_dim, d)
    _init_decoder(params, rng, "cam_dec", d, hp.camera_dim)
    _init_encoder(params, rng, "tac_enc", hp.tactile_dim, d)
    _init_decoder(params, rng, "tac_dec", d, hp.tactile_dim)
    g1, g2 = GOAL_HIDDEN
    _init_linear(params, rng, "goal.l0", d, g1)
    _init_linear(params, rng, "goal.l1", g1, g2)
    _init_linear(params, rng, "goal.mean", g2, d, w_scale=1.0 / math.sqrt(g2))
    _init_linear(params, rng, "goal.logstd", g2, d,
                 w_scale=1.0 / math.sqrt(g2), b_value=LOG_STD_BIAS_INIT)
    a1, a2 = ABC_HIDDEN
    for net in ("f_a", "f_b", "f_c"):
        _init_linear(params, rng, f"{net}.l0", 3 * d, a1)
        _init_linear(params, rng, f"{net}.l1", a1, a2)
        _init_linear(params, rng, f"{net}.out", a2, d, w_scale=1.0 / math.sqrt(a2))
    return ModelBundle(hp=hp, params=params)


# -- network application -------------------------------------------------------


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(np.asarray(x, dtype=np.float64))


def _layer(tape, params, name, x):
    return affine(tape, x, params[f"{name}.w"], params[f"{name}.b"])


def _encode(tape, params, prefix, images) -> DiagGaussian:
    x = _as_tensor(images)
    h = leaky_relu(tape, _layer(tape, params, f"{prefix}.l0", x), LEAKY_SLOPE)
    h = leaky_relu(tape, _layer(tape, params, f"{prefix}.l1", h), LEAKY_SLOPE)
    return DiagGaussian(
        _layer(tape, params, f"{prefix}.mean", h),
        _layer(tape, params, f"{prefix}.logstd", h),
    )


def _decode(tape, params, prefix, latent, input_scale: float) -> Tensor:
    x = _as_tensor(latent)
    if input_scale != 1.0:
        x = scale(tape, x, input_scale)
    h = leaky_relu(tape, _layer(tape, params, f"{prefix}.l0", x), LEAKY_SLOPE)
    h = leaky_relu(tape, _layer(tape, params, f"{prefix}.l1", h), LEAKY_SLOPE)
    return sigmoid(tape, _layer(tape, params, f"{prefix}.out", h))


def encode_camera(tape: Tape, bundle: ModelBundle, images) -> DiagGaussian:
    """q(x | I): flattened camera images (B, camera_dim) -> belief over x."""
    images = _as_tensor(images)
    if images.data.shape[-1] != bundle.hp.camera_dim:
        raise ValueError(
            f"encode_camera: expected trailing dim {bundle.hp.camera_dim}, "
            f"got {images.data.shape}"
        )
    return _encode(tape, bundle.params, "cam_enc", images)


def encode_tactile(tape: Tape, bundle: ModelBundle, images) -> DiagGaussian:
    """q(z | I_z): flattened tactile images (B, tactile_dim) -> belief over z."""
    images = _as_tensor(images)
    if images.data.shape[-1] != bundle.hp.tactile_dim:
        raise ValueError(
            f"encode_tactile: expected trailing dim {bundle.hp.tactile_dim}, "
            f"got {images.data.shape}"
        )
    return _encode(tape, bundle.params, "tac_enc", images)


def predict_goal(tape: Tape, bundle: ModelBundle, z) -> DiagGaussian:
    """p(x_g | z): tactile latent -> belief over the insertion position.

    z has no pinned scale, so the input enters unscaled; only the output
    lives in latent (metric) coordinates.
    """
    h = _as_tensor(z)
    h = leaky_relu(tape, _layer(tape, bundle.params, "goal.l0", h), LEAKY_SLOPE)
    h = leaky_relu(tape, _layer(tape, bundle.params, "goal.l1", h), LEAKY_SLOPE)
    return DiagGaussian(
        _layer(tape, bundle.params, "goal.mean", h),
        _layer(tape, bundle.params, "goal.logstd", h),
    )


def decode_camera(tape: Tape, bundle: ModelBundle, x) -> Tensor:
    """Mean of p(I | x): latent -> flattened image mean in [0, 1]."""
    return _decode(tape, bundle.params, "cam_dec", x, bundle.hp.camera_latent_scale)


def decode_tactile(tape: Tape, bundle: ModelBundle, z) -> Tensor:
    return _decode(tape, bundle.params, "tac_dec", z, 1.0)


def transition_prior(tape: Tape, x, u, hp: HyperParams) -> DiagGaussian:
    """p(x' | x, u) = N(x + dt*u, sigma_x^2) — the metric-pinning prior."""
    x = _as_tensor(x)
    u = _as_tensor(u)
    mean = add(tape, x, scale(tape, u, hp.dt))
    log_std = constant(np.full(mean.data.shape, math.log(hp.sigma_x)))
    return DiagGaussian(mean, log_std)


def nvae_velocity_update(tape: Tape, bundle: ModelBundle, x, v, u, dt: float,
                         trainable: bool) -> Tensor:
    """v' = v + dt * (A x + B v + C u) with diagonal A, B, C.

    Fixed mode pins A=0, B=0, C=1; trainable mode evaluates the three
    diagonal networks at (x, v, u) with B = -exp(f_b) and C = exp(f_c).
    """
    x, v, u = _as_tensor(x), _as_tensor(v), _as_tensor(u)
    if not trainable:
        return add(tape, v, scale(tape, u, dt))
    inp = concat(tape, (x, v, u), axis=-1)

    def head(prefix):
        h = leaky_relu(tape, _layer(tape, bundle.params, f"{prefix}.l0", inp), LEAKY_SLOPE)
        h = leaky_relu(tape, _layer(tape, bundle.params, f"{prefix}.l1", h), LEAKY_SLOPE)
        return _layer(tape, bundle.params, f"{prefix}.out", h)

    a_diag = head("f_a")
    b_diag = neg(tape, exp(tape, head("f_b")))
    c_diag = exp(tape, head("f_c"))
    acc = add(
        tape,
        add(tape, mul(tape, a_diag, x), mul(tape, b_diag, v)),
        mul(tape, c_diag, u),
    )
    return add(tape, v, scale(tape, acc, dt))


# -- batching ------------------------------------------------------------------


@dataclass
class CollatedData:
    """Episode arrays flattened once so a training step is pure BLAS."""

    images: np.ndarray    # (N_ep, H, camera_dim)
    actions: np.ndarray   # (N_ep, H, D) velocity actions as recorded
    tactiles: np.ndarray  # (N_ep, tactile_dim)
    goals: np.ndarray     # (N_ep, camera_dim)

    @property
    def n_episodes(self) -> int:
        return self.images.shape[0]

    @property
    def horizon(self) -> int:
        return self.images.shape[1]


@dataclass
class SequenceBatch:
    images: np.ndarray    # (B*H, camera_dim)
    actions: np.ndarray   # (B, H, D)
    tactiles: np.ndarray  # (B, tactile_dim)
    goals: np.ndarray     # (B, camera_dim)
    batch: int
    horizon: int


def collate_episodes(episodes, hp: HyperParams) -> CollatedData:
    if not episodes:
        raise ValueError("collate_episodes: empty dataset")
    h = len(episodes[0].frames)
    if h < 2:
        raise ValueError(f"collate_episodes: horizon {h} too short, need >= 2")
    images = np.stack([
        np.stack([f[0].reshape(-1) for f in ep.frames]) for ep in episodes
    ])
    actions = np.stack([np.stack([f[1] for f in ep.frames]) for ep in episodes])
    tactiles = np.stack([ep.tactile.reshape(-1) for ep in episodes])
    goals = np.stack([ep.goal_image.reshape(-1) for ep in episodes])
    if images.shape[-1] != hp.camera_dim or tactiles.shape[-1] != hp.tactile_dim:
        raise ValueError("collate_episodes: image dims do not match hyperparameters")
    return CollatedData(images=images, actions=actions, tactiles=tactiles, goals=goals)


def make_batch(data: CollatedData, idx) -> SequenceBatch:
    idx = np.asarray(idx)
    b, h = idx.size, data.horizon
    return SequenceBatch(
        images=data.images[idx].reshape(b * h, -1),
        actions=data.actions[idx],
        tactiles=data.tactiles[idx],
        goals=data.goals[idx],
        batch=b,
        horizon=h,
    )


def acceleration_actions(actions: np.ndarray, dt: float) -> np.ndarray:
    """Reinterpret recorded velocity actions as accelerations by differencing.

    The arm is at rest when an episode starts, so the pre-episode velocity is
    zero; a[t] = (u[t] - u[t-1]) / dt reproduces u under v' = v + dt*a.
    """
    prev = np.concatenate([np.zeros_like(actions[..., :1, :]), actions[..., :-1, :]], axis=-2)
    return (actions - prev) / dt


# -- losses --------------------------------------------------------------------


def _unit_log_prob(tape, target, mean_tensor):
    """log N(target | mean, I) summed per row (unit-variance pixel model).

    Specialized from the general Gaussian log density: with std = 1 it is
    -1/2 ||target - mean||^2 - n/2 log(2 pi) per row, which avoids several
    full-image passes on the hottest arrays in training.
    """
    n = mean_tensor.data.shape[-1]
    diff = sub(tape, _as_tensor(target), mean_tensor)
    sq = sum_elems(tape, mul(tape, diff, diff), axis=-1)
    return add(tape, scale(tape, sq, -0.5), constant(-0.5 * n * math.log(2.0 * math.pi)))


def loss_lx(tape: Tape, bundle: ModelBundle, batch: SequenceBatch,
            rng: np.random.Generator) -> Tensor:
    """Sequence loss: reconstruction through the transition prior plus the
    KL between the next-step posterior and that prior, averaged over
    transitions.  Differentiable w.r.t. every camera-side parameter."""
    hp = bundle.hp
    b, h = batch.batch, batch.horizon
    if h < 2:
        raise ValueError(f"loss_lx: need >= 2 frames per episode, got {h}")
    base = np.repeat(np.arange(b) * h, h - 1) + np.tile(np.arange(h - 1), b)
    rows_t = base
    rows_t1 = base + 1

    q_all = encode_camera(tape, bundle, batch.images)
    x_all = sample_reparameterized(tape, q_all, rng)
    x_t = gather_rows(tape, x_all, rows_t)
    u_t = batch.actions.reshape(b * h, -1)[rows_t]
    prior = transition_prior(tape, x_t, u_t, hp)
    q_next = DiagGaussian(
        gather_rows(tape, q_all.mean, rows_t1),
        gather_rows(tape, q_all.log_std, rows_t1),
    )
    kl_rows = diag_gaussian_kl(tape, q_next, prior, axis=-1)
    x_next = sample_reparameterized(tape, prior, rng)
    recon = decode_camera(tape, bundle, x_next)
    logp_rows = _unit_log_prob(tape, batch.images[rows_t1], recon)
    total = sum_elems(tape, sub(tape, kl_rows, logp_rows))
    return scale(tape, total, 1.0 / rows_t.size)


def loss_lz(tape: Tape, bundle: ModelBundle, tactiles, goals,
            rng: np.random.Generator) -> Tensor:
    """Tactile branch loss: tactile reconstruction, goal-image reconstruction
    through x_g ~ p(x_g|z), and KL(q(x_g|I_g) || p(x_g|z))."""
    qz = encode_tactile(tape, bundle, tactiles)
    z = sample_reparameterized(tape, qz, rng)
    logp_z = _unit_log_prob(tape, tactiles, decode_tactile(tape, bundle, z))
    pg = predict_goal(tape, bundle, z)
    x_g = sample_reparameterized(tape, pg, rng)
    logp_g = _unit_log_prob(tape, goals, decode_camera(tape, bundle, x_g))
    qg = encode_camera(tape, bundle, goals)
    kl = diag_gaussian_kl(tape, qg, pg, axis=-1)
    n = qz.mean.data.shape[0]
    total = sum_elems(tape, sub(tape, kl, add(tape, logp_z, logp_g)))
    return scale(tape, total, 1.0 / n)


def loss_additional_kl(tape: Tape, bundle: ModelBundle, tactiles, goals,
                       hp: HyperParams | None = None) -> Tensor:
    """Domain-knowledge anchors: KL of both goal heads against N(0, sigma_g^2).

    Evaluated at the tactile posterior mean; gradients reach the camera
    encoder (via q(x_g|I_g)) and the goal predictor (via p(x_g|z)).
    """
    hp = hp or bundle.hp
    if hp.sigma_g <= 0:
        raise ValueError(f"loss_additional_kl: sigma_g must be positive, got {hp.sigma_g}")
    qg = encode_camera(tape, bundle, goals)
    z_mean = encode_tactile(tape, bundle, tactiles).mean
    pg = predict_goal(tape, bundle, z_mean)
    n = qg.mean.data.shape[0]
    anchor = DiagGaussian(
        constant(np.zeros(qg.mean.data.shape)),
        constant(np.full(qg.mean.data.shape, math.log(hp.sigma_g))),
    )
    total = add(
        tape,
        diag_gaussian_kl(tape, qg, anchor),
        diag_gaussian_kl(tape, pg, anchor),
    )
    return scale(tape, total, 1.0 / n)


def loss_nvae(tape: Tape, bundle: ModelBundle, batch: SequenceBatch,
              rng: np.random.Generator) -> Tensor:
    """Double-integrator objective (acceleration actions) plus the N(0,1)
    latent regularizer.  Velocities come from differenced posterior samples."""
    hp = bundle.hp
    b, h = batch.batch, batch.horizon
    if h < 3:
        raise ValueError(f"loss_nvae: need >= 3 frames per episode, got {h}")
    base = np.repeat(np.arange(b) * h, h - 2) + np.tile(np.arange(1, h - 1), b)
    rows_tm1, rows_t, rows_t1 = base - 1, base, base + 1

    q_all = encode_camera(tape, bundle, batch.images)
    x_all = sample_reparameterized(tape, q_all, rng)
    x_tm1 = gather_rows(tape, x_all, rows_tm1)
    x_t = gather_rows(tape, x_all, rows_t)
    v_t = scale(tape, sub(tape, x_t, x_tm1), 1.0 / hp.dt)
    accel = acceleration_actions(batch.actions, hp.dt).reshape(b * h, -1)[rows_t]
    v_next = nvae_velocity_update(tape, bundle, x_t, v_t, constant(accel), hp.dt,
                                  trainable=hp.trainable_abc)
    mean = add(tape, x_t, scale(tape, v_next, hp.dt))
    prior = DiagGaussian(mean, constant(np.full(mean.data.shape, math.log(hp.nvae_sigma))))
    q_next = DiagGaussian(
        gather_rows(tape, q_all.mean, rows_t1),
        gather_rows(tape, q_all.log_std, rows_t1),
    )
    kl_rows = diag_gaussian_kl(tape, q_next, prior, axis=-1)
    x_next = sample_reparameterized(tape, prior, rng)
    recon = decode_camera(tape, bundle, x_next)
    logp_rows = _unit_log_prob(tape, batch.images[rows_t1], recon)
    seq = scale(tape, sum_elems(tape, sub(tape, kl_rows, logp_rows)), 1.0 / rows_t.size)

    std_normal = DiagGaussian(
        constant(np.zeros(q_all.mean.data.shape)),
        constant(np.zeros(q_all.mean.data.shape)),
    )
    reg = scale(tape, diag_gaussian_kl(tape, q_all, std_normal),
                1.0 / q_all.mean.data.shape[0])
    return add(tape, seq, reg)


def variant_loss(tape: Tape, bundle: ModelBundle, batch: SequenceBatch,
                 rng: np.random.Generator) -> Tensor:
    """Objective for the bundle's variant (the Fig.-style grid mapping)."""
    hp = bundle.hp
    if hp.is_nvae_family:
        total = loss_nvae(tape, bundle, batch, rng)
        if hp.trains_tactile:
            total = add(tape, total, loss_lz(tape, bundle, batch.tactiles, batch.goals, rng))
        return total
    total = add(
        tape,
        loss_lx(tape, bundle, batch, rng),
        loss_lz(tape, bundle, batch.tactiles, batch.goals, rng),
    )
    if hp.uses_additional_kl:
        total = add(tape, total, loss_additional_kl(tape, bundle, batch.tactiles, batch.goals))
    return total


# -- training ------------------------------------------------------------------


def train(episodes, hp: HyperParams, seed: int, progress=None):
    """Train a fresh bundle on ``episodes``; returns (bundle, per-step losses).

    Deterministic in (episodes, hp, seed): same inputs give bit-identical
    parameters.  Raises :class:`TrainingDiverged` if the loss goes non-finite.
    """
    from .optim import AdamState, adam_step
    from .autodiff import backward

    data = collate_episodes(episodes, hp)
    bundle = init_bundle(hp, seed)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x7EA1]))
    adam = AdamState(lr=hp.learning_rate)
    losses = np.empty(hp.train_steps)
    n_ep = data.n_episodes
    batch_n = min(hp.batch_episodes, n_ep)
    for step in range(hp.train_steps):
        idx = rng.choice(n_ep, size=batch_n, replace=False)
        batch = make_batch(data, idx)
        tape = Tape()
        loss = variant_loss(tape, bundle, batch, rng)
        value = float(loss.data)
        if not np.isfinite(value):
            raise TrainingDiverged(step, value)
        losses[step] = value
        backward(tape, loss)
        grads = {k: p.grad for k, p in bundle.params.items() if p.grad is not None}
        adam_step(bundle.params, grads, adam)
        bundle.zero_grads()
        if progress is not None and (step % 1000 == 0 or step == hp.train_steps - 1):
            progress(step, value)
    return bundle, losses


# -- inference helpers (no gradients kept) --------------------------------------


def camera_latent(bundle: ModelBundle, images) -> np.ndarray:
    """Posterior mean over x for flattened camera images (B, camera_dim)."""
    return encode_camera(Tape(), bundle, np.atleast_2d(images)).mean.data


def tactile_latent(bundle: ModelBundle, images) -> np.ndarray:
    return encode_tactile(Tape(), bundle, np.atleast_2d(images)).mean.data


def goal_latent(bundle: ModelBundle, tactile_image) -> np.ndarray:
    """x_g inferred from one tactile image: predict_goal(q(z|I_z).mean).mean."""
    z = tactile_latent(bundle, tactile_image.reshape(1, -1))
    return predict_goal(Tape(), bundle, z).mean.data[0]
