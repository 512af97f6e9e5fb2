import math

import numpy as np
import pytest

from tsnvae.autodiff import Tape, backward, constant
from tsnvae.data import collect_dataset
from tsnvae.gaussian import diag_gaussian_kl
from tsnvae.model import (
    VARIANTS,
    HyperParams,
    TrainingDiverged,
    acceleration_actions,
    camera_latent,
    collate_episodes,
    decode_camera,
    decode_tactile,
    encode_camera,
    encode_tactile,
    goal_latent,
    hyperparams_for_variant,
    init_bundle,
    loss_additional_kl,
    loss_lx,
    loss_lz,
    loss_nvae,
    make_batch,
    nvae_velocity_update,
    predict_goal,
    train,
    transition_prior,
    variant_loss,
)
from tsnvae.sim import SimConfig
from tsnvae.train import load_checkpoint, save_checkpoint

from _oracles import spot_check_grads

TINY = SimConfig(camera_size=8, tactile_size=6)


def tiny_hp(variant="TS-NVAE", **kw):
    kw.setdefault("camera_size", TINY.camera_size)
    kw.setdefault("tactile_size", TINY.tactile_size)
    return hyperparams_for_variant(variant, **kw)


@pytest.fixture(scope="module")
def tiny_episodes():
    return collect_dataset(TINY, 4, range(4))


@pytest.fixture(scope="module")
def tiny_batch(tiny_episodes):
    hp = tiny_hp()
    return make_batch(collate_episodes(tiny_episodes, hp), np.arange(4))


class _ZeroNoise:
    """rng stand-in that makes reparameterized samples equal the mean."""

    def standard_normal(self, shape):
        return np.zeros(shape)


class TestHyperParams:
    def test_variant_forcing(self):
        assert hyperparams_for_variant("TS-NVAE").sigma_x == 0.0001
        assert hyperparams_for_variant("TS-NVAE/sigma_x=1").sigma_x == 1.0
        assert hyperparams_for_variant("TS-NVAE").sigma_g == 0.0015

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            hyperparams_for_variant("NVAE-XL")

    def test_variant_switches(self):
        hp = hyperparams_for_variant("NVAE")
        assert hp.is_nvae_family and not hp.trains_tactile and not hp.uses_additional_kl
        hp = hyperparams_for_variant("NVAE+tactile")
        assert hp.is_nvae_family and hp.trains_tactile
        hp = hyperparams_for_variant("TS-NVAE/NoAdditionalKL")
        assert not hp.is_nvae_family and hp.trains_tactile and not hp.uses_additional_kl
        assert hyperparams_for_variant("NVAE/trainABC").trainable_abc


class TestNetworks:
    def test_init_deterministic_and_finite(self):
        a = init_bundle(tiny_hp(), seed=3)
        b = init_bundle(tiny_hp(), seed=3)
        assert list(a.params) == list(b.params)
        for k in a.params:
            assert np.array_equal(a.params[k].data, b.params[k].data)
        assert a.all_finite()

    def test_encode_deterministic(self, tiny_batch):
        bundle = init_bundle(tiny_hp(), seed=0)
        q1 = encode_camera(Tape(), bundle, tiny_batch.images[:3])
        q2 = encode_camera(Tape(), bundle, tiny_batch.images[:3])
        assert np.array_equal(q1.mean.data, q2.mean.data)
        assert np.array_equal(q1.log_std.data, q2.log_std.data)
        assert np.isfinite(q1.mean.data).all() and np.isfinite(q1.log_std.data).all()

    def test_tactile_purity(self, tiny_episodes):
        bundle = init_bundle(tiny_hp(), seed=0)
        ep = tiny_episodes[0]
        a = encode_tactile(Tape(), bundle, ep.tactile.reshape(1, -1))
        b = encode_tactile(Tape(), bundle, ep.tactile.reshape(1, -1))
        assert np.array_equal(a.mean.data, b.mean.data)

    def test_decoders_bounded(self):
        bundle = init_bundle(tiny_hp(), seed=1)
        rng = np.random.default_rng(0)
        for _ in range(5):
            x = rng.normal(0, 2, size=(4, 2))
            img = decode_camera(Tape(), bundle, x).data
            tac = decode_tactile(Tape(), bundle, x).data
            assert img.min() >= 0.0 and img.max() <= 1.0
            assert tac.min() >= 0.0 and tac.max() <= 1.0

    def test_predict_goal_deterministic(self):
        bundle = init_bundle(tiny_hp(), seed=1)
        z = np.array([[0.3, -0.2]])
        a = predict_goal(Tape(), bundle, z)
        b = predict_goal(Tape(), bundle, z)
        assert np.array_equal(a.mean.data, b.mean.data)

    def test_encode_shape_mismatch_rejected(self):
        bundle = init_bundle(tiny_hp(), seed=1)
        with pytest.raises(ValueError, match="encode_camera"):
            encode_camera(Tape(), bundle, np.zeros((2, 17)))
        with pytest.raises(ValueError, match="encode_tactile"):
            encode_tactile(Tape(), bundle, np.zeros((2, 17)))


class TestTransition:
    def test_prior_arithmetic(self):
        hp = tiny_hp()
        tape = Tape()
        prior = transition_prior(tape, np.array([[0.01, 0.02]]), np.array([[0.01, -0.01]]), hp)
        assert np.allclose(prior.mean.data, [[0.015, 0.015]])
        assert np.allclose(prior.std_values(), 1e-4)

    def test_prior_zero_action(self):
        hp = tiny_hp()
        prior = transition_prior(Tape(), np.array([[0.3, -0.4]]), np.zeros((1, 2)), hp)
        assert np.allclose(prior.mean.data, [[0.3, -0.4]])

    def test_sigma_x_one_variant(self):
        hp = tiny_hp("TS-NVAE/sigma_x=1")
        prior = transition_prior(Tape(), np.zeros((1, 2)), np.zeros((1, 2)), hp)
        assert np.allclose(prior.std_values(), 1.0)

    def test_velocity_update_fixed_mode(self):
        bundle = init_bundle(tiny_hp("NVAE"), seed=0)
        v1 = nvae_velocity_update(Tape(), bundle, np.zeros((1, 2)), np.zeros((1, 2)),
                                  np.array([[0.01, 0.0]]), 0.5, trainable=False)
        assert np.allclose(v1.data, [[0.005, 0.0]])
        v2 = nvae_velocity_update(Tape(), bundle, np.array([[0.7, -0.7]]),
                                  np.array([[0.02, 0.03]]), np.zeros((1, 2)), 0.5,
                                  trainable=False)
        assert np.allclose(v2.data, [[0.02, 0.03]])

    def test_trainable_mode_sign_constraints(self):
        rng = np.random.default_rng(11)
        for seed in range(3):
            bundle = init_bundle(tiny_hp("NVAE/trainABC"), seed=seed)
            # rescale the raw head outputs to exercise a wide range
            for k in ("f_b.out.w", "f_c.out.w"):
                bundle.params[k].data *= 5.0
            tape = Tape()
            x = constant(rng.normal(0, 1, (6, 2)))
            v = constant(rng.normal(0, 1, (6, 2)))
            u = constant(rng.normal(0, 1, (6, 2)))
            from tsnvae.model import _layer, LEAKY_SLOPE  # introspect head outputs
            from tsnvae.autodiff import concat, leaky_relu, exp, neg
            inp = concat(tape, (x, v, u), axis=-1)

            def head(prefix):
                h = leaky_relu(tape, _layer(tape, bundle.params, f"{prefix}.l0", inp), LEAKY_SLOPE)
                h = leaky_relu(tape, _layer(tape, bundle.params, f"{prefix}.l1", h), LEAKY_SLOPE)
                return _layer(tape, bundle.params, f"{prefix}.out", h)

            b_diag = neg(tape, exp(tape, head("f_b"))).data
            c_diag = exp(tape, head("f_c")).data
            assert np.all(b_diag < 0)
            assert np.all(c_diag > 0)

    def test_acceleration_round_trip(self):
        rng = np.random.default_rng(5)
        u = rng.uniform(-0.01, 0.01, size=(3, 7, 2))
        a = acceleration_actions(u, dt=0.5)
        # integrating accelerations from rest recovers the velocities
        v = np.zeros((3, 2))
        for t in range(7):
            v = v + 0.5 * a[:, t]
            assert np.allclose(v, u[:, t], atol=1e-12)


class TestLossGradients:
    # h = 1e-6 at the loss level: the metric-scale latents are amplified
    # x100 into the decoders, so a 1e-5 secant can straddle leaky-ReLU
    # kinks and the tight priors make h^2 truncation visible
    def _check(self, loss_builder, bundle, entries=3, seed=0):
        def run():
            tape = Tape()
            return tape, loss_builder(tape)

        tape, loss = run()
        assert np.isfinite(loss.data).all()
        backward(tape, loss)
        grads = {k: p for k, p in bundle.params.items() if p.grad is not None}
        assert grads, "loss produced no gradients"
        spot_check_grads(lambda: float(run()[1].data), grads,
                         np.random.default_rng(seed), entries_per_tensor=entries, h=1e-6)

    # gradcheck uses gentler prior stds than the production 1e-4: the code
    # path is identical (sigma enters as data) but the tight prior's huge
    # third derivative would otherwise dominate the h^2 truncation error
    def test_loss_lx_matches_finite_differences(self, tiny_batch):
        bundle = init_bundle(tiny_hp(sigma_x=0.05), seed=2)
        noise = _ZeroNoise()
        self._check(lambda tape: loss_lx(tape, bundle, tiny_batch, noise), bundle)

    def test_loss_lz_matches_finite_differences(self, tiny_batch):
        bundle = init_bundle(tiny_hp(), seed=3)
        noise = _ZeroNoise()
        self._check(
            lambda tape: loss_lz(tape, bundle, tiny_batch.tactiles, tiny_batch.goals, noise),
            bundle,
        )

    def test_loss_additional_kl_matches_finite_differences(self, tiny_batch):
        bundle = init_bundle(tiny_hp(), seed=4)
        self._check(
            lambda tape: loss_additional_kl(tape, bundle, tiny_batch.tactiles, tiny_batch.goals),
            bundle,
        )

    def test_loss_nvae_fixed_matches_finite_differences(self, tiny_batch):
        bundle = init_bundle(tiny_hp("NVAE", nvae_sigma=0.3), seed=5)
        noise = _ZeroNoise()
        self._check(lambda tape: loss_nvae(tape, bundle, tiny_batch, noise), bundle)

    def test_loss_nvae_trainable_matches_finite_differences(self, tiny_batch):
        bundle = init_bundle(tiny_hp("NVAE/trainABC", nvae_sigma=0.3), seed=6)
        noise = _ZeroNoise()
        self._check(lambda tape: loss_nvae(tape, bundle, tiny_batch, noise), bundle)

    def test_reparameterized_losses_with_real_noise(self, tiny_batch):
        # frozen noise draws: rebuild the same rng each evaluation
        bundle = init_bundle(tiny_hp(sigma_x=0.05), seed=7)

        def run():
            tape = Tape()
            rng = np.random.default_rng(123)
            return tape, variant_loss(tape, bundle, tiny_batch, rng)

        tape, loss = run()
        backward(tape, loss)
        grads = {k: p for k, p in bundle.params.items() if p.grad is not None}
        spot_check_grads(lambda: float(run()[1].data), grads,
                         np.random.default_rng(9), entries_per_tensor=2)


class TestLossStructure:
    def test_lx_kl_terms_nonnegative(self, tiny_batch):
        # reproduce the internal per-transition KL and check each term
        bundle = init_bundle(tiny_hp(), seed=8)
        hp = bundle.hp
        b, h = tiny_batch.batch, tiny_batch.horizon
        tape = Tape()
        q_all = encode_camera(tape, bundle, tiny_batch.images)
        base = np.repeat(np.arange(b) * h, h - 1) + np.tile(np.arange(h - 1), b)
        from tsnvae.autodiff import gather_rows
        from tsnvae.gaussian import DiagGaussian
        x_t = gather_rows(tape, q_all.mean, base)
        u_t = tiny_batch.actions.reshape(b * h, -1)[base]
        prior = transition_prior(tape, x_t, u_t, hp)
        q_next = DiagGaussian(
            gather_rows(tape, q_all.mean, base + 1),
            gather_rows(tape, q_all.log_std, base + 1),
        )
        kl = diag_gaussian_kl(tape, q_next, prior, axis=-1)
        assert np.all(kl.data >= 0.0)

    def test_lx_requires_two_frames(self, tiny_episodes):
        hp = tiny_hp()
        data = collate_episodes(tiny_episodes, hp)
        batch = make_batch(data, [0])
        batch.images = batch.images[:1]
        batch.horizon = 1
        with pytest.raises(ValueError, match="frames"):
            loss_lx(Tape(), init_bundle(hp, 0), batch, _ZeroNoise())

    def test_additional_kl_zero_when_heads_match_anchor(self, tiny_batch):
        hp = tiny_hp()
        bundle = init_bundle(hp, seed=9)
        # force q(x_g|I_g) and p(x_g|z) to output exactly N(0, sigma_g^2)
        for prefix in ("cam_enc", "goal"):
            for layer in ("mean", "logstd"):
                bundle.params[f"{prefix}.{layer}.w"].data[:] = 0.0
            bundle.params[f"{prefix}.mean.b"].data[:] = 0.0
            bundle.params[f"{prefix}.logstd.b"].data[:] = math.log(hp.sigma_g)
        val = loss_additional_kl(Tape(), bundle, tiny_batch.tactiles, tiny_batch.goals)
        assert val.data == pytest.approx(0.0, abs=1e-12)

    def test_additional_kl_millimeter_case(self, tiny_batch):
        hp = tiny_hp()
        bundle = init_bundle(hp, seed=10)
        for prefix in ("cam_enc", "goal"):
            for layer in ("mean", "logstd"):
                bundle.params[f"{prefix}.{layer}.w"].data[:] = 0.0
        # goal head exactly at the anchor; encoder at the documented offset
        bundle.params["goal.mean.b"].data[:] = 0.0
        bundle.params["goal.logstd.b"].data[:] = math.log(hp.sigma_g)
        bundle.params["cam_enc.mean.b"].data[:] = [0.002, 0.0]
        bundle.params["cam_enc.logstd.b"].data[:] = np.log([0.001, 0.0015])
        val = loss_additional_kl(Tape(), bundle, tiny_batch.tactiles, tiny_batch.goals)
        assert val.data == pytest.approx(1.0165762192192756, abs=1e-9)

    def test_additional_kl_reaches_both_heads(self, tiny_batch):
        bundle = init_bundle(tiny_hp(), seed=11)
        tape = Tape()
        val = loss_additional_kl(tape, bundle, tiny_batch.tactiles, tiny_batch.goals)
        backward(tape, val)
        assert bundle.params["goal.mean.w"].grad is not None
        assert np.abs(bundle.params["goal.mean.w"].grad).max() > 0
        assert bundle.params["cam_enc.mean.w"].grad is not None
        assert np.abs(bundle.params["cam_enc.mean.w"].grad).max() > 0

    def test_additional_kl_requires_positive_sigma_g(self, tiny_batch):
        hp = HyperParams(sigma_g=0.0, camera_size=8, tactile_size=6)
        bundle = init_bundle(hp, seed=0)
        with pytest.raises(ValueError, match="sigma_g"):
            loss_additional_kl(Tape(), bundle, tiny_batch.tactiles, tiny_batch.goals, hp)

    def test_losses_permutation_invariant(self, tiny_episodes):
        hp = tiny_hp()
        bundle = init_bundle(hp, seed=12)
        data = collate_episodes(tiny_episodes, hp)
        noise = _ZeroNoise()
        perm = [2, 0, 3, 1]
        a = variant_loss(Tape(), bundle, make_batch(data, [0, 1, 2, 3]), noise)
        b = variant_loss(Tape(), bundle, make_batch(data, perm), noise)
        assert a.data == pytest.approx(b.data, rel=1e-12)


class TestTraining:
    def test_deterministic_same_seed(self, tiny_episodes):
        hp = tiny_hp(train_steps=12)
        b1, l1 = train(tiny_episodes, hp, seed=21)
        b2, l2 = train(tiny_episodes, hp, seed=21)
        assert np.array_equal(l1, l2)
        for k in b1.params:
            assert np.array_equal(b1.params[k].data, b2.params[k].data)

    def test_different_seeds_differ(self, tiny_episodes):
        hp = tiny_hp(train_steps=6)
        b1, _ = train(tiny_episodes, hp, seed=1)
        b2, _ = train(tiny_episodes, hp, seed=2)
        assert any(
            not np.array_equal(b1.params[k].data, b2.params[k].data) for k in b1.params
        )

    def test_loss_decreases(self, tiny_episodes):
        hp = tiny_hp(train_steps=2000)
        _, losses = train(tiny_episodes, hp, seed=5)
        assert losses[-1] < losses[0]
        assert np.isfinite(losses).all()

    def test_nvae_never_touches_tactile_parameters(self, tiny_episodes):
        for variant in ("NVAE", "NVAE/trainABC"):
            hp = tiny_hp(variant, train_steps=8)
            bundle, _ = train(tiny_episodes, hp, seed=6)
            fresh = init_bundle(hp, seed=6)
            for k in bundle.params:
                if k.startswith(("tac_enc", "tac_dec", "goal")):
                    assert np.array_equal(bundle.params[k].data, fresh.params[k].data), k
                elif k.startswith("cam_enc"):
                    assert not np.array_equal(bundle.params[k].data, fresh.params[k].data), k

    def test_all_variants_train_finite(self, tiny_episodes):
        for variant in VARIANTS:
            hp = tiny_hp(variant, train_steps=5)
            bundle, losses = train(tiny_episodes, hp, seed=7)
            assert np.isfinite(losses).all(), variant
            assert bundle.all_finite(), variant

    def test_nan_loss_aborts_with_step(self, tiny_episodes, monkeypatch):
        hp = tiny_hp(train_steps=10)
        calls = {"n": 0}
        import tsnvae.model as model_mod

        real = model_mod.variant_loss

        def poisoned(tape, bundle, batch, rng):
            calls["n"] += 1
            out = real(tape, bundle, batch, rng)
            if calls["n"] == 3:
                out.data = np.array(np.nan)
            return out

        monkeypatch.setattr(model_mod, "variant_loss", poisoned)
        with pytest.raises(TrainingDiverged, match="step 2"):
            train(tiny_episodes, hp, seed=8)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train([], tiny_hp(train_steps=1), seed=0)


class TestCheckpoint:
    def test_round_trip(self, tiny_episodes, tmp_path):
        hp = tiny_hp(train_steps=4)
        bundle, losses = train(tiny_episodes, hp, seed=9)
        path = tmp_path / "m.ckpt"
        save_checkpoint(bundle, path, losses)
        loaded, curve = load_checkpoint(path)
        assert loaded.hp == bundle.hp
        assert list(loaded.params) == list(bundle.params)
        for k in bundle.params:
            assert np.array_equal(loaded.params[k].data, bundle.params[k].data)
        assert np.array_equal(curve, losses)

    def test_bit_identical_files(self, tiny_episodes, tmp_path):
        hp = tiny_hp(train_steps=2)
        bundle, losses = train(tiny_episodes, hp, seed=10)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(bundle, p1, losses)
        save_checkpoint(bundle, p2, losses)
        assert p1.read_bytes() == p2.read_bytes()

    def test_wrong_magic_rejected(self, tiny_episodes, tmp_path):
        from tsnvae.container import ContainerError
        from tsnvae.data import save_dataset

        path = tmp_path / "d.tsnv"
        save_dataset(tiny_episodes, path, TINY)
        with pytest.raises(ContainerError):
            load_checkpoint(path)


class TestInferenceHelpers:
    def test_camera_latent_matches_encoder(self, tiny_batch):
        bundle = init_bundle(tiny_hp(), seed=13)
        direct = encode_camera(Tape(), bundle, tiny_batch.images[:5]).mean.data
        assert np.array_equal(camera_latent(bundle, tiny_batch.images[:5]), direct)

    def test_goal_latent_shape(self, tiny_episodes):
        bundle = init_bundle(tiny_hp(), seed=14)
        g = goal_latent(bundle, tiny_episodes[0].tactile)
        assert g.shape == (2,)
        assert np.isfinite(g).all()
