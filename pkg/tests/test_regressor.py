import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from restep.degradation import ConstantSchedule, forward_interpolate
from restep.oracles import GaussianMixturePrior, GaussianPrior, LinearDegradation
from restep.regressor import (
    TIME_DISTRIBUTION_KINDS,
    MlpRegressor,
    TimeDistribution,
    TrainConfig,
    TrainingDivergenceError,
    load_checkpoint,
    loss_and_gradients,
    sample_time,
    sample_times,
    save_checkpoint,
    time_distribution_cdf,
    train,
)
from restep.worlds import GaussianWorld, MixtureWorld


class TestTimeDistributions:
    def test_known_kinds(self):
        assert TIME_DISTRIBUTION_KINDS == (
            "linear_0", "linear_a", "bias_t1", "bias_t0", "bias_t0_t1"
        )
        with pytest.raises(ValueError):
            TimeDistribution("gaussian")

    def test_frozen_cdf_values(self):
        # Midpoints of the warped distributions, computed by hand from the
        # arcsin inversions.
        assert time_distribution_cdf(
            TimeDistribution("bias_t1"), 0.7071067811865475
        ) == pytest.approx(0.5, abs=1e-15)
        assert time_distribution_cdf(
            TimeDistribution("bias_t0"), 1.0 - 0.7071067811865475
        ) == pytest.approx(0.5, abs=1e-12)
        assert time_distribution_cdf(
            TimeDistribution("bias_t0_t1"), 0.5
        ) == pytest.approx(0.5, abs=1e-15)
        assert time_distribution_cdf(TimeDistribution("linear_0"), 0.25) == 0.25

    @pytest.mark.parametrize("kind", ["linear_0", "bias_t1", "bias_t0", "bias_t0_t1"])
    def test_samples_match_analytic_cdf(self, kind):
        dist = TimeDistribution(kind)
        rng = np.random.default_rng(100 + len(kind))
        draws = sample_times(dist, rng, size=20_000)
        assert draws.min() >= 0.0 and draws.max() <= 1.0
        res = stats.kstest(draws, lambda t: time_distribution_cdf(dist, t))
        assert res.pvalue > 1e-3

    def test_linear_a_atom_and_body(self):
        dist = TimeDistribution("linear_a", a=1.0)
        rng = np.random.default_rng(55)
        n = 40_000
        draws = sample_times(dist, rng, size=n)
        atom = draws == 1.0
        # atom mass a / (1 + a) = 0.5
        assert abs(atom.mean() - 0.5) < 3.0 * 0.5 / np.sqrt(n)
        body = draws[~atom]
        assert body.max() < 1.0
        res = stats.kstest(body, stats.uniform(loc=0.0, scale=1.0).cdf)
        assert res.pvalue > 1e-3

    def test_linear_a_cdf_has_jump_at_one(self):
        dist = TimeDistribution("linear_a", a=3.0)
        assert time_distribution_cdf(dist, 1.0) == 1.0
        assert time_distribution_cdf(dist, 0.999999) == pytest.approx(
            0.999999 / 4.0, rel=1e-9
        )

    def test_bias_direction_ordering(self):
        rng = np.random.default_rng(7)
        means = {
            kind: sample_times(TimeDistribution(kind), rng, size=20_000).mean()
            for kind in ("bias_t0", "linear_0", "bias_t1")
        }
        assert means["bias_t0"] < means["linear_0"] < means["bias_t1"]

    def test_scalar_draw(self):
        t = sample_time(TimeDistribution("linear_0"), np.random.default_rng(1))
        assert isinstance(t, float) and 0.0 <= t < 1.0

    def test_negative_atom_weight_rejected(self):
        with pytest.raises(ValueError):
            TimeDistribution("linear_a", a=-0.5)


class TestMlpForward:
    def test_create_shapes_and_input_width(self):
        rng = np.random.default_rng(0)
        model = MlpRegressor.create(state_dim=2, hidden=[5, 4], rng=rng)
        assert model.layer_sizes == (3, 5, 4, 2)
        assert model.weights[0].shape == (5, 3)
        assert model.biases[-1].shape == (2,)
        assert model.state_dim == 2

    def test_forward_matches_manual_chain(self):
        w0 = np.array([[0.5, -0.25, 0.1], [0.0, 1.0, -1.0]])
        b0 = np.array([0.1, -0.2])
        w1 = np.array([[1.0, 2.0], [-1.0, 0.5]])
        b1 = np.array([0.0, 0.3])
        model = MlpRegressor(
            layer_sizes=(3, 2, 2), weights=[w0, w1], biases=[b0, b1]
        )
        x = np.array([0.4, -0.6])
        t = 0.7
        inp = np.array([0.4, -0.6, 0.7])
        hidden = np.tanh(w0 @ inp + b0)
        want = w1 @ hidden + b1
        assert_allclose(model.predict(x, t), want, rtol=1e-15)

    def test_single_and_batch_agree(self):
        rng = np.random.default_rng(3)
        model = MlpRegressor.create(2, [6], rng)
        xs = rng.normal(size=(5, 2))
        ts = rng.uniform(0, 1, size=5)
        batch = model.predict(xs, ts)
        for i in range(5):
            assert_allclose(batch[i], model.predict(xs[i], float(ts[i])), rtol=1e-15)

    def test_mismatched_input_width_rejected(self):
        rng = np.random.default_rng(4)
        model = MlpRegressor.create(2, [4], rng)
        with pytest.raises(ValueError):
            model.predict(np.zeros(3), 0.5)
        with pytest.raises(ValueError):
            model.predict(np.zeros((2, 2)), np.zeros(3))

    def test_layer_size_contract_enforced(self):
        rng = np.random.default_rng(5)
        with pytest.raises(ValueError):
            MlpRegressor(
                layer_sizes=(3, 4, 3),    # output must be input - 1
                weights=[rng.normal(size=(4, 3)), rng.normal(size=(3, 4))],
                biases=[np.zeros(4), np.zeros(3)],
            )


class TestGradients:
    @pytest.mark.parametrize("activation", ["tanh", "relu"])
    @pytest.mark.parametrize("p_norm", [1, 2])
    def test_backprop_matches_central_differences(self, activation, p_norm):
        rng = np.random.default_rng(11)
        model = MlpRegressor.create(2, [4, 3], rng, activation=activation)
        inputs = rng.normal(size=(6, 3))
        targets = rng.normal(size=(6, 2))
        _, grads_w, grads_b = loss_and_gradients(model, inputs, targets, p_norm)
        h = 1e-6
        for l in range(len(model.weights)):
            for idx in [(0, 0), (model.weights[l].shape[0] - 1, 1)]:
                orig = model.weights[l][idx]
                model.weights[l][idx] = orig + h
                up, _, _ = loss_and_gradients(model, inputs, targets, p_norm)
                model.weights[l][idx] = orig - h
                dn, _, _ = loss_and_gradients(model, inputs, targets, p_norm)
                model.weights[l][idx] = orig
                fd = (up - dn) / (2 * h)
                assert_allclose(grads_w[l][idx], fd, rtol=1e-5, atol=1e-8)
            orig = model.biases[l][0]
            model.biases[l][0] = orig + h
            up, _, _ = loss_and_gradients(model, inputs, targets, p_norm)
            model.biases[l][0] = orig - h
            dn, _, _ = loss_and_gradients(model, inputs, targets, p_norm)
            model.biases[l][0] = orig
            assert_allclose(grads_b[l][0], (up - dn) / (2 * h), rtol=1e-5, atol=1e-8)

    def test_loss_values(self):
        rng = np.random.default_rng(12)
        model = MlpRegressor.create(1, [3], rng)
        inputs = rng.normal(size=(4, 2))
        targets = rng.normal(size=(4, 1))
        pred = model._forward(inputs)[-1]
        l1, _, _ = loss_and_gradients(model, inputs, targets, 1)
        l2, _, _ = loss_and_gradients(model, inputs, targets, 2)
        assert_allclose(l1, np.abs(pred - targets).mean(), rtol=1e-14)
        assert_allclose(l2, ((pred - targets) ** 2).mean(), rtol=1e-14)

    def test_unsupported_norm_rejected(self):
        rng = np.random.default_rng(13)
        model = MlpRegressor.create(1, [2], rng)
        with pytest.raises(ValueError):
            loss_and_gradients(model, np.zeros((2, 2)), np.zeros((2, 1)), 3)


class TestTraining:
    def make_world(self):
        prior = GaussianMixturePrior(
            modes=[[1.0, 1.0], [-1.0, -1.0]], weights=[0.5, 0.5]
        )
        return MixtureWorld(prior, LinearDegradation(np.eye(2), 0.8))

    def test_loss_decreases_on_toy_task(self):
        world = self.make_world()
        rng = np.random.default_rng(1)
        model = MlpRegressor.create(2, [16], np.random.default_rng(2))
        cfg = TrainConfig(p_norm=2, learning_rate=5e-3, batch_size=64, steps=400)
        trained, losses = train(model, world.pair_stream(rng), cfg)
        assert losses.shape == (400,)
        assert losses[-50:].mean() < 0.5 * losses[:50].mean()
        assert trained.training_seed == cfg.seed

    def test_zero_steps_is_identity(self):
        world = self.make_world()
        model = MlpRegressor.create(2, [8], np.random.default_rng(3))
        cfg = TrainConfig(steps=0)
        trained, losses = train(model, world.pair_stream(np.random.default_rng(4)), cfg)
        assert losses.shape == (0,)
        assert trained.training_seed is None
        for w_new, w_old in zip(trained.weights, model.weights):
            assert_array_equal(w_new, w_old)

    def test_input_model_is_untouched(self):
        world = self.make_world()
        model = MlpRegressor.create(2, [8], np.random.default_rng(5))
        before = [w.copy() for w in model.weights]
        train(model, world.pair_stream(np.random.default_rng(6)),
              TrainConfig(steps=30, batch_size=16))
        for w, b in zip(model.weights, before):
            assert_array_equal(w, b)

    def test_training_is_deterministic(self):
        world = self.make_world()
        cfg = TrainConfig(steps=50, batch_size=32, seed=9)
        runs = []
        for _ in range(2):
            model = MlpRegressor.create(2, [8], np.random.default_rng(7))
            trained, losses = train(
                model, world.pair_stream(np.random.default_rng(8)), cfg
            )
            runs.append((trained, losses))
        assert_array_equal(runs[0][1], runs[1][1])
        for wa, wb in zip(runs[0][0].weights, runs[1][0].weights):
            assert_array_equal(wa, wb)

    def test_first_step_replays_from_documented_draw_order(self):
        """Step k draws from default_rng(SeedSequence((seed, k))): first the
        batch times, then the forward noise.  Replaying that recipe by hand
        reproduces the trainer's first Adam update exactly."""
        world = self.make_world()
        seed = 21
        sched = ConstantSchedule(0.3)
        cfg = TrainConfig(
            p_norm=2, learning_rate=1e-2, batch_size=8, steps=1,
            time_dist=TimeDistribution("bias_t1"), schedule=sched, seed=seed,
        )
        model = MlpRegressor.create(2, [4], np.random.default_rng(10))
        data_rng = np.random.default_rng(77)
        trained, losses = train(model, world.pair_stream(data_rng), cfg)

        # manual replay
        replay_rng = np.random.default_rng(77)
        stream = world.pair_stream(replay_rng)
        batch = [next(stream) for _ in range(8)]
        x = np.stack([p.x for p in batch])
        y = np.stack([p.y for p in batch])
        step_rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
        t = sample_times(TimeDistribution("bias_t1"), step_rng, size=8)
        x_t = forward_interpolate(x, y, t)
        std = t * 0.3
        x_t = x_t + std[:, None] * step_rng.standard_normal(x_t.shape)
        inputs = np.concatenate([x_t, t[:, None]], axis=1)
        loss, grads_w, grads_b = loss_and_gradients(model, inputs, x, 2)
        assert_allclose(losses[0], loss, rtol=1e-15)
        grads = grads_w + grads_b
        params = [w.copy() for w in model.weights] + [b.copy() for b in model.biases]
        for p, g in zip(params, grads):
            m_hat = (1 - 0.9) * g / (1 - 0.9)
            v_hat = (1 - 0.999) * g * g / (1 - 0.999)
            p -= 1e-2 * m_hat / (np.sqrt(v_hat) + 1e-8)
        got = trained.weights + trained.biases
        for have, want in zip(got, params):
            assert_allclose(have, want, rtol=1e-12, atol=1e-15)

    def test_exhausted_stream_is_an_error(self):
        world = self.make_world()
        x, y = world.sample_pairs(np.random.default_rng(1), 10)
        from restep.degradation import PairedSample
        short = [PairedSample(x[i], y[i]) for i in range(10)]
        with pytest.raises(ValueError, match="exhausted"):
            train(
                MlpRegressor.create(2, [4], np.random.default_rng(2)),
                iter(short),
                TrainConfig(steps=2, batch_size=8),
            )

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_reports_step_and_batch_seed(self):
        world = self.make_world()
        model = MlpRegressor.create(2, [4], np.random.default_rng(30),
                                    activation="relu")
        model.weights[0][:] = 1e200
        model.weights[1][:] = 1e200
        cfg = TrainConfig(p_norm=2, steps=5, batch_size=4, seed=123)
        with pytest.raises(TrainingDivergenceError) as info:
            train(model, world.pair_stream(np.random.default_rng(31)), cfg)
        assert info.value.step_index == 0
        assert info.value.batch_seed == (123, 0)

    def test_dimension_mismatch_rejected(self):
        prior = GaussianPrior(c=[0.0], sigma_c=1.0)
        world = GaussianWorld(prior, 1.0)
        model = MlpRegressor.create(2, [4], np.random.default_rng(1))
        with pytest.raises(ValueError):
            train(model, world.pair_stream(np.random.default_rng(2)),
                  TrainConfig(steps=1, batch_size=4))


class TestCheckpoints:
    def roundtrip(self, tmp_path, model):
        path = tmp_path / "model.bin"
        save_checkpoint(model, path)
        return path, load_checkpoint(path)

    def test_roundtrip_is_exact(self, tmp_path):
        model = MlpRegressor.create(2, [5, 3], np.random.default_rng(40),
                                    activation="relu")
        model.training_seed = 987654321
        _, back = self.roundtrip(tmp_path, model)
        assert back.layer_sizes == model.layer_sizes
        assert back.activation == "relu"
        assert back.training_seed == 987654321
        for wa, wb in zip(model.weights, back.weights):
            assert_array_equal(wa, wb)
        for ba, bb in zip(model.biases, back.biases):
            assert_array_equal(ba, bb)

    def test_missing_seed_roundtrips_as_none(self, tmp_path):
        model = MlpRegressor.create(1, [2], np.random.default_rng(41))
        _, back = self.roundtrip(tmp_path, model)
        assert back.training_seed is None

    def test_header_layout(self, tmp_path):
        import struct
        model = MlpRegressor.create(1, [2], np.random.default_rng(42))
        path = tmp_path / "m.bin"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        assert blob[:8] == b"RSTEPMLP"
        assert struct.unpack("<I", blob[8:12]) == (1,)
        assert struct.unpack("<I", blob[12:16]) == (3,)    # (2, 2, 1)
        sizes = struct.unpack("<3I", blob[16:28])
        assert sizes == (2, 2, 1)
        n_params = 2 * 2 + 2 + 1 * 2 + 1
        name = b"tanh"
        want_len = 28 + 4 + len(name) + 1 + 8 + 8 * n_params
        assert len(blob) == want_len

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOTMODEL" + b"\x00" * 32)
        with pytest.raises(ValueError, match="magic"):
            load_checkpoint(path)

    def test_truncation_rejected(self, tmp_path):
        model = MlpRegressor.create(1, [2], np.random.default_rng(43))
        path = tmp_path / "t.bin"
        save_checkpoint(model, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(ValueError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path):
        model = MlpRegressor.create(1, [2], np.random.default_rng(44))
        path = tmp_path / "t.bin"
        save_checkpoint(model, path)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(ValueError, match="trailing"):
            load_checkpoint(path)

    def test_unsupported_version_rejected(self, tmp_path):
        import struct
        model = MlpRegressor.create(1, [2], np.random.default_rng(45))
        path = tmp_path / "v.bin"
        save_checkpoint(model, path)
        blob = bytearray(path.read_bytes())
        blob[8:12] = struct.pack("<I", 2)
        path.write_bytes(bytes(blob))
        with pytest.raises(ValueError, match="version"):
            load_checkpoint(path)
