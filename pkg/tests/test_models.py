"""
Tests for the model families, their losses and checkpoint directories
"""

from pathlib import Path

import numpy as np
import pytest

from src.errors import ConfigError, DataError
from src.models import (
    ArticModel,
    AutoencoderModel,
    AutoencoderSpec,
    BlstmModel,
    BlstmSpec,
    ResDnnModel,
    ResDnnSpec,
    WindowedFrames,
    ae1_loss,
    ae2_loss,
    blstm_forward,
    context_windows,
    generate_afs,
    pad_batch,
    resdnn_loss,
    residual_layer,
    supervised_loss,
    window_index,
)
from src.numerics import ParameterSet, finite_difference_check


@pytest.mark.unit
class TestLosses:
    """Test the training objectives on hand-computed instances"""

    def test_ae1_loss(self) -> None:
        """Test window error 0.5 plus 2 × prior error 1 = 2.5"""
        loss = ae1_loss(
            np.array([[0.5, 0.5]]), np.array([[0.0, 0.0]]), np.array([[1.0]]), np.array([[0.0]]), lambda_z=2.0
        )
        assert loss.item() == pytest.approx(2.5, abs=1e-12)

    def test_ae2_loss(self) -> None:
        """Test window error 2 plus 0.5 × acoustic error 4 = 4.0"""
        loss = ae2_loss(
            np.array([[1.0, 1.0]]), np.array([[0.0, 0.0]]), np.array([[2.0, 0.0]]), np.array([[0.0, 0.0]]), lambda_x=0.5
        )
        assert loss.item() == pytest.approx(4.0, abs=1e-12)

    def test_resdnn_loss(self) -> None:
        """Test acoustic error 1 plus 0.01 × ‖w‖² 4 = 1.04"""
        loss = resdnn_loss(np.array([[1.0]]), np.array([[0.0]]), np.array([1.0, 1.0, 1.0, 1.0]), lambda_w=0.01)
        assert loss.item() == pytest.approx(1.04, abs=1e-12)

    def test_losses_average_over_batch(self) -> None:
        """Test that the squared norm is averaged over samples"""
        x = np.zeros((4, 2))
        x_hat = np.ones((4, 2))
        loss = ae2_loss(x, x_hat, np.zeros((4, 1)), np.zeros((4, 1)), lambda_x=0.5)
        assert loss.item() == pytest.approx(2.0)

    def test_shape_mismatch(self) -> None:
        """Test that mismatched operands raise"""
        with pytest.raises(ValueError, match="shape mismatch"):
            ae1_loss(np.zeros((1, 2)), np.zeros((1, 3)), np.zeros((1, 1)), np.zeros((1, 1)), 2.0)

    def test_supervised_mask(self) -> None:
        """Test that masked frames do not count"""
        pred = np.zeros((1, 3, 2))
        target = np.array([[[1.0, 1.0], [1.0, 1.0], [9.0, 9.0]]])
        mask = np.array([[True, True, False]])
        assert supervised_loss(pred, target, mask).item() == pytest.approx(1.0)


@pytest.mark.unit
class TestResidualLayer:
    """Test the coarticulation residual"""

    def test_single_frame_example(self) -> None:
        """Test T=0, z=[1,2], w=[0.1,0.1] → [1.3, 2.3]"""
        out = residual_layer(np.array([[1.0, 2.0]]), np.array([0.1, 0.1]))
        np.testing.assert_allclose(out.data, [1.3, 2.3], atol=1e-12)

    def test_zero_weights_are_identity(self, rng: np.random.Generator) -> None:
        """Test that w = 0 returns the center prior"""
        window = rng.normal(size=(5, 3))
        out = residual_layer(window, np.zeros(15))
        np.testing.assert_array_equal(out.data, window[2])

    def test_zero_weights_identity_random(self, rng: np.random.Generator) -> None:
        """Test w = 0 against 100 random contexts, prior widths and both weight shapes"""
        for _ in range(100):
            T, G = int(rng.integers(0, 4)), int(rng.integers(1, 7))
            window = rng.normal(size=(2 * T + 1, G))
            width = (2 * T + 1) * G
            np.testing.assert_array_equal(residual_layer(window, np.zeros(width)).data.reshape(-1), window[T])
            np.testing.assert_array_equal(residual_layer(window, np.zeros((G, width))).data.reshape(-1), window[T])

    def test_per_component(self) -> None:
        """Test a G × (2T+1)·G weight matrix adds a separate residual per component"""
        z = np.array([[1.0, 2.0]])
        w = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_allclose(residual_layer(z, w).data, [2.0, 4.0])

    def test_batched_windows(self, rng: np.random.Generator) -> None:
        """Test flattened (B, (2T+1)·G) windows against the single-window form"""
        windows = rng.normal(size=(4, 3, 2))
        w = rng.normal(size=6)
        batched = residual_layer(windows.reshape(4, 6), w, prior_dim=2).data
        for k in range(4):
            np.testing.assert_allclose(batched[k], residual_layer(windows[k], w).data)

    def test_even_window_refused(self) -> None:
        """Test that an even number of frames is refused"""
        with pytest.raises(ValueError, match="odd"):
            residual_layer(np.ones((1, 4)), np.ones(4), prior_dim=2)

    def test_gradients(self, rng: np.random.Generator) -> None:
        """Test residual weight gradients by finite differences"""
        params = ParameterSet()
        params.add("w", rng.normal(size=9))
        windows = rng.normal(size=(5, 9))
        target = rng.normal(size=(5, 3))
        error = finite_difference_check(
            lambda: (residual_layer(windows, params["w"], prior_dim=3) - target).square().sum(), params
        )
        assert error < 1e-5


@pytest.mark.unit
class TestWindows:
    """Test context windows"""

    def test_edges_are_replicated(self) -> None:
        """Test clamped indices at both ends"""
        np.testing.assert_array_equal(window_index(3, 1), [[0, 0, 1], [0, 1, 2], [1, 2, 2]])

    def test_flattened_frame_major(self) -> None:
        """Test the (N, (2T+1)·D) layout"""
        frames = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(context_windows(frames, 1)[1], [0, 1, 2, 3, 4, 5])

    def test_windows_stay_inside_utterances(self) -> None:
        """Test that concatenated utterances never share a window"""
        frames = WindowedFrames([np.zeros((2, 1)), np.ones((2, 1))], [np.zeros((2, 1)), np.ones((2, 1))], 1)
        batch = frames.batch(np.array([1, 2]))
        np.testing.assert_array_equal(batch["x_window"], [[0, 0, 0], [1, 1, 1]])

    def test_length_mismatch(self) -> None:
        """Test that acoustic and prior frame counts must agree"""
        with pytest.raises(DataError):
            WindowedFrames([np.zeros((3, 1))], [np.zeros((2, 1))], 1)


@pytest.mark.unit
class TestBlstm:
    """Test the bidirectional LSTM"""

    def test_zero_parameters_give_zero_output(self, toy_blstm_spec: BlstmSpec) -> None:
        """Test that all-zero parameters regress to zero"""
        model = BlstmModel(toy_blstm_spec)
        for _, tensor in model.params.items():
            tensor.data[...] = 0.0
        out = model.predict([np.random.default_rng(0).normal(size=(7, 4))])
        np.testing.assert_array_equal(out[0], np.zeros((7, 2)))

    def test_batch_invariance(self, toy_blstm_spec: BlstmSpec, rng: np.random.Generator) -> None:
        """Test that padding a sequence into a longer batch does not change it"""
        model = BlstmModel(toy_blstm_spec)
        short, long = rng.normal(size=(5, 4)), rng.normal(size=(9, 4))
        alone = model.predict([short])[0]
        batched = model.predict([long, short])[1]
        np.testing.assert_allclose(batched, alone, atol=1e-10)

    def test_bidirectional_context(self, toy_blstm_spec: BlstmSpec, rng: np.random.Generator) -> None:
        """Test that the first output depends on the last input frame"""
        model = BlstmModel(toy_blstm_spec)
        seq = rng.normal(size=(6, 4))
        changed = seq.copy()
        changed[-1] += 1.0
        assert not np.allclose(model.predict([seq])[0][0], model.predict([changed])[0][0])

    def test_parameter_layout(self, toy_blstm_spec: BlstmSpec) -> None:
        """Test per-direction gate parameters and zero peepholes"""
        params = BlstmModel(toy_blstm_spec).params
        assert params["lstm.0.fw.in.W"].shape == (12, 4)
        assert params["lstm.1.bw.in.W"].shape == (12, 6)
        assert params["lstm.0.fw.U"].shape == (12, 3)
        np.testing.assert_array_equal(params["lstm.0.bw.peep"].data, np.zeros((3, 3)))
        assert params["head.W"].shape == (2, 6)

    def test_wrong_input_dim(self, toy_blstm_spec: BlstmSpec) -> None:
        """Test that a wrongly sized input is a data error"""
        with pytest.raises(DataError, match="4-dim"):
            BlstmModel(toy_blstm_spec).predict([np.zeros((3, 5))])

    def test_pad_batch(self) -> None:
        """Test zero padding, lengths and mask"""
        batch, lengths, mask = pad_batch([np.ones((2, 1)), np.ones((3, 1))])
        assert batch.shape == (2, 3, 1)
        np.testing.assert_array_equal(lengths, [2, 3])
        np.testing.assert_array_equal(mask, [[True, True, False], [True, True, True]])
        assert batch[0, 2, 0] == 0.0

    def test_gradients(self, rng: np.random.Generator) -> None:
        """Test BLSTM gradients by finite differences on a tiny instance"""
        spec = BlstmSpec(input_dim=2, output_dim=2, layers=2, hidden=2, seed=4)
        model = BlstmModel(spec)
        for name, tensor in model.params.items():
            if name.endswith(".peep") or name.endswith(".b"):
                tensor.data[...] = rng.normal(scale=0.3, size=tensor.shape)
        seq = rng.normal(size=(4, 2))
        target = rng.normal(size=(4, 2))
        error = finite_difference_check(
            lambda: supervised_loss(blstm_forward(spec, model.params, seq), target), model.params
        )
        assert error < 1e-4

    def test_presets(self) -> None:
        """Test full and desk sizes"""
        full = BlstmSpec.preset("full", input_dim=39, output_dim=6)
        assert (full.layers, full.hidden) == (5, 250)
        assert BlstmSpec.preset("desk", input_dim=39, output_dim=6).hidden == 64


@pytest.mark.unit
class TestAutoencoder:
    """Test AE1 and AE2"""

    def test_layer_widths(self) -> None:
        """Test the hourglass around the bottleneck"""
        ae1 = AutoencoderSpec(kind="ae1", context=12)
        ae2 = AutoencoderSpec(kind="ae2", context=12)
        assert ae1.layer_widths == [975, 200, 130, 70, 10]
        assert ae2.layer_widths == [250, 200, 130, 70, 39]

    def test_ae2_generation_ignores_audio(self, toy_autoencoder_spec: AutoencoderSpec, rng: np.random.Generator) -> None:
        """Test that AE2 output depends only on the prior sequence"""
        model = AutoencoderModel(toy_autoencoder_spec, trained=True)
        priors = rng.normal(size=(8, 3))
        first = generate_afs(model, acoustic=rng.normal(size=(8, 5)), priors=priors)
        second = generate_afs(model, acoustic=rng.normal(size=(8, 5)), priors=priors)
        assert first.shape == (8, 3)
        np.testing.assert_array_equal(first, second)

    def test_average_overlaps(self, toy_autoencoder_spec: AutoencoderSpec, rng: np.random.Generator) -> None:
        """Test that overlap averaging keeps the N × G shape"""
        spec = toy_autoencoder_spec.model_copy(update={"average_overlaps": True})
        out = AutoencoderModel(spec, trained=True).generate(priors=rng.normal(size=(6, 3)))
        assert out.shape == (6, 3)
        assert np.all(np.isfinite(out))

    def test_ae1_generates_bottleneck(self, rng: np.random.Generator) -> None:
        """Test that AE1 generation is the G-dim code of each acoustic window"""
        spec = AutoencoderSpec(kind="ae1", context=1, encoder_widths=[4], acoustic_dim=5, prior_dim=3)
        out = AutoencoderModel(spec, trained=True).generate(acoustic=rng.normal(size=(7, 5)))
        assert out.shape == (7, 3)

    def test_untrained_generation(self, toy_autoencoder_spec: AutoencoderSpec) -> None:
        """Test that generating from an untrained model is a configuration error"""
        with pytest.raises(ConfigError, match="not been trained"):
            AutoencoderModel(toy_autoencoder_spec).generate(priors=np.zeros((4, 3)))

    def test_ae2_gradients(self, toy_autoencoder_spec: AutoencoderSpec, rng: np.random.Generator) -> None:
        """Test AE2 loss gradients by finite differences"""
        model = AutoencoderModel(toy_autoencoder_spec)
        frames = WindowedFrames([rng.normal(size=(6, 5))], [rng.normal(size=(6, 3))], 1)
        batch = frames.batch(np.arange(6))
        assert finite_difference_check(lambda: model.batch_loss(batch), model.params, max_entries=8) < 1e-4

    def test_ae1_gradients(self, rng: np.random.Generator) -> None:
        """Test AE1 loss gradients by finite differences"""
        spec = AutoencoderSpec(kind="ae1", context=1, encoder_widths=[4], acoustic_dim=5, prior_dim=3, seed=7)
        model = AutoencoderModel(spec)
        frames = WindowedFrames([rng.normal(size=(6, 5))], [rng.normal(size=(6, 3))], 1)
        batch = frames.batch(np.arange(6))
        assert finite_difference_check(lambda: model.batch_loss(batch), model.params, max_entries=8) < 1e-4

    def test_constant_phone_gives_constant_output(
        self, toy_autoencoder_spec: AutoencoderSpec, rng: np.random.Generator
    ) -> None:
        """Test that frames whose whole window lies in one phone get the same ẑ"""
        model = AutoencoderModel(toy_autoencoder_spec, trained=True)
        a, b = rng.normal(size=3), rng.normal(size=3)
        priors = np.vstack([np.tile(a, (3, 1)), np.tile(b, (8, 1)), np.tile(a, (3, 1))])
        out = model.generate(priors=priors)
        np.testing.assert_allclose(out[4:10], np.broadcast_to(out[4], (6, 3)), atol=1e-12)

        averaged = AutoencoderModel(
            toy_autoencoder_spec.model_copy(update={"average_overlaps": True}), trained=True
        ).generate(priors=np.tile(b, (7, 1)))
        np.testing.assert_allclose(averaged, np.broadcast_to(averaged[0], (7, 3)), atol=1e-12)

    def test_seed_determinism(self, toy_autoencoder_spec: AutoencoderSpec) -> None:
        """Test that equal seeds give equal parameters"""
        first = AutoencoderModel(toy_autoencoder_spec).params
        second = AutoencoderModel(toy_autoencoder_spec).params
        for name in first:
            np.testing.assert_array_equal(first[name].data, second[name].data)


@pytest.mark.unit
class TestResDnn:
    """Test the residual DNN"""

    def test_residual_starts_at_zero(self, toy_resdnn_spec: ResDnnSpec, rng: np.random.Generator) -> None:
        """Test that an untouched residual layer reproduces the priors"""
        model = ResDnnModel(toy_resdnn_spec, trained=True)
        priors = rng.normal(size=(5, 3))
        np.testing.assert_array_equal(model.generate(priors=priors), priors)

    def test_per_component_shape(self, toy_resdnn_spec: ResDnnSpec) -> None:
        """Test the per-component residual weight shape"""
        spec = toy_resdnn_spec.model_copy(update={"residual": "per-component"})
        assert ResDnnModel(spec).params["residual.w"].shape == (3, 9)

    def test_gradients(self, toy_resdnn_spec: ResDnnSpec, rng: np.random.Generator) -> None:
        """Test ResDNN loss gradients by finite differences"""
        model = ResDnnModel(toy_resdnn_spec)
        model.params["residual.w"].data[...] = rng.normal(scale=0.1, size=9)
        frames = WindowedFrames([rng.normal(size=(6, 4))], [rng.normal(size=(6, 3))], 1)
        batch = frames.batch(np.arange(6))
        assert finite_difference_check(lambda: model.batch_loss(batch), model.params) < 1e-4


@pytest.mark.unit
class TestCheckpointDirectory:
    """Test saving and loading models"""

    def test_save_load_round_trip(self, tmp_path: Path, toy_autoencoder_spec: AutoencoderSpec) -> None:
        """Test that a reloaded model generates identically"""
        model = AutoencoderModel(toy_autoencoder_spec, trained=True)
        model.save(tmp_path / "ckpt")
        loaded = ArticModel.load(tmp_path / "ckpt")
        assert isinstance(loaded, AutoencoderModel)
        assert loaded.trained
        priors = np.random.default_rng(0).normal(size=(5, 3))
        np.testing.assert_array_equal(loaded.generate(priors=priors), model.generate(priors=priors))

    def test_kind_mismatch(self, tmp_path: Path, toy_resdnn_spec: ResDnnSpec) -> None:
        """Test that loading through the wrong class is refused"""
        ResDnnModel(toy_resdnn_spec).save(tmp_path / "ckpt")
        with pytest.raises(DataError, match="expected a blstm"):
            BlstmModel.load(tmp_path / "ckpt")

    def test_parameter_mismatch(self, tmp_path: Path, toy_resdnn_spec: ResDnnSpec) -> None:
        """Test that a checkpoint inconsistent with its spec is refused"""
        ResDnnModel(toy_resdnn_spec).save(tmp_path / "a")
        other = toy_resdnn_spec.model_copy(update={"trunk_widths": [7]})
        ResDnnModel(other).save(tmp_path / "b")
        (tmp_path / "b" / "params.arcn").write_bytes((tmp_path / "a" / "params.arcn").read_bytes())
        with pytest.raises(DataError, match="do not match"):
            ArticModel.load(tmp_path / "b")

    def test_missing_spec(self, tmp_path: Path) -> None:
        """Test that a directory without model.toml is a data error"""
        with pytest.raises(DataError):
            ArticModel.load(tmp_path)
