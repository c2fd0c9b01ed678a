"""
Tests for training loops, early stopping and grid search
"""

import numpy as np
import pytest
from pytest_mock import MockerFixture

from src.articulatory import ArticulatorySequence, TrackKind
from src.datasets import AlignedUtterance
from src.errors import ConfigError
from src.models import AutoencoderModel, AutoencoderSpec, BlstmModel, BlstmSpec, ResDnnSpec, WindowedFrames
from src.numerics import OptimizerConfig
from src.training import (
    EarlyStopping,
    TrainingLog,
    blstm_inputs,
    build_weak_model,
    grid_search,
    train_blstm,
    train_weakly,
)

SGD = OptimizerConfig(kind="sgd-exp-decay")


def _frames(rng: np.random.Generator, utterances: int = 3, n: int = 10) -> WindowedFrames:
    return WindowedFrames(
        [rng.normal(size=(n, 5)) for _ in range(utterances)],
        [rng.normal(size=(n, 3)) for _ in range(utterances)],
        1,
    )


def _utterance(rng: np.random.Generator, utt_id: str, n: int = 6, target: bool = True) -> AlignedUtterance:
    labels = ["sil", "aa", "aa", "b", "b", "sil"][:n]
    return AlignedUtterance(
        utt_id=utt_id,
        speaker="s1",
        gender="M",
        acoustic=rng.normal(size=(n, 3)),
        labels=labels,
        priors=rng.integers(-2, 3, size=(n, 10)).astype(float),
        target=ArticulatorySequence(frames=rng.normal(size=(n, 6)), kind=TrackKind.VTV) if target else None,
    )


@pytest.mark.unit
class TestEarlyStopping:
    """Test the patience rule"""

    def test_stops_after_patience(self, toy_resdnn_spec: ResDnnSpec) -> None:
        """Test that three epochs without improvement stop training"""
        model = build_weak_model(toy_resdnn_spec)
        stopper = EarlyStopping(patience=3)
        decisions = [stopper.update(k + 1, v, model) for k, v in enumerate([3.0, 2.0, 2.5, 2.6, 2.7])]
        assert decisions == [False, False, False, False, True]
        assert (stopper.best_epoch, stopper.best) == (2, 2.0)

    def test_improvement_resets_counter(self, toy_resdnn_spec: ResDnnSpec) -> None:
        """Test that a new best resets the bad-epoch count"""
        model = build_weak_model(toy_resdnn_spec)
        stopper = EarlyStopping(patience=2)
        decisions = [stopper.update(k + 1, v, model) for k, v in enumerate([3.0, 4.0, 2.0, 5.0])]
        assert decisions == [False, False, False, False]


@pytest.mark.unit
class TestWeaklySupervised:
    """Test the frame-minibatch training loop"""

    def test_max_epochs(self, toy_autoencoder_spec: AutoencoderSpec, rng: np.random.Generator) -> None:
        """Test that training without stalls runs to the epoch cap"""
        model = AutoencoderModel(toy_autoencoder_spec)
        log = train_weakly(model, _frames(rng), _frames(rng), SGD, seed=1, max_epochs=3, patience=100)
        assert log.stop_reason == "max-epochs"
        assert [e.epoch for e in log.epochs] == [1, 2, 3]
        assert model.trained
        assert log.best_valid == min(e.valid_error for e in log.epochs)

    def test_early_stop_restores_best(
        self, toy_autoencoder_spec: AutoencoderSpec, rng: np.random.Generator, mocker: MockerFixture
    ) -> None:
        """Test that a worsening validation error stops training and restores epoch 1"""
        model = AutoencoderModel(toy_autoencoder_spec)
        snapshots: list[dict[str, np.ndarray]] = []

        def fake_error(m: AutoencoderModel, frames: WindowedFrames) -> float:
            snapshots.append(m.params.snapshot())
            return [1.0, 2.0, 3.0][len(snapshots) - 1]

        mocker.patch("src.training.reconstruction_error", side_effect=fake_error)
        log = train_weakly(model, _frames(rng), _frames(rng), SGD, max_epochs=10, patience=1)
        assert log.stop_reason == "early-stop"
        assert (log.best_epoch, len(log.epochs)) == (1, 2)
        for name, value in snapshots[0].items():
            np.testing.assert_array_equal(model.params[name].data, value)

    def test_seed_determinism(self, toy_autoencoder_spec: AutoencoderSpec) -> None:
        """Test that equal seeds and data give equal parameters"""
        results = []
        for _ in range(2):
            rng = np.random.default_rng(5)
            model = AutoencoderModel(toy_autoencoder_spec)
            train_weakly(model, _frames(rng), _frames(rng), SGD, seed=2, max_epochs=2, patience=5)
            results.append(model.params.snapshot())
        for name in results[0]:
            np.testing.assert_array_equal(results[0][name], results[1][name])

    def test_grid_search_keeps_best(
        self, toy_resdnn_spec: ResDnnSpec, rng: np.random.Generator, mocker: MockerFixture
    ) -> None:
        """Test that the candidate with the lowest validation error wins"""
        specs = [toy_resdnn_spec.model_copy(update={"trunk_widths": [w]}) for w in (4, 5, 6)]
        logs = [TrainingLog(best_valid=v) for v in (0.5, 0.2, 0.9)]
        mocker.patch("src.training.train_weakly", side_effect=logs)
        best, results = grid_search(specs, _frames(rng), _frames(rng), SGD)
        assert best.spec.trunk_widths == [5]
        assert [r[1] for r in results] == [0.5, 0.2, 0.9]

    def test_grid_search_needs_candidates(self, rng: np.random.Generator) -> None:
        """Test that an empty grid is a configuration error"""
        with pytest.raises(ConfigError):
            grid_search([], _frames(rng), _frames(rng), SGD)


@pytest.mark.unit
class TestBlstmTraining:
    """Test BLSTM inputs and the utterance-batch loop"""

    def test_input_concatenation(self, rng: np.random.Generator) -> None:
        """Test mfcc, one-hot phones and priors column blocks"""
        utt = _utterance(rng, "u1")
        x = blstm_inputs(utt, "mfcc+phones", ["aa", "b", "sil"])
        assert x.shape == (6, 6)
        np.testing.assert_array_equal(x[:, :3], utt.acoustic)
        np.testing.assert_array_equal(x[0, 3:], [0, 0, 1])
        assert blstm_inputs(utt, "mfcc+lf").shape == (6, 13)
        np.testing.assert_array_equal(blstm_inputs(utt, "sf"), utt.priors)

    def test_phone_outside_inventory(self, rng: np.random.Generator) -> None:
        """Test that an unknown phone in one-hot mode is a configuration error"""
        with pytest.raises(ConfigError, match="inventory"):
            blstm_inputs(_utterance(rng, "u1"), "phones", ["aa"])

    def test_missing_targets(self, rng: np.random.Generator) -> None:
        """Test that supervised training needs articulatory targets"""
        model = BlstmModel(BlstmSpec(input_dim=3, output_dim=6, layers=1, hidden=2))
        with pytest.raises(ConfigError, match="lack articulatory targets"):
            train_blstm(model, [_utterance(rng, "u1", target=False)], [_utterance(rng, "u2")], OptimizerConfig())

    def test_short_run(self, rng: np.random.Generator) -> None:
        """Test a two-epoch run over variable-length utterances"""
        model = BlstmModel(BlstmSpec(input_dim=3, output_dim=6, layers=1, hidden=4, seed=1))
        train = [_utterance(rng, f"t{k}", n=4 + k % 3) for k in range(5)]
        valid = [_utterance(rng, "v1")]
        log = train_blstm(model, train, valid, OptimizerConfig(learning_rate=0.005), max_epochs=2, patience=5)
        assert len(log.epochs) == 2
        assert model.trained
        assert np.isfinite(log.final_loss)
