"""
Pytest configuration and fixtures for artic_inversion tests
Provides seeded generators, toy model specs and small synthetic corpora.
"""

from collections.abc import Generator
from pathlib import Path

import numpy as np
import pytest
from scipy.io import wavfile

from src.articulatory import PriorTable, load_prior_table
from src.config import Config, reload_config
from src.datasets import SynthConfig, SynthCorpus, synth_corpus
from src.models import AutoencoderSpec, BlstmSpec, LossConfig, ResDnnSpec
from src.utils import DEFAULT_LF_TABLE


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch: pytest.MonkeyPatch) -> Generator[Config, None, None]:
    """Repository defaults, untouched by the caller's environment."""
    for key in ("ARTIC_CONFIG", "ARTIC_THREADS", "ARTIC_LOG_LEVEL", "ARTIC_SAMPLE_RATE"):
        monkeypatch.delenv(key, raising=False)
    config = reload_config()
    yield config
    reload_config()


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for random test instances."""
    return np.random.default_rng(1234)


@pytest.fixture
def lf_table() -> PriorTable:
    """Shipped expert (LF) prior table."""
    return load_prior_table(DEFAULT_LF_TABLE)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory: pytest.TempPathFactory) -> SynthCorpus:
    """Four speakers × six utterances over eight phones, written once per session."""
    return synth_corpus(
        tmp_path_factory.mktemp("synth_small"),
        SynthConfig(speakers=4, utterances=6, phones=8, seed=3, noise=0.1),
    )


@pytest.fixture(scope="session")
def desk_corpus(tmp_path_factory: pytest.TempPathFactory) -> SynthCorpus:
    """Six speakers × forty utterances with noise 0.3, the desk-scale benchmark corpus."""
    return synth_corpus(tmp_path_factory.mktemp("synth_desk"), SynthConfig())


@pytest.fixture
def sine_wav(tmp_path: Path) -> Path:
    """One second of a 440 Hz tone as 16 kHz mono PCM."""
    rate = 16000
    t = np.arange(rate) / rate
    samples = (0.3 * 32767 * np.sin(2 * np.pi * 440 * t)).astype(np.int16)
    path = tmp_path / "tone.wav"
    wavfile.write(path, rate, samples)
    return path


@pytest.fixture
def toy_autoencoder_spec() -> AutoencoderSpec:
    """AE2 with a 5-dim acoustic frame, 3-dim priors and T = 1."""
    return AutoencoderSpec(
        kind="ae2", context=1, encoder_widths=[6, 4], acoustic_dim=5, prior_dim=3, seed=5, loss=LossConfig()
    )


@pytest.fixture
def toy_resdnn_spec() -> ResDnnSpec:
    """ResDNN with a 4-dim acoustic frame, 3-dim priors and T = 1."""
    return ResDnnSpec(context=1, prior_dim=3, acoustic_dim=4, trunk_widths=[5], seed=2)


@pytest.fixture
def toy_blstm_spec() -> BlstmSpec:
    """Two-layer, three-block BLSTM from 4 inputs to 2 outputs."""
    return BlstmSpec(input_dim=4, output_dim=2, layers=2, hidden=3, seed=9)
