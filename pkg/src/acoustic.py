"""
Acoustic front-end: 13 MFCCs plus deltas and delta-deltas every 10 ms,
and per-speaker z-normalization.
"""

from pathlib import Path

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy.fft import dct, rfft
from scipy.io import wavfile

from src.config import FeatureConfig, get_config
from src.errors import DataError
from src.utils import read_frame_file, write_frame_file

FEATURE_MAGIC = b"AFEA"
MIN_SAMPLE_RATE = 8000


class AcousticSequence(BaseModel):
    """N × 39 feature frames of one utterance"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    frames: np.ndarray
    utt_id: str = ""
    frame_period_ms: float = 10.0

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])


class SpeakerStats(BaseModel):
    """Per-dimension mean and population std of one speaker's frames"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    speaker: str
    mean: np.ndarray
    std: np.ndarray
    n_frames: int = Field(ge=1)

    @property
    def dims(self) -> int:
        return int(self.mean.shape[0])


def read_wav(path: Path, expected_rate: int | None = None) -> tuple[np.ndarray, int]:
    """
    Read a 16-bit PCM mono WAV file as float samples in [-1, 1).
    With `expected_rate` set, a header with another rate is a data error.
    """
    try:
        rate, samples = wavfile.read(path)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read WAV: {e}", path) from e
    if samples.dtype != np.int16:
        raise DataError(f"only 16-bit PCM is supported, got {samples.dtype}", path)
    if samples.ndim != 1:
        raise DataError(f"only mono audio is supported, got {samples.shape[1]} channels", path)
    if expected_rate is not None and rate != expected_rate:
        raise DataError(f"sample rate {rate} Hz does not match the expected {expected_rate} Hz", path)
    return samples.astype(np.float64) / 32768.0, int(rate)


def frame_count(n_samples: int, window: int, hop: int) -> int:
    """N = floor((samples − window) / hop) + 1"""
    return (n_samples - window) // hop + 1


def hz_to_mel(hz: np.ndarray | float) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + np.asarray(hz) / 700.0)


def mel_to_hz(mel: np.ndarray | float) -> np.ndarray:
    return 700.0 * (10.0 ** (np.asarray(mel) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sample_rate: int) -> np.ndarray:
    """
    Triangular filters equally spaced on the mel scale from 0 Hz to Nyquist,
    evaluated at the rfft bin frequencies. Shape (n_filters, nfft // 2 + 1).
    """
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_filters + 2))
    bins = np.fft.rfftfreq(nfft, d=1.0 / sample_rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins[None, :] - lower) / (center - lower)
    falling = (upper - bins[None, :]) / (upper - center)
    return np.clip(np.minimum(rising, falling), 0.0, None)


def dct_basis(n_in: int, n_out: int | None = None) -> np.ndarray:
    """Rows of the orthonormal DCT-II matrix, (n_out, n_in)"""
    return dct(np.eye(n_in), type=2, norm="ortho", axis=0)[: n_out or n_in]


def compute_mfcc(samples: np.ndarray, sample_rate: int, cfg: FeatureConfig | None = None) -> np.ndarray:
    """
    Pre-emphasis, Hamming frames, magnitude FFT, mel filterbank, log, orthonormal DCT-II.
    c0 is kept as the first coefficient. Returns (N, n_ceps).
    """
    cfg = cfg or get_config().features
    if sample_rate < MIN_SAMPLE_RATE:
        raise DataError(f"sample rate {sample_rate} Hz is below {MIN_SAMPLE_RATE} Hz")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size == 0:
        raise DataError("audio must be a non-empty mono signal")

    window = int(round(cfg.window_ms * sample_rate / 1000.0))
    hop = int(round(cfg.hop_ms * sample_rate / 1000.0))
    if samples.size < window:
        raise DataError(f"audio has {samples.size} samples, shorter than one {window}-sample window")

    emphasized = np.concatenate([samples[:1], samples[1:] - cfg.preemphasis * samples[:-1]])
    n_frames = frame_count(samples.size, window, hop)
    frames = np.lib.stride_tricks.sliding_window_view(emphasized, window)[::hop][:n_frames]
    frames = frames * np.hamming(window)

    nfft = 1 << (window - 1).bit_length()
    magnitude = np.abs(rfft(frames, n=nfft, axis=1))
    energies = magnitude @ mel_filterbank(cfg.n_filters, nfft, sample_rate).T
    log_energies = np.log(np.maximum(energies, cfg.log_floor))
    return dct(log_energies, type=2, norm="ortho", axis=1)[:, : cfg.n_ceps]


def deltas(features: np.ndarray, width: int = 2) -> np.ndarray:
    """Regression deltas over ±width frames with edge replication"""
    n = features.shape[0]
    padded = np.pad(features, ((width, width), (0, 0)), mode="edge")
    numerator = sum(
        k * (padded[width + k : width + k + n] - padded[width - k : width - k + n])
        for k in range(1, width + 1)
    )
    return numerator / (2.0 * sum(k * k for k in range(1, width + 1)))


def append_deltas(mfcc: np.ndarray, width: int | None = None) -> np.ndarray:
    """[static | Δ | ΔΔ] columns"""
    if mfcc.ndim != 2 or mfcc.shape[0] < 1:
        raise DataError(f"expected an (N >= 1, D) matrix, got shape {mfcc.shape}")
    width = width or get_config().features.delta_width
    first = deltas(mfcc, width)
    return np.hstack([mfcc, first, deltas(first, width)])


def extract_features(
    samples: np.ndarray, sample_rate: int, utt_id: str = "", cfg: FeatureConfig | None = None
) -> AcousticSequence:
    cfg = cfg or get_config().features
    frames = append_deltas(compute_mfcc(samples, sample_rate, cfg), cfg.delta_width)
    return AcousticSequence(frames=frames, utt_id=utt_id, frame_period_ms=cfg.hop_ms)


def fit_speaker_stats(
    sequences: list[np.ndarray], speaker: str = "", std_floor: float | None = None
) -> SpeakerStats:
    """Mean and population std over all frames of one speaker"""
    frames = [np.asarray(s) for s in sequences if len(s) > 0]
    if not frames:
        raise DataError(f"speaker '{speaker}' has no frames to compute statistics from")
    stacked = np.vstack(frames)
    floor = std_floor if std_floor is not None else get_config().features.std_floor
    std = np.maximum(stacked.std(axis=0), floor)
    return SpeakerStats(
        speaker=speaker, mean=stacked.mean(axis=0), std=std, n_frames=stacked.shape[0]
    )


def _check_dims(frames: np.ndarray, stats: SpeakerStats) -> None:
    if frames.ndim != 2 or frames.shape[1] != stats.dims:
        raise DataError(
            f"frame dims {frames.shape} do not match {stats.dims}-dim stats of '{stats.speaker}'"
        )


def z_normalize(frames: np.ndarray, stats: SpeakerStats) -> np.ndarray:
    _check_dims(frames, stats)
    return (frames - stats.mean) / stats.std


def denormalize(frames: np.ndarray, stats: SpeakerStats) -> np.ndarray:
    _check_dims(frames, stats)
    return frames * stats.std + stats.mean


def write_features(seq: AcousticSequence, path: Path) -> None:
    write_frame_file(path, FEATURE_MAGIC, seq.frames, int(round(seq.frame_period_ms * 1000)))


def read_features(path: Path) -> AcousticSequence:
    frames, period_us, _ = read_frame_file(path, FEATURE_MAGIC)
    logger.debug(f"Read {frames.shape[0]} feature frames from {path}")
    return AcousticSequence(frames=frames, utt_id=Path(path).stem, frame_period_ms=period_us / 1000.0)
