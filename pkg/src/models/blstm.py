"""
Deep bidirectional peephole LSTM regressing articulatory frames from
acoustic and/or phonological input.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from src.errors import DataError
from src.models.base import ArticModel, add_dense, dense, derive_seed
from src.numerics import ParameterSet, Tensor, concat, lstm_recurrence, reverse_sequences, xavier_init

InputFeatures = Literal["mfcc", "phones", "lf", "sf", "mfcc+phones", "mfcc+lf", "mfcc+sf"]
DIRECTIONS = ("fw", "bw")


class BlstmSpec(BaseModel):
    input_dim: int = Field(ge=1)
    output_dim: int = Field(ge=1)
    layers: int = Field(default=5, ge=1)
    hidden: int = Field(default=250, ge=1, description="Memory blocks per direction per layer")
    peepholes: bool = True
    seed: int = 0
    inputs: InputFeatures = "mfcc"
    target: Literal["pt", "vtv"] = "vtv"
    phone_inventory: list[str] = Field(default_factory=list)

    @classmethod
    def preset(cls, scale: Literal["full", "desk"], **kwargs: object) -> "BlstmSpec":
        sizes = {"full": (5, 250), "desk": (2, 64)}[scale]
        return cls(layers=sizes[0], hidden=sizes[1], **kwargs)  # type: ignore[arg-type]


def pad_batch(sequences: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Zero-padded (B, N, D) batch, lengths and (B, N) validity mask"""
    if any(len(s) == 0 for s in sequences):
        raise DataError("cannot run the BLSTM on an empty sequence")
    lengths = np.array([len(s) for s in sequences])
    batch = np.zeros((len(sequences), lengths.max(), sequences[0].shape[1]))
    for k, seq in enumerate(sequences):
        batch[k, : len(seq)] = seq
    mask = np.arange(lengths.max())[None, :] < lengths[:, None]
    return batch, lengths, mask


class BlstmModel(ArticModel):
    kind = "blstm"
    spec_class = BlstmSpec

    spec: BlstmSpec

    def _init_params(self) -> ParameterSet:
        spec, params = self.spec, ParameterSet()
        index = 0
        fan_in = spec.input_dim
        for layer in range(spec.layers):
            for direction in DIRECTIONS:
                prefix = f"lstm.{layer}.{direction}"
                add_dense(params, f"{prefix}.in", fan_in, 4 * spec.hidden, derive_seed(spec.seed, index))
                recurrent = xavier_init(spec.hidden, 4 * spec.hidden, derive_seed(spec.seed, index + 1))
                params.add(f"{prefix}.U", recurrent)
                if spec.peepholes:
                    params.add(f"{prefix}.peep", np.zeros((3, spec.hidden)))
                index += 2
            fan_in = 2 * spec.hidden
        add_dense(params, "head", fan_in, spec.output_dim, derive_seed(spec.seed, index))
        return params

    def _direction(self, prefix: str, x: Tensor) -> Tensor:
        if self.spec.peepholes:
            peep = self.params[f"{prefix}.peep"]
        else:
            peep = Tensor(np.zeros((3, self.spec.hidden)))
        return lstm_recurrence(dense(self.params, f"{prefix}.in", x), self.params[f"{prefix}.U"], peep)

    def forward(self, batch: np.ndarray, lengths: np.ndarray) -> Tensor:
        """(B, N, d_in) padded batch → (B, N, d_out)"""
        if batch.shape[-1] != self.spec.input_dim:
            raise DataError(f"BLSTM expects {self.spec.input_dim}-dim input, got {batch.shape[-1]}")
        h = Tensor(batch)
        for layer in range(self.spec.layers):
            forward = self._direction(f"lstm.{layer}.fw", h)
            backward = reverse_sequences(
                self._direction(f"lstm.{layer}.bw", reverse_sequences(h, lengths)), lengths
            )
            h = concat([forward, backward], axis=-1)
        return dense(self.params, "head", h)

    def predict(self, sequences: list[np.ndarray], batch_size: int = 8) -> list[np.ndarray]:
        outputs: list[np.ndarray] = []
        for start in range(0, len(sequences), batch_size):
            chunk = sequences[start : start + batch_size]
            batch, lengths, _ = pad_batch(chunk)
            result = self.forward(batch, lengths).data
            outputs += [result[k, :n].copy() for k, n in enumerate(lengths)]
        return outputs


def blstm_forward(spec: BlstmSpec, params: ParameterSet, seq: np.ndarray) -> Tensor:
    """One utterance (N × d_in) → N × d_out, gradient-capable"""
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 2 or seq.shape[0] == 0:
        raise DataError(f"BLSTM input must be a non-empty (N, D) matrix, got shape {seq.shape}")
    model = BlstmModel(spec, params=params)
    return model.forward(seq[None], np.array([seq.shape[0]]))[0]
