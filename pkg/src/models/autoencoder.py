"""
Hourglass autoencoders with a prior-matched bottleneck.

AE1 encodes a window of acoustic frames into a G-dim code pulled towards the
prior vector of the center frame. AE2 encodes a window of prior vectors into a
39-dim code pulled towards the center acoustic frame; its reconstructed
window is the generated articulatory trajectory.
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from src.models.base import ArticModel, add_mlp, context_windows, mlp, window_index
from src.models.losses import LossConfig, ae1_loss, ae2_loss, squared_error
from src.numerics import ParameterSet, Tensor

ACOUSTIC_DIM = 39
PRIOR_DIM = 10


class AutoencoderSpec(BaseModel):
    kind: Literal["ae1", "ae2"] = "ae2"
    context: int = Field(default=12, ge=0, description="Half-width T of the input window")
    encoder_widths: list[int] = Field(default_factory=lambda: [200, 130, 70])
    acoustic_dim: int = ACOUSTIC_DIM
    prior_dim: int = PRIOR_DIM
    average_overlaps: bool = False
    seed: int = 0
    loss: LossConfig = Field(default_factory=LossConfig)

    @classmethod
    def preset(
        cls, kind: Literal["ae1", "ae2"], scale: Literal["full", "desk"], **kwargs: object
    ) -> "AutoencoderSpec":
        widths = {"full": [200, 130, 70], "desk": [64, 32]}[scale]
        return cls(kind=kind, encoder_widths=widths, **kwargs)  # type: ignore[arg-type]

    @property
    def frame_dim(self) -> int:
        """Per-frame input dimension"""
        return self.acoustic_dim if self.kind == "ae1" else self.prior_dim

    @property
    def bottleneck(self) -> int:
        return self.prior_dim if self.kind == "ae1" else self.acoustic_dim

    @property
    def window_dim(self) -> int:
        return (2 * self.context + 1) * self.frame_dim

    @property
    def layer_widths(self) -> list[int]:
        return [self.window_dim, *self.encoder_widths, self.bottleneck]


class AutoencoderModel(ArticModel):
    kind = "autoencoder"
    spec_class = AutoencoderSpec

    spec: AutoencoderSpec

    def _init_params(self) -> ParameterSet:
        params = ParameterSet()
        widths = self.spec.layer_widths
        next_seed = add_mlp(params, "encoder", widths, self.spec.seed)
        add_mlp(params, "decoder", widths[::-1], self.spec.seed, start=next_seed)
        return params

    @property
    def n_layers(self) -> int:
        return len(self.spec.layer_widths) - 1

    def encode(self, window: np.ndarray | Tensor) -> Tensor:
        x = window if isinstance(window, Tensor) else Tensor(window)
        return mlp(self.params, "encoder", x, self.n_layers)

    def decode(self, code: Tensor) -> Tensor:
        return mlp(self.params, "decoder", code, self.n_layers)

    def batch_loss(self, batch: dict[str, np.ndarray]) -> Tensor:
        if self.spec.kind == "ae1":
            code = self.encode(batch["x_window"])
            return ae1_loss(batch["x_window"], self.decode(code), batch["z_t"], code, self.spec.loss.lambda_z)
        code = self.encode(batch["z_window"])
        return ae2_loss(batch["z_window"], self.decode(code), batch["x_t"], code, self.spec.loss.lambda_x)

    def reconstruction_error(self, batch: dict[str, np.ndarray]) -> float:
        """Acoustic reconstruction error used for early stopping"""
        if self.spec.kind == "ae1":
            x_window = batch["x_window"]
            return squared_error(x_window, self.decode(self.encode(x_window))).item()
        return squared_error(batch["x_t"], self.encode(batch["z_window"])).item()

    def generate(self, acoustic: np.ndarray | None = None, priors: np.ndarray | None = None) -> np.ndarray:
        """N × G articulatory estimate ẑ of one utterance"""
        self.require_trained()
        T, G = self.spec.context, self.spec.prior_dim
        if self.spec.kind == "ae1":
            if acoustic is None:
                raise ValueError("AE1 generation needs acoustic frames")
            return self.encode(context_windows(acoustic, T)).data.copy()

        if priors is None:
            raise ValueError("AE2 generation needs prior frames")
        n = len(priors)
        windows = self.decode(self.encode(context_windows(priors, T))).data.reshape(n, 2 * T + 1, G)
        if not self.spec.average_overlaps:
            return windows[:, T].copy()
        totals = np.zeros((n, G))
        counts = np.zeros(n)
        positions = window_index(n, T)
        np.add.at(totals, positions.ravel(), windows.reshape(-1, G))
        np.add.at(counts, positions.ravel(), 1.0)
        return totals / counts[:, None]
