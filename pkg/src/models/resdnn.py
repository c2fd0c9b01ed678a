"""
Residual DNN: a linear residual layer over a window of prior vectors adds a
coarticulation term to the center prior; a tanh trunk maps the result to the
acoustic frame. The residual layer output is the generated trajectory.
"""

from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, Field

from src.models.base import ArticModel, add_mlp, context_windows, mlp
from src.models.losses import LossConfig, resdnn_loss, squared_error
from src.numerics import ParameterSet, Tensor, as_tensor

ResidualKind = Literal["scalar", "per-component"]


class ResDnnSpec(BaseModel):
    context: int = Field(default=12, ge=0)
    prior_dim: int = 10
    acoustic_dim: int = 39
    trunk_widths: list[int] = Field(default_factory=lambda: [1000] * 4)
    residual: ResidualKind = "scalar"
    seed: int = 0
    loss: LossConfig = Field(default_factory=LossConfig)

    @classmethod
    def preset(cls, scale: Literal["full", "desk"], **kwargs: object) -> "ResDnnSpec":
        widths = {"full": [1000] * 4, "desk": [128] * 2}[scale]
        return cls(trunk_widths=widths, **kwargs)  # type: ignore[arg-type]

    @property
    def window_dim(self) -> int:
        return (2 * self.context + 1) * self.prior_dim


def residual_layer(z_window: Any, w: Any, prior_dim: int | None = None) -> Tensor:
    """
    ẑ_t = z_t + R_t over a window of prior vectors.

    `z_window` is (2T+1) × G, or a (B, (2T+1)·G) batch of flattened windows
    (frame-major). A 1-D `w` of length (2T+1)·G gives one scalar R_t added to
    every component; a G × (2T+1)·G matrix gives a separate residual per component.
    """
    z = as_tensor(z_window)
    w = as_tensor(w)
    single = z.ndim == 1 or prior_dim is None
    if z.ndim == 1:
        z = z.reshape(1, z.shape[0])
    elif prior_dim is None:
        frames, prior_dim = z.shape
        z = z.reshape(1, frames * prior_dim)
    if prior_dim is None:
        raise ValueError("prior_dim is required for flattened windows")
    width = z.shape[-1]
    if width % prior_dim or (width // prior_dim) % 2 == 0:
        raise ValueError(f"window of width {width} is not an odd number of {prior_dim}-dim frames")
    center = (width // prior_dim) // 2

    if w.ndim == 1:
        if w.shape[0] != width:
            raise ValueError(f"residual weights have length {w.shape[0]}, expected {width}")
        residual = z @ w.reshape(width, 1)
    else:
        if w.shape != (prior_dim, width):
            raise ValueError(f"residual weights have shape {w.shape}, expected {(prior_dim, width)}")
        residual = z @ w.T
    out = z[:, center * prior_dim : (center + 1) * prior_dim] + residual
    return out[0] if single else out


class ResDnnModel(ArticModel):
    kind = "resdnn"
    spec_class = ResDnnSpec

    spec: ResDnnSpec

    def _init_params(self) -> ParameterSet:
        spec, params = self.spec, ParameterSet()
        shape = (spec.window_dim,) if spec.residual == "scalar" else (spec.prior_dim, spec.window_dim)
        params.add("residual.w", np.zeros(shape))
        add_mlp(params, "trunk", [spec.prior_dim, *spec.trunk_widths, spec.acoustic_dim], spec.seed)
        return params

    @property
    def n_trunk_layers(self) -> int:
        return len(self.spec.trunk_widths) + 1

    def refine(self, z_window: np.ndarray) -> Tensor:
        return residual_layer(Tensor(z_window), self.params["residual.w"], self.spec.prior_dim)

    def predict_acoustic(self, z_window: np.ndarray) -> Tensor:
        return mlp(self.params, "trunk", self.refine(z_window), self.n_trunk_layers)

    def batch_loss(self, batch: dict[str, np.ndarray]) -> Tensor:
        return resdnn_loss(
            batch["x_t"],
            self.predict_acoustic(batch["z_window"]),
            self.params["residual.w"],
            self.spec.loss.lambda_w,
        )

    def reconstruction_error(self, batch: dict[str, np.ndarray]) -> float:
        return squared_error(batch["x_t"], self.predict_acoustic(batch["z_window"])).item()

    def generate(self, acoustic: np.ndarray | None = None, priors: np.ndarray | None = None) -> np.ndarray:
        """Residual layer output over each frame's prior window"""
        self.require_trained()
        if priors is None:
            raise ValueError("ResDNN generation needs prior frames")
        return self.refine(context_windows(priors, self.spec.context)).data.copy()
