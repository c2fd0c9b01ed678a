"""
Training objectives.

Squared norms are summed within a sample and averaged over the minibatch.
"""

from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from src.numerics import Tensor, as_tensor


class LossConfig(BaseModel):
    lambda_z: float = Field(default=2.0, ge=0, description="AE1 prior-matching weight")
    lambda_x: float = Field(default=0.5, ge=0, description="AE2 acoustic weight")
    lambda_w: float = Field(default=0.01, ge=0, description="ResDNN residual weight decay")


def _check_shapes(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def squared_error(a: Any, b: Any, what: str = "squared error") -> Tensor:
    """Mean over samples of ‖a − b‖² (a single vector counts as one sample)"""
    a, b = as_tensor(a), as_tensor(b)
    _check_shapes(a, b, what)
    per_sample = (a - b).square().sum(axis=-1)
    return per_sample.mean()


def supervised_loss(pred: Any, target: Any, mask: np.ndarray | None = None) -> Tensor:
    """MSE over frames and dims; with a (B, N) mask only valid frames count"""
    pred, target = as_tensor(pred), as_tensor(target)
    _check_shapes(pred, target, "supervised loss")
    diff = (pred - target).square()
    if mask is None:
        return diff.mean()
    weights = np.asarray(mask, dtype=np.float64)[..., None]
    return (diff * weights).sum() / float(weights.sum() * pred.shape[-1])


def ae1_loss(x_window: Any, x_window_hat: Any, z_t: Any, z_t_hat: Any, lambda_z: float) -> Tensor:
    """‖x_win − x̂_win‖² + λ_z·‖z_t − ẑ_t‖²"""
    return squared_error(x_window, x_window_hat, "AE1 window") + lambda_z * squared_error(
        z_t, z_t_hat, "AE1 prior"
    )


def ae2_loss(z_window: Any, z_window_hat: Any, x_t: Any, x_t_hat: Any, lambda_x: float) -> Tensor:
    """‖z_win − ẑ_win‖² + λ_x·‖x_t − x̂_t‖²"""
    return squared_error(z_window, z_window_hat, "AE2 window") + lambda_x * squared_error(
        x_t, x_t_hat, "AE2 acoustic"
    )


def resdnn_loss(x_t: Any, x_t_hat: Any, w: Any, lambda_w: float) -> Tensor:
    """‖x_t − x̂_t‖² + λ_w·‖wᴿ‖²"""
    w = as_tensor(w)
    return squared_error(x_t, x_t_hat, "ResDNN acoustic") + lambda_w * w.square().sum()
