"""
Adam and exponentially decayed SGD updates over a ParameterSet
"""

from typing import Literal

import numpy as np
from pydantic import BaseModel, Field, model_validator

from src.numerics.params import ParameterSet

DEFAULT_LEARNING_RATES = {"adam": 0.1, "sgd-exp-decay": 0.01}


class OptimizerConfig(BaseModel):
    """Optimizer hyper-parameters; defaults are the full-scale training values"""

    kind: Literal["adam", "sgd-exp-decay"] = "adam"
    learning_rate: float | None = Field(default=None, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1, description="First-moment decay (momentum)")
    beta2: float = Field(default=0.999, ge=0, lt=1, description="Second-moment decay")
    epsilon: float = Field(default=1e-8, gt=0)
    breakpoints: list[tuple[int, float]] = Field(
        default_factory=list,
        description="Adam piecewise-constant schedule: (from_step, learning_rate) pairs",
    )
    decay_every: int = Field(default=10000, ge=1)
    decay_rate: float = Field(default=0.96, gt=0, lt=1)

    @model_validator(mode="after")
    def _default_learning_rate(self) -> "OptimizerConfig":
        if self.learning_rate is None:
            self.learning_rate = DEFAULT_LEARNING_RATES[self.kind]
        self.breakpoints = sorted(self.breakpoints)
        return self

    @property
    def lr(self) -> float:
        assert self.learning_rate is not None
        return self.learning_rate


def learning_rate_at(cfg: OptimizerConfig, step: int) -> float:
    """Effective learning rate for the update numbered `step` (0-based)"""
    if cfg.kind == "sgd-exp-decay":
        return cfg.lr * cfg.decay_rate ** (step // cfg.decay_every)
    rate = cfg.lr
    for start, value in cfg.breakpoints:
        if step >= start:
            rate = value
    return rate


def _require_gradients(params: ParameterSet) -> None:
    if not params.has_gradients:
        raise RuntimeError("Optimizer step called before any backward pass")


def adam_step(params: ParameterSet, cfg: OptimizerConfig) -> ParameterSet:
    """Bias-corrected Adam update, in place"""
    _require_gradients(params)
    t = params.step + 1
    lr = learning_rate_at(cfg, params.step)
    for name, tensor in params.items():
        grad = params.grads[name]
        moments = params.state.setdefault(
            name, {"m": np.zeros_like(grad), "v": np.zeros_like(grad)}
        )
        moments["m"] = cfg.beta1 * moments["m"] + (1.0 - cfg.beta1) * grad
        moments["v"] = cfg.beta2 * moments["v"] + (1.0 - cfg.beta2) * grad * grad
        m_hat = moments["m"] / (1.0 - cfg.beta1**t)
        v_hat = moments["v"] / (1.0 - cfg.beta2**t)
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    params.step = t
    return params


def sgd_step(params: ParameterSet, cfg: OptimizerConfig) -> ParameterSet:
    """p ← p − lr(step)·g with staircase exponential decay, in place"""
    _require_gradients(params)
    lr = learning_rate_at(cfg, params.step)
    for name, tensor in params.items():
        tensor.data -= lr * params.grads[name]
    params.step += 1
    return params


def optimizer_step(params: ParameterSet, cfg: OptimizerConfig) -> ParameterSet:
    if cfg.kind == "adam":
        return adam_step(params, cfg)
    return sgd_step(params, cfg)
