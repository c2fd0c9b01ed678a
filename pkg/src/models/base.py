"""
Shared model plumbing: dense layers, context windows, the model base class
and its checkpoint directory format (model.toml + params.arcn).
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, ClassVar, TypeVar

import numpy as np
import toml
from loguru import logger
from pydantic import BaseModel as Spec

from src.errors import ConfigError, DataError
from src.numerics import ParameterSet, Tensor, read_checkpoint, write_checkpoint, xavier_init

T = TypeVar("T", bound="ArticModel")

SPEC_FILE = "model.toml"
PARAMS_FILE = "params.arcn"


def derive_seed(seed: int, index: int) -> int:
    """Independent per-parameter seed from a model seed"""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def add_dense(params: ParameterSet, prefix: str, fan_in: int, fan_out: int, seed: int) -> None:
    params.add(f"{prefix}.W", xavier_init(fan_in, fan_out, seed))
    params.add(f"{prefix}.b", np.zeros(fan_out))


def dense(params: ParameterSet, prefix: str, x: Tensor, activation: str | None = None) -> Tensor:
    out = x @ params[f"{prefix}.W"].T + params[f"{prefix}.b"]
    return out.tanh() if activation == "tanh" else out


def add_mlp(params: ParameterSet, prefix: str, widths: list[int], seed: int, start: int = 0) -> int:
    """Dense layers widths[0]→widths[1]→…; returns the next free seed index"""
    for k, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:], strict=True)):
        add_dense(params, f"{prefix}.{k}", fan_in, fan_out, derive_seed(seed, start + k))
    return start + len(widths) - 1


def mlp(params: ParameterSet, prefix: str, x: Tensor, n_layers: int) -> Tensor:
    """tanh hidden layers, linear last layer"""
    for k in range(n_layers):
        x = dense(params, f"{prefix}.{k}", x, "tanh" if k < n_layers - 1 else None)
    return x


def window_index(n_frames: int, half_width: int) -> np.ndarray:
    """(N, 2T+1) frame indices t−T..t+T, clamped at the edges"""
    offsets = np.arange(-half_width, half_width + 1)
    return np.clip(np.arange(n_frames)[:, None] + offsets[None, :], 0, n_frames - 1)


def context_windows(frames: np.ndarray, half_width: int) -> np.ndarray:
    """(N, (2T+1)·D) windows with edge frames replicated"""
    frames = np.asarray(frames, dtype=np.float64)
    return frames[window_index(frames.shape[0], half_width)].reshape(frames.shape[0], -1)


class WindowedFrames:
    """
    Frames of many utterances concatenated, with per-frame window indices
    that never cross an utterance boundary.
    """

    def __init__(self, acoustic: list[np.ndarray], priors: list[np.ndarray], half_width: int):
        if len(acoustic) != len(priors):
            raise DataError("acoustic and prior sequence counts differ")
        indices, offset = [], 0
        for x, z in zip(acoustic, priors, strict=True):
            if len(x) != len(z):
                raise DataError(f"acoustic has {len(x)} frames but priors have {len(z)}")
            indices.append(window_index(len(x), half_width) + offset)
            offset += len(x)
        if offset == 0:
            raise DataError("no frames to train on")
        self.acoustic = np.vstack(acoustic).astype(np.float64)
        self.priors = np.vstack(priors).astype(np.float64)
        self.index = np.vstack(indices)
        self.half_width = half_width

    def __len__(self) -> int:
        return int(self.acoustic.shape[0])

    def batch(self, rows: np.ndarray) -> dict[str, np.ndarray]:
        window = self.index[rows]
        return {
            "x_window": self.acoustic[window].reshape(len(rows), -1),
            "z_window": self.priors[window].reshape(len(rows), -1),
            "x_t": self.acoustic[rows],
            "z_t": self.priors[rows],
        }


class ArticModel:
    """
    Base class for every model family.

    Subclasses declare `kind` and `spec_class`, build their parameters in
    `_init_params`, and are registered for checkpoint loading.
    """

    kind: ClassVar[str] = ""
    spec_class: ClassVar[type[Spec]]
    registry: ClassVar[dict[str, type["ArticModel"]]] = {}

    def __init_subclass__(cls, **kwargs: Any) -> None:
        super().__init_subclass__(**kwargs)
        if cls.kind:
            ArticModel.registry[cls.kind] = cls

    def __init__(self, spec: Spec, params: ParameterSet | None = None, trained: bool = False):
        self.spec = spec
        self.params = params if params is not None else self._init_params()
        self.trained = trained

    def _init_params(self) -> ParameterSet:
        raise NotImplementedError

    def require_trained(self) -> None:
        if not self.trained:
            raise ConfigError(f"{self.kind} model has not been trained")

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "trained": self.trained, "spec": self.spec.model_dump(mode="json")}

    def save(self, directory: Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        with open(directory / SPEC_FILE, "w", encoding="utf-8") as f:
            toml.dump(self.to_dict(), f)
        write_checkpoint(self.params, directory / PARAMS_FILE)
        logger.info(f"Saved {self.kind} model to {directory}")

    @classmethod
    def load(cls: type[T], directory: Path) -> T:
        directory = Path(directory)
        try:
            with open(directory / SPEC_FILE, "rb") as f:
                data = tomllib.load(f)
        except (OSError, tomllib.TOMLDecodeError) as e:
            raise DataError(f"cannot read model spec: {e}", directory / SPEC_FILE) from e

        model_class = ArticModel.registry.get(data.get("kind", ""))
        if model_class is None:
            raise DataError(f"unknown model kind '{data.get('kind')}'", directory / SPEC_FILE)
        spec = model_class.spec_class.model_validate(data.get("spec", {}))
        params = read_checkpoint(directory / PARAMS_FILE)
        expected = model_class(spec).params
        if set(params) != set(expected) or any(params[n].shape != expected[n].shape for n in expected):
            raise DataError("checkpoint parameters do not match the model spec", directory)
        model = model_class(spec, params=params, trained=bool(data.get("trained", False)))
        if not isinstance(model, cls):
            raise DataError(f"expected a {cls.kind or 'model'} checkpoint, got {model.kind}", directory)
        return model
