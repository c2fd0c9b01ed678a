"""
Training loops: Adam over utterance batches for the BLSTM, decayed SGD over
frame minibatches for the weakly supervised models, both with early stopping
on a validation criterion and restoration of the best epoch.
"""

from collections.abc import Sequence
from typing import Literal

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from src.config import get_config
from src.datasets import AlignedUtterance
from src.errors import ConfigError
from src.models import (
    AutoencoderModel,
    AutoencoderSpec,
    BlstmModel,
    ResDnnModel,
    ResDnnSpec,
    WeaklySupervisedModel,
    WindowedFrames,
    pad_batch,
    supervised_loss,
)
from src.numerics import OptimizerConfig, backward, optimizer_step

StopReason = Literal["max-epochs", "early-stop"]
EVAL_CHUNK = 4096


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    valid_error: float


class TrainingLog(BaseModel):
    epochs: list[EpochRecord] = Field(default_factory=list)
    stop_reason: StopReason = "max-epochs"
    best_epoch: int = 0
    best_valid: float = float("inf")

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].train_loss if self.epochs else float("nan")


class EarlyStopping:
    """Tracks the best validation value and the parameters that produced it"""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = float("inf")
        self.best_epoch = 0
        self.snapshot: dict[str, np.ndarray] | None = None
        self.bad_epochs = 0

    def update(self, epoch: int, value: float, model: BlstmModel | WeaklySupervisedModel) -> bool:
        """Record one epoch; True when training should stop"""
        if value < self.best:
            self.best, self.best_epoch, self.bad_epochs = value, epoch, 0
            self.snapshot = model.params.snapshot()
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def blstm_inputs(
    utt: AlignedUtterance, inputs: str, phone_inventory: Sequence[str] = ()
) -> np.ndarray:
    """Input matrix for one utterance: acoustic, one-hot phones, priors or a concatenation"""
    parts = []
    for name in inputs.split("+"):
        if name == "mfcc":
            parts.append(utt.acoustic)
        elif name == "phones":
            index = {p: k for k, p in enumerate(phone_inventory)}
            missing = sorted(set(utt.labels) - set(index))
            if missing:
                raise ConfigError(f"phones outside the one-hot inventory: {', '.join(missing)}")
            one_hot = np.zeros((utt.n_frames, len(index)))
            one_hot[np.arange(utt.n_frames), [index[p] for p in utt.labels]] = 1.0
            parts.append(one_hot)
        elif name in ("lf", "sf"):
            parts.append(utt.priors)
        else:
            raise ConfigError(f"unknown input feature '{name}'")
    return np.hstack(parts)


def _require_targets(utterances: Sequence[AlignedUtterance]) -> list[np.ndarray]:
    missing = [u.utt_id for u in utterances if u.target is None]
    if missing:
        raise ConfigError(f"{len(missing)} utterances lack articulatory targets, e.g. {missing[0]}")
    return [u.target.frames for u in utterances]  # type: ignore[union-attr]


def blstm_error(model: BlstmModel, inputs: list[np.ndarray], targets: list[np.ndarray]) -> float:
    """Frame- and dim-averaged squared error"""
    predictions = model.predict(inputs, get_config().training.blstm_batch_utterances)
    total = sum(float(np.sum((p - t) ** 2)) for p, t in zip(predictions, targets, strict=True))
    return total / sum(t.size for t in targets)


def train_blstm(
    model: BlstmModel,
    train: Sequence[AlignedUtterance],
    valid: Sequence[AlignedUtterance],
    optimizer: OptimizerConfig,
    seed: int = 0,
    max_epochs: int | None = None,
    patience: int | None = None,
) -> TrainingLog:
    cfg = get_config().training
    max_epochs = max_epochs or cfg.blstm_max_epochs
    stopper = EarlyStopping(patience or cfg.patience)
    spec = model.spec
    train_x = [blstm_inputs(u, spec.inputs, spec.phone_inventory) for u in train]
    train_y = _require_targets(train)
    valid_x = [blstm_inputs(u, spec.inputs, spec.phone_inventory) for u in valid]
    valid_y = _require_targets(valid)
    rng = np.random.default_rng(seed)
    log = TrainingLog()

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(train_x))
        losses = []
        for start in range(0, len(order), cfg.blstm_batch_utterances):
            chosen = order[start : start + cfg.blstm_batch_utterances]
            batch_x, lengths, mask = pad_batch([train_x[k] for k in chosen])
            batch_y, _, _ = pad_batch([train_y[k] for k in chosen])
            loss = supervised_loss(model.forward(batch_x, lengths), batch_y, mask)
            model.params.zero_grad()
            backward(loss, model.params)
            optimizer_step(model.params, optimizer)
            losses.append(loss.item())

        valid_error = blstm_error(model, valid_x, valid_y)
        train_loss = float(np.mean(losses))
        log.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss, valid_error=valid_error))
        logger.info(f"blstm epoch {epoch}: train {train_loss:.5f} valid {valid_error:.5f}")
        if stopper.update(epoch, valid_error, model):
            log.stop_reason = "early-stop"
            break

    return _finish(model, stopper, log)


def _finish(
    model: BlstmModel | WeaklySupervisedModel, stopper: EarlyStopping, log: TrainingLog
) -> TrainingLog:
    if stopper.snapshot is not None:
        model.params.restore(stopper.snapshot)
    model.trained = True
    log.best_epoch, log.best_valid = stopper.best_epoch, stopper.best
    logger.info(f"Stopped ({log.stop_reason}); best epoch {log.best_epoch} with {log.best_valid:.5f}")
    return log


def reconstruction_error(model: WeaklySupervisedModel, frames: WindowedFrames) -> float:
    """Acoustic reconstruction error averaged over all frames"""
    total = 0.0
    for start in range(0, len(frames), EVAL_CHUNK):
        rows = np.arange(start, min(start + EVAL_CHUNK, len(frames)))
        total += model.reconstruction_error(frames.batch(rows)) * len(rows)
    return total / len(frames)


def train_weakly(
    model: WeaklySupervisedModel,
    train: WindowedFrames,
    valid: WindowedFrames,
    optimizer: OptimizerConfig,
    seed: int = 0,
    max_epochs: int | None = None,
    patience: int | None = None,
) -> TrainingLog:
    """Frame minibatches; stops on validation acoustic reconstruction error"""
    cfg = get_config().training
    max_epochs = max_epochs or cfg.max_epochs
    stopper = EarlyStopping(patience or cfg.patience)
    rng = np.random.default_rng(seed)
    log = TrainingLog()

    for epoch in range(1, max_epochs + 1):
        order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(order), cfg.minibatch_size):
            loss = model.batch_loss(train.batch(order[start : start + cfg.minibatch_size]))
            model.params.zero_grad()
            backward(loss, model.params)
            optimizer_step(model.params, optimizer)
            losses.append(loss.item())

        valid_error = reconstruction_error(model, valid)
        train_loss = float(np.mean(losses))
        log.epochs.append(EpochRecord(epoch=epoch, train_loss=train_loss, valid_error=valid_error))
        logger.info(f"{model.kind} epoch {epoch}: train {train_loss:.5f} valid {valid_error:.5f}")
        if stopper.update(epoch, valid_error, model):
            log.stop_reason = "early-stop"
            break

    return _finish(model, stopper, log)


def build_weak_model(spec: AutoencoderSpec | ResDnnSpec) -> WeaklySupervisedModel:
    return AutoencoderModel(spec) if isinstance(spec, AutoencoderSpec) else ResDnnModel(spec)


def grid_search(
    specs: Sequence[AutoencoderSpec | ResDnnSpec],
    train: WindowedFrames,
    valid: WindowedFrames,
    optimizer: OptimizerConfig,
    seed: int = 0,
    max_epochs: int | None = None,
) -> tuple[WeaklySupervisedModel, list[tuple[AutoencoderSpec | ResDnnSpec, float]]]:
    """Train every candidate and keep the one with the lowest validation reconstruction error"""
    if not specs:
        raise ConfigError("grid search needs at least one candidate")
    results: list[tuple[AutoencoderSpec | ResDnnSpec, float]] = []
    best: WeaklySupervisedModel | None = None
    best_error = float("inf")
    for spec in specs:
        model = build_weak_model(spec)
        log = train_weakly(model, train, valid, optimizer, seed, max_epochs)
        results.append((spec, log.best_valid))
        logger.info(f"grid candidate {spec.model_dump(exclude={'seed'})}: {log.best_valid:.5f}")
        if log.best_valid < best_error:
            best, best_error = model, log.best_valid
    assert best is not None
    return best, results
