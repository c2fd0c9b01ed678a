"""
Model families: supervised BLSTM, AE1, AE2 and ResDNN
"""

import numpy as np

from .autoencoder import AutoencoderModel, AutoencoderSpec
from .base import ArticModel, WindowedFrames, context_windows, window_index
from .blstm import BlstmModel, BlstmSpec, blstm_forward, pad_batch
from .losses import LossConfig, ae1_loss, ae2_loss, resdnn_loss, supervised_loss
from .resdnn import ResDnnModel, ResDnnSpec, residual_layer

WeaklySupervisedModel = AutoencoderModel | ResDnnModel


def generate_afs(
    model: WeaklySupervisedModel, acoustic: np.ndarray | None = None, priors: np.ndarray | None = None
) -> np.ndarray:
    """
    N × G generated articulatory features of one utterance.

    AE1 reads acoustic frames; AE2 and ResDNN read only the prior sequence.
    """
    return model.generate(acoustic=acoustic, priors=priors)


__all__ = [
    "ArticModel",
    "AutoencoderModel",
    "AutoencoderSpec",
    "BlstmModel",
    "BlstmSpec",
    "LossConfig",
    "ResDnnModel",
    "ResDnnSpec",
    "WeaklySupervisedModel",
    "WindowedFrames",
    "ae1_loss",
    "ae2_loss",
    "blstm_forward",
    "context_windows",
    "generate_afs",
    "pad_batch",
    "resdnn_loss",
    "residual_layer",
    "supervised_loss",
    "window_index",
]
