"""
Central finite-difference check of recorded gradients
"""

from collections.abc import Callable

import numpy as np

from src.numerics.params import ParameterSet
from src.numerics.tensor import Tensor, backward


def finite_difference_check(
    loss_fn: Callable[[], Tensor],
    params: ParameterSet,
    step: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """
    Compare analytic gradients of `loss_fn` against central differences.

    Args:
        loss_fn: deterministic closure recomputing the scalar loss from `params`
        params: parameters to perturb
        step: finite-difference step
        max_entries: check at most this many randomly chosen entries per parameter

    Returns:
        max over checked entries of |analytic − numeric| / max(|analytic|, |numeric|, 1e-8)
    """
    params.zero_grad()
    backward(loss_fn(), params)
    rng = np.random.default_rng(seed)

    worst = 0.0
    for name, tensor in params.items():
        flat = tensor.data.reshape(-1)
        analytic = params.grads[name].reshape(-1)
        indices = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            indices = rng.choice(flat.size, size=max_entries, replace=False)
        for k in indices:
            original = flat[k]
            flat[k] = original + step
            loss_plus = loss_fn().item()
            flat[k] = original - step
            loss_minus = loss_fn().item()
            flat[k] = original
            numeric = (loss_plus - loss_minus) / (2.0 * step)
            scale = max(abs(analytic[k]), abs(numeric), 1e-8)
            worst = max(worst, abs(analytic[k] - numeric) / scale)
    params.zero_grad()
    return worst
