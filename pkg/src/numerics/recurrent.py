"""
Fused sequence operations for the bidirectional LSTM.

The peephole recurrence is one graph node with a hand-written
backpropagation-through-time pass, so long utterances do not expand into
thousands of tape entries.
"""

import numpy as np
from scipy.special import expit

from src.numerics.tensor import Tensor, _node, as_tensor


def reversal_index(lengths: np.ndarray, n_steps: int) -> np.ndarray:
    """(B, n_steps) gather index reversing each sequence's valid prefix; padding stays put"""
    steps = np.arange(n_steps)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(steps < lengths, lengths - 1 - steps, steps)


def reverse_sequences(x: Tensor, lengths: np.ndarray) -> Tensor:
    """Reverse the valid frames of every sequence in a (B, N, D) batch"""
    x = as_tensor(x)
    index = reversal_index(lengths, x.shape[1])[:, :, None]

    def _backward(g: np.ndarray) -> tuple[np.ndarray]:
        # The permutation is its own inverse.
        return (np.take_along_axis(g, index, axis=1),)

    return _node(np.take_along_axis(x.data, index, axis=1), (x,), _backward, "reverse")


def lstm_recurrence(gate_inputs: Tensor, recurrent: Tensor, peepholes: Tensor) -> Tensor:
    """
    Run a peephole LSTM layer over a batch.

    Args:
        gate_inputs: (B, N, 4H) input projections plus biases, gate order [i, f, g, o]
        recurrent: (4H, H) hidden-to-gate weights
        peepholes: (3, H) diagonal peephole weights for the i, f and o gates

    Returns:
        (B, N, H) hidden states, starting from zero state

    The recurrence is
        i = σ(a_i + p_i·c₋₁), f = σ(a_f + p_f·c₋₁), g = tanh(a_g),
        c = f·c₋₁ + i·g, o = σ(a_o + p_o·c), h = o·tanh(c)
    """
    xp, U, P = as_tensor(gate_inputs), as_tensor(recurrent), as_tensor(peepholes)
    batch, n_steps, width4 = xp.shape
    hidden = width4 // 4
    if U.shape != (width4, hidden) or P.shape != (3, hidden):
        raise ValueError(
            f"LSTM shape mismatch: inputs {xp.shape}, recurrent {U.shape}, peepholes {P.shape}"
        )

    p_i, p_f, p_o = P.data
    gates = np.empty((batch, n_steps, 4, hidden))
    cells = np.empty((batch, n_steps, hidden))
    states = np.empty((batch, n_steps, hidden))
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    for t in range(n_steps):
        a = xp.data[:, t, :] + h @ U.data.T
        i = expit(a[:, :hidden] + p_i * c)
        f = expit(a[:, hidden : 2 * hidden] + p_f * c)
        g = np.tanh(a[:, 2 * hidden : 3 * hidden])
        c = f * c + i * g
        o = expit(a[:, 3 * hidden :] + p_o * c)
        h = o * np.tanh(c)
        gates[:, t] = np.stack([i, f, g, o], axis=1)
        cells[:, t] = c
        states[:, t] = h

    def _backward(grad_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        d_inputs = np.empty_like(xp.data)
        d_recurrent = np.zeros_like(U.data)
        d_peep = np.zeros_like(P.data)
        dh_next = np.zeros((batch, hidden))
        dc_next = np.zeros((batch, hidden))
        zeros = np.zeros((batch, hidden))
        for t in reversed(range(n_steps)):
            i, f, g, o = (gates[:, t, k] for k in range(4))
            c_t = cells[:, t]
            c_prev = cells[:, t - 1] if t > 0 else zeros
            h_prev = states[:, t - 1] if t > 0 else zeros
            tanh_c = np.tanh(c_t)

            dh = grad_out[:, t] + dh_next
            da_o = dh * tanh_c * o * (1.0 - o)
            dc = dh * o * (1.0 - tanh_c**2) + dc_next + da_o * p_o
            da_i = dc * g * i * (1.0 - i)
            da_f = dc * c_prev * f * (1.0 - f)
            da_g = dc * i * (1.0 - g**2)
            da = np.concatenate([da_i, da_f, da_g, da_o], axis=1)

            d_inputs[:, t] = da
            d_recurrent += da.T @ h_prev
            d_peep[0] += (da_i * c_prev).sum(axis=0)
            d_peep[1] += (da_f * c_prev).sum(axis=0)
            d_peep[2] += (da_o * c_t).sum(axis=0)
            dh_next = da @ U.data
            dc_next = dc * f + da_i * p_i + da_f * p_f
        return d_inputs, d_recurrent, d_peep

    return _node(states, (xp, U, P), _backward, "lstm")
