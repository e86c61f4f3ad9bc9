# SPDX-FileCopyrightText: Copyright DB InfraGO AG
# SPDX-License-Identifier: Apache-2.0
"""Forward and backward kernels.

Every kernel works on a batch: samples are the rows of the input
matrices, and the backward pass sums the parameter gradients over the
batch in row order. Shapes are never broadcast implicitly; mismatches
raise :class:`~smartses.nn.ShapeError`.
"""

from __future__ import annotations

__all__ = [
    "Activation",
    "DenseCache",
    "LSTMCache",
    "dense_backward",
    "dense_forward",
    "embed_backward",
    "embed_forward",
    "lstm_backward",
    "lstm_forward",
    "lstm_step",
    "sigmoid",
    "softmax",
    "softmax_xent",
    "softmax_xent_backward",
]

import dataclasses
import typing as t

import numpy as np

from ._params import ShapeError, check_shape

Activation = t.Literal["relu", "tanh", "none"]


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# Embedding
def embed_forward(table: np.ndarray, index: np.ndarray | int) -> np.ndarray:
    """Look up rows of an embedding table.

    The result has the shape of ``index`` plus the embedding width.

    Raises
    ------
    IndexError
        If an index is outside of the table.
    """
    index = np.asarray(index)
    if not np.issubdtype(index.dtype, np.integer):
        raise TypeError(f"Embedding index must be integer, got {index.dtype}")
    if index.size and (index.min() < 0 or index.max() >= len(table)):
        raise IndexError(
            f"Embedding index out of range 0..{len(table) - 1}"
        )
    return table[index]


def embed_backward(
    table_grad: np.ndarray, index: np.ndarray | int, dout: np.ndarray
) -> None:
    """Accumulate ``dout`` into the rows of ``table_grad`` it came from."""
    index = np.asarray(index)
    check_shape("dout", dout, (*index.shape, table_grad.shape[1]))
    np.add.at(table_grad, index, dout)


# Dense
class DenseCache(t.NamedTuple):
    x: np.ndarray
    w: np.ndarray
    y: np.ndarray
    activation: Activation


def dense_forward(
    x: np.ndarray,
    w: np.ndarray,
    b: np.ndarray,
    activation: Activation = "none",
) -> tuple[np.ndarray, DenseCache]:
    """Compute ``activation(x @ w.T + b)``.

    Parameters
    ----------
    x
        Input of shape ``(batch, in)``.
    w
        Weights of shape ``(out, in)``.
    b
        Bias of shape ``(out,)``.
    activation
        One of ``relu``, ``tanh`` or ``none``.
    """
    check_shape("w", w, (None, None))
    check_shape("x", x, (None, w.shape[1]))
    check_shape("b", b, (w.shape[0],))
    z = x @ w.T + b
    if activation == "relu":
        y = np.maximum(z, 0.0)
    elif activation == "tanh":
        y = np.tanh(z)
    elif activation == "none":
        y = z
    else:
        raise ValueError(f"Unknown activation: {activation!r}")
    return y, DenseCache(x, w, y, activation)


def dense_backward(
    dy: np.ndarray, cache: DenseCache
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(dx, dw, db)`` for the upstream gradient ``dy``."""
    check_shape("dy", dy, cache.y.shape)
    if cache.activation == "relu":
        dz = dy * (cache.y > 0)
    elif cache.activation == "tanh":
        dz = dy * (1.0 - cache.y**2)
    else:
        dz = dy
    return dz @ cache.w, dz.T @ cache.x, dz.sum(axis=0)


# LSTM
def lstm_step(
    x: np.ndarray,
    h_prev: np.ndarray,
    c_prev: np.ndarray,
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, ...]]:
    """Advance an LSTM cell by one step.

    The four gate blocks of ``wx`` (shape ``(4 * hidden, in)``), ``wh``
    (shape ``(4 * hidden, hidden)``) and ``b`` are ordered input,
    forget, output, candidate.

    Returns
    -------
    numpy.ndarray
        The new hidden state.
    numpy.ndarray
        The new cell state.
    tuple[numpy.ndarray, ...]
        The step's activations, needed for the backward pass.
    """
    hidden = h_prev.shape[1]
    check_shape("wh", wh, (4 * hidden, hidden))
    check_shape("wx", wx, (4 * hidden, None))
    check_shape("x", x, (h_prev.shape[0], wx.shape[1]))
    check_shape("c_prev", c_prev, h_prev.shape)
    check_shape("b", b, (4 * hidden,))

    a = x @ wx.T + h_prev @ wh.T + b
    i = sigmoid(a[:, :hidden])
    f = sigmoid(a[:, hidden : 2 * hidden])
    o = sigmoid(a[:, 2 * hidden : 3 * hidden])
    g = np.tanh(a[:, 3 * hidden :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, o, g, c_prev, tc, h_prev, x)


@dataclasses.dataclass
class LSTMCache:
    wx: np.ndarray
    wh: np.ndarray
    steps: list[tuple[np.ndarray, ...]]


def lstm_forward(
    x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, LSTMCache]:
    """Run an LSTM over ``x`` of shape ``(batch, steps, in)``.

    The initial hidden and cell states are zero.

    Returns
    -------
    numpy.ndarray
        All hidden states, shape ``(batch, steps, hidden)``.
    LSTMCache
        The activations of every step.
    """
    check_shape("x", x, (None, None, None))
    check_shape("wh", wh, (None, None))
    batch, steps, _ = x.shape
    hidden = wh.shape[1]
    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    hs = np.empty((batch, steps, hidden))
    cache = LSTMCache(wx, wh, [])
    for step in range(steps):
        h, c, acts = lstm_step(x[:, step], h, c, wx, wh, b)
        hs[:, step] = h
        cache.steps.append(acts)
    return hs, cache


def lstm_backward(
    dhs: np.ndarray, cache: LSTMCache
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagate through time.

    Parameters
    ----------
    dhs
        Gradient of the loss with respect to every hidden state, shape
        ``(batch, steps, hidden)``.
    cache
        The cache returned by :func:`lstm_forward`.

    Returns
    -------
    tuple
        ``(dx, dwx, dwh, db)``.
    """
    steps = len(cache.steps)
    if not steps:
        raise ShapeError("Cannot backpropagate through zero steps")
    batch, hidden = cache.steps[0][0].shape
    check_shape("dhs", dhs, (batch, steps, hidden))
    n_in = cache.wx.shape[1]

    dx = np.empty((batch, steps, n_in))
    dwx = np.zeros_like(cache.wx)
    dwh = np.zeros_like(cache.wh)
    db = np.zeros(4 * hidden)
    dh_next = np.zeros((batch, hidden))
    dc_next = np.zeros((batch, hidden))
    for step in reversed(range(steps)):
        i, f, o, g, c_prev, tc, h_prev, x = cache.steps[step]
        dh = dhs[:, step] + dh_next
        do = dh * tc
        dc = dc_next + dh * o * (1.0 - tc**2)
        da = np.concatenate(
            (
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                do * o * (1.0 - o),
                dc * i * (1.0 - g**2),
            ),
            axis=1,
        )
        dc_next = dc * f
        dwx += da.T @ x
        dwh += da.T @ h_prev
        db += da.sum(axis=0)
        dx[:, step] = da @ cache.wx
        dh_next = da @ cache.wh
    return dx, dwx, dwh, db


# Output
def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, stable for any finite logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_xent(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[np.ndarray, float]:
    """Softmax probabilities and the mean cross-entropy loss.

    Parameters
    ----------
    logits
        Shape ``(batch, classes)``, with at least two classes.
    labels
        The true class of each row.
    """
    check_shape("logits", logits, (None, None))
    labels = np.asarray(labels)
    check_shape("labels", labels, (logits.shape[0],))
    n_classes = logits.shape[1]
    if n_classes < 2:
        raise ShapeError("Softmax needs at least two classes")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise IndexError(f"Class index out of range 0..{n_classes - 1}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    rows = np.arange(len(labels))
    loss = float(-log_probs[rows, labels].mean()) if len(labels) else 0.0
    return np.exp(log_probs), loss


def softmax_xent_backward(
    probs: np.ndarray, labels: np.ndarray
) -> np.ndarray:
    """Gradient of the mean cross-entropy with respect to the logits."""
    grad = probs.copy()
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)
