"""Pure-numpy implementation of the hot model kernels.

Parameter layout for a dense net with layer widths ``dims = [d0, .., dL]``:
layer l weights as a row-major (fan_in, fan_out) block, then its biases,
layers in order.  All kernels take the flat parameter vector plus ``dims``
and work on float64 batches.
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"

# Clamp floor for log probabilities; far below any achievable resolution.
PROB_FLOOR = 1e-12


def _layer_views(values: np.ndarray, dims: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    views = []
    off = 0
    for l in range(len(dims) - 1):
        fi = int(dims[l])
        fo = int(dims[l + 1])
        w = values[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = values[off : off + fo]
        off += fo
        views.append((w, b))
    return views


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(values, dims, x):
    views = _layer_views(values, dims)
    acts = [x]
    a = x
    z = x
    for l, (w, b) in enumerate(views):
        z = a @ w + b
        if l < len(views) - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return views, acts, _softmax_rows(z)


def _backward(values, dims, views, acts, delta):
    grads = np.zeros_like(values)
    gviews = _layer_views(grads, dims)
    for l in range(len(views) - 1, -1, -1):
        w, _ = views[l]
        gw, gb = gviews[l]
        gw += acts[l].T @ delta
        gb += delta.sum(axis=0)
        if l > 0:
            delta = (delta @ w.T) * (acts[l] > 0.0)
    return grads


def forward_probs(values: np.ndarray, dims: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Softmax class probabilities for each row of ``x``."""
    _, _, probs = _forward_cached(values, dims, x)
    return probs


def grad_cross_entropy(
    values: np.ndarray, dims: np.ndarray, x: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss over the batch and its mean parameter gradient."""
    views, acts, probs = _forward_cached(values, dims, x)
    n = x.shape[0]
    rows = np.arange(n)
    picked = probs[rows, labels]
    loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
    delta = probs.copy()
    delta[rows, labels] -= 1.0
    delta /= n
    return loss, _backward(values, dims, views, acts, delta)


def grad_consistency(
    values: np.ndarray, dims: np.ndarray, x: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean squared error between predicted probabilities and fixed targets.

    The loss per sample is the squared L2 distance over classes; targets are
    treated as constants, so the gradient flows only through the prediction.
    """
    views, acts, probs = _forward_cached(values, dims, x)
    n = x.shape[0]
    diff = probs - targets
    loss = float((diff * diff).sum(axis=1).mean())
    gp = 2.0 * diff / n
    dot = (gp * probs).sum(axis=1, keepdims=True)
    delta = probs * (gp - dot)
    return loss, _backward(values, dims, views, acts, delta)
