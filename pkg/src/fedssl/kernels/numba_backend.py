"""Numba-jitted implementation of the hot model kernels.

Same contracts and parameter layout as :mod:`fedssl.kernels.numpy_backend`.
The batch sizes here are small enough that numpy's per-call overhead
dominates; fusing the layer loops under ``@njit`` is what pays off.
"""

from __future__ import annotations

import numpy as np
from numba import njit

NAME = "numba"

PROB_FLOOR = 1e-12


@njit(cache=True)
def _softmax_rows(z):
    out = np.empty_like(z)
    for i in range(z.shape[0]):
        m = z[i, 0]
        for j in range(1, z.shape[1]):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(z.shape[1]):
            v = np.exp(z[i, j] - m)
            out[i, j] = v
            s += v
        for j in range(z.shape[1]):
            out[i, j] /= s
    return out


@njit(cache=True)
def forward_probs(values, dims, x):
    n_layers = dims.shape[0] - 1
    a = x
    z = x
    off = 0
    for l in range(n_layers):
        fi = dims[l]
        fo = dims[l + 1]
        w = values[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo
        b = values[off : off + fo]
        off += fo
        z = np.dot(a, w) + b
        if l < n_layers - 1:
            a = np.maximum(z, 0.0)
    return _softmax_rows(z)


@njit(cache=True)
def _forward_acts(values, dims, x):
    n_layers = dims.shape[0] - 1
    offsets = np.empty(n_layers, dtype=np.int64)
    acts = [x]
    a = x
    z = x
    off = 0
    for l in range(n_layers):
        offsets[l] = off
        fi = dims[l]
        fo = dims[l + 1]
        w = values[off : off + fi * fo].reshape(fi, fo)
        off += fi * fo + fo
        b = values[off - fo : off]
        z = np.dot(a, w) + b
        if l < n_layers - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return offsets, acts, _softmax_rows(z)


@njit(cache=True)
def _backward(values, dims, offsets, acts, delta):
    grads = np.zeros_like(values)
    n_layers = dims.shape[0] - 1
    for l in range(n_layers - 1, -1, -1):
        fi = dims[l]
        fo = dims[l + 1]
        off = offsets[l]
        gw = grads[off : off + fi * fo].reshape(fi, fo)
        gb = grads[off + fi * fo : off + fi * fo + fo]
        prev = acts[l]
        n = prev.shape[0]
        for i in range(n):
            for j in range(fi):
                p = prev[i, j]
                if p != 0.0:
                    for k in range(fo):
                        gw[j, k] += p * delta[i, k]
            for k in range(fo):
                gb[k] += delta[i, k]
        if l > 0:
            w = values[off : off + fi * fo].reshape(fi, fo)
            nxt = np.dot(delta, w.T)
            for i in range(n):
                for j in range(fi):
                    if prev[i, j] <= 0.0:
                        nxt[i, j] = 0.0
            delta = nxt
    return grads


@njit(cache=True)
def grad_cross_entropy(values, dims, x, labels):
    offsets, acts, probs = _forward_acts(values, dims, x)
    n = x.shape[0]
    loss = 0.0
    for i in range(n):
        p = probs[i, labels[i]]
        if p < PROB_FLOOR:
            p = PROB_FLOOR
        loss -= np.log(p)
    loss /= n
    delta = probs.copy()
    for i in range(n):
        delta[i, labels[i]] -= 1.0
    delta /= n
    return loss, _backward(values, dims, offsets, acts, delta)


@njit(cache=True)
def grad_consistency(values, dims, x, targets):
    offsets, acts, probs = _forward_acts(values, dims, x)
    n = x.shape[0]
    loss = 0.0
    delta = np.empty_like(probs)
    for i in range(n):
        row = 0.0
        dot = 0.0
        for j in range(probs.shape[1]):
            d = probs[i, j] - targets[i, j]
            row += d * d
            gp = 2.0 * d / n
            delta[i, j] = gp
            dot += gp * probs[i, j]
        loss += row
        for j in range(probs.shape[1]):
            delta[i, j] = probs[i, j] * (delta[i, j] - dot)
    loss /= n
    return loss, _backward(values, dims, offsets, acts, delta)
