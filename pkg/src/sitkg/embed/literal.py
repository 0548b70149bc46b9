"""Hashed character n-gram literal features and the gated literal combiner."""

from __future__ import annotations

import zlib

import numpy as np


class DimensionMismatch(ValueError):
    pass


def literal_features(label: str, length: int = 256, n: int = 3) -> np.ndarray:
    """L2-normalized counts of hashed character n-grams of ``^label$``."""
    text = f"^{label}$"
    vec = np.zeros(length)
    for i in range(max(1, len(text) - n + 1)):
        gram = text[i : i + n]
        vec[zlib.crc32(gram.encode("utf-8")) % length] += 1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def literal_gate(e: np.ndarray, lit: np.ndarray, W_g: np.ndarray, W_z: np.ndarray, b_g: np.ndarray):
    """Combine entity vectors with literal features.

    ``g = sigmoid(W_g [e; l] + b_g)``, ``out = g * tanh(W_z [e; l]) + (1 - g) * e``.
    Works on a single vector or a batch (rows). Returns ``(out, cache)``; the
    cache feeds :func:`literal_gate_backward`.
    """
    e = np.asarray(e, dtype=float)
    lit = np.asarray(lit, dtype=float)
    D = e.shape[-1]
    if lit.shape[:-1] != e.shape[:-1]:
        raise DimensionMismatch(f"entity batch {e.shape} vs literal batch {lit.shape}")
    if W_g.shape != (D, D + lit.shape[-1]) or W_z.shape != W_g.shape or b_g.shape != (D,):
        raise DimensionMismatch(
            f"gate shapes W_g{W_g.shape} W_z{W_z.shape} b{b_g.shape} for entity dim {D}, literal dim {lit.shape[-1]}"
        )
    x = np.concatenate([e, lit], axis=-1)
    g = sigmoid(x @ W_g.T + b_g)
    z = np.tanh(x @ W_z.T)
    out = g * z + (1.0 - g) * e
    return out, (x, g, z, e)


def literal_gate_backward(grad_out: np.ndarray, cache, W_g: np.ndarray, W_z: np.ndarray):
    """Gradients w.r.t. (e, W_g, W_z, b_g) given dL/d(out), batched over rows."""
    x, g, z, e = cache
    grad_out = np.atleast_2d(grad_out)
    x, g, z, e = (np.atleast_2d(a) for a in (x, g, z, e))
    D = e.shape[-1]
    da_g = grad_out * (z - e) * g * (1.0 - g)
    da_z = grad_out * g * (1.0 - z * z)
    dW_g = da_g.T @ x
    dW_z = da_z.T @ x
    db = da_g.sum(axis=0)
    dx = da_g @ W_g + da_z @ W_z
    de = dx[:, :D] + grad_out * (1.0 - g)
    return de, dW_g, dW_z, db
