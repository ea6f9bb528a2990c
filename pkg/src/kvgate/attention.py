"""Full-cache multi-head causal attention with grouped KV heads.

The cache is append-only and only ever holds past tokens, so causality is
structural; no mask is materialized. Query heads share KV heads in groups:
query head h reads KV head h // (n_heads // kv_heads).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelDims:
    """Transformer shape parameters."""

    d_model: int
    n_heads: int
    head_dim: int
    kv_heads: int
    n_layers: int

    def __post_init__(self):
        for name in ("d_model", "n_heads", "head_dim", "kv_heads", "n_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_heads * self.head_dim != self.d_model:
            raise ValueError(
                f"n_heads * head_dim must equal d_model: "
                f"{self.n_heads} * {self.head_dim} != {self.d_model}")
        if self.n_heads % self.kv_heads != 0:
            raise ValueError(
                f"kv_heads must divide n_heads: {self.kv_heads} !| {self.n_heads}")

    @property
    def group_size(self) -> int:
        return self.n_heads // self.kv_heads


def _check_kv_pair(dims: ModelDims, keys, values) -> tuple[np.ndarray, np.ndarray]:
    keys = np.asarray(keys, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    want = (dims.kv_heads, dims.head_dim)
    if keys.shape != want or values.shape != want:
        raise ValueError(f"keys/values must have shape {want}, "
                         f"got {keys.shape} and {values.shape}")
    return keys, values


class FullKvCache:
    """Per-layer, per-KV-head store of every (key, value) pair ever appended.

    Entries stay in append order; all heads of a layer always have equal
    length. Single writer per instance.
    """

    def __init__(self, dims: ModelDims):
        self.dims = dims
        self._keys: list[list[np.ndarray]] = [[] for _ in range(dims.n_layers)]
        self._values: list[list[np.ndarray]] = [[] for _ in range(dims.n_layers)]

    def append(self, layer: int, keys, values) -> None:
        keys, values = _check_kv_pair(self.dims, keys, values)
        self._keys[layer].append(keys.copy())
        self._values[layer].append(values.copy())

    def length(self, layer: int) -> int:
        return len(self._keys[layer])

    def view(self, layer: int) -> tuple[np.ndarray, np.ndarray]:
        """Snapshot of the cache as (kv_heads, n, head_dim) key/value arrays."""
        dims = self.dims
        if not self._keys[layer]:
            empty = np.zeros((dims.kv_heads, 0, dims.head_dim))
            return empty, empty.copy()
        k = np.stack(self._keys[layer], axis=1)
        v = np.stack(self._values[layer], axis=1)
        return k, v


def attention_weights(q: np.ndarray, keys: np.ndarray,
                      scale: float | None = None) -> np.ndarray:
    """Softmax attention weights, shape (n_heads, n).

    q: (n_heads, head_dim); keys: (kv_heads, n, head_dim). Logits are
    q . k / sqrt(head_dim) (or an explicit `scale`), softmaxed per head with
    max-subtraction.
    """
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if q.ndim != 2 or keys.ndim != 3:
        raise ValueError(f"expected q (H, d_k) and keys (G, n, d_k), "
                         f"got {q.shape} and {keys.shape}")
    n_heads, d_k = q.shape
    n_groups, n, d_kc = keys.shape
    if d_kc != d_k:
        raise ValueError(f"head_dim mismatch: q has {d_k}, keys have {d_kc}")
    if n == 0:
        raise ValueError("cannot attend over an empty cache")
    if n_heads % n_groups != 0:
        raise ValueError(f"kv head count {n_groups} must divide query head count {n_heads}")
    if scale is None:
        scale = 1.0 / math.sqrt(d_k)

    qg = q.reshape(n_groups, n_heads // n_groups, d_k)
    logits = (qg @ keys.transpose(0, 2, 1)) * scale  # (G, H/G, n)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    w = e / e.sum(axis=-1, keepdims=True)
    return w.reshape(n_heads, n)


def attend(q: np.ndarray, keys: np.ndarray, values: np.ndarray,
           scale: float | None = None) -> np.ndarray:
    """Per-head attention output, shape (n_heads, head_dim).

    Each head's output is a convex combination of its group's cached values,
    weighted by softmax(q . K / sqrt(head_dim)).
    """
    values = np.asarray(values, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if values.shape != keys.shape:
        raise ValueError(f"keys and values must match: {keys.shape} vs {values.shape}")
    w = attention_weights(q, keys, scale)
    n_heads, n = w.shape
    n_groups = keys.shape[0]
    wg = w.reshape(n_groups, n_heads // n_groups, n)
    out = wg @ values  # (G, H/G, d_k)
    return out.reshape(n_heads, keys.shape[2])
