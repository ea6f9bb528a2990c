"""Compressed KV cache: recent window + chunked, gate-filtered history.

Policy, per layer:

* An optional protected prefix (the first `protected_prefix` tokens) is
  stored raw forever and never chunked.
* The newest tokens live raw in a recent window of length `recent_window`.
* Tokens that age out of the window accumulate in a chunk buffer. When the
  buffer reaches `chunk_size` entries, the chunk is mean-aggregated into one
  representative (key, value) pair, scored once by a recurrent gate, and
  either kept as a single compressed position (score >= threshold) or
  dropped. Either way the gate state advances, so the gate always sees the
  full sequence of chunk representatives in temporal order.
* Buffered tokens stay visible to attention until their chunk closes, so the
  attend view never has a blind spot.

The attend view is the temporal concatenation
protected prefix | retained chunks | chunk buffer | recent window,
which feeds straight into ``attention.attend``. A decision is never revisited:
each chunk is aggregated and gated exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attention import ModelDims, _check_kv_pair
from .linalg import LstmParams, LstmState, init_lstm_params, lstm_step

_GATE_STREAM = 6  # rng stream tag, keeps gate weights independent of other draws


@dataclass(frozen=True)
class CacheConfig:
    """Compression knobs for the gated cache."""

    chunk_size: int = 4
    recent_window: int = 16
    threshold: float = 0.5
    gate_hidden: int = 16
    protected_prefix: int = 0

    def __post_init__(self):
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be >= 1")
        if self.recent_window < 0:
            raise ValueError("recent_window must be >= 0")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.gate_hidden < 1:
            raise ValueError("gate_hidden must be >= 1")
        if self.protected_prefix < 0:
            raise ValueError("protected_prefix must be >= 0")


@dataclass(frozen=True)
class GateDecision:
    """Outcome of gating one completed chunk."""

    layer: int
    chunk_index: int
    score: float
    kept: bool
    span: tuple[int, int]  # first and last 1-based step folded into the chunk


@dataclass(frozen=True)
class CompressedEntry:
    """One retained chunk: mean key/value per KV head plus its gate score."""

    key_bar: np.ndarray    # (kv_heads, head_dim)
    value_bar: np.ndarray  # (kv_heads, head_dim)
    score: float
    chunk_index: int
    span: tuple[int, int]


@dataclass
class _LayerState:
    protected: list = field(default_factory=list)   # [(k, v)]
    retained: list = field(default_factory=list)    # [CompressedEntry]
    buffer: list = field(default_factory=list)      # [(step, k, v)], len < C after append
    recent: list = field(default_factory=list)      # [(step, k, v)], len <= W
    gate_state: LstmState = None
    steps: int = 0
    chunks_formed: int = 0
    chunks_retained: int = 0


def aggregate_chunk(pairs, chunk_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean key and mean value of exactly `chunk_size` (k, v) pairs.

    Each k/v has shape (kv_heads, head_dim); the head dimension is preserved.
    """
    if len(pairs) != chunk_size:
        raise ValueError(f"chunk must hold exactly {chunk_size} pairs, got {len(pairs)}")
    keys = np.stack([k for k, _ in pairs], axis=0)    # (C, kv_heads, head_dim)
    values = np.stack([v for _, v in pairs], axis=0)
    return keys.mean(axis=0), values.mean(axis=0)


def gate_chunk(gate: LstmParams, state: LstmState,
               representative: np.ndarray) -> tuple[LstmState, float]:
    """Advance the recurrent gate on one chunk representative.

    `representative` is the key/value means concatenated at query-head width,
    length 2 * n_heads * head_dim. Returns (new state, retention score).
    """
    representative = np.asarray(representative, dtype=np.float64)
    if representative.shape != (gate.input_dim,):
        raise ValueError(f"gate input must be length {gate.input_dim}, "
                         f"got shape {representative.shape}")
    return lstm_step(gate, state, representative)


def gate_input(key_bar: np.ndarray, value_bar: np.ndarray,
               group_size: int) -> np.ndarray:
    """Flatten a chunk representative to query-head width.

    KV heads are replicated `group_size` times (the grouped-query sharing
    factor) so the gate input width is 2 * n_heads * head_dim regardless of
    how many KV heads the cache stores.
    """
    k = np.repeat(key_bar, group_size, axis=0).ravel()
    v = np.repeat(value_bar, group_size, axis=0).ravel()
    return np.concatenate([k, v])


def build_gates(dims: ModelDims, gate_hidden: int, seed: int) -> list[LstmParams]:
    """One seeded gate per layer, input width 2 * n_heads * head_dim."""
    width = 2 * dims.n_heads * dims.head_dim
    return [init_lstm_params(width, gate_hidden,
                             np.random.default_rng([seed, _GATE_STREAM, layer]))
            for layer in range(dims.n_layers)]


class EfficientKvCache:
    """Gated, chunk-compressed KV cache. Single writer per instance.

    Gate parameters are fixed at construction (either passed in or derived
    from `seed`) and shared read-only; per-layer gate state evolves as chunks
    close. Identical seed + identical append sequence reproduce identical
    retention decisions and attend views.
    """

    def __init__(self, dims: ModelDims, config: CacheConfig, seed: int = 0,
                 gates: list[LstmParams] | None = None):
        if gates is None:
            gates = build_gates(dims, config.gate_hidden, seed)
        if len(gates) != dims.n_layers:
            raise ValueError(f"need one gate per layer ({dims.n_layers}), got {len(gates)}")
        width = 2 * dims.n_heads * dims.head_dim
        for g in gates:
            if g.input_dim != width:
                raise ValueError(f"gate input width must be {width}, got {g.input_dim}")
        self.dims = dims
        self.config = config
        self.gates = gates
        self._layers = [
            _LayerState(gate_state=LstmState.zeros(g.hidden_dim)) for g in gates
        ]

    # -- mutation ---------------------------------------------------------

    def append(self, layer: int, keys, values) -> GateDecision | None:
        """Add one token's (k, v) pair; returns the gate decision if a chunk
        completed on this step, else None."""
        keys, values = _check_kv_pair(self.dims, keys, values)
        st = self._layers[layer]
        cfg = self.config
        st.steps += 1
        if len(st.protected) < cfg.protected_prefix:
            st.protected.append((keys.copy(), values.copy()))
            return None
        st.recent.append((st.steps, keys.copy(), values.copy()))
        if len(st.recent) <= cfg.recent_window:
            return None
        st.buffer.append(st.recent.pop(0))
        if len(st.buffer) < cfg.chunk_size:
            return None
        return self._close_chunk(layer, st)

    def _close_chunk(self, layer: int, st: _LayerState) -> GateDecision:
        cfg = self.config
        key_bar, value_bar = aggregate_chunk(
            [(k, v) for _, k, v in st.buffer], cfg.chunk_size)
        rep = gate_input(key_bar, value_bar, self.dims.group_size)
        st.gate_state, score = gate_chunk(self.gates[layer], st.gate_state, rep)
        index = st.chunks_formed
        span = (st.buffer[0][0], st.buffer[-1][0])
        st.chunks_formed += 1
        kept = score >= cfg.threshold
        if kept:
            st.retained.append(CompressedEntry(key_bar, value_bar, score, index, span))
            st.chunks_retained += 1
        st.buffer.clear()
        return GateDecision(layer, index, score, kept, span)

    # -- read-only views --------------------------------------------------

    def attend_view(self, layer: int) -> tuple[np.ndarray, np.ndarray]:
        """Keys/values attention actually reads, shape (kv_heads, n', head_dim).

        Temporal order: protected prefix, retained chunks (one position each,
        ordered by chunk index), in-progress chunk buffer, recent window.
        Returned arrays are snapshots; later appends never mutate them.
        """
        st = self._layers[layer]
        ks = ([k for k, _ in st.protected]
              + [e.key_bar for e in st.retained]
              + [k for _, k, _ in st.buffer]
              + [k for _, k, _ in st.recent])
        vs = ([v for _, v in st.protected]
              + [e.value_bar for e in st.retained]
              + [v for _, _, v in st.buffer]
              + [v for _, _, v in st.recent])
        if not ks:
            empty = np.zeros((self.dims.kv_heads, 0, self.dims.head_dim))
            return empty, empty.copy()
        return np.stack(ks, axis=1), np.stack(vs, axis=1)

    def effective_length(self, layer: int) -> int:
        st = self._layers[layer]
        return len(st.protected) + len(st.retained) + len(st.buffer) + len(st.recent)

    def steps(self, layer: int) -> int:
        return self._layers[layer].steps

    def chunks_formed(self, layer: int) -> int:
        return self._layers[layer].chunks_formed

    def chunks_retained(self, layer: int) -> int:
        return self._layers[layer].chunks_retained

    def retained_entries(self, layer: int) -> tuple[CompressedEntry, ...]:
        return tuple(self._layers[layer].retained)

    def gate_state(self, layer: int) -> LstmState:
        return self._layers[layer].gate_state

    def dump(self) -> dict:
        """Structured debug snapshot; schema documented in the cli module."""
        layers = []
        for i, st in enumerate(self._layers):
            norm = float(np.sqrt(np.sum(st.gate_state.hidden ** 2)
                                 + np.sum(st.gate_state.cell ** 2)))
            layers.append({
                "layer": i,
                "steps": st.steps,
                "chunks_formed": st.chunks_formed,
                "chunks_retained": st.chunks_retained,
                "retained": [
                    {"chunk_index": e.chunk_index,
                     "score": e.score,
                     "span": list(e.span)}
                    for e in st.retained
                ],
                "buffer_len": len(st.buffer),
                "recent_len": len(st.recent),
                "protected_len": len(st.protected),
                "gate_state_norm": norm,
            })
        return {"layers": layers}
