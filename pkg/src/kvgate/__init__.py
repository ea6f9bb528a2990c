"""Gated KV-cache compression for autoregressive decoding.

Compresses the history a decoder attends over by folding tokens that age out
of a recent window into fixed-size chunks, mean-aggregating each chunk, and
letting a recurrent gate keep or drop the compressed representative. Ships
the cache itself, a full-cache attention baseline, an analytical cost model,
and a desk-scale decode simulator for equivalence and scaling experiments.
"""

from .attention import FullKvCache, ModelDims, attend, attention_weights
from .cache import (
    CacheConfig,
    CompressedEntry,
    EfficientKvCache,
    GateDecision,
    aggregate_chunk,
    gate_chunk,
)
from .costmodel import (
    REFERENCE_PARAMS,
    CostParams,
    CostReport,
    attention_speedup,
    build_report,
    derive_lengths,
    end_to_end_speedup,
    flops_base,
    flops_kv_eff,
    memory_report,
)
from .linalg import LstmParams, LstmState, init_lstm_params, lstm_step
from .simulate import (
    DESK_DIMS,
    DecodeTrace,
    SimConfig,
    bench_attention,
    divergence,
    run_decode,
    sweep,
)

__all__ = [
    "FullKvCache", "ModelDims", "attend", "attention_weights",
    "CacheConfig", "CompressedEntry", "EfficientKvCache", "GateDecision",
    "aggregate_chunk", "gate_chunk",
    "REFERENCE_PARAMS", "CostParams", "CostReport", "attention_speedup",
    "build_report", "derive_lengths", "end_to_end_speedup", "flops_base",
    "flops_kv_eff", "memory_report",
    "LstmParams", "LstmState", "init_lstm_params", "lstm_step",
    "DESK_DIMS", "DecodeTrace", "SimConfig", "bench_attention", "divergence",
    "run_decode", "sweep",
]

__version__ = "0.1.0"
