"""Desk-scale autoregressive decoder running on either cache backend.

The decoder is deliberately minimal: embed token, then per layer project
q/k/v, append to the cache, attend over the cache view, and residual-add the
mixed output; a final linear head picks the next token greedily. There is no
MLP, normalization, or positional encoding, so the two backends are
bit-identical whenever compression never fires and every output difference is
attributable to the cache policy alone.

All weights (embeddings, projections, gates) derive from the single config
seed, so runs are reproducible and cache knobs never perturb the weights.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .attention import FullKvCache, ModelDims, attend
from .cache import CacheConfig, EfficientKvCache, GateDecision, build_gates
from .costmodel import attention_flops_at_length
from .linalg import LstmParams

DESK_DIMS = ModelDims(d_model=64, n_heads=4, head_dim=16, kv_heads=2, n_layers=2)

BACKENDS = ("full", "kv_efficient")

# rng stream tags; gate weights use their own tag inside cache.build_gates
_EMBED, _WQ, _WK, _WV, _WO, _LM_HEAD = 0, 1, 2, 3, 4, 5
_TOKENS = 7
_BENCH = 8


@dataclass(frozen=True)
class SimConfig:
    dims: ModelDims = DESK_DIMS
    cache: CacheConfig = CacheConfig()
    seq_len: int = 128
    seed: int = 0
    vocab_size: int = 256
    tokens: tuple[int, ...] | None = None  # replay stream; None = synthetic

    def __post_init__(self):
        if self.seq_len < 1:
            raise ValueError("seq_len must be >= 1")
        if self.vocab_size < 2:
            raise ValueError("vocab_size must be >= 2")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.tokens is not None:
            if len(self.tokens) < self.seq_len:
                raise ValueError(f"token stream has {len(self.tokens)} entries, "
                                 f"need seq_len={self.seq_len}")
            for tok in self.tokens:
                if not 0 <= tok < self.vocab_size:
                    raise ValueError(f"token {tok} outside vocab [0, {self.vocab_size})")


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    lim = 0.5 / np.sqrt(fan_in)
    return rng.uniform(-lim, lim, size=shape)


class DecoderWeights:
    """Every parameter of the toy decoder, derived from one seed.

    Cache knobs (chunk size, window, threshold) are not part of the
    derivation, so changing them never changes the weights.
    """

    def __init__(self, dims: ModelDims, gate_hidden: int, vocab_size: int, seed: int):
        self.dims = dims
        d, h, dk, g = dims.d_model, dims.n_heads, dims.head_dim, dims.kv_heads

        def rng(tag, layer=0):
            return np.random.default_rng([seed, tag, layer])

        self.embedding = rng(_EMBED).uniform(-0.5, 0.5, size=(vocab_size, d))
        self.wq = [_uniform(rng(_WQ, i), d, (d, h * dk)) for i in range(dims.n_layers)]
        self.wk = [_uniform(rng(_WK, i), d, (d, g * dk)) for i in range(dims.n_layers)]
        self.wv = [_uniform(rng(_WV, i), d, (d, g * dk)) for i in range(dims.n_layers)]
        self.wo = [_uniform(rng(_WO, i), h * dk, (h * dk, d)) for i in range(dims.n_layers)]
        self.lm_head = _uniform(rng(_LM_HEAD), d, (d, vocab_size))
        self.gates: list[LstmParams] = build_gates(dims, gate_hidden, seed)

    def checksum(self) -> float:
        """Order-independent fingerprint of all weight values."""
        total = float(np.abs(self.embedding).sum() + np.abs(self.lm_head).sum())
        for group in (self.wq, self.wk, self.wv, self.wo):
            total += float(sum(np.abs(w).sum() for w in group))
        for gate in self.gates:
            for w in (gate.w_input, gate.w_forget, gate.w_cell, gate.w_output,
                      gate.b_input, gate.b_forget, gate.b_cell, gate.b_output,
                      gate.w_score):
                total += float(np.abs(w).sum())
            total += abs(gate.b_score)
        return total


@dataclass(frozen=True)
class StepRecord:
    step: int                       # 1-based decode step
    token: int                      # input token consumed this step
    next_token: int                 # greedy prediction emitted this step
    lengths: tuple[int, ...]        # per-layer cache length seen by attention
    attn_flops: tuple[float, ...]   # per-layer estimate at that length
    gate_events: tuple[GateDecision, ...]
    attn_out: np.ndarray            # (n_layers, d_model) attention outputs
    attn_time: float | None = None  # summed attend wall-clock, when timed


@dataclass(frozen=True)
class DecodeTrace:
    backend: str
    config: SimConfig
    steps: tuple[StepRecord, ...]
    cache_dump: dict | None = None  # final compressed-cache state, kv_efficient only

    @property
    def final_lengths(self) -> tuple[int, ...]:
        return self.steps[-1].lengths

    def retained_chunks(self) -> tuple[int, ...]:
        """Per-layer count of chunks the gate kept over the whole run."""
        counts = [0] * self.config.dims.n_layers
        for step in self.steps:
            for event in step.gate_events:
                if event.kept:
                    counts[event.layer] += 1
        return tuple(counts)


def run_decode(config: SimConfig, backend: str, timed: bool = False) -> DecodeTrace:
    """Decode `seq_len` steps against one cache backend.

    Synthetic mode draws the first token from the seeded PRNG and then feeds
    each greedy prediction back in; replay mode consumes the configured token
    stream. Deterministic for a fixed config and backend.
    """
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {backend!r}")
    dims = config.dims
    weights = DecoderWeights(dims, config.cache.gate_hidden, config.vocab_size,
                             config.seed)
    if backend == "full":
        cache = FullKvCache(dims)
    else:
        cache = EfficientKvCache(dims, config.cache, gates=weights.gates)

    if config.tokens is not None:
        token = int(config.tokens[0])
    else:
        token = int(np.random.default_rng([config.seed, _TOKENS]).integers(config.vocab_size))

    h, dk, g = dims.n_heads, dims.head_dim, dims.kv_heads
    steps = []
    for t in range(1, config.seq_len + 1):
        x = weights.embedding[token].copy()
        attn_out = np.empty((dims.n_layers, dims.d_model))
        lengths = []
        flops = []
        events: list[GateDecision] = []
        elapsed = 0.0
        for layer in range(dims.n_layers):
            q = (x @ weights.wq[layer]).reshape(h, dk)
            k = (x @ weights.wk[layer]).reshape(g, dk)
            v = (x @ weights.wv[layer]).reshape(g, dk)
            decision = cache.append(layer, k, v)
            if decision is not None:
                events.append(decision)
            if backend == "full":
                keys, values = cache.view(layer)
            else:
                keys, values = cache.attend_view(layer)
            if keys.shape[1] == 0:
                # only reachable with recent_window=0 and an all-drop gate:
                # the step's own token just vanished into a dropped chunk, so
                # attention contributes nothing and the residual passes through
                mixed = np.zeros((h, dk))
            elif timed:
                t0 = time.perf_counter()
                mixed = attend(q, keys, values)
                elapsed += time.perf_counter() - t0
            else:
                mixed = attend(q, keys, values)
            flat = mixed.reshape(-1)
            attn_out[layer] = flat
            x = x + flat @ weights.wo[layer]
            lengths.append(keys.shape[1])
            flops.append(attention_flops_at_length(dims.d_model, h, dk, keys.shape[1]))
        logits = x @ weights.lm_head
        next_token = int(np.argmax(logits))
        steps.append(StepRecord(
            step=t, token=token, next_token=next_token,
            lengths=tuple(lengths), attn_flops=tuple(flops),
            gate_events=tuple(events), attn_out=attn_out,
            attn_time=elapsed if timed else None,
        ))
        if config.tokens is not None:
            token = int(config.tokens[t]) if t < config.seq_len else next_token
        else:
            token = next_token

    dump = cache.dump() if backend == "kv_efficient" else None
    return DecodeTrace(backend=backend, config=config, steps=tuple(steps),
                       cache_dump=dump)


@dataclass(frozen=True)
class Divergence:
    """Absolute differences between two traces' attention outputs."""

    per_step_max: np.ndarray
    per_step_mean: np.ndarray
    max_abs: float
    mean_abs: float


def divergence(a: DecodeTrace, b: DecodeTrace) -> Divergence:
    """Per-step and aggregate |difference| between two traces. Symmetric."""
    if a.config.seq_len != b.config.seq_len or a.config.dims != b.config.dims:
        raise ValueError("traces differ in seq_len or model dims")
    per_max = np.empty(a.config.seq_len)
    per_mean = np.empty(a.config.seq_len)
    for i, (sa, sb) in enumerate(zip(a.steps, b.steps)):
        d = np.abs(sa.attn_out - sb.attn_out)
        per_max[i] = d.max()
        per_mean[i] = d.mean()
    return Divergence(per_max, per_mean, float(per_max.max()), float(per_mean.mean()))


@dataclass(frozen=True)
class BenchRow:
    length: int
    median_s: float
    p25_s: float
    p75_s: float
    repetitions: int


def bench_attention(dims: ModelDims, lengths: list[int], repetitions: int,
                    seed: int = 0, inner: int = 16) -> list[BenchRow]:
    """Median wall-clock of one attend call per cache length.

    Each sample times `inner` back-to-back calls to amortize timer overhead;
    three warmup samples are discarded. Medians are expected to grow with
    length, but that is reported, not enforced.
    """
    if not lengths:
        raise ValueError("lengths must be non-empty")
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    rows = []
    for length in lengths:
        if length < 1:
            raise ValueError("lengths must be >= 1")
        rng = np.random.default_rng([seed, _BENCH, length])
        keys = rng.standard_normal((dims.kv_heads, length, dims.head_dim))
        values = rng.standard_normal((dims.kv_heads, length, dims.head_dim))
        q = rng.standard_normal((dims.n_heads, dims.head_dim))
        samples = []
        for rep in range(repetitions + 3):
            t0 = time.perf_counter()
            for _ in range(inner):
                attend(q, keys, values)
            samples.append((time.perf_counter() - t0) / inner)
        timings = np.array(samples[3:])
        rows.append(BenchRow(
            length=length,
            median_s=float(np.median(timings)),
            p25_s=float(np.percentile(timings, 25)),
            p75_s=float(np.percentile(timings, 75)),
            repetitions=repetitions,
        ))
    return rows


@dataclass(frozen=True)
class SweepRow:
    chunk_size: int
    recent_window: int
    threshold: float
    seq_len: int
    final_n_prime: int        # max over layers at the final step
    est_flops_per_step: float  # summed over layers at the final step
    max_divergence: float      # vs the full-cache run, over all steps
    retained_chunks: int       # summed over layers


SWEEP_CSV_HEADER = ("C,W,tau,seq_len,final_n_prime,est_flops_per_step,"
                    "max_divergence,retained_chunks")


def sweep(base: SimConfig, chunk_sizes, windows, thresholds) -> list[SweepRow]:
    """Grid over (C, W, tau), one compressed run per point vs one shared
    full-cache run. Rows come out in ascending lexicographic order."""
    cs = sorted(set(int(c) for c in chunk_sizes))
    ws = sorted(set(int(w) for w in windows))
    taus = sorted(set(float(t) for t in thresholds))
    if not cs or not ws or not taus:
        raise ValueError("every sweep axis needs at least one value")
    full = run_decode(base, "full")
    rows = []
    for c in cs:
        for w in ws:
            for tau in taus:
                cache = replace(base.cache, chunk_size=c, recent_window=w,
                                threshold=tau)
                config = replace(base, cache=cache)
                trace = run_decode(config, "kv_efficient")
                div = divergence(full, trace)
                last = trace.steps[-1]
                rows.append(SweepRow(
                    chunk_size=c, recent_window=w, threshold=tau,
                    seq_len=base.seq_len,
                    final_n_prime=max(last.lengths),
                    est_flops_per_step=float(sum(last.attn_flops)),
                    max_divergence=div.max_abs,
                    retained_chunks=sum(trace.retained_chunks()),
                ))
    return rows


def sweep_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_CSV_HEADER]
    for r in rows:
        lines.append(f"{r.chunk_size},{r.recent_window},{r.threshold:g},"
                     f"{r.seq_len},{r.final_n_prime},{r.est_flops_per_step:.0f},"
                     f"{r.max_divergence:.6e},{r.retained_chunks}")
    return "\n".join(lines) + "\n"
