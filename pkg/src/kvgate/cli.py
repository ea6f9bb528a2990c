"""Command-line front end: cost reports, simulation, benchmarks, sweeps.

Subcommands
    defaults   print the full default config as JSON (feed back via --config)
    cost       analytical FLOPs / memory / speedup report
    simulate   run both cache backends, write traces, report divergence
    bench      wall-clock attention timings across cache lengths
    sweep      grid over chunk size / window / threshold, CSV out

Config is a flat JSON object; unknown keys are rejected by name, CLI flags
override file values, and every run is reproducible from the single `seed`
key (wall-clock fields excepted). Exit codes: 0 success, 1 equivalence
failure, 2 config error (including unreadable input files), 3 output IO
failure.

File formats
    trace JSONL (simulate, one object per step):
        {"step": int, "token": int, "next_token": int,
         "lengths": [per-layer int], "attn_flops": [per-layer float],
         "gate_events": [{"layer": int, "chunk_index": int, "score": float,
                          "kept": bool, "span": [first, last]}],
         "output_norm": float}
      plus "attn_out": [[float]] per layer under --verbose.
    cache dump JSON (simulate):
        {"layers": [{"layer": int, "steps": int, "chunks_formed": int,
                     "chunks_retained": int,
                     "retained": [{"chunk_index": int, "score": float,
                                   "span": [first, last]}],
                     "buffer_len": int, "recent_len": int,
                     "protected_len": int, "gate_state_norm": float}]}
    sweep CSV header:
        C,W,tau,seq_len,final_n_prime,est_flops_per_step,max_divergence,retained_chunks
    bench CSV header (all wall-clock, not reproducible):
        length,median_s,p25_s,p75_s,ratio
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from .attention import ModelDims
from .cache import CacheConfig
from .costmodel import CostParams, build_report, end_to_end_speedup
from .simulate import (
    DecodeTrace,
    SimConfig,
    bench_attention,
    divergence,
    run_decode,
    sweep,
    sweep_csv,
)

DEFAULTS = {
    # model dims (desk scale)
    "d_model": 64,
    "n_heads": 4,
    "head_dim": 16,
    "kv_heads": 2,
    "n_layers": 2,
    # cache compression
    "chunk_size": 4,
    "recent_window": 16,
    "threshold": 0.5,
    "gate_hidden": 16,
    "protected_prefix": 0,
    # simulation
    "seq_len": 128,
    "seed": 0,
    "vocab_size": 256,
    "token_file": None,
    "out_dir": "out",
    # analytical cost model
    "n_ctx": 4652,
    "retention_rate": 0.687,
    "bytes_per_element": 2,
    "amdahl_fraction": 0.75,
    # benchmarking
    "bench_lengths": [1675, 4652],
    "bench_repetitions": 9,
}

# 8B-scale reference configuration loaded by `cost --paper`
REFERENCE_PRESET = {
    "d_model": 4096,
    "n_heads": 32,
    "head_dim": 128,
    "kv_heads": 8,
    "n_layers": 32,
    "chunk_size": 16,
    "recent_window": 1542,
    "gate_hidden": 128,
    "n_ctx": 4652,
    "retention_rate": 0.687,
    "bytes_per_element": 2,
}

AMDAHL_GRID = (0.50, 0.60, 0.70, 0.75, 0.80, 0.90, 1.00)

_INT_KEYS = {"d_model", "n_heads", "head_dim", "kv_heads", "n_layers",
             "chunk_size", "recent_window", "gate_hidden", "protected_prefix",
             "seq_len", "seed", "vocab_size", "n_ctx", "bytes_per_element",
             "bench_repetitions"}
_FLOAT_KEYS = {"threshold", "retention_rate", "amdahl_fraction"}
_STR_KEYS = {"out_dir"}


class ConfigError(Exception):
    pass


def _check_value(key: str, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
    elif key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
    elif key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a string, got {value!r}")
    elif key == "token_file":
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"config key {key!r} must be a path or null, got {value!r}")
    elif key == "bench_lengths":
        if (not isinstance(value, list) or not value
                or any(isinstance(v, bool) or not isinstance(v, int) for v in value)):
            raise ConfigError(f"config key {key!r} must be a non-empty list of "
                              f"integers, got {value!r}")


def load_config(path: str | None) -> dict:
    cfg = dict(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    for key, value in doc.items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key}")
        _check_value(key, value)
        cfg[key] = value
    return cfg


def _load_tokens(path: str) -> tuple[int, ...]:
    """Newline-delimited unsigned integers."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as e:
        raise ConfigError(f"cannot read token file {path}: {e}") from e
    tokens = []
    for i, line in enumerate(lines, start=1):
        if not line:
            continue
        try:
            tok = int(line)
        except ValueError:
            raise ConfigError(f"token file {path} line {i}: not an integer: {line!r}")
        if tok < 0:
            raise ConfigError(f"token file {path} line {i}: tokens must be unsigned")
        tokens.append(tok)
    if not tokens:
        raise ConfigError(f"token file {path} holds no tokens")
    return tuple(tokens)


def build_dims(cfg: dict) -> ModelDims:
    try:
        return ModelDims(d_model=cfg["d_model"], n_heads=cfg["n_heads"],
                         head_dim=cfg["head_dim"], kv_heads=cfg["kv_heads"],
                         n_layers=cfg["n_layers"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_cache_config(cfg: dict) -> CacheConfig:
    try:
        return CacheConfig(chunk_size=cfg["chunk_size"],
                           recent_window=cfg["recent_window"],
                           threshold=float(cfg["threshold"]),
                           gate_hidden=cfg["gate_hidden"],
                           protected_prefix=cfg["protected_prefix"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_cost_params(cfg: dict) -> CostParams:
    try:
        return CostParams(
            d_model=cfg["d_model"], n_heads=cfg["n_heads"],
            head_dim=cfg["head_dim"], gate_hidden=cfg["gate_hidden"],
            n_ctx=cfg["n_ctx"], recent_window=cfg["recent_window"],
            chunk_size=cfg["chunk_size"],
            retention_rate=float(cfg["retention_rate"]),
            kv_heads=cfg["kv_heads"], n_layers=cfg["n_layers"],
            bytes_per_element=cfg["bytes_per_element"],
            amdahl_fraction=float(cfg["amdahl_fraction"]),
        )
    except ValueError as e:
        raise ConfigError(str(e)) from e


def build_sim_config(cfg: dict) -> SimConfig:
    tokens = _load_tokens(cfg["token_file"]) if cfg["token_file"] else None
    try:
        return SimConfig(dims=build_dims(cfg), cache=build_cache_config(cfg),
                         seq_len=cfg["seq_len"], seed=cfg["seed"],
                         vocab_size=cfg["vocab_size"], tokens=tokens)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True)


# -- cost ------------------------------------------------------------------

def cmd_cost(args) -> int:
    cfg = load_config(args.config)
    if args.paper:
        cfg.update(REFERENCE_PRESET)
    if args.seed is not None:
        cfg["seed"] = args.seed
    params = build_cost_params(cfg)
    try:
        report = build_report(params)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    p = params
    print("attention cost model")
    print(f"  d_model={p.d_model}  heads={p.n_heads}  head_dim={p.head_dim}  "
          f"kv_heads={p.kv_heads}  layers={p.n_layers}  gate_hidden={p.gate_hidden}")
    print(f"  n={p.n_ctx}  W={p.recent_window}  C={p.chunk_size}  "
          f"r={p.retention_rate:g}  bytes/elem={p.bytes_per_element}")
    print()
    print(f"  chunks formed (N_c)     {report.n_chunks:>15,}")
    print(f"  chunks retained (M)     {report.retained:>15,}")
    print(f"  effective length (n')   {report.n_prime:>15,}")
    print(f"  retained fraction       {report.retained_fraction:>15.3f}")
    print(f"  memory ratio (n/n')     {report.memory_ratio:>15.3f}")
    print()
    print(f"  FLOPs/token, full cache {report.flops_base:>15,.0f}")
    print(f"  FLOPs/token, compressed {report.flops_kv_eff:>15,.0f}  (gate term excluded)")
    print(f"  FLOPs/token, compressed {report.flops_kv_eff_gated:>15,.0f}  (gate term included)")
    print(f"  attention speedup       {report.attention_speedup:>15.3f}  (gate term excluded)")
    print(f"  attention speedup       {report.attention_speedup_gated:>15.3f}  (gate term included)")
    print()
    print(f"  KV bytes, full cache    {report.kv_bytes_base:>15,}")
    print(f"  KV bytes, compressed    {report.kv_bytes_eff:>15,}")
    print()
    print(f"  end-to-end speedup, S = 1/((1-P) + P/k) with k={report.attention_speedup:.3f}:")
    amdahl = {}
    for frac in sorted(set(AMDAHL_GRID) | {p.amdahl_fraction}):
        s = end_to_end_speedup(
            CostParams(**{**asdict(p), "amdahl_fraction": frac}),
            report.attention_speedup)
        amdahl[f"{frac:.2f}"] = s
        print(f"    P={frac:.2f}  S={s:.3f}")
    print()
    print("  note: S uses the standard Amdahl form; only the attention share "
          "P of the runtime is accelerated by k.")

    if args.json:
        doc = {"params": asdict(p), "report": asdict(report),
               "end_to_end_by_fraction": amdahl}
        _write_text(args.json, _dump_json(doc) + "\n")
    return 0


# -- simulate ---------------------------------------------------------------

def _trace_line(step, verbose: bool) -> str:
    doc = {
        "step": step.step,
        "token": step.token,
        "next_token": step.next_token,
        "lengths": list(step.lengths),
        "attn_flops": list(step.attn_flops),
        "gate_events": [
            {"layer": e.layer, "chunk_index": e.chunk_index, "score": e.score,
             "kept": e.kept, "span": list(e.span)}
            for e in step.gate_events
        ],
        "output_norm": float(np.sqrt((step.attn_out ** 2).sum())),
    }
    if verbose:
        doc["attn_out"] = step.attn_out.tolist()
    return json.dumps(doc, sort_keys=True)


def _write_text(path: str, text: str) -> None:
    with open(path, "w") as fh:
        fh.write(text)


def _write_trace(path: str, trace: DecodeTrace, verbose: bool) -> None:
    with open(path, "w") as fh:
        for step in trace.steps:
            fh.write(_trace_line(step, verbose) + "\n")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    sim = build_sim_config(cfg)

    full = run_decode(sim, "full")
    eff = run_decode(sim, "kv_efficient")
    div = divergence(full, eff)

    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "full": os.path.join(out_dir, "trace_full.jsonl"),
        "kv_efficient": os.path.join(out_dir, "trace_kv_efficient.jsonl"),
        "cache": os.path.join(out_dir, "cache_state.json"),
    }
    _write_trace(paths["full"], full, args.verbose)
    _write_trace(paths["kv_efficient"], eff, args.verbose)
    _write_text(paths["cache"], _dump_json(eff.cache_dump) + "\n")

    c = sim.cache
    print(f"decode simulation: seq_len={sim.seq_len} seed={sim.seed} "
          f"d_model={sim.dims.d_model} heads={sim.dims.n_heads} "
          f"layers={sim.dims.n_layers}")
    print(f"  cache: C={c.chunk_size} W={c.recent_window} tau={c.threshold:g} "
          f"gate_hidden={c.gate_hidden} protected_prefix={c.protected_prefix}")
    print(f"  final length, full cache:   {list(full.final_lengths)}")
    print(f"  final length, compressed:   {list(eff.final_lengths)}")
    print(f"  retained chunks per layer:  {list(eff.retained_chunks())}")
    print(f"  divergence max|d|={div.max_abs:.6e}  mean|d|={div.mean_abs:.6e}")
    print(f"  traces: {paths['full']}  {paths['kv_efficient']}")
    print(f"  cache dump: {paths['cache']}")

    if args.json:
        doc = {
            "seq_len": sim.seq_len,
            "seed": sim.seed,
            "full_final_lengths": list(full.final_lengths),
            "kv_efficient_final_lengths": list(eff.final_lengths),
            "retained_chunks": list(eff.retained_chunks()),
            "max_divergence": div.max_abs,
            "mean_divergence": div.mean_abs,
            "cache_dump": eff.cache_dump,
        }
        _write_text(args.json, _dump_json(doc) + "\n")

    if args.equivalence_check and div.max_abs != 0.0:
        print(f"equivalence check FAILED: max divergence {div.max_abs:.6e} != 0",
              file=sys.stderr)
        return 1
    if args.equivalence_check:
        print("equivalence check passed: zero divergence")
    return 0


# -- bench -------------------------------------------------------------------

def cmd_bench(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    dims = build_dims(cfg)
    lengths = cfg["bench_lengths"]
    if not lengths:
        raise ConfigError("bench_lengths must be non-empty")
    try:
        rows = bench_attention(dims, lengths, cfg["bench_repetitions"],
                               seed=cfg["seed"])
    except ValueError as e:
        raise ConfigError(str(e)) from e

    print(f"attention timing: d_model={dims.d_model} heads={dims.n_heads} "
          f"head_dim={dims.head_dim} kv_heads={dims.kv_heads} "
          f"repetitions={cfg['bench_repetitions']}")
    clock = time.get_clock_info("perf_counter")
    print(f"  timer: time.perf_counter, resolution {clock.resolution:.1e}s; "
          f"3 warmup samples discarded")
    print(f"  {'length':>8}  {'median_s':>12}  {'p25_s':>12}  {'p75_s':>12}  {'ratio':>7}")
    base = rows[0].median_s
    csv_lines = ["length,median_s,p25_s,p75_s,ratio"]
    for row in rows:
        ratio = row.median_s / base
        print(f"  {row.length:>8}  {row.median_s:>12.3e}  {row.p25_s:>12.3e}  "
              f"{row.p75_s:>12.3e}  {ratio:>7.2f}")
        csv_lines.append(f"{row.length},{row.median_s:.6e},{row.p25_s:.6e},"
                         f"{row.p75_s:.6e},{ratio:.4f}")
    ordered = sorted(rows, key=lambda r: r.length)
    if any(a.median_s > b.median_s for a, b in zip(ordered, ordered[1:])):
        print("  warning: medians not monotone in length (timing noise)")
    if args.csv:
        _write_text(args.csv, "\n".join(csv_lines) + "\n")
    return 0


# -- sweep -------------------------------------------------------------------

def _parse_axis(raw: str | None, name: str, cast, fallback):
    if raw is None:
        return [fallback]
    values = []
    for part in raw.split(","):
        part = part.strip()
        try:
            values.append(cast(part))
        except ValueError:
            raise ConfigError(f"malformed --{name} value: {part!r}")
    if not values:
        raise ConfigError(f"--{name} must list at least one value")
    return values


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg["seed"] = args.seed
    sim = build_sim_config(cfg)
    chunk_sizes = _parse_axis(args.C, "C", int, cfg["chunk_size"])
    windows = _parse_axis(args.W, "W", int, cfg["recent_window"])
    thresholds = _parse_axis(args.tau, "tau", float, cfg["threshold"])
    try:
        rows = sweep(sim, chunk_sizes, windows, thresholds)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    text = sweep_csv(rows)
    print(text, end="")
    if args.csv:
        _write_text(args.csv, text)
    return 0


def cmd_defaults(args) -> int:
    print(_dump_json(DEFAULTS))
    return 0


# -- entry -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvgate",
        description="Gated KV-cache compression: cost model, simulator, benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file (flat keys; see `defaults`)")
        p.add_argument("--seed", type=int, help="override the config seed")

    p_cost = sub.add_parser("cost", help="analytical FLOPs/memory/speedup report")
    common(p_cost)
    p_cost.add_argument("--paper", action="store_true",
                        help="load the 8B-scale reference configuration")
    p_cost.add_argument("--json", help="also write the report as JSON")
    p_cost.set_defaults(func=cmd_cost)

    p_sim = sub.add_parser("simulate", help="decode with both cache backends")
    common(p_sim)
    p_sim.add_argument("--equivalence-check", action="store_true",
                       help="exit 1 unless the backends diverge by exactly zero")
    p_sim.add_argument("--json", help="also write the summary as JSON")
    p_sim.add_argument("--verbose", action="store_true",
                       help="include full attention vectors in trace files")
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="time the attention kernel")
    common(p_bench)
    p_bench.add_argument("--csv", help="also write timings as CSV")
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("sweep", help="grid over C / W / tau")
    common(p_sweep)
    p_sweep.add_argument("--C", help="comma list of chunk sizes")
    p_sweep.add_argument("--W", help="comma list of recent-window lengths")
    p_sweep.add_argument("--tau", help="comma list of thresholds")
    p_sweep.add_argument("--csv", help="also write the CSV to a file")
    p_sweep.set_defaults(func=cmd_sweep)

    p_def = sub.add_parser("defaults", help="print the default config as JSON")
    p_def.set_defaults(func=cmd_defaults)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code in (0, None) else 2
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
