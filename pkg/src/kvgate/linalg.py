"""Dense float64 kernels shared by the attention and gating code.

Matrices are plain 2-D ``numpy.ndarray`` in row-major order; vectors are 1-D
arrays. Everything here is a pure function: inputs are never mutated and all
randomness flows through an explicit seed or ``numpy.random.Generator``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit inner-dimension check."""
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def softmax_row(x: np.ndarray) -> np.ndarray:
    """Probability vector from one row of logits.

    Shifts by the row maximum first, so huge logits never overflow and
    softmax(x + c) == softmax(x).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"expected a non-empty 1-D vector, got shape {x.shape}")
    e = np.exp(x - x.max())
    return e / e.sum()


def mean_rows(rows: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the rows of a matrix (per-column average)."""
    rows = _as_matrix(rows, "rows")
    if rows.shape[0] == 0:
        raise ValueError("cannot average zero rows")
    return rows.mean(axis=0)


def sigmoid(x):
    """Numerically stable logistic function, elementwise."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class LstmParams:
    """Weights of a single LSTM cell plus a scalar scoring head.

    Gate weights act on the concatenation [input; hidden], so each weight
    matrix is (hidden_dim, input_dim + hidden_dim). The scoring head maps the
    new hidden state to one sigmoid-squashed scalar.
    """

    input_dim: int
    hidden_dim: int
    w_input: np.ndarray
    w_forget: np.ndarray
    w_cell: np.ndarray
    w_output: np.ndarray
    b_input: np.ndarray
    b_forget: np.ndarray
    b_cell: np.ndarray
    b_output: np.ndarray
    w_score: np.ndarray
    b_score: float

    def __post_init__(self):
        joint = self.input_dim + self.hidden_dim
        for name in ("w_input", "w_forget", "w_cell", "w_output"):
            w = getattr(self, name)
            if w.shape != (self.hidden_dim, joint):
                raise ValueError(f"{name} must be {(self.hidden_dim, joint)}, got {w.shape}")
        for name in ("b_input", "b_forget", "b_cell", "b_output"):
            b = getattr(self, name)
            if b.shape != (self.hidden_dim,):
                raise ValueError(f"{name} must be length {self.hidden_dim}, got {b.shape}")
        if self.w_score.shape != (self.hidden_dim,):
            raise ValueError(f"w_score must be length {self.hidden_dim}, got {self.w_score.shape}")

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int) -> "LstmParams":
        joint = input_dim + hidden_dim
        zw = np.zeros((hidden_dim, joint))
        zb = np.zeros(hidden_dim)
        return cls(input_dim, hidden_dim, zw, zw.copy(), zw.copy(), zw.copy(),
                   zb, zb.copy(), zb.copy(), zb.copy(), np.zeros(hidden_dim), 0.0)


@dataclass(frozen=True)
class LstmState:
    """Hidden and cell vectors of an LSTM, both length hidden_dim."""

    hidden: np.ndarray
    cell: np.ndarray

    @classmethod
    def zeros(cls, hidden_dim: int) -> "LstmState":
        return cls(np.zeros(hidden_dim), np.zeros(hidden_dim))


def init_lstm_params(input_dim: int, hidden_dim: int, seed) -> LstmParams:
    """Seeded LSTM weights, uniform(-0.5/sqrt(fan_in), +0.5/sqrt(fan_in)).

    `seed` may be an int or an existing ``numpy.random.Generator``. The same
    seed always yields bit-identical parameters.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    joint = input_dim + hidden_dim
    lim = 0.5 / math.sqrt(joint)

    def w():
        return rng.uniform(-lim, lim, size=(hidden_dim, joint))

    def b():
        return rng.uniform(-lim, lim, size=hidden_dim)

    w_i, w_f, w_c, w_o = w(), w(), w(), w()
    b_i, b_f, b_c, b_o = b(), b(), b(), b()
    lim_s = 0.5 / math.sqrt(hidden_dim)
    w_s = rng.uniform(-lim_s, lim_s, size=hidden_dim)
    b_s = float(rng.uniform(-lim_s, lim_s))
    return LstmParams(input_dim, hidden_dim, w_i, w_f, w_c, w_o,
                      b_i, b_f, b_c, b_o, w_s, b_s)


def lstm_step(params: LstmParams, state: LstmState,
              x: np.ndarray) -> tuple[LstmState, float]:
    """One LSTM cell step plus the sigmoid scoring head.

    Standard cell: sigmoid input/forget/output gates, tanh candidate,
    c' = f*c + i*g, h' = o*tanh(c'). Returns the new state and
    score = sigmoid(w_score . h' + b_score), which is strictly inside (0, 1).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ValueError(f"input must be length {params.input_dim}, got shape {x.shape}")
    if state.hidden.shape != (params.hidden_dim,):
        raise ValueError(f"hidden state must be length {params.hidden_dim}, "
                         f"got shape {state.hidden.shape}")

    z = np.concatenate([x, state.hidden])
    i = sigmoid(params.w_input @ z + params.b_input)
    f = sigmoid(params.w_forget @ z + params.b_forget)
    g = np.tanh(params.w_cell @ z + params.b_cell)
    o = sigmoid(params.w_output @ z + params.b_output)
    cell = f * state.cell + i * g
    hidden = o * np.tanh(cell)
    score = float(sigmoid(params.w_score @ hidden + params.b_score))
    # float64 sigmoid saturates past |logit| ~ 37; keep the score strictly
    # inside (0, 1) so threshold-1.0 retention can never fire
    if score >= 1.0:
        score = float(np.nextafter(1.0, 0.0))
    elif score <= 0.0:
        score = float(np.nextafter(0.0, 1.0))
    return LstmState(hidden, cell), score
