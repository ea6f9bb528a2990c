"""Independent brute-force oracles used to check the fast implementations.

Everything here is deliberately naive: explicit Python loops over scalars,
math.exp/math.tanh, no vectorization, no shared code with the package.
"""

import math


def naive_matmul(a, b):
    """Triple-loop matrix product over nested lists / arrays."""
    n, k = len(a), len(a[0])
    m = len(b[0])
    out = [[0.0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            s = 0.0
            for p in range(k):
                s += float(a[i][p]) * float(b[p][j])
            out[i][j] = s
    return out


def naive_softmax(xs):
    """Max-shifted softmax computed with scalar math."""
    m = max(float(v) for v in xs)
    es = [math.exp(float(v) - m) for v in xs]
    z = sum(es)
    return [e / z for e in es]


def column_means(rows):
    """Per-column sum divided by the row count."""
    n = len(rows)
    cols = len(rows[0])
    return [sum(float(r[c]) for r in rows) / n for c in range(cols)]


def _sig(v):
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    e = math.exp(v)
    return e / (1.0 + e)


def scalar_lstm_step(params, hidden, cell, x):
    """LSTM cell evaluated gate by gate, element by element.

    `params` is a kvgate LstmParams; its arrays are only indexed, never fed
    to numpy operations. Returns (new_hidden, new_cell, score) as lists/float.
    """
    z = [float(v) for v in x] + [float(v) for v in hidden]
    h_dim = params.hidden_dim

    def gate(w, b, squash):
        out = []
        for j in range(h_dim):
            s = float(b[j])
            for k in range(len(z)):
                s += float(w[j][k]) * z[k]
            out.append(squash(s))
        return out

    i = gate(params.w_input, params.b_input, _sig)
    f = gate(params.w_forget, params.b_forget, _sig)
    g = gate(params.w_cell, params.b_cell, math.tanh)
    o = gate(params.w_output, params.b_output, _sig)
    new_cell = [f[j] * float(cell[j]) + i[j] * g[j] for j in range(h_dim)]
    new_hidden = [o[j] * math.tanh(new_cell[j]) for j in range(h_dim)]
    s = float(params.b_score)
    for j in range(h_dim):
        s += float(params.w_score[j]) * new_hidden[j]
    return new_hidden, new_cell, _sig(s)


def naive_attend(q, keys, values):
    """Grouped causal attention, one scalar at a time.

    q: (H, d_k) queries; keys/values: (G, n, d_k) with G dividing H. Query
    head h reads KV group h // (H // G). Explicit logits, explicit normalized
    weights, explicit weighted sum.
    """
    n_heads = len(q)
    n_groups = len(keys)
    group_size = n_heads // n_groups
    n = len(keys[0])
    d_k = len(q[0])
    scale = 1.0 / math.sqrt(d_k)

    out = []
    for h in range(n_heads):
        g = h // group_size
        logits = []
        for i in range(n):
            s = 0.0
            for d in range(d_k):
                s += float(q[h][d]) * float(keys[g][i][d])
            logits.append(s * scale)
        weights = naive_softmax(logits)
        row = []
        for d in range(d_k):
            acc = 0.0
            for i in range(n):
                acc += weights[i] * float(values[g][i][d])
            row.append(acc)
        out.append(row)
    return out
