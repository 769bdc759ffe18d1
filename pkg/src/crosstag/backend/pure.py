"""Pure-numpy reference kernels.

These are the fallback implementations of the hot inner loops: the
linear-chain lattice dynamic programs and the LSTM sequence recurrences.
The compiled backend (``crosstag.backend._native``) mirrors these
semantics exactly; both operate on C-contiguous float64 arrays.

Lattice layout: ``scores[i, a, b]`` is the log-potential for tag ``a`` at
position ``i-1`` followed by tag ``b`` at position ``i``.  The previous-tag
axis has ``k + 1`` rows; row ``k`` is the beginning-of-tagging symbol and
is the only row consulted at position 0.  Rows other than ``k`` at
position 0, and row ``k`` at later positions, are never read.

LSTM layout: gate blocks are ordered [input, forget, cell, output] along
the leading axis of ``wx`` (4H x D), ``wh`` (4H x H) and ``b`` (4H,).
The initial hidden and cell states are zero.
"""

from __future__ import annotations

import numpy as np


def _logsumexp_over_prev(m: np.ndarray) -> np.ndarray:
    # m has shape (k_prev, k); reduce over axis 0 with a max shift.
    mx = m.max(axis=0)
    return mx + np.log(np.exp(m - mx[None, :]).sum(axis=0))


def crf_forward(scores: np.ndarray) -> tuple[np.ndarray, float]:
    """Forward recursion: per-position log prefix sums and log Z."""
    n, kp1, k = scores.shape
    alpha = np.empty((n, k))
    alpha[0] = scores[0, k, :]
    for i in range(1, n):
        alpha[i] = _logsumexp_over_prev(alpha[i - 1][:, None] + scores[i, :k, :])
    mx = alpha[n - 1].max()
    log_z = mx + np.log(np.exp(alpha[n - 1] - mx).sum())
    return alpha, float(log_z)


def crf_backward(scores: np.ndarray) -> np.ndarray:
    """Backward recursion: log suffix sums, beta[n-1] = 0."""
    n, kp1, k = scores.shape
    beta = np.empty((n, k))
    beta[n - 1] = 0.0
    for i in range(n - 2, -1, -1):
        m = scores[i + 1, :k, :] + beta[i + 1][None, :]
        mx = m.max(axis=1)
        beta[i] = mx + np.log(np.exp(m - mx[:, None]).sum(axis=1))
    return beta


def crf_viterbi(scores: np.ndarray) -> tuple[np.ndarray, float]:
    """Max-score path; ties resolve to the lowest tag index."""
    n, kp1, k = scores.shape
    delta = scores[0, k, :].copy()
    back = np.empty((n, k), dtype=np.int64)
    for i in range(1, n):
        m = delta[:, None] + scores[i, :k, :]
        back[i] = np.argmax(m, axis=0)
        delta = m[back[i], np.arange(k)]
    path = np.empty(n, dtype=np.int64)
    path[n - 1] = int(np.argmax(delta))
    score = float(delta[path[n - 1]])
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path, score


def lstm_forward(
    wx: np.ndarray, wh: np.ndarray, b: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run an LSTM over ``x`` (T x D) from the zero state.

    Returns hidden states ``h`` (T x H), cell states ``c`` (T x H) and the
    post-activation gates (T x 4H), which the backward pass consumes.
    """
    t_len = x.shape[0]
    hidden = wh.shape[1]
    h = np.empty((t_len, hidden))
    c = np.empty((t_len, hidden))
    gates = np.empty((t_len, 4 * hidden))
    zx = x @ wx.T + b[None, :]
    h_prev = np.zeros(hidden)
    c_prev = np.zeros(hidden)
    for t in range(t_len):
        z = zx[t] + wh @ h_prev
        gi = 1.0 / (1.0 + np.exp(-z[:hidden]))
        gf = 1.0 / (1.0 + np.exp(-z[hidden : 2 * hidden]))
        gg = np.tanh(z[2 * hidden : 3 * hidden])
        go = 1.0 / (1.0 + np.exp(-z[3 * hidden :]))
        c_prev = gf * c_prev + gi * gg
        h_prev = go * np.tanh(c_prev)
        gates[t, :hidden] = gi
        gates[t, hidden : 2 * hidden] = gf
        gates[t, 2 * hidden : 3 * hidden] = gg
        gates[t, 3 * hidden :] = go
        h[t] = h_prev
        c[t] = c_prev
    return h, c, gates


def lstm_backward(
    wx: np.ndarray,
    wh: np.ndarray,
    b: np.ndarray,
    x: np.ndarray,
    h: np.ndarray,
    c: np.ndarray,
    gates: np.ndarray,
    dh_out: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Reverse-mode pass matching :func:`lstm_forward`.

    ``dh_out`` (T x H) carries the loss gradient on every hidden state;
    any gradient on the final state must already be folded into its last
    row.  Returns gradients for ``wx``, ``wh``, ``b`` and ``x``.
    """
    t_len, hidden = h.shape
    dz_all = np.empty((t_len, 4 * hidden))
    dh_next = np.zeros(hidden)
    dc_next = np.zeros(hidden)
    for t in range(t_len - 1, -1, -1):
        gi = gates[t, :hidden]
        gf = gates[t, hidden : 2 * hidden]
        gg = gates[t, 2 * hidden : 3 * hidden]
        go = gates[t, 3 * hidden :]
        tc = np.tanh(c[t])
        dh = dh_out[t] + dh_next
        dc = dh * go * (1.0 - tc * tc) + dc_next
        c_prev = c[t - 1] if t > 0 else np.zeros(hidden)
        dz = dz_all[t]
        dz[:hidden] = dc * gg * gi * (1.0 - gi)
        dz[hidden : 2 * hidden] = dc * c_prev * gf * (1.0 - gf)
        dz[2 * hidden : 3 * hidden] = dc * gi * (1.0 - gg * gg)
        dz[3 * hidden :] = dh * tc * go * (1.0 - go)
        dh_next = wh.T @ dz
        dc_next = dc * gf
    h_prev = np.vstack([np.zeros((1, hidden)), h[:-1]])
    dwx = dz_all.T @ x
    dwh = dz_all.T @ h_prev
    db = dz_all.sum(axis=0)
    dx = dz_all @ wx
    return dwx, dwh, db, dx
