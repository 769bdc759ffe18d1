# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``crosstag.backend.pure``.

Same contracts, same array layouts; see that module's docstring.  The
recurrent inner loops run as C; the large batched matrix products are
delegated to numpy's BLAS from inside the wrappers.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, tanh

cnp.import_array()


def crf_forward(double[:, :, ::1] scores):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k = scores.shape[2]
    alpha_arr = np.empty((n, k))
    cdef double[:, ::1] alpha = alpha_arr
    cdef Py_ssize_t i, a, b
    cdef double mx, s, v
    for b in range(k):
        alpha[0, b] = scores[0, k, b]
    for i in range(1, n):
        for b in range(k):
            mx = alpha[i - 1, 0] + scores[i, 0, b]
            for a in range(1, k):
                v = alpha[i - 1, a] + scores[i, a, b]
                if v > mx:
                    mx = v
            s = 0.0
            for a in range(k):
                s += exp(alpha[i - 1, a] + scores[i, a, b] - mx)
            alpha[i, b] = mx + log(s)
    mx = alpha[n - 1, 0]
    for b in range(1, k):
        if alpha[n - 1, b] > mx:
            mx = alpha[n - 1, b]
    s = 0.0
    for b in range(k):
        s += exp(alpha[n - 1, b] - mx)
    return alpha_arr, mx + log(s)


def crf_backward(double[:, :, ::1] scores):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k = scores.shape[2]
    beta_arr = np.empty((n, k))
    cdef double[:, ::1] beta = beta_arr
    cdef Py_ssize_t i, a, b
    cdef double mx, s, v
    for a in range(k):
        beta[n - 1, a] = 0.0
    for i in range(n - 2, -1, -1):
        for a in range(k):
            mx = scores[i + 1, a, 0] + beta[i + 1, 0]
            for b in range(1, k):
                v = scores[i + 1, a, b] + beta[i + 1, b]
                if v > mx:
                    mx = v
            s = 0.0
            for b in range(k):
                s += exp(scores[i + 1, a, b] + beta[i + 1, b] - mx)
            beta[i, a] = mx + log(s)
    return beta_arr


def crf_viterbi(double[:, :, ::1] scores):
    cdef Py_ssize_t n = scores.shape[0]
    cdef Py_ssize_t k = scores.shape[2]
    delta_arr = np.empty(k)
    nxt_arr = np.empty(k)
    back_arr = np.empty((n, k), dtype=np.int64)
    path_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] delta = delta_arr
    cdef double[::1] nxt = nxt_arr
    cdef long long[:, ::1] back = back_arr
    cdef long long[::1] path = path_arr
    cdef Py_ssize_t i, a, b, best
    cdef double mx, v
    for b in range(k):
        delta[b] = scores[0, k, b]
    for i in range(1, n):
        for b in range(k):
            best = 0
            mx = delta[0] + scores[i, 0, b]
            for a in range(1, k):
                v = delta[a] + scores[i, a, b]
                if v > mx:
                    mx = v
                    best = a
            nxt[b] = mx
            back[i, b] = best
        for b in range(k):
            delta[b] = nxt[b]
    best = 0
    mx = delta[0]
    for b in range(1, k):
        if delta[b] > mx:
            mx = delta[b]
            best = b
    path[n - 1] = best
    for i in range(n - 1, 0, -1):
        path[i - 1] = back[i, path[i]]
    return path_arr, mx


def lstm_forward(wx, wh_arr, b_arr, x):
    cdef Py_ssize_t t_len = x.shape[0]
    cdef Py_ssize_t hidden = wh_arr.shape[1]
    zx_arr = np.dot(x, wx.T)
    zx_arr += b_arr[None, :]
    h_arr = np.empty((t_len, hidden))
    c_arr = np.empty((t_len, hidden))
    gates_arr = np.empty((t_len, 4 * hidden))
    cdef double[:, ::1] zx = zx_arr
    cdef double[:, ::1] wh = wh_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] gates = gates_arr
    cdef Py_ssize_t t, j, m
    cdef double z, gi, gf, gg, go, cv
    for t in range(t_len):
        for j in range(4 * hidden):
            z = zx[t, j]
            if t > 0:
                for m in range(hidden):
                    z += wh[j, m] * h[t - 1, m]
            if j < 2 * hidden or j >= 3 * hidden:
                gates[t, j] = 1.0 / (1.0 + exp(-z))
            else:
                gates[t, j] = tanh(z)
        for m in range(hidden):
            gi = gates[t, m]
            gf = gates[t, hidden + m]
            gg = gates[t, 2 * hidden + m]
            go = gates[t, 3 * hidden + m]
            cv = gi * gg
            if t > 0:
                cv += gf * c[t - 1, m]
            c[t, m] = cv
            h[t, m] = go * tanh(cv)
    return h_arr, c_arr, gates_arr


def lstm_backward(wx, wh_arr, b_arr, x, h_arr, c_arr, gates_arr, dh_out_arr):
    cdef Py_ssize_t t_len = h_arr.shape[0]
    cdef Py_ssize_t hidden = h_arr.shape[1]
    dz_all_arr = np.empty((t_len, 4 * hidden))
    dh_next_arr = np.zeros(hidden)
    dc_next_arr = np.zeros(hidden)
    cdef double[:, ::1] wh = wh_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] dh_out = dh_out_arr
    cdef double[:, ::1] dz_all = dz_all_arr
    cdef double[::1] dh_next = dh_next_arr
    cdef double[::1] dc_next = dc_next_arr
    cdef Py_ssize_t t, j, m
    cdef double gi, gf, gg, go, tc, dh, dc, cprev, v
    for t in range(t_len - 1, -1, -1):
        for m in range(hidden):
            gi = gates[t, m]
            gf = gates[t, hidden + m]
            gg = gates[t, 2 * hidden + m]
            go = gates[t, 3 * hidden + m]
            tc = tanh(c[t, m])
            dh = dh_out[t, m] + dh_next[m]
            dc = dh * go * (1.0 - tc * tc) + dc_next[m]
            cprev = c[t - 1, m] if t > 0 else 0.0
            dz_all[t, m] = dc * gg * gi * (1.0 - gi)
            dz_all[t, hidden + m] = dc * cprev * gf * (1.0 - gf)
            dz_all[t, 2 * hidden + m] = dc * gi * (1.0 - gg * gg)
            dz_all[t, 3 * hidden + m] = dh * tc * go * (1.0 - go)
            dc_next[m] = dc * gf
        for m in range(hidden):
            dh_next[m] = 0.0
        for j in range(4 * hidden):
            v = dz_all[t, j]
            if v != 0.0:
                for m in range(hidden):
                    dh_next[m] += v * wh[j, m]
    h_prev = np.vstack([np.zeros((1, hidden)), h_arr[:-1]])
    dwx = np.dot(dz_all_arr.T, x)
    dwh = np.dot(dz_all_arr.T, h_prev)
    db = dz_all_arr.sum(axis=0)
    dx = np.dot(dz_all_arr, wx)
    return dwx, dwh, db, dx
