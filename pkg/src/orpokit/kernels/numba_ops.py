"""Numba-jitted kernels, loop-for-loop twins of numpy_ops.

Explicit loops beat vectorized numpy at these matrix sizes (window*embed
up to a few hundred) because they avoid temporaries and per-call overhead.
fastmath stays off: gradient checks at 1e-4..1e-6 relative error and
byte-stable telemetry need IEEE ordering.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def seq_logprobs(emb, wh, bh, wo, bo, ctx, targets):
    m, w = ctx.shape
    e = emb.shape[1]
    hdim = wh.shape[1]
    v = wo.shape[1]
    we = w * e
    x = np.empty(we)
    h = np.empty(hdim)
    logits = np.empty(v)
    out = np.empty(m)
    for t in range(m):
        for k in range(w):
            row = ctx[t, k]
            for j in range(e):
                x[k * e + j] = emb[row, j]
        for j in range(hdim):
            s = bh[j]
            for i in range(we):
                s += x[i] * wh[i, j]
            h[j] = math.tanh(s)
        for i in range(v):
            s = bo[i]
            for j in range(hdim):
                s += h[j] * wo[j, i]
            logits[i] = s
        zmax = logits[0]
        for i in range(1, v):
            if logits[i] > zmax:
                zmax = logits[i]
        acc = 0.0
        for i in range(v):
            acc += math.exp(logits[i] - zmax)
        out[t] = logits[targets[t]] - (zmax + math.log(acc))
    return out


@njit(cache=True)
def seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets, scale,
                         g_emb, g_wh, g_bh, g_wo, g_bo):
    m, w = ctx.shape
    e = emb.shape[1]
    hdim = wh.shape[1]
    v = wo.shape[1]
    we = w * e
    x = np.empty(we)
    h = np.empty(hdim)
    logits = np.empty(v)
    dlogits = np.empty(v)
    dh = np.empty(hdim)
    dx = np.empty(we)
    for t in range(m):
        for k in range(w):
            row = ctx[t, k]
            for j in range(e):
                x[k * e + j] = emb[row, j]
        for j in range(hdim):
            s = bh[j]
            for i in range(we):
                s += x[i] * wh[i, j]
            h[j] = math.tanh(s)
        for i in range(v):
            s = bo[i]
            for j in range(hdim):
                s += h[j] * wo[j, i]
            logits[i] = s
        zmax = logits[0]
        for i in range(1, v):
            if logits[i] > zmax:
                zmax = logits[i]
        acc = 0.0
        for i in range(v):
            dlogits[i] = math.exp(logits[i] - zmax)
            acc += dlogits[i]
        c = -scale / m / acc
        for i in range(v):
            dlogits[i] *= c
        dlogits[targets[t]] += scale / m

        for j in range(hdim):
            s = 0.0
            for i in range(v):
                d = dlogits[i]
                g_wo[j, i] += h[j] * d
                s += wo[j, i] * d
            dh[j] = s
        for i in range(v):
            g_bo[i] += dlogits[i]
        for j in range(hdim):
            dpre = dh[j] * (1.0 - h[j] * h[j])
            dh[j] = dpre
            g_bh[j] += dpre
        for i in range(we):
            s = 0.0
            for j in range(hdim):
                g_wh[i, j] += x[i] * dh[j]
                s += wh[i, j] * dh[j]
            dx[i] = s
        for k in range(w):
            row = ctx[t, k]
            for j in range(e):
                g_emb[row, j] += dx[k * e + j]


@njit(cache=True)
def hidden_states(emb, wh, bh, ctx):
    m, w = ctx.shape
    e = emb.shape[1]
    hdim = wh.shape[1]
    we = w * e
    x = np.empty(we)
    out = np.empty((m, hdim))
    for t in range(m):
        for k in range(w):
            row = ctx[t, k]
            for j in range(e):
                x[k * e + j] = emb[row, j]
        for j in range(hdim):
            s = bh[j]
            for i in range(we):
                s += x[i] * wh[i, j]
            out[t, j] = math.tanh(s)
    return out


@njit(cache=True)
def hidden_backward(emb, wh, bh, ctx, dh, g_emb, g_wh, g_bh):
    m, w = ctx.shape
    e = emb.shape[1]
    hdim = wh.shape[1]
    we = w * e
    x = np.empty(we)
    dx = np.empty(we)
    for t in range(m):
        for k in range(w):
            row = ctx[t, k]
            for j in range(e):
                x[k * e + j] = emb[row, j]
        for i in range(we):
            dx[i] = 0.0
        for j in range(hdim):
            s = bh[j]
            for i in range(we):
                s += x[i] * wh[i, j]
            h = math.tanh(s)
            dpre = dh[t, j] * (1.0 - h * h)
            g_bh[j] += dpre
            for i in range(we):
                g_wh[i, j] += x[i] * dpre
                dx[i] += wh[i, j] * dpre
        for k in range(w):
            row = ctx[t, k]
            for j in range(e):
                g_emb[row, j] += dx[k * e + j]


@njit(cache=True)
def position_logits(emb, wh, bh, wo, bo, ctx_row):
    w = ctx_row.shape[0]
    e = emb.shape[1]
    hdim = wh.shape[1]
    v = wo.shape[1]
    we = w * e
    x = np.empty(we)
    h = np.empty(hdim)
    logits = np.empty(v)
    for k in range(w):
        row = ctx_row[k]
        for j in range(e):
            x[k * e + j] = emb[row, j]
    for j in range(hdim):
        s = bh[j]
        for i in range(we):
            s += x[i] * wh[i, j]
        h[j] = math.tanh(s)
    for i in range(v):
        s = bo[i]
        for j in range(hdim):
            s += h[j] * wo[j, i]
        logits[i] = s
    return logits
