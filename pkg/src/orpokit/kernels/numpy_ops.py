"""Pure-numpy kernels for the fixed-window language model.

Reference implementations of the hot forward/backward loops. The numba
twins in numba_ops.py must produce the same values (up to float summation
order); equivalence is enforced by tests. All kernels operate on raw
float64 arrays so both backends share one calling convention:

    emb  [V, E]      token embedding table
    wh   [W*E, H]    hidden layer weights (window concat -> hidden)
    bh   [H]         hidden bias
    wo   [H, V]      output layer weights
    bo   [V]         output bias
    ctx  [m, W]      int64 context window per predicted position
    targets [m]      int64 target token ids
"""

import numpy as np


def seq_logprobs(emb, wh, bh, wo, bo, ctx, targets):
    """Log-probability of each target token given its context window."""
    m = ctx.shape[0]
    xcat = emb[ctx].reshape(m, -1)
    h = np.tanh(xcat @ wh + bh)
    logits = h @ wo + bo
    zmax = logits.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1))
    return logits[np.arange(m), targets] - lse


def seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets, scale,
                         g_emb, g_wh, g_bh, g_wo, g_bo):
    """Accumulate scale * d(mean target log-prob)/d(params) into g_*."""
    m, w = ctx.shape
    e = emb.shape[1]
    xcat = emb[ctx].reshape(m, -1)
    h = np.tanh(xcat @ wh + bh)
    logits = h @ wo + bo
    zmax = logits.max(axis=1, keepdims=True)
    p = np.exp(logits - zmax)
    p /= p.sum(axis=1, keepdims=True)

    # d(mean logp)/d(logits) = (onehot - softmax) / m, then scaled
    dlogits = p * (-scale / m)
    dlogits[np.arange(m), targets] += scale / m

    g_wo += h.T @ dlogits
    g_bo += dlogits.sum(axis=0)
    dh = dlogits @ wo.T
    dpre = dh * (1.0 - h * h)
    g_wh += xcat.T @ dpre
    g_bh += dpre.sum(axis=0)
    dx = (dpre @ wh.T).reshape(m, w, e)
    np.add.at(g_emb, ctx, dx)


def hidden_states(emb, wh, bh, ctx):
    """Hidden activations for each context window row."""
    m = ctx.shape[0]
    xcat = emb[ctx].reshape(m, -1)
    return np.tanh(xcat @ wh + bh)


def hidden_backward(emb, wh, bh, ctx, dh, g_emb, g_wh, g_bh):
    """Accumulate gradients given upstream d(loss)/d(hidden states)."""
    m, w = ctx.shape
    e = emb.shape[1]
    xcat = emb[ctx].reshape(m, -1)
    h = np.tanh(xcat @ wh + bh)
    dpre = dh * (1.0 - h * h)
    g_wh += xcat.T @ dpre
    g_bh += dpre.sum(axis=0)
    dx = (dpre @ wh.T).reshape(m, w, e)
    np.add.at(g_emb, ctx, dx)


def position_logits(emb, wh, bh, wo, bo, ctx_row):
    """Raw output logits for a single context window."""
    xcat = emb[ctx_row].reshape(-1)
    h = np.tanh(xcat @ wh + bh)
    return h @ wo + bo
