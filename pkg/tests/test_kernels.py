"""Backend parity and correctness of the raw array kernels."""

import subprocess
import sys

import numpy as np
import pytest

from orpokit import kernels
from orpokit.kernels import numpy_ops

try:
    from orpokit.kernels import numba_ops
except ImportError:
    numba_ops = None


def _random_setup(rng, v=9, e=3, h=4, w=2, m=6):
    emb = rng.normal(size=(v, e))
    wh = rng.normal(size=(w * e, h))
    bh = rng.normal(size=h)
    wo = rng.normal(size=(h, v))
    bo = rng.normal(size=v)
    ctx = rng.integers(0, v, size=(m, w)).astype(np.int64)
    targets = rng.integers(0, v, size=m).astype(np.int64)
    return emb, wh, bh, wo, bo, ctx, targets


def _zero_grads(emb, wh, bh, wo, bo):
    return (np.zeros_like(emb), np.zeros_like(wh), np.zeros_like(bh),
            np.zeros_like(wo), np.zeros_like(bo))


def test_backend_flag_is_valid():
    assert kernels.BACKEND in ("numba", "numpy")


def test_warmup_runs():
    kernels.warmup()


def test_seq_logprobs_matches_naive_softmax(rng):
    emb, wh, bh, wo, bo, ctx, targets = _random_setup(rng)
    got = numpy_ops.seq_logprobs(emb, wh, bh, wo, bo, ctx, targets)
    for i in range(ctx.shape[0]):
        x = emb[ctx[i]].reshape(-1)
        hidden = np.tanh(x @ wh + bh)
        logits = hidden @ wo + bo
        probs = np.exp(logits) / np.exp(logits).sum()
        assert got[i] == pytest.approx(np.log(probs[targets[i]]), rel=1e-12)


def test_backward_scale_zero_leaves_grads_untouched(rng):
    emb, wh, bh, wo, bo, ctx, targets = _random_setup(rng)
    grads = _zero_grads(emb, wh, bh, wo, bo)
    numpy_ops.seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets, 0.0,
                                   *grads)
    for g in grads:
        assert not g.any()


def test_backward_is_linear_in_scale(rng):
    emb, wh, bh, wo, bo, ctx, targets = _random_setup(rng)
    g_ab = _zero_grads(emb, wh, bh, wo, bo)
    numpy_ops.seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets, 0.7,
                                   *g_ab)
    numpy_ops.seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets, -0.2,
                                   *g_ab)
    g_one = _zero_grads(emb, wh, bh, wo, bo)
    numpy_ops.seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets, 0.5,
                                   *g_one)
    for a, b in zip(g_ab, g_one):
        np.testing.assert_allclose(a, b, atol=1e-12)


def test_hidden_states_matches_manual(rng):
    emb, wh, bh, _, _, ctx, _ = _random_setup(rng)
    got = numpy_ops.hidden_states(emb, wh, bh, ctx)
    want = np.tanh(emb[ctx].reshape(ctx.shape[0], -1) @ wh + bh)
    np.testing.assert_allclose(got, want, atol=1e-14)


def test_position_logits_matches_row_of_batch(rng):
    emb, wh, bh, wo, bo, ctx, targets = _random_setup(rng)
    h = numpy_ops.hidden_states(emb, wh, bh, ctx)
    batch_logits = h @ wo + bo
    for i in range(ctx.shape[0]):
        row = numpy_ops.position_logits(emb, wh, bh, wo, bo, ctx[i])
        np.testing.assert_allclose(row, batch_logits[i], atol=1e-12)


@pytest.mark.skipif(numba_ops is None, reason="numba backend unavailable")
class TestBackendParity:
    """The jitted kernels must agree with the numpy reference."""

    def test_seq_logprobs(self, rng):
        args = _random_setup(rng)
        np.testing.assert_allclose(numba_ops.seq_logprobs(*args),
                                   numpy_ops.seq_logprobs(*args),
                                   rtol=1e-10, atol=1e-12)

    def test_seq_logprob_backward(self, rng):
        emb, wh, bh, wo, bo, ctx, targets = _random_setup(rng)
        g_np = _zero_grads(emb, wh, bh, wo, bo)
        g_nb = _zero_grads(emb, wh, bh, wo, bo)
        numpy_ops.seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets,
                                       1.3, *g_np)
        numba_ops.seq_logprob_backward(emb, wh, bh, wo, bo, ctx, targets,
                                       1.3, *g_nb)
        for a, b in zip(g_np, g_nb):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_hidden_states(self, rng):
        emb, wh, bh, _, _, ctx, _ = _random_setup(rng)
        np.testing.assert_allclose(numba_ops.hidden_states(emb, wh, bh, ctx),
                                   numpy_ops.hidden_states(emb, wh, bh, ctx),
                                   rtol=1e-10, atol=1e-12)

    def test_hidden_backward(self, rng):
        emb, wh, bh, _, _, ctx, _ = _random_setup(rng)
        dh = rng.normal(size=(ctx.shape[0], bh.size))
        g_np = (np.zeros_like(emb), np.zeros_like(wh), np.zeros_like(bh))
        g_nb = (np.zeros_like(emb), np.zeros_like(wh), np.zeros_like(bh))
        numpy_ops.hidden_backward(emb, wh, bh, ctx, dh, *g_np)
        numba_ops.hidden_backward(emb, wh, bh, ctx, dh, *g_nb)
        for a, b in zip(g_np, g_nb):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)

    def test_position_logits(self, rng):
        emb, wh, bh, wo, bo, ctx, _ = _random_setup(rng)
        np.testing.assert_allclose(
            numba_ops.position_logits(emb, wh, bh, wo, bo, ctx[0]),
            numpy_ops.position_logits(emb, wh, bh, wo, bo, ctx[0]),
            rtol=1e-10, atol=1e-12)


def _backend_in_subprocess(flag):
    code = ("from orpokit import kernels\n"
            "print(kernels.BACKEND)\n")
    return subprocess.run([sys.executable, "-c", code],
                          env={"PATH": "/usr/bin:/bin",
                               "ORPO_KIT_BACKEND": flag},
                          capture_output=True, text=True)


def test_env_flag_forces_numpy_backend():
    proc = _backend_in_subprocess("numpy")
    assert proc.returncode == 0
    assert proc.stdout.strip() == "numpy"


def test_env_flag_rejects_unknown_value():
    proc = _backend_in_subprocess("cuda")
    assert proc.returncode != 0
    assert "ORPO_KIT_BACKEND" in proc.stderr
