"""Kernel backend selection.

The env var ORPO_KIT_BACKEND picks the implementation of the hot loops:

    auto   (default) numba if importable, else pure numpy
    numba  require the jitted kernels, fail loudly if numba is missing
    numpy  force the pure-numpy path

Both backends expose the same five functions; see numpy_ops for the
calling convention. ``BACKEND`` records which one is active.
"""

import os

import numpy as np

from . import numpy_ops

_FLAG = os.environ.get("ORPO_KIT_BACKEND", "auto").strip().lower()
if _FLAG not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"ORPO_KIT_BACKEND must be 'auto', 'numba' or 'numpy', got {_FLAG!r}")

if _FLAG == "numpy":
    _impl = numpy_ops
    BACKEND = "numpy"
else:
    try:
        from . import numba_ops as _impl
        BACKEND = "numba"
    except ImportError:
        if _FLAG == "numba":
            raise
        _impl = numpy_ops
        BACKEND = "numpy"

seq_logprobs = _impl.seq_logprobs
seq_logprob_backward = _impl.seq_logprob_backward
hidden_states = _impl.hidden_states
hidden_backward = _impl.hidden_backward
position_logits = _impl.position_logits


def warmup():
    """Trigger JIT compilation on tiny inputs (no-op on the numpy path)."""
    emb = np.zeros((3, 2))
    wh = np.zeros((4, 3))
    bh = np.zeros(3)
    wo = np.zeros((3, 3))
    bo = np.zeros(3)
    ctx = np.zeros((1, 2), dtype=np.int64)
    tgt = np.zeros(1, dtype=np.int64)
    seq_logprobs(emb, wh, bh, wo, bo, ctx, tgt)
    seq_logprob_backward(emb, wh, bh, wo, bo, ctx, tgt, 1.0,
                         emb.copy(), wh.copy(), bh.copy(), wo.copy(), bo.copy())
    dh = np.zeros((1, 3))
    hidden_states(emb, wh, bh, ctx)
    hidden_backward(emb, wh, bh, ctx, dh, emb.copy(), wh.copy(), bh.copy())
    position_logits(emb, wh, bh, wo, bo, ctx[0])
