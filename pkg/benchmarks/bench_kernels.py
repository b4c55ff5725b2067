"""Timing comparison of the numpy and numba kernel backends.

Runs each of the five hot kernels on a few workload sizes and prints
median wall time per call for both implementations plus the speedup.
The numba path is JIT-warmed on the benchmark inputs before timing, so
compilation cost never lands in a measured call.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 500 --rows 64,512,4096
"""

import argparse
import statistics
import time

import numpy as np

from orpokit.kernels import numpy_ops

try:
    from orpokit.kernels import numba_ops
except ImportError:
    numba_ops = None

# Model dimensions match the scale the package is meant for.
VOCAB = 52
EMBED = 16
HIDDEN = 48
WINDOW = 8

KERNELS = ("seq_logprobs", "seq_logprob_backward", "hidden_states",
           "hidden_backward", "position_logits")


def build_workload(rows: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "emb": rng.normal(scale=0.1, size=(VOCAB, EMBED)),
        "wh": rng.normal(scale=0.1, size=(WINDOW * EMBED, HIDDEN)),
        "bh": rng.normal(scale=0.1, size=HIDDEN),
        "wo": rng.normal(scale=0.1, size=(HIDDEN, VOCAB)),
        "bo": rng.normal(scale=0.1, size=VOCAB),
        "ctx": rng.integers(0, VOCAB, size=(rows, WINDOW)),
        "targets": rng.integers(0, VOCAB, size=rows),
        "dh": rng.normal(size=(rows, HIDDEN)),
    }


def make_call(mod, name: str, w: dict):
    """Bind one kernel to the workload; gradient buffers are reused."""
    if name == "seq_logprobs":
        return lambda: mod.seq_logprobs(w["emb"], w["wh"], w["bh"], w["wo"],
                                        w["bo"], w["ctx"], w["targets"])
    if name == "seq_logprob_backward":
        bufs = tuple(np.zeros_like(w[k]) for k in ("emb", "wh", "bh", "wo",
                                                   "bo"))
        return lambda: mod.seq_logprob_backward(
            w["emb"], w["wh"], w["bh"], w["wo"], w["bo"], w["ctx"],
            w["targets"], 1.0, *bufs)
    if name == "hidden_states":
        return lambda: mod.hidden_states(w["emb"], w["wh"], w["bh"],
                                         w["ctx"])
    if name == "hidden_backward":
        bufs = tuple(np.zeros_like(w[k]) for k in ("emb", "wh", "bh"))
        return lambda: mod.hidden_backward(w["emb"], w["wh"], w["bh"],
                                           w["ctx"], w["dh"], *bufs)
    if name == "position_logits":
        row = w["ctx"][0]
        return lambda: mod.position_logits(w["emb"], w["wh"], w["bh"],
                                           w["wo"], w["bo"], row)
    raise ValueError(name)


def median_micros(call, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        call()
        times.append(time.perf_counter() - t0)
    return statistics.median(times) * 1e6


def run(rows_list, repeats: int, seed: int) -> None:
    header = (f"{'kernel':<22} {'rows':>6} {'numpy us':>12} "
              f"{'numba us':>12} {'speedup':>9}")
    print(header)
    print("-" * len(header))
    for rows in rows_list:
        w = build_workload(rows, seed)
        for name in KERNELS:
            np_call = make_call(numpy_ops, name, w)
            np_us = median_micros(np_call, repeats)
            if numba_ops is None:
                print(f"{name:<22} {rows:>6} {np_us:>12.2f} "
                      f"{'n/a':>12} {'n/a':>9}")
                continue
            nb_call = make_call(numba_ops, name, w)
            nb_call()  # JIT compile outside the timed region
            nb_us = median_micros(nb_call, repeats)
            print(f"{name:<22} {rows:>6} {np_us:>12.2f} {nb_us:>12.2f} "
                  f"{np_us / nb_us:>8.2f}x")
    if numba_ops is None:
        print("\nnumba is not importable; only the numpy backend was timed.")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200,
                        help="timed calls per kernel (median reported)")
    parser.add_argument("--rows", default="64,512,4096",
                        help="comma-separated context-row counts")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rows_list = [int(v) for v in args.rows.split(",")]
    if args.repeats < 1 or not rows_list or min(rows_list) < 1:
        parser.error("repeats and rows must be positive")
    run(rows_list, args.repeats, args.seed)


if __name__ == "__main__":
    main()
