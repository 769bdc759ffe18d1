"""Timing comparison of the compiled and pure-numpy kernel backends.

Runs the CRF recurrences and the LSTM forward/backward on shapes that
match real workloads (sentence lattices, char-level and sentence-level
LSTMs) and prints per-kernel medians plus the native-over-pure speedup.

    python benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import importlib
import statistics
import time

import numpy as np

from crosstag.backend import pure


def _load_native():
    try:
        return importlib.import_module("crosstag.backend._native")
    except ImportError:
        return None


def _bench(fn, args, repeats: int) -> float:
    fn(*args)  # warmup + validity
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def _cases(rng: np.random.Generator):
    n, k = 30, 10
    scores = rng.normal(size=(n, k + 1, k))
    yield "crf_forward (n=30, k=10)", "crf_forward", (scores,)
    yield "crf_backward (n=30, k=10)", "crf_backward", (scores,)
    yield "crf_viterbi (n=30, k=10)", "crf_viterbi", (scores,)

    def lstm_args(t, d_in, d_h):
        wx = rng.normal(size=(4 * d_h, d_in)) * 0.1
        wh = rng.normal(size=(4 * d_h, d_h)) * 0.1
        b = np.zeros(4 * d_h)
        x = rng.normal(size=(t, d_in))
        return wx, wh, b, x

    char = lstm_args(8, 50, 50)
    sent = lstm_args(30, 100, 100)
    yield "lstm_forward char (T=8, 50->50)", "lstm_forward", char
    yield "lstm_forward sent (T=30, 100->100)", "lstm_forward", sent
    for label, args in (("char", char), ("sent", sent)):
        h, c, gates = pure.lstm_forward(*args)
        dh = rng.normal(size=h.shape)
        yield (
            f"lstm_backward {label}",
            "lstm_backward",
            (*args, h, c, gates, dh),
        )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    native = _load_native()
    rng = np.random.default_rng(0)
    header = f"{'kernel':<38} {'pure':>10} {'native':>10} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, name, call_args in _cases(rng):
        t_pure = _bench(getattr(pure, name), call_args, args.repeats)
        if native is None:
            print(f"{label:<38} {t_pure * 1e6:>8.1f}us {'n/a':>10} {'n/a':>8}")
            continue
        t_nat = _bench(getattr(native, name), call_args, args.repeats)
        print(
            f"{label:<38} {t_pure * 1e6:>8.1f}us {t_nat * 1e6:>8.1f}us "
            f"{t_pure / t_nat:>7.1f}x"
        )
    if native is None:
        print("\ncompiled backend unavailable; showing pure timings only")


if __name__ == "__main__":
    main()
