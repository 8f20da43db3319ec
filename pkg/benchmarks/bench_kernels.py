"""Compare the numba and numpy kernel backends.

Run with ``python3 benchmarks/bench_kernels.py``. Each case is timed after
one warm-up call so numba compilation is excluded.
"""

import argparse
import time

import numpy as np

from roomcomp import _kernels
from roomcomp.roomsim import ReceiverSpec, RoomSpec, SourceSpec, TwoWay, simulate_rir


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def smoothing_case(n_fft):
    power = np.random.default_rng(0).exponential(size=n_fft // 2 + 1)
    lo, hi = _kernels.window_bounds(power.size, n_fft, 44100, 1.0 / 3.0)
    return lambda use: _kernels.window_mean(power, lo, hi, use_numba=use)


def simulator_case(reflection_s):
    room = RoomSpec(max_reflection_time_s=reflection_s)
    src = SourceSpec((1.2, 1.1, 1.2), 35.0, TwoWay())
    rcv = ReceiverSpec((3.7, 2.815, 1.2))
    return lambda use: simulate_rir(room, src, rcv, 44100, use_numba=use)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args(argv)
    if _kernels._window_mean_jit is None:
        raise SystemExit("numba is not available; nothing to compare")
    cases = [
        ("1/3-octave smoothing, 2^16 grid", smoothing_case(2 ** 16)),
        ("1/3-octave smoothing, 2^20 grid", smoothing_case(2 ** 20)),
        ("image sources, 0.25 s", simulator_case(0.25)),
        ("image sources, 1.0 s", simulator_case(1.0)),
    ]
    print(f"{'case':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'speedup':>8s}")
    for name, fn in cases:
        t_np = best_of(lambda: fn(False), args.repeat)
        t_nb = best_of(lambda: fn(True), args.repeat)
        print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
