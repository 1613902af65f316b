"""Timing comparison between the compiled stepping kernel and the Python loop.

Usage:
    python3 benchmarks/bench_backends.py [--horizon T] [--repeats K]

Runs the two-oscillator leveling scenario with both backends and reports the
wall time per run plus the speedup.  The Python loop is the reference
implementation; the compiled kernel must agree with it bitwise-closely (see
tests/test_backends.py), so the only thing measured here is speed.
"""

import argparse
import time

import numpy as np

from sgalign import ControllerSpec, HAVE_COMPILED, NetworkSystem, make_oscillator
from sgalign.integrate import IntegratorSpec, simulate


def run_once(backend, horizon):
    net = NetworkSystem((make_oscillator(1.0), make_oscillator(1.0)))
    spec = ControllerSpec(kind="alignment", gain=0.5)
    return simulate(net, [[1.0, 1.0], [0.5, 0.5]], spec,
                    IntegratorSpec(step=1e-3, horizon=horizon),
                    record_every=10, backend_choice=backend)


def bench(backend, horizon, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        run_once(backend, horizon)
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizon", type=float, default=20.0,
                        help="simulated time span (default 20)")
    parser.add_argument("--repeats", type=int, default=3,
                        help="repeats per backend; best time wins (default 3)")
    args = parser.parse_args()

    steps = int(round(args.horizon / 1e-3))
    print(f"two-oscillator leveling, {steps} RK4 steps, "
          f"best of {args.repeats} runs")

    t_py = bench("python", args.horizon, args.repeats)
    print(f"  python   {t_py * 1e3:9.2f} ms  ({steps / t_py:,.0f} steps/s)")

    if not HAVE_COMPILED:
        print("  compiled kernel not built; skipping")
        return

    t_c = bench("compiled", args.horizon, args.repeats)
    print(f"  compiled {t_c * 1e3:9.2f} ms  ({steps / t_c:,.0f} steps/s)")
    print(f"  speedup  {t_py / t_c:.1f}x")

    a = run_once("python", args.horizon)
    b = run_once("compiled", args.horizon)
    worst = max(
        float(np.max(np.abs(sa - sb))) for sa, sb in zip(a.states, b.states)
    )
    print(f"  max state deviation between backends: {worst:.3g}")


if __name__ == "__main__":
    main()
