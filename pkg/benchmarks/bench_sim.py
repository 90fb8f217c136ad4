"""Benchmark the simulator kernel: compiled (numba) vs pure-Python fallback.

Run twice from the package root:

    python3 benchmarks/bench_sim.py
    SPIMARKET_NO_NUMBA=1 python3 benchmarks/bench_sim.py

or let the script re-exec itself with the flag set (the default) and print
both timings side by side.
"""

import os
import subprocess
import sys
import time

HORIZON = float(os.environ.get("BENCH_HORIZON", "2e4"))


def bench() -> None:
    from spimarket import experiments as ex
    from spimarket import sim
    from spimarket._kernels import USE_NUMBA

    inst = ex.random_instance(5, n=3, m=2, kind="partition")
    pol = sim.combinatorial_policy(inst)
    # one warm run so JIT compilation is not timed
    sim.run(inst, pol, horizon=min(HORIZON, 1e3), seed=1)
    t0 = time.perf_counter()
    rep = sim.run(inst, pol, horizon=HORIZON, seed=9)
    elapsed = time.perf_counter() - t0
    events = int(rep.event_counts.sum())
    label = "numba" if USE_NUMBA else "fallback"
    print(f"{label:>8}: horizon {HORIZON:g}, {events} events, "
          f"{elapsed:.3f} s ({events / elapsed:,.0f} events/s), "
          f"reward_rate {rep.reward_rate:.9g}", flush=True)


def main() -> None:
    if os.environ.get("BENCH_CHILD") == "1":
        bench()
        return
    bench()
    env = dict(os.environ, SPIMARKET_NO_NUMBA="1", BENCH_CHILD="1")
    subprocess.run([sys.executable, os.path.abspath(__file__)], env=env, check=True)


if __name__ == "__main__":
    main()
