"""Throughput of the event kernels under the numba and pure-Python backends.

    python benchmarks/bench_kernels.py [--n 100] [--events 2e6] [--py-events 5e4]

Each backend runs in its own interpreter (the choice is made at import
time through SEPCURRENT_BACKEND). Reported numbers are nanoseconds per
attempted event, best of three repeats, after one warm-up run.
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from sepcurrent import BACKEND
from sepcurrent.coupling import CoupledPair, mirror_audit
from sepcurrent.process import AllOnes, AllZeros, ModelParams, ProductMeasure, Tally, new_configuration, simulate_until
from sepcurrent.rng import ClockStream

N, events = int(sys.argv[1]), float(sys.argv[2])
p = ModelParams(N, 2, 1.0)
rate = 0.5 * p.n_bonds * p.hop_rate + 2 * p.feed_rate  # about half the bonds are discrepant
horizon = events / rate


def single():
    c = new_configuration(p, ProductMeasure(lambda r: 0.5, np.random.default_rng(0)))
    tally = Tally(p.n_sites)
    t0 = time.perf_counter()
    simulate_until(c, p, horizon, ClockStream(1), tally=tally)
    return time.perf_counter() - t0, int(tally.counts.sum())


def coupled():
    pair = CoupledPair(new_configuration(p, AllZeros()), new_configuration(p, AllOnes()))
    stream = ClockStream(2)
    t0 = time.perf_counter()
    pair.run_until(p, horizon, stream)
    return time.perf_counter() - t0, stream.pos // 2


def mirror():
    t0 = time.perf_counter()
    audit = mirror_audit(p, horizon * 0.5, ClockStream(3))
    return time.perf_counter() - t0, audit.events


out = {"backend": BACKEND}
for name, fn in (("run_until", single), ("coupled_run", coupled), ("mirror_run", mirror)):
    fn()
    best = min((fn() for _ in range(3)), key=lambda r: r[0] / max(r[1], 1))
    out[name] = 1e9 * best[0] / max(best[1], 1)
print(json.dumps(out))
"""


def measure(backend, N, events):
    env = dict(os.environ, SEPCURRENT_BACKEND=backend)
    res = subprocess.run([sys.executable, "-c", WORKER, str(N), str(events)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--events", type=float, default=2e6)
    ap.add_argument("--py-events", type=float, default=5e4)
    args = ap.parse_args(argv)
    fast = measure("numba", args.n, args.events)
    slow = measure("python", args.n, args.py_events)
    print(f"N={args.n}: ns per event (numba {args.events:.0e} events, python {args.py_events:.0e})")
    print(f"{'kernel':<14}{'numba':>10}{'python':>12}{'speed-up':>10}")
    for name in ("run_until", "coupled_run", "mirror_run"):
        print(f"{name:<14}{fast[name]:>10.1f}{slow[name]:>12.0f}{slow[name] / fast[name]:>10.0f}x")


if __name__ == "__main__":
    main()
