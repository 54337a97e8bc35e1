"""The pure-Python fallback must reproduce the compiled kernels bit for bit."""

import json
import os
import subprocess
import sys

SCRIPT = r"""
import json
import numpy as np
from sepcurrent import BACKEND
from sepcurrent.coupling import CoupledPair, mirror_audit
from sepcurrent.process import AllOnes, AllZeros, ModelParams, Tally, new_configuration, simulate_until
from sepcurrent.rng import ClockStream

p = ModelParams(8, 2, 1.3)
c = new_configuration(p, AllZeros())
tally = Tally(p.n_sites, tuples=[(2, 14)])
simulate_until(c, p, 5.0, ClockStream(17), tally=tally)
tally.flush(c)
pair = CoupledPair(new_configuration(p, AllZeros()), new_configuration(p, AllOnes()))
pair.run_until(p, 3.0, ClockStream(5))
audit = mirror_audit(p, 3.0, ClockStream(6))
print(json.dumps({
    "backend": BACKEND, "state": c.to_string(), "time": c.time.hex(),
    "integ": [v.hex() for v in tally.integ], "tint": [v.hex() for v in tally.tint],
    "crossings": tally.crossings.tolist(), "counts": tally.counts.tolist(),
    "pair": [pair.lo.to_string(), pair.hi.to_string()],
    "mirror": [audit.events, audit.site_checks],
}))
"""


def run_backend(name):
    env = dict(os.environ, SEPCURRENT_BACKEND=name)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout)


def test_python_backend_bit_identical():
    fast = run_backend("numba")
    slow = run_backend("python")
    assert fast.pop("backend") == "numba" and slow.pop("backend") == "python"
    assert fast == slow
    assert sum(fast["counts"]) > 100


def test_unknown_backend_rejected():
    env = dict(os.environ, SEPCURRENT_BACKEND="fortran")
    out = subprocess.run([sys.executable, "-c", "import sepcurrent"], env=env,
                         capture_output=True, text=True)
    assert out.returncode != 0 and "SEPCURRENT_BACKEND" in out.stderr
