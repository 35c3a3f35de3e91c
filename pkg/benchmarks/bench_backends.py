"""Time the compiled and pure-Python backends on the same workloads.

Each backend runs in its own interpreter because the choice is made at
import time (``SPINLAB_DISABLE_NUMBA``). Outputs are hashed so the table
also confirms that both backends produce identical samples.

    python3 benchmarks/bench_backends.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import hashlib, json, time
import numpy as np
from spinlab import BACKEND, build_cube, ising, SpinSystem
from spinlab.kernels import run_chain
from spinlab.coupling import coupling_time

def timed(fn, repeat):
    fn()  # warm-up (compilation for numba)
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, hashlib.sha256(np.ascontiguousarray(out).tobytes()).hexdigest()[:12]

repeat = REPEAT
sys16 = SpinSystem(ising(0.3), build_cube(2, [16, 16]))
res = {"backend": BACKEND}
for name, spec, steps in [("glauber 16x16", {"kind": "glauber"}, 20000),
                          ("EO scan 16x16", {"kind": "scan", "order": "EO"}, 50),
                          ("SW 16x16", {"kind": "sw"}, 50),
                          ("tiled heat-bath L=3", {"kind": "tiled_heatbath", "L": 3}, 50)]:
    res[name] = timed(lambda: run_chain(sys16, spec, np.zeros(sys16.n, np.int64), steps,
                                        np.random.default_rng(1)), repeat)
res["coupling time 8x8"] = timed(lambda: np.array([coupling_time(SpinSystem(ising(0.3), build_cube(2, [8, 8])),
                                 {"kind": "scan", "order": "EO"}, trials=100, seed=2).times]), repeat)
print(json.dumps(res))
"""


def run(disable: bool, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("SPINLAB_DISABLE_NUMBA", None)
    if disable:
        env["SPINLAB_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER.replace("REPEAT", str(repeat))], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast, slow = run(False, args.repeat), run(True, args.repeat)
    print(f"{'workload':24s} {'numba [s]':>10s} {'python [s]':>11s} {'speedup':>8s}  same output")
    for key in fast:
        if key == "backend":
            continue
        (tf, hf), (ts, hs) = fast[key], slow[key]
        print(f"{key:24s} {tf:10.4f} {ts:11.4f} {ts / tf:8.1f}  {hf == hs}")


if __name__ == "__main__":
    main()
