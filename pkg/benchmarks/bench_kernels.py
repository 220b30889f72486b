"""Numba against pure-numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--n 200] [--repeat 5]

SPF kernels are compared in-process (both variants are importable side by
side).  The simulator backend is fixed at import time, so it runs once per
backend in a subprocess with FEPS_BACKEND set.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from feps import _spfcore
from feps.generate import random_topology

SIM_SNIPPET = """
import json, time
from feps._jit import BACKEND
from feps.sim import load_scenario, run_scenario
sc = load_scenario("guard")
(f, at), = sc.failures
cfg = sc.config()
run_scenario(sc.topology, sc.flows, f, at, cfg, seed=0)  # warm-up / JIT
t0 = time.perf_counter()
rep = run_scenario(sc.topology, sc.flows, f, at, cfg, seed=0)
print(json.dumps({"backend": BACKEND, "seconds": time.perf_counter() - t0,
                  "packets": sum(x.sent for x in rep.flows)}))
"""


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_spf(n, repeat):
    t = random_topology(n, 4.0, seed=1, max_cost=10)
    cost = t.cost_matrix
    dist = _spfcore.dijkstra_numba(cost, 0)
    cases = {
        "dijkstra": (lambda: _spfcore.dijkstra_numba(cost, 0), lambda: _spfcore.dijkstra_numpy(cost, 0)),
        "lex_tree": (lambda: _spfcore.lex_tree_numba(cost, dist, 0), lambda: _spfcore.lex_tree_numpy(cost, dist, 0)),
        "all_pairs": (lambda: _spfcore.all_pairs_numba(cost), lambda: _spfcore.all_pairs_numpy(cost)),
    }
    rows = []
    for name, (fast, slow) in cases.items():
        rows.append((name, best_of(fast, repeat), best_of(slow, repeat)))
    # both variants must agree before the numbers mean anything
    assert np.array_equal(_spfcore.all_pairs_numba(cost)[0], _spfcore.all_pairs_numpy(cost)[0])
    return rows


def bench_sim():
    out = {}
    for backend in ("numba", "numpy"):
        env = dict(os.environ, FEPS_BACKEND=backend)
        res = subprocess.run([sys.executable, "-c", SIM_SNIPPET], env=env, capture_output=True, text=True, check=True)
        out[backend] = json.loads(res.stdout.strip().splitlines()[-1])
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200, help="routers in the SPF benchmark topology")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--no-sim", action="store_true", help="skip the simulator comparison")
    args = ap.parse_args(argv)

    print(f"{'kernel':<12}{'numba s':>12}{'numpy s':>12}{'speedup':>10}")
    for name, a, b in bench_spf(args.n, args.repeat):
        print(f"{name:<12}{a:>12.5f}{b:>12.5f}{b / a:>9.1f}x")
    if not args.no_sim:
        sim = bench_sim()
        a, b = sim["numba"]["seconds"], sim["numpy"]["seconds"]
        print(f"{'simulate':<12}{a:>12.5f}{b:>12.5f}{b / a:>9.1f}x   ({sim['numba']['packets']} packets)")


if __name__ == "__main__":
    main()
