"""Events per second of the compiled and pure-Python event kernels.

Usage: python benchmarks/bench_backends.py [--events N] [--repeats R]
"""
import argparse
import time

import numpy as np

from vmbc import _pycore
from vmbc._backend import BACKEND, core
from vmbc.coupling import make_coupled, run_coupled
from vmbc.engine import Configuration, make_rng
from vmbc.graphs import build_torus_kernels
from vmbc.rates import ModelParams

CASES = [
    ("cvmbc d=1 L=1000", 1, 1000),
    ("cvmbc d=2 L=40", 2, 40),
    ("cvmbc d=3 L=12", 3, 12),
]


def time_single(mod, d, L, events, seed):
    k = build_torus_kernels(d, L, "cvmbc")
    p = ModelParams("cvmbc", 0.5, 0.5)
    rng = make_rng(seed)
    conf = Configuration(p, k, (rng.random(k.size) < 0.5).astype(np.uint8), backend=mod)
    t0 = time.perf_counter()
    done, _ = conf.advance(rng, events)
    return done / (time.perf_counter() - t0)


def time_coupled(mod, events, seed):
    k = build_torus_kernels(1, 1000, "cvmbc")
    rng = make_rng(seed)
    lo = (rng.random(k.size) < 0.5).astype(np.uint8)
    cs = make_coupled("cvmbc_vs_bvm", 0.8, 0.3, k, (lo, lo.copy()), backend=mod)
    t0 = time.perf_counter()
    rep = run_coupled(cs, rng, max_events=events)
    return rep.events / (time.perf_counter() - t0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--events", type=int, default=200_000, help="events per timing (compiled)")
    ap.add_argument("--python-events", type=int, default=20_000, help="events per timing (pure Python)")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    if core is _pycore:
        print("compiled extension not available; only the Python kernel is timed")
    mods = [("compiled", core, args.events)] if core is not _pycore else []
    mods.append(("python", _pycore, args.python_events))
    print(f"selected backend: {BACKEND}")
    print(f"{'case':<24}" + "".join(f"{name:>16}" for name, _, _ in mods) + f"{'speedup':>10}")
    runners = [(name, lambda m, n, r, d=d, L=L: time_single(m, d, L, n, r)) for name, d, L in CASES]
    runners.append(("coupled d=1 L=1000", lambda m, n, r: time_coupled(m, n, r)))
    for label, fn in runners:
        rates = [max(fn(mod, n, r) for r in range(args.repeats)) for _, mod, n in mods]
        speed = f"{rates[0] / rates[-1]:>9.1f}x" if len(rates) > 1 else ""
        print(f"{label:<24}" + "".join(f"{x:>12,.0f} ev/s" for x in rates) + speed)


if __name__ == "__main__":
    main()
