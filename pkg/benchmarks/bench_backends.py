"""Benchmark the compiled kernel backend against the numpy reference.

Times the individual hot kernels at training-realistic shapes plus one
full training round.  Run from the repo root:

    python benchmarks/bench_backends.py [--rounds 300]
"""

import argparse
import subprocess
import sys
import time

import numpy as np

BACKENDS = ("ref", "fast")


def bench_kernels(impl, rng):
    x = rng.standard_normal((100, 50))
    w = rng.standard_normal((50, 50))
    b = rng.standard_normal(50)
    dy = rng.standard_normal((100, 50))
    a50 = rng.standard_normal((50, 50)) / 10.0
    bundle = rng.standard_normal((300, 50))
    p = rng.standard_normal(2500)
    g = rng.standard_normal(2500)
    m = np.zeros(2500)
    v = np.zeros(2500)
    gs_in = rng.standard_normal((40, 50))

    def timeit(fn, n=3000):
        fn()
        t0 = time.perf_counter()
        for _ in range(n):
            fn()
        return (time.perf_counter() - t0) / n * 1e6

    rows = {}
    rows["affine_fwd (100x50)@(50x50)"] = timeit(lambda: impl.affine_fwd(x, w, b))
    rows["matmul_tn gradient"] = timeit(lambda: impl.matmul_tn(dy, x))
    rows["tanh_fwd 100x50"] = timeit(lambda: impl.tanh_fwd(x))
    rows["groupsort_fwd 40x50"] = timeit(lambda: impl.groupsort_fwd(gs_in))
    rows["jet_tanh_fwd 300x50"] = timeit(lambda: impl.jet_tanh_fwd(bundle, 100, 1, 0))
    rows["adam_step 2500 params"] = timeit(lambda: impl.adam_step(p, g, m, v, 3, 1e-4, 0.9, 0.99, 1e-8))
    rows["bjorck 50x50 (5 steps)"] = timeit(lambda: impl.bjorck(a50, 5, 2), n=1000)
    return rows


def bench_round(rounds):
    from wganpinn import training as tr

    cfg = tr.TrainConfig(lam=100.0, m=40, n=40, k=100, iterations=rounds, seed=0, trace_every=10**9)
    t0 = time.perf_counter()
    tr.train("ode", cfg)
    return (time.perf_counter() - t0) / rounds * 1e3


def run_single(backend, rounds):
    import os

    os.environ["WGANPINN_BACKEND"] = backend
    from wganpinn import _kernels

    assert _kernels.BACKEND == backend, f"requested {backend}, got {_kernels.BACKEND}"
    rng = np.random.default_rng(0)
    rows = bench_kernels(_kernels.impl, rng)
    rows["full training round (ODE 3x50)"] = bench_round(rounds) * 1e3
    for name, us in rows.items():
        print(f"{backend}\t{name}\t{us:.2f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rounds", type=int, default=300)
    ap.add_argument("--backend", choices=BACKENDS, default=None, help="internal: run one backend")
    args = ap.parse_args()

    if args.backend:
        run_single(args.backend, args.rounds)
        return

    results = {}
    for backend in BACKENDS:
        out = subprocess.run(
            [sys.executable, __file__, "--backend", backend, "--rounds", str(args.rounds)],
            capture_output=True,
            text=True,
        )
        if out.returncode != 0:
            print(f"[{backend}] failed:\n{out.stderr}", file=sys.stderr)
            continue
        for line in out.stdout.strip().splitlines():
            b, name, us = line.split("\t")
            results.setdefault(name, {})[b] = float(us)

    width = max(len(n) for n in results)
    print(f"{'kernel':<{width}}  {'ref (us)':>12} {'fast (us)':>12} {'speedup':>9}")
    for name, vals in results.items():
        ref = vals.get("ref", float("nan"))
        fast = vals.get("fast", float("nan"))
        print(f"{name:<{width}}  {ref:>12.2f} {fast:>12.2f} {ref / fast:>8.2f}x")


if __name__ == "__main__":
    main()
