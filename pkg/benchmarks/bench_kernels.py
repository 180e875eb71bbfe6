"""Compiled against pure-Python kernels: sketch and assignment wall time.

    python3 benchmarks/bench_kernels.py [--replicas N] [--sites K] [--beta B]

Both backends consume identical uniforms, so the outputs are compared as
well as timed.
"""

from __future__ import annotations

import argparse
import time

from pssim import KalikowDecomposition, ising
from pssim._backend import COMPILED_AVAILABLE
from pssim.assign import Sampler, replica_rng
from pssim.kernels import nearest_neighbour


def run(sampler: Sampler, F, replicas: int, seed: int):
    out = []
    t0 = time.perf_counter()
    for r in range(replicas):
        rng = replica_rng(seed, r)
        rec = sampler.sketch(F, rng)
        res = sampler.assign(rec, rng)
        out.append(tuple(res.spins[i] for i in F))
    return time.perf_counter() - t0, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--replicas", type=int, default=200)
    ap.add_argument("--sites", type=int, default=400, help="side of the square window F in d = 2")
    ap.add_argument("--beta", type=float, default=0.03)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    model = ising(args.d, args.beta, nearest_neighbour(args.d))
    decomp = KalikowDecomposition(model)
    side = max(1, round(args.sites ** (1.0 / args.d)))
    import itertools

    F = list(itertools.product(range(side), repeat=args.d))
    print(f"d={args.d} beta={args.beta} gamma={decomp.gamma():.4f} |F|={len(F)} replicas={args.replicas}")
    results = {}
    for name in ("generic", "python", "cython"):
        if name == "cython" and not COMPILED_AVAILABLE:
            print("cython   : not built")
            continue
        dt, out = run(Sampler(decomp, name), F, args.replicas, args.seed)
        results[name] = (dt, out)
        print(f"{name:9s}: {dt:8.3f} s  ({1e3 * dt / args.replicas:.2f} ms/replica)")
    base = results["python"][1]
    for name, (dt, out) in results.items():
        print(f"{name:9s} identical to python: {out == base}")
    if "cython" in results:
        print(f"speed-up cython / python: {results['python'][0] / results['cython'][0]:.1f}x")


if __name__ == "__main__":
    main()
