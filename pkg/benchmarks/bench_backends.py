"""Time hijack propagation with the numba kernels against the pure-numpy path.

    python benchmarks/bench_backends.py --sizes 2000,20000 --scenarios 200
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hijackimpact.bgpsim import random_scenarios, simulate_hijack
from hijackimpact.topology import gen_synthetic_topology


def bench(graph, scenarios, backend: str) -> tuple[float, list]:
    simulate_hijack(graph, scenarios[0], backend)  # compile / warm caches
    t0 = time.perf_counter()
    outs = [simulate_hijack(graph, sc, backend) for sc in scenarios]
    return time.perf_counter() - t0, outs


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", default="1000,5000,20000")
    ap.add_argument("--scenarios", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'ASes':>8} {'edges':>8} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}  equal")
    for n in (int(x) for x in args.sizes.split(",")):
        g = gen_synthetic_topology(n, args.seed)
        sc = random_scenarios(g, args.scenarios, args.seed)
        t_nb, o_nb = bench(g, sc, "numba")
        t_np, o_np = bench(g, sc, "numpy")
        same = all(np.array_equal(a.decision, b.decision) and np.array_equal(a.nexthop, b.nexthop) for a, b in zip(o_nb, o_np))
        k = len(sc)
        print(f"{n:>8} {g.n_edges:>8} {1e3 * t_nb / k:>10.3f} {1e3 * t_np / k:>10.3f} {t_np / t_nb:>8.1f}  {same}")


if __name__ == "__main__":
    main()
