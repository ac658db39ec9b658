"""Compare the compiled and pure-Python kernels on the same workloads.

    python benchmarks/bench_kernels.py [--n 1000] [--m 100000] [--arrivals 200000] [--repeat 3]

Both backends consume identical random streams, so the benchmark also
checks that their outputs agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from proxpot import kernels, rng
from proxpot.graph import TopologySpec, build_graph
from proxpot.policy import PolicyKind, build_sampling_table
from proxpot.static_sim import draw_origins


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def static_job(impl, table, g, m, seed=0):
    def run():
        origins = draw_origins(g, m, "uniform", rng.generator(seed, "arrivals"))
        loads = np.zeros((1, g.n), dtype=np.int32)
        impl.static_kernel(table.kernel_spec(), origins, 1, m, rng.bit_generator(seed, "sampling"),
                           rng.bit_generator(seed, "ties"), loads)
        return loads
    return run


def dynamic_job(impl, table, arrivals, seed=0):
    pairs = np.array([0, 0, 0], dtype=np.int64), np.array([1, 2, 8], dtype=np.int64)

    def run():
        out = impl.dynamic_kernel(
            table.kernel_spec(need_hops=True), 0.95, 1.0, arrivals, arrivals // 10,
            *(rng.bit_generator(seed, s) for s in ("arrivals", "sampling", "ties", "service")),
            *pairs, False, False,
        )
        return out["occ"]
    return run


def khop_job(impl, g, k):
    return lambda: impl.khop_layers(g.indptr, g.indices, k)


def main(argv: list[str] | None = None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--m", type=int, default=100_000)
    ap.add_argument("--arrivals", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    impls = kernels.implementations()
    ring = build_graph(TopologySpec("ring", args.n))
    ba = build_graph(TopologySpec("ba", args.n, 3), seed=1)
    invsq = build_sampling_table(ring, PolicyKind.invsq(7))
    unif2 = build_sampling_table(ring, PolicyKind.unif(2))
    workloads = {
        f"khop ba n={args.n} k=3": {name: khop_job(i, ba, 3) for name, i in impls.items()},
        f"static ring invsq(7) m={args.m}": {name: static_job(i, invsq, ring, args.m) for name, i in impls.items()},
        f"dynamic ring unif(2) arrivals={args.arrivals}": {
            name: dynamic_job(i, unif2, args.arrivals) for name, i in impls.items()
        },
    }
    print(f"{'workload':45s} {'backend':8s} {'seconds':>9s} {'speedup':>8s}")
    for label, jobs in workloads.items():
        results = {name: best_of(fn, args.repeat) for name, fn in jobs.items()}
        base = results["python"][0]
        for name, (sec, _) in results.items():
            print(f"{label:45s} {name:8s} {sec:9.4f} {base / sec:8.1f}x")
        outs = [r[1] for r in results.values()]
        if len(outs) == 2 and isinstance(outs[0], np.ndarray):
            assert np.array_equal(outs[0], outs[1]), f"backends disagree on {label}"


if __name__ == "__main__":
    main()
