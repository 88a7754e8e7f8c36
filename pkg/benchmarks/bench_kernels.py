"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run once untimed (to trigger compilation), then ``repeat``
times; the best wall time is reported together with a check that both
backends agree.
"""
import argparse
import time

import numpy as np

from memguard import gas, kernels


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(rng):
    pts = rng.uniform(-5, 5, size=(50_000, 6))
    nodes = rng.uniform(-5, 5, size=(250, 6))
    cells = kernels.assign(pts, nodes, backend="numpy")
    vals = rng.normal(size=(len(pts), 4))
    few = pts[:8000]
    few_cells = cells[:8000]
    omega = rng.uniform(-1, 1, size=(2000, 6))
    params = gas.GngParams(max_nodes=100, seed=0)
    return {
        "nearest_two 50k x 250": lambda b: kernels.nearest_two(pts, nodes, backend=b)[0],
        "cell_minmax 50k -> 250": lambda b: kernels.cell_minmax(cells, vals, len(nodes), backend=b)[0],
        "cell_diameters 8k -> 250": lambda b: kernels.cell_diameters(few_cells, few, len(nodes), backend=b),
        "gng_fit 2k, 100 nodes": lambda b: gas.gng_fit(omega, params, backend=b).nodes,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy s':>10s} {'numba s':>10s} {'speedup':>8s}  same")
    for name, fn in cases(rng).items():
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        same = np.array_equal(fn("numpy"), fn("numba"))
        print(f"{name:28s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {same}")


if __name__ == "__main__":
    main()
