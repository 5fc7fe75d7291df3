"""Benchmark the compiled kernels against the numpy fallback.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from tafa.backend import available_backends


def time_call(fn, *args, repeats=5):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_label_prob_columns(impls, n=4000, d=20, c=8, s=500, seed=0):
    rng = np.random.default_rng(seed)
    logdens = np.ascontiguousarray(rng.normal(size=(n, d, c)))
    priors = np.log(rng.dirichlet(np.ones(c)))
    labels = rng.integers(0, c, size=n)
    templates = []
    for _ in range(s):
        size = int(rng.integers(2, 14))
        templates.append(np.sort(rng.choice(d, size=size, replace=False)))
    flat = np.concatenate(templates).astype(np.int32)
    off = np.zeros(s + 1, dtype=np.int64)
    np.cumsum([len(t) for t in templates], out=off[1:])
    return {
        name: time_call(impl.label_prob_columns, logdens, priors, labels, flat, off)
        for name, impl in impls.items()
    }


def bench_knn_select(impls, n=6400, d=20, k=10, queries=2000, seed=0):
    rng = np.random.default_rng(seed)
    train = np.ascontiguousarray(rng.normal(size=(n, d)))
    cases = []
    for _ in range(queries):
        m = int(rng.integers(1, d + 1))
        obs = np.sort(rng.choice(d, size=m, replace=False)).astype(np.int64)
        cases.append((obs, rng.normal(size=m)))
    out = {}
    for name, impl in impls.items():
        t0 = time.perf_counter()
        for obs, q in cases:
            impl.knn_select(train, obs, q, k)
        out[name] = time.perf_counter() - t0
    return out


def main():
    impls = available_backends()
    print(f"backends available: {', '.join(impls)}")
    rows = [
        ("label_prob_columns (4000x20x8, 500 templates)", bench_label_prob_columns(impls)),
        ("knn_select (6400 rows, 2000 queries, k=10)", bench_knn_select(impls)),
    ]
    for label, timings in rows:
        print(f"\n{label}")
        for name, seconds in timings.items():
            print(f"  {name:>7}: {seconds * 1e3:8.1f} ms")
        if len(timings) == 2:
            speedup = timings["numpy"] / timings["cython"]
            print(f"  speedup: {speedup:.1f}x")


if __name__ == "__main__":
    main()
