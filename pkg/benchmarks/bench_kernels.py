"""Benchmark the compiled kernels against the numpy reference.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times the three hot kernels (depthwise temporal conv forward/backward and
the fused AdamW update) at desk-scale training shapes and one larger shape,
for whichever backends are importable.
"""

import argparse
import time

import numpy as np

from t4v._kernels import _ref
from t4v.numkit import RngState

try:
    from t4v._kernels import _ck
except ImportError:
    _ck = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_case(name, b, T, d, K, repeats):
    gen = RngState(0).generator()
    frames = gen.standard_normal((b, T, d))
    kernels = gen.standard_normal((K, d))
    upstream = gen.standard_normal((b, T, d))
    p = gen.standard_normal(b * T * d)
    g = gen.standard_normal(b * T * d)
    m = np.zeros_like(p)
    v = np.zeros_like(p)

    rows = []
    backends = [("python", _ref)] + ([("cython", _ck)] if _ck is not None else [])
    for label, impl in backends:
        fwd = _time(lambda: impl.t1d_forward(frames, kernels), repeats)
        bwd = _time(lambda: impl.t1d_backward(frames, kernels, upstream), repeats)
        adam = _time(
            lambda: impl.adamw_update(p.copy(), g, m.copy(), v.copy(),
                                      1, 1e-3, 0.9, 0.98, 1e-8, 0.2),
            repeats,
        )
        rows.append((label, fwd, bwd, adam))

    print(f"\n{name}  (b={b}, T={T}, d={d}, K={K})")
    print(f"  {'backend':8s} {'t1d_fwd':>12s} {'t1d_bwd':>12s} {'adamw':>12s}")
    for label, fwd, bwd, adam in rows:
        print(f"  {label:8s} {fwd * 1e6:>10.1f}us {bwd * 1e6:>10.1f}us {adam * 1e6:>10.1f}us")
    if len(rows) == 2:
        base, fast = rows[0], rows[1]
        print(f"  {'speedup':8s} {base[1] / fast[1]:>11.2f}x {base[2] / fast[2]:>11.2f}x "
              f"{base[3] / fast[3]:>11.2f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=50)
    args = parser.parse_args()
    if _ck is None:
        print("compiled backend not built; timing the numpy reference only")
    bench_case("desk-scale batch", b=32, T=8, d=64, K=3, repeats=args.repeats)
    bench_case("wide features", b=32, T=16, d=512, K=3, repeats=args.repeats)
    bench_case("large batch", b=256, T=8, d=512, K=5, repeats=max(5, args.repeats // 10))


if __name__ == "__main__":
    main()
