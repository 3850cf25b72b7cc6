#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the two hot paths at planner-realistic sizes (one sensing batch
against the default 2890-hinge grid) and checks that both backends
produce the same numbers.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from subscan import _kernels_py, kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--points", type=int, default=700)
    parser.add_argument("--hinges", type=int, default=2890)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    pts = rng.uniform(-6, 6, size=(args.points, 3))
    hinges = rng.uniform(-6, 6, size=(args.hinges, 3))
    y = rng.integers(0, 2, size=args.points).astype(float)
    mu0 = np.zeros(args.hinges)
    sigma0 = np.full(args.hinges, 1e4)

    backends = {"python": _kernels_py}
    try:
        from subscan import _core

        backends["compiled"] = _core
    except ImportError:
        print("compiled extension not built; timing the fallback only")

    print(f"batch: {args.points} points x {args.hinges} hinges, "
          f"best of {args.repeat}")
    results = {}
    for name, mod in backends.items():
        t_rbf = best_of(lambda m=mod: m.rbf_features(pts, hinges, 5.0),
                        args.repeat)
        phi = mod.rbf_features(pts, hinges, 5.0)
        t_em = best_of(
            lambda m=mod, p=phi: m.em_fit(p, y, mu0, sigma0, 1e-3, 3),
            args.repeat,
        )
        results[name] = (t_rbf, t_em)
        print(f"  {name:9s} rbf_features {t_rbf * 1e3:8.2f} ms   "
              f"em_fit {t_em * 1e3:8.2f} ms")

    if len(backends) == 2:
        ref = backends["python"]
        core = backends["compiled"]
        a = ref.rbf_features(pts, hinges, 5.0)
        b = core.rbf_features(pts, hinges, 5.0)
        np.testing.assert_allclose(a, b, rtol=5e-11, atol=1e-300)
        mu_a, sig_a, _ = ref.em_fit(a, y, mu0, sigma0, 1e-3, 3)
        mu_b, sig_b, _ = core.em_fit(b, y, mu0, sigma0, 1e-3, 3)
        np.testing.assert_allclose(mu_a, mu_b, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(sig_a, sig_b, rtol=1e-9, atol=1e-12)
        print("  backends agree (rbf to 5e-11 rel, em to 1e-9 rel)")
        for op, idx in (("rbf_features", 0), ("em_fit", 1)):
            speedup = results["python"][idx] / results["compiled"][idx]
            print(f"  speedup {op}: {speedup:.2f}x")
    print(f"active backend for library calls: {kernels.active_backend()}")


if __name__ == "__main__":
    main()
