"""Throughput comparison of the compiled sampler core vs the numpy fallback.

Run:  python3 benchmarks/bench_backends.py

Both implementations are bit-identical (asserted here); only speed
differs.  Set VDWALK_PURE_PYTHON=1 to force the fallback package-wide.
"""

import time
from fractions import Fraction

import numpy as np

from vdwalk import LatticeParams, build_kernel, build_lattice
from vdwalk import _python
from vdwalk import backend

try:
    from vdwalk import _native
except ImportError:
    _native = None


def _args(lat, kern, n_paths, n_steps, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.random((n_paths, n_steps))
    n_events = np.full(n_paths, n_steps, dtype=np.int64)
    return (np.ascontiguousarray(lat.indptr, dtype=np.int64),
            np.ascontiguousarray(lat.indices, dtype=np.int64),
            np.ascontiguousarray(lat.degree, dtype=np.int64),
            np.ascontiguousarray(kern.darning_cum, dtype=np.float64),
            np.ascontiguousarray(lat.absorbing, dtype=np.uint8),
            0, u, n_events)


def bench(fn, args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    lat = build_lattice(LatticeParams(k=6, epsilon=Fraction(1, 8),
                                      window_radius=Fraction(3, 4)))
    kern = build_kernel(lat)
    n_paths, n_steps = 512, 1024
    total = n_paths * n_steps
    args = _args(lat, kern, n_paths, n_steps)

    print(f"selected backend: {backend.BACKEND}")
    print(f"fill_states: {n_paths} paths x {n_steps} steps "
          f"on {lat.n_vertices} vertices")
    t_py, out_py = bench(_python.fill_states, args)
    print(f"  python  {t_py:8.4f}s  ({total / t_py / 1e6:6.2f} M steps/s)")
    if _native is not None:
        t_nat, out_nat = bench(_native.fill_states, args)
        print(f"  native  {t_nat:8.4f}s  ({total / t_nat / 1e6:6.2f} M steps/s)"
              f"  speedup x{t_py / t_nat:.1f}")
        assert np.array_equal(out_py, out_nat), "backends disagree"
        print("  outputs bit-identical")
    else:
        print("  native  unavailable (compiled extension not built)")

    px, py, rho = lat.embed_all()
    kind = np.ascontiguousarray(lat.kind, dtype=np.uint8)
    rng = np.random.default_rng(1)
    idx = np.unique(rng.integers(0, lat.n_vertices, 600)).astype(np.int64)
    print(f"pairwise_rho_max over {len(idx)} vertices")
    t_py, m_py = bench(_python.pairwise_rho_max,
                       (px, py, rho, kind, idx), repeat=20)
    print(f"  python  {t_py * 1e3:8.3f}ms")
    if _native is not None:
        t_nat, m_nat = bench(_native.pairwise_rho_max,
                             (px, py, rho, kind, idx), repeat=20)
        print(f"  native  {t_nat * 1e3:8.3f}ms  speedup x{t_py / t_nat:.1f}")
        assert m_py == m_nat, "backends disagree"


if __name__ == "__main__":
    main()
