"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 50] [--blocks 200] [--dim 8]

Both backends are imported directly, so the result does not depend on
UCPREDICT_PURE_PYTHON. Outputs are compared before timing.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from ucpredict import _pykernels

try:
    from ucpredict import _ckernels
except ImportError:
    _ckernels = None


def _interior(rng, starts, dims, n):
    v = rng.normal(size=n)
    for s, d in zip(starts, dims):
        v[s] = np.linalg.norm(v[s + 1:s + d]) + rng.uniform(0.1, 1.0)
    return v


def cases(blocks: int, dim: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    dims = np.full(blocks, dim, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(dims)[:-1]]).astype(np.int64)
    n = int(dims.sum())
    s = _interior(rng, starts, dims, n)
    z = _interior(rng, starts, dims, n)
    dx = rng.normal(size=n)
    wbar, eta, _ = _pykernels.soc_nt_scaling(s, z, starts, dims)
    X = rng.normal(size=(300, 20))
    catalog = rng.integers(0, 2, size=(2000, 144)).astype(np.uint8)
    return {
        "soc_nt_scaling": (s, z, starts, dims),
        "soc_apply_w": (wbar, eta, dx, starts, dims, False),
        "soc_jordan_prod": (s, z, starts, dims),
        "soc_jordan_div": (s, z, starts, dims),
        "soc_max_step": (s, dx, starts, dims),
        "soc_inv_w_blocks": (wbar, eta, starts, dims),
        "gaussian_kernel": (X, X, 0.5),
        "hamming_distances": (catalog, catalog[0]),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return bool(np.allclose(a, b, rtol=1e-10, atol=1e-12))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--blocks", type=int, default=200)
    ap.add_argument("--dim", type=int, default=8)
    args = ap.parse_args(argv)
    if _ckernels is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':<20} {'python us':>11} {'cython us':>11} {'speedup':>8}  match")
    for name, call_args in cases(args.blocks, args.dim).items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        match = _same(py(*call_args), cy(*call_args))
        t_py = min(timeit.repeat(lambda: py(*call_args), number=args.repeat, repeat=3)) / args.repeat
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=args.repeat, repeat=3)) / args.repeat
        print(f"{name:<20} {t_py * 1e6:11.1f} {t_cy * 1e6:11.1f} {t_py / t_cy:8.1f}x  {match}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
