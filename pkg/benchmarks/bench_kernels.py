"""Compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 100 200 400] [--repeat 3]

Both implementations are imported directly, so the run does not depend on
``CYCLO_PURE_PYTHON``.  Results are checked for agreement before timing.
"""

import argparse
import timeit

import numpy as np

from cyclo import _kernels_py
from cyclo.exactnum.linalg import PRIMES

try:
    from cyclo import _kernels
except ImportError:
    _kernels = None


def random_matrix(rng, m, n, rank, p):
    """``m x n`` matrix of the given rank over F_p (product of two random factors)."""
    left = rng.integers(0, 1000, size=(m, rank), dtype=np.int64)
    right = rng.integers(0, 1000, size=(rank, n), dtype=np.int64)
    return (left @ right) % p


def bench(fn, make_args, repeat):
    return min(timeit.repeat(lambda: fn(*make_args()), number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 200, 400])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; run `pip install --no-build-isolation -e .` first")
        return 1
    p = PRIMES[0]
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<16}{'size':>8}{'compiled (s)':>15}{'python (s)':>13}{'speedup':>10}")
    for n in args.sizes:
        A = random_matrix(rng, n, n + n // 4, (3 * n) // 4, p)
        piv_c = _kernels.rref_mod_p(A.copy(), p)
        piv_p = _kernels_py.rref_mod_p(A.copy(), p)
        assert np.array_equal(piv_c, piv_p)
        for name in ("rref_mod_p", "rank_mod_p"):
            tc = bench(getattr(_kernels, name), lambda: (A.copy(), p), args.repeat)
            tp = bench(getattr(_kernels_py, name), lambda: (A.copy(), p), args.repeat)
            print(f"{name:<16}{n:>8}{tc:>15.4f}{tp:>13.4f}{tp / tc:>10.1f}")
        # residues of small fractions a/b, as produced by the modular solver
        num = rng.integers(-500, 500, size=n * 50, dtype=np.int64)
        den = rng.integers(1, 500, size=n * 50, dtype=np.int64)
        res = np.array([(int(a) * pow(int(b), -1, p)) % p for a, b in zip(num, den)], dtype=np.int64)
        bound = int(np.sqrt(p / 2))
        out_c = _kernels.ratrecon_array(res, p, bound)
        out_p = _kernels_py.ratrecon_array(res, p, bound)
        assert all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(out_c, out_p))
        tc = bench(_kernels.ratrecon_array, lambda: (res, p, bound), args.repeat)
        tp = bench(_kernels_py.ratrecon_array, lambda: (res, p, bound), args.repeat)
        print(f"{'ratrecon_array':<16}{n * 50:>8}{tc:>15.4f}{tp:>13.4f}{tp / tc:>10.1f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
