"""Compare the compiled kernel core with the numpy fallback.

Times the three hot primitives on identical inputs and then a full cache
warm-up of the constructed Gevrey-1 kernel, which runs once per backend in a
fresh interpreter (the backend is fixed at import).

Usage::

    python benchmarks/bench_kernel.py [--repeat 5] [--size 4000]
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from ultrasum import _pycore

try:
    from ultrasum import _ccore
except ImportError:
    _ccore = None

WARM = """
import json, time
from ultrasum import _core
from ultrasum.kernel import build_kernel
from ultrasum.seqcore import GevreyAlpha, build_sequence
k = build_kernel(build_sequence(GevreyAlpha(1.0), 64), 0.5)
t = time.perf_counter()
n = k.warm_cache(0.0)
print(json.dumps({"backend": _core.BACKEND, "nodes": n,
                  "seconds": time.perf_counter() - t}))
"""


def _inputs(size, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.01, 20, size) * np.exp(1j * rng.uniform(-1.4, 1.4, size))
    ell = rng.uniform(-3, 3, max(size // 100, 1)) + 1j * rng.uniform(-1, 1, max(size // 100, 1))
    log_q = np.log(np.arange(1, 2049, dtype=float)) * 7 / 6
    v = np.linspace(-20, 40, size)
    p = np.arange(65, dtype=float)
    from scipy.special import gammaln
    log_M = gammaln(p + 1)
    log_m = np.log(p + 1)
    return {"ti2": (x,), "direct_sums": (ell, log_q),
            "log_h_v": (v, log_M, log_m, 1.0, 0.0, 1.0)}


def bench(mod, name, args, repeat):
    fn = getattr(mod, name)
    fn(*args)
    t = timeit.Timer(lambda: fn(*args))
    n, _ = t.autorange()
    return min(t.repeat(repeat, n)) / n


def warm_up(pure):
    env = dict(os.environ, ULTRASUM_PURE_PYTHON="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", WARM], env=env, check=True,
                         capture_output=True, text=True)
    return json.loads(out.stdout)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip-warm", action="store_true", help="primitives only")
    args = ap.parse_args(argv)

    if _ccore is None:
        print("compiled core not built; only the fallback can be timed")
    print(f"{'primitive':<14}{'compiled [s]':>14}{'python [s]':>14}{'speed-up':>10}")
    for name, a in _inputs(args.size, args.seed).items():
        tp = bench(_pycore, name, a, args.repeat)
        if _ccore is not None:
            tc = bench(_ccore, name, a, args.repeat)
            print(f"{name:<14}{tc:>14.3e}{tp:>14.3e}{tp / tc:>9.1f}x")
        else:
            print(f"{name:<14}{'-':>14}{tp:>14.3e}{'-':>10}")
    if not args.skip_warm:
        print("\nconstructed Gevrey-1 cache warm-up (theta = 0)")
        for pure in (False, True):
            r = warm_up(pure)
            print(f"  {r['backend']:<10}{r['nodes']:>8} nodes {r['seconds']:>8.2f} s")


if __name__ == "__main__":
    main()
