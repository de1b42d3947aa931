"""Compare the compiled and numpy kernel backends.

Usage::

    python3 benchmarks/bench_kernels.py [--n 100000] [--repeat 20]

Times ``nll_and_grad``, ``corrected_logits`` and a full two-class fit with each
backend. The fit is run in a subprocess per backend because the backend is
chosen once at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from quadcal import _pykernels, kernels
from quadcal.calibration import LOG_VARIANCE_FLOOR

FIT_SNIPPET = """
import time, numpy as np
from quadcal import calibration as C, BACKEND
from quadcal.sim import simulate_dataset
ds, _ = simulate_dataset(50, 50, seed=0)
t = time.perf_counter()
for _ in range(5):
    C.fit(ds)
print(BACKEND, (time.perf_counter() - t) / 5)
"""


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    l, q = rng.normal(size=args.n), rng.uniform(size=args.n)
    theta = np.array([1.0, -0.5, -1.5, 1.5])
    t0, t1 = np.array([-0.8, -0.2, -1.5, 1.5]), np.array([1.2, -0.5, -1.5, 1.5])

    backends = {"python": _pykernels}
    if kernels.compiled_available():
        from quadcal import _ckernels
        backends["cython"] = _ckernels
    else:
        print("compiled extension not available; timing the numpy backend only")

    print(f"n = {args.n}, best of {args.repeat}")
    print(f"{'kernel':<18} " + " ".join(f"{b:>10}" for b in backends) + "   speedup")
    for name, call in (
        ("nll_and_grad", lambda m: m.nll_and_grad(l, q, theta, LOG_VARIANCE_FLOOR)),
        ("corrected_logits", lambda m: m.corrected_logits(l, q, t0, t1, LOG_VARIANCE_FLOOR)),
    ):
        times = {b: bench(lambda m=m: call(m), args.repeat) for b, m in backends.items()}
        speed = f"{times['python'] / times['cython']:8.1f}x" if "cython" in times else ""
        print(f"{name:<18} " + " ".join(f"{1e3 * t:8.2f}ms" for t in times.values()) + "  " + speed)

    fit_times = {}
    for b in backends:
        env = dict(os.environ)
        env.pop("QUADCAL_PURE_PYTHON", None)
        if b == "python":
            env["QUADCAL_PURE_PYTHON"] = "1"
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        fit_times[out[0]] = float(out[1])
    speed = f"{fit_times['python'] / fit_times['cython']:8.1f}x" if "cython" in fit_times else ""
    print(f"{'fit (12,400 rows)':<18} " + " ".join(f"{1e3 * t:8.2f}ms" for t in fit_times.values()) + "  " + speed)


if __name__ == "__main__":
    main()
