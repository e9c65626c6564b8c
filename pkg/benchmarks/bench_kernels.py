"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 20]

Kernel-level timings call both implementations directly; the end-to-end rows
run a short full-space and reduced evolution in a subprocess per backend.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np
from scipy import sparse

from wgdark import _kernels_py

try:
    from wgdark import _kernels
except ImportError:
    _kernels = None

END_TO_END = r"""
import json, time
from wgdark import kernels
from wgdark.couplings import EmitterChain
from wgdark.dicke import initial_state, reduced_evolve
from wgdark.fullspace import evolve, inverted_state
out = {}
for n, n_p in [(8, 3), (10, 4)]:
    ch = EmitterChain(n, n_p)
    st = inverted_state(ch)
    evolve(st, ch, t_final=0.01, dt=0.005)
    t = time.perf_counter()
    evolve(st, ch, t_final=0.1, dt=0.005)
    out[f"full ({n},{n_p}) ms/step"] = (time.perf_counter() - t) / 20 * 1e3
ch = EmitterChain(40, 20)
t = time.perf_counter()
reduced_evolve(initial_state(ch), ch, t_final=0.1, dt=0.001)
out["reduced (40,20) ms/step"] = (time.perf_counter() - t) / 100 * 1e3
print(json.dumps({"backend": kernels.BACKEND, **out}))
"""


def time_call(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1e3


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for label, n, density, scale in [("csr real 252x252", 252, 0.1, 1.0),
                                     ("csr imag 252x252", 252, 0.1, 1j),
                                     ("csr complex 1260x1260", 1260, 0.02, 1 + 1j)]:
        a = sparse.random(n, n, density=density, format="csr", random_state=1) * scale
        x = rng.normal(size=(n, 252)) + 1j * rng.normal(size=(n, 252))
        row = {"kernel": label}
        for name, mod in [("python", _kernels_py), ("compiled", _kernels)]:
            if mod is not None:
                row[name] = time_call(lambda: mod.csr_matmul(a.indptr, a.indices, a.data, x), repeat)
        rows.append(row)
    for p, q in [(6, 6), (20, 20)]:
        rho = rng.normal(size=(p + 1, q + 1, p + 1, q + 1)) + 0j
        sp_, sq_ = np.sqrt(np.arange(p + 1.0)), np.sqrt(np.arange(q + 1.0))
        row = {"kernel": f"reduced rk4 x10 ({p},{q})"}
        for name, mod in [("python", _kernels_py), ("compiled", _kernels)]:
            if mod is not None:
                row[name] = time_call(lambda: mod.reduced_rk4(rho, sp_, sq_, 1.0, 1e-3, 10), repeat)
        rows.append(row)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=10)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    print(f"{'kernel':<28}{'python ms':>12}{'compiled ms':>13}{'speedup':>9}")
    for r in kernel_rows(args.repeat):
        c = r.get("compiled")
        sp = f"{r['python'] / c:8.2f}x" if c else "      n/a"
        print(f"{r['kernel']:<28}{r['python']:12.3f}{(c or float('nan')):13.3f}{sp}")

    if not args.skip_end_to_end:
        results = []
        for flag in ("1", "0"):
            env = dict(os.environ, WGDARK_PURE_PYTHON=flag)
            res = subprocess.run([sys.executable, "-c", END_TO_END], env=env, capture_output=True,
                                 text=True, check=True)
            results.append(json.loads(res.stdout.strip().splitlines()[-1]))
        print()
        for key in results[0]:
            if key != "backend":
                vals = "  ".join(f"{r['backend']}: {r[key]:.3f}" for r in results)
                print(f"{key:<28}{vals}")


if __name__ == "__main__":
    main()
