"""Compare the compiled kernels with the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

Times the two voting kernels on protocol-sized inputs, then one end-to-end
desk-benchmark discovery per backend (each in a fresh interpreter so the
backend switch takes effect).
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from ldptrie import _kernels_py
from ldptrie.randomizer import ss_params

try:
    from ldptrie import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def vote_case(mod, s, eps, n_targets):
    params = ss_params(s, eps)
    targets = np.random.default_rng(0).integers(0, s, size=n_targets)
    out = np.zeros(s, dtype=np.int64)
    return lambda: mod.ss_vote_accumulate(targets, s, params.d, params.p, 1, out)


def subset_case(mod, n_subsets, n, k):
    out = np.zeros(n, dtype=np.int64)
    return lambda: mod.uniform_subset_counts(n_subsets, n, k, 1, out)


CASES = [
    # one layer of the desk benchmark: 2000 users x 10 reports
    ("ss_vote_accumulate s=1351 eps=10 (d=1)", vote_case, (1351, 10.0, 20_000)),
    ("ss_vote_accumulate s=1351 eps=2 (d=161)", vote_case, (1351, 2.0, 20_000)),
    ("ss_vote_accumulate s=5001 eps=1 (d=1345)", vote_case, (5001, 1.0, 2_000)),
    # k-anonymity threshold draw, desk query and a larger one
    ("uniform_subset_counts nb=2000 n=100 k=34", subset_case, (2000, 100, 34)),
    ("uniform_subset_counts nb=200000 n=1000 k=44", subset_case, (200_000, 1000, 44)),
]


def end_to_end(backend_env):
    code = (
        "import time, sys\n"
        "from ldptrie import data_path, BACKEND\n"
        "from ldptrie.cli import load_config, resolve_alphabet, resolve_population, discover\n"
        "cfg = load_config(data_path('desk_benchmark.yaml'))\n"
        "a = resolve_alphabet(cfg)\n"
        "pop, truth, known = resolve_population(cfg, a)\n"
        "t = time.perf_counter()\n"
        "r = discover(cfg, pop, truth, known, a)\n"
        "print(BACKEND, time.perf_counter() - t, r['coverage'])\n"
    )
    env = dict(os.environ, **backend_env)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, seconds, cov = out.stdout.split()
    return backend, float(seconds), float(cov)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write results here")
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    if _kernels_c is None:
        print("compiled extension not built; only the fallback is timed", file=sys.stderr)

    rows = []
    for name, make, case_args in CASES:
        py = best_of(make(_kernels_py, *case_args), args.repeat)
        c = best_of(make(_kernels_c, *case_args), args.repeat) if _kernels_c else None
        rows.append({"case": name, "python_s": py, "cython_s": c, "speedup": py / c if c else None})

    width = max(len(r["case"]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>10}  {'cython':>10}  {'speedup':>8}")
    for r in rows:
        c = f"{r['cython_s']:10.4f}" if r["cython_s"] is not None else f"{'-':>10}"
        sp = f"{r['speedup']:7.1f}x" if r["speedup"] else f"{'-':>8}"
        print(f"{r['case']:<{width}}  {r['python_s']:10.4f}  {c}  {sp}")

    e2e = []
    if not args.skip_end_to_end:
        print("\nend-to-end desk discovery (one run, seconds, coverage)")
        envs = [{"LDPTRIE_PURE_PYTHON": "1"}]
        if _kernels_c:
            envs.append({"LDPTRIE_PURE_PYTHON": "0"})
        for env in envs:
            backend, seconds, cov = end_to_end(env)
            e2e.append({"backend": backend, "seconds": seconds, "coverage": cov})
            print(f"  {backend:<7} {seconds:8.2f}  {cov:.4f}")

    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"kernels": rows, "end_to_end": e2e}, fh, indent=2)


if __name__ == "__main__":
    main()
