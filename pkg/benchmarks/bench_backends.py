"""Compare the compiled kernels against the pure-Python reference backend.

Three workloads cover the hot paths: raw LU solves, a fine-grained DC sweep
of the bundled stabilizer (Newton + nonlinear stamping), and a long RC
transient (companion updates, one solve per step). Each workload also
cross-checks that both backends produce the same numbers.

Run:  python benchmarks/bench_backends.py [--repeat N]
"""

import argparse
import time

import numpy as np

from stabilsim import _kernels, corpus, engine
from stabilsim.netlist import parse

RC = "* rc\nV1 in 0 PWL(0 0 1n 1)\nR1 in out 1k\nC1 out 0 1u esr=1u rleak=1e15\n"


def _best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lu(repeat):
    rng = np.random.default_rng(7)
    systems = []
    for n in (4, 12, 30):
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        b = rng.standard_normal(n)
        systems.append((a, b))

    def work():
        for a, b in systems:
            for _ in range(200):
                _kernels.lu_solve(a.copy(), b.copy())

    sample = [_kernels.lu_solve(a.copy(), b.copy()) for a, b in systems]
    return _best_of(work, repeat), np.concatenate(sample)


def bench_sweep(repeat):
    n = corpus.vavs_netlist()

    def work():
        return engine.dc_sweep(n, "V1", 10, 15, 0.05)

    data = work()
    return _best_of(work, repeat), data.voltage("out")


def bench_transient(repeat):
    n = parse(RC)

    def work():
        return engine.transient(n, 1e-6, 5e-3)

    w = work()
    return _best_of(work, repeat), w.voltage("out")


WORKLOADS = (
    ("lu solves (3 sizes x 200)", bench_lu),
    ("corpus sweep, 101 points", bench_sweep),
    ("rc transient, 5001 steps", bench_transient),
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3, help="timing repeats, best-of (default 3)")
    args = ap.parse_args()

    if not _kernels.compiled_available():
        print("compiled backend not built; timing the python backend only\n")
        backends = ("python",)
    else:
        backends = ("compiled", "python")

    initial = _kernels.BACKEND
    times = {}
    checks = {}
    try:
        for backend in backends:
            _kernels.use_backend(backend)
            for label, fn in WORKLOADS:
                t, values = fn(args.repeat)
                times[(label, backend)] = t
                checks.setdefault(label, {})[backend] = values
    finally:
        _kernels.use_backend(initial)

    width = max(len(label) for label, _ in WORKLOADS)
    header = f"{'workload':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label, _ in WORKLOADS:
        row = f"{label:<{width}}  "
        row += "".join(f"{times[(label, b)] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{times[(label, 'python')] / times[(label, 'compiled')]:>9.1f}x"
        print(row)

    if len(backends) == 2:
        print()
        for label, _ in WORKLOADS:
            a, b = checks[label]["compiled"], checks[label]["python"]
            print(f"max |compiled - python| on {label}: {np.abs(a - b).max():.3e}")


if __name__ == "__main__":
    main()
