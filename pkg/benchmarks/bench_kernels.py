"""Compare the numba kernels with the pure-python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]

The fallback is what runs when JOINTCA_DISABLE_NUMBA=1 is set.
"""

import argparse
import os
import time

import numpy as np

from jointca import _kernels, builtin_table1_scenario, run
from jointca.engine import TABLE1_UTILITIES, Carrier, Scenario, User
from jointca.oracle import _hall_system, _user_caps


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_inverse(k, n=20_000):
    prices = np.geomspace(1e-3, 4.0, n)
    args = [u.kernel_args() for u in TABLE1_UTILITIES]

    def go():
        for kind, p0, p1 in args:
            for p in prices:
                k.inverse_slope(kind, p0, p1, p, 1e-6, 170.0, 1e-9)

    return go


def _oracle_scenario():
    t = TABLE1_UTILITIES
    users = [(t[1], (1,)), (t[0], (2,)), (t[3], (1, 2)), (t[5], (1, 2))]
    return Scenario((Carrier(1, 25.0), Carrier(2, 20.0)), tuple(User(i + 1, u, c) for i, (u, c) in enumerate(users)))


def bench_grid(k, res=0.1):
    sc = _oracle_scenario()
    _, member, cap = _hall_system(sc)
    cap_units = cap / res
    nmax = _user_caps(member, cap_units)
    m = len(sc.users)
    need = np.array([[member[s, j + 1:].sum() for j in range(m)] for s in range(member.shape[0])], dtype=float)
    kinds = np.array([u.utility.kernel_args()[0] for u in sc.users], dtype=np.int64)
    p0 = np.array([u.utility.kernel_args()[1] for u in sc.users])
    p1 = np.array([u.utility.kernel_args()[2] for u in sc.users])
    table = k.utility_table(kinds, p0, p1, nmax, res)
    return lambda: k.grid_scan(table, member, cap_units, nmax, need)


def bench_run(flag):
    sc = builtin_table1_scenario(100, 70)

    def go():
        if flag:
            os.environ["JOINTCA_DISABLE_NUMBA"] = "1"
        else:
            os.environ.pop("JOINTCA_DISABLE_NUMBA", None)
        try:
            run(sc)
        finally:
            os.environ.pop("JOINTCA_DISABLE_NUMBA", None)

    return go


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    # warm the JIT so compile time is not counted
    bench_inverse(_kernels.JIT, 10)()
    bench_grid(_kernels.JIT, 1.0)()
    bench_run(False)()

    cases = [
        ("inverse_slope x120k", bench_inverse(_kernels.JIT), bench_inverse(_kernels.PY)),
        ("grid_scan 4 users @0.1", bench_grid(_kernels.JIT), bench_grid(_kernels.PY)),
        ("table1 run R1=100", bench_run(False), bench_run(True)),
    ]
    print(f"{'case':<26}{'numba s':>10}{'python s':>11}{'speedup':>9}")
    for name, fast, slow in cases:
        a, b = best_of(fast, args.repeat), best_of(slow, args.repeat)
        print(f"{name:<26}{a:>10.4f}{b:>11.4f}{b / a:>8.1f}x")


if __name__ == "__main__":
    main()
