"""Time the numba kernels against the pure-numpy fallbacks.

    python benchmarks/bench_kernels.py [--m 16] [--sweeps 1000] [--restarts 20] [--repeat 3]

Numba compilation happens in a warm-up call and is not timed.  Both paths
are checked to return the same answer before any timing is reported.
"""
from __future__ import annotations

import argparse
import json
import time

import numpy as np

from qmpc.qubo import QuboProblem
from qmpc.solve import SaSchedule, solve_exhaustive, solve_sa


def best_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None) -> dict:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=16, help="QUBO size for exhaustive search")
    ap.add_argument("--m-sa", type=int, default=64, help="QUBO size for annealing")
    ap.add_argument("--sweeps", type=int, default=1000)
    ap.add_argument("--restarts", type=int, default=20)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    q_ex = QuboProblem(rng.normal(size=(args.m, args.m)))
    q_sa = QuboProblem(rng.normal(size=(args.m_sa, args.m_sa)))
    sched = SaSchedule(sweeps=args.sweeps, restarts=args.restarts, seed=args.seed)

    # warm-up compiles the numba kernels and checks both paths agree
    a, b = solve_exhaustive(q_ex, use_numba=True), solve_exhaustive(q_ex, use_numba=False)
    assert np.array_equal(a.xi_best, b.xi_best), "exhaustive paths disagree"
    a, b = solve_sa(q_sa, sched, use_numba=True), solve_sa(q_sa, sched, use_numba=False)
    assert np.array_equal(a.xi_best, b.xi_best) and a.H_best == b.H_best, "annealing paths disagree"

    rows = {}
    for label, fn in [
        (f"exhaustive m={args.m}", lambda nb: solve_exhaustive(q_ex, use_numba=nb)),
        (f"sa m={args.m_sa} sweeps={args.sweeps} restarts={args.restarts}", lambda nb: solve_sa(q_sa, sched, use_numba=nb)),
    ]:
        t_nb = best_time(lambda: fn(True), args.repeat)
        t_np = best_time(lambda: fn(False), args.repeat)
        rows[label] = dict(numba_s=t_nb, numpy_s=t_np, speedup=t_np / t_nb)
        print(f"{label:<45} numba {t_nb:8.4f}s  numpy {t_np:8.4f}s  x{t_np / t_nb:6.1f}")
    print(json.dumps(rows, sort_keys=True))
    return rows


if __name__ == "__main__":
    main()
