"""Classical QUBO solvers: exhaustive enumeration and simulated annealing.

Both stand in for the annealer.  Simulated annealing runs independent
restarts, each with its own PCG64 stream seeded from ``(seed, restart)``, and
keeps the best; serial, threaded and vectorised execution therefore agree.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .qubo import M_MAX_EXHAUSTIVE, M_MAX_SA, QuboCapacityError, QuboProblem


class EnergyDriftError(RuntimeError):
    """Incrementally tracked energy disagrees with a full recomputation."""


@dataclass(frozen=True)
class SaSchedule:
    """Geometric inverse-temperature schedule; ``None`` betas are derived from ``Q``."""

    sweeps: int = 1000
    beta_start: float | None = None
    beta_end: float | None = None
    restarts: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1:
            raise ValueError("sweeps and restarts must be >= 1")
        if (self.beta_start is None) != (self.beta_end is None):
            raise ValueError("give both beta bounds or neither")
        if self.beta_start is not None and not self.beta_end > self.beta_start > 0:
            raise ValueError("need beta_end > beta_start > 0")

    def betas(self, Q: np.ndarray) -> np.ndarray:
        b0, b1 = (self.beta_start, self.beta_end) if self.beta_start is not None else default_betas(Q)
        return np.geomspace(b0, b1, self.sweeps)


def default_betas(Q: np.ndarray) -> tuple[float, float]:
    """Hot enough that the largest single-flip rise is accepted half the time,
    cold enough that the smallest is accepted 1% of the time."""
    A = np.abs(Q)
    top = float(A.max()) if Q.size else 0.0
    if not top > 0 or not np.isfinite(top):
        return math.log(2.0), math.log(100.0)
    off = A.sum(axis=1) - np.diag(A)
    max_delta = float(np.max(np.diag(A) + 2.0 * off))
    # entries far below the largest one (down to subnormals) would push beta to inf
    nz = A[A > 1e-12 * top]
    min_delta = float(nz.min())
    max_delta = max(max_delta, min_delta)
    with np.errstate(over="ignore", divide="ignore"):
        b0 = min(math.log(2.0) / max_delta, 1e300)
        b1 = min(max(math.log(100.0) / min_delta, 2.0 * b0), 1e300)
    if not b1 > b0:
        b0 = b1 / 2.0
    return b0, b1


@dataclass
class SolveResult:
    xi_best: np.ndarray
    H_best: float
    samples: list = field(default_factory=list)  # (xi, H) per restart
    wall_time: float = 0.0
    backend: str = ""
    traces: np.ndarray | None = None  # (restarts, sweeps) energy after each sweep


def _check_m(q: QuboProblem, cap: int) -> None:
    if q.m > cap:
        raise QuboCapacityError(f"problem has {q.m} variables, cap is {cap}")


def _tie_tol(Q: np.ndarray) -> float:
    return 1e-11 * (1.0 + float(np.abs(Q).sum()))


def solve_exhaustive(q: QuboProblem, m_max: int = M_MAX_EXHAUSTIVE, use_numba: bool | None = None) -> SolveResult:
    """Global minimiser over all ``2^m`` assignments.

    Ties (within a tolerance scaled by ``sum|Q|``) go to the lowest binary
    word, reading ``xi`` with its first entry as the most significant bit.
    """
    _check_m(q, m_max)
    t0 = time.perf_counter()
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    Q = np.ascontiguousarray(q.Q)
    kernel = _accel.exhaustive_numba if use_numba else _accel.exhaustive_numpy
    word, _ = kernel(Q, _tie_tol(Q))
    xi = _accel.words_to_bits(np.array([word], dtype=np.int64), q.m)[0].astype(np.int8)
    H = q.energy(xi)
    return SolveResult(xi, H, [(xi, H)], time.perf_counter() - t0, "exhaustive")


def _restart_stream(seed: int, restart: int):
    return np.random.default_rng([int(seed), int(restart)])


def _chunk_sweeps(m: int, sweeps: int, chunk: int | None) -> int:
    return max(1, min(sweeps, chunk if chunk else (1 << 18) // max(m, 1)))


def _drift_check(Q, x, H, scale):
    direct = float(x @ Q @ x)
    if abs(direct - H) > 1e-9 * scale:
        raise EnergyDriftError(f"tracked energy {H!r} vs recomputed {direct!r}")


def _sa_restart_numba(Q, betas, seed, restart, chunk):
    m = Q.shape[0]
    rng = _restart_stream(seed, restart)
    x = rng.integers(0, 2, m).astype(np.float64)
    field = Q @ x
    H = float(x @ field)
    best_x, best_H = x.copy(), H
    trace = np.empty(betas.size)
    scale = max(1.0, float(np.abs(Q).sum()))
    for s0 in range(0, betas.size, chunk):
        b = betas[s0 : s0 + chunk]
        U = rng.random((b.size, m))
        H, best_H = _accel.sa_sweeps_numba(Q, x, field, H, best_x, best_H, b, U, trace[s0 : s0 + b.size])
        _drift_check(Q, x, H, scale)
    return best_x, trace


def _sa_batch_numpy(Q, betas, seed, restarts, chunk):
    m = Q.shape[0]
    rngs = [_restart_stream(seed, r) for r in restarts]
    X = np.stack([g.integers(0, 2, m).astype(np.float64) for g in rngs])
    # same reductions as the per-restart path so both agree bit for bit
    F = np.stack([Q @ x for x in X])
    H = np.array([float(x @ f) for x, f in zip(X, F)])
    best_X, best_H = X.copy(), H.copy()
    trace = np.empty((len(restarts), betas.size))
    scale = max(1.0, float(np.abs(Q).sum()))
    for s0 in range(0, betas.size, chunk):
        b = betas[s0 : s0 + chunk]
        U = np.stack([g.random((b.size, m)) for g in rngs])
        H, best_H = _accel.sa_sweeps_numpy(Q, X, F, H, best_X, best_H, b, U, trace[:, s0 : s0 + b.size])
        for r in range(len(restarts)):
            _drift_check(Q, X[r], H[r], scale)
    return list(best_X), trace


def solve_sa(
    q: QuboProblem,
    sched: SaSchedule,
    m_max: int = M_MAX_SA,
    use_numba: bool | None = None,
    workers: int = 1,
    chunk_sweeps: int | None = None,
) -> SolveResult:
    """Single-bit-flip Metropolis annealing, best of ``sched.restarts`` runs.

    Energies are updated incrementally in O(m) per accepted flip and checked
    against a full recomputation after every chunk of sweeps.
    """
    _check_m(q, m_max)
    t0 = time.perf_counter()
    use_numba = _accel.USE_NUMBA if use_numba is None else use_numba
    Q = np.ascontiguousarray(q.Q)
    betas = sched.betas(Q)
    chunk = _chunk_sweeps(q.m, sched.sweeps, chunk_sweeps)
    idx = list(range(sched.restarts))
    if use_numba:
        run = lambda r: _sa_restart_numba(Q, betas, sched.seed, r, chunk)  # noqa: E731
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                outs = list(pool.map(run, idx))
        else:
            outs = [run(r) for r in idx]
        bests = [o[0] for o in outs]
        traces = np.stack([o[1] for o in outs])
    else:
        bests, traces = _sa_batch_numpy(Q, betas, sched.seed, idx, chunk)
    samples = []
    for x in bests:
        xi = x.astype(np.int8)
        samples.append((xi, q.energy(xi)))
    k = min(range(len(samples)), key=lambda r: (samples[r][1], r))
    xi, H = samples[k]
    return SolveResult(xi, H, samples, time.perf_counter() - t0, "sa", traces)


def solve_best_of(q: QuboProblem, sched: SaSchedule, backend: str = "sa", **kwargs) -> SolveResult:
    """Best of ``sched.restarts`` independent runs of ``backend``.

    The exhaustive backend is deterministic, so one run stands for all.
    """
    if backend == "sa":
        return solve_sa(q, sched, **kwargs)
    if backend == "exhaustive":
        return solve_exhaustive(q, **kwargs)
    raise ValueError(f"unknown QUBO backend {backend!r}")
