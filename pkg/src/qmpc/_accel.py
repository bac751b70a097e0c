"""Hot QUBO kernels: numba ``@njit`` versions and pure-numpy fallbacks.

Set ``QMPC_DISABLE_NUMBA=1`` to force the numpy path.  Both implementations
are always importable so they can be compared directly; the ``sa_*`` and
``exhaustive_*`` names at the bottom point at the selected one.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("QMPC_DISABLE_NUMBA", "").lower() not in ("1", "true", "yes")

RESYNC_EVERY = 4096


# -- simulated annealing ----------------------------------------------------------


def _sa_sweeps_py(Q, x, field, H, best_x, best_H, betas, uniforms, trace):
    """Metropolis sweeps for one restart; mutates x, field, best_x, trace.

    Returns the updated ``(H, best_H)``.
    """
    m = x.size
    for s in range(betas.size):
        beta = betas[s]
        for i in range(m):
            d = 1.0 - 2.0 * x[i]
            delta = d * (Q[i, i] + 2.0 * (field[i] - Q[i, i] * x[i]))
            if delta <= 0.0 or uniforms[s, i] < math.exp(-beta * delta):
                x[i] += d
                for j in range(m):
                    field[j] += d * Q[j, i]
                H += delta
                if H < best_H:
                    best_H = H
                    best_x[:] = x
        trace[s] = H
    return H, best_H


def sa_sweeps_numpy(Q, X, F, H, best_X, best_H, betas, U, trace):
    """Vectorised across restarts: ``X``/``F``/``best_X`` are ``(R, m)``, ``U`` is ``(R, S, m)``.

    Same update rule as the scalar kernel, applied to every restart at once.
    """
    m = X.shape[1]
    for s in range(betas.size):
        beta = betas[s]
        for i in range(m):
            d = 1.0 - 2.0 * X[:, i]
            delta = d * (Q[i, i] + 2.0 * (F[:, i] - Q[i, i] * X[:, i]))
            with np.errstate(over="ignore"):
                acc = (delta <= 0.0) | (U[:, s, i] < np.exp(-beta * delta))
            if not acc.any():
                continue
            step = np.where(acc, d, 0.0)
            X[:, i] += step
            F += step[:, None] * Q[i][None, :]
            H += np.where(acc, delta, 0.0)
            better = H < best_H
            if better.any():
                best_H[better] = H[better]
                best_X[better] = X[better]
        trace[:, s] = H
    return H, best_H


# -- exhaustive enumeration -------------------------------------------------------


def _exhaustive_py(Q, tol):
    """Gray-code walk over all 2^m words; ``xi_0`` is the most significant bit.

    Returns ``(best_word, best_H)``; energies within ``tol`` of the running
    minimum count as ties and go to the lower word.
    """
    m = Q.shape[0]
    x = np.zeros(m)
    field = np.zeros(m)
    H = 0.0
    best_H = 0.0
    best_word = 0
    word = 0
    for k in range(1, 1 << m):
        p = 0
        while not (k >> p) & 1:
            p += 1
        i = m - 1 - p
        d = 1.0 - 2.0 * x[i]
        H += d * (Q[i, i] + 2.0 * (field[i] - Q[i, i] * x[i]))
        x[i] += d
        for j in range(m):
            field[j] += d * Q[j, i]
        word ^= 1 << p
        if k % RESYNC_EVERY == 0:
            for a in range(m):
                acc = 0.0
                for b in range(m):
                    acc += Q[a, b] * x[b]
                field[a] = acc
            H = 0.0
            for a in range(m):
                H += x[a] * field[a]
        if H < best_H - tol:
            best_H = H
            best_word = word
        elif H <= best_H + tol:
            if word < best_word:
                best_word = word
            if H < best_H:
                best_H = H
    return best_word, best_H


def words_to_bits(words: np.ndarray, m: int) -> np.ndarray:
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    return ((words[:, None] >> shifts[None, :]) & 1).astype(np.float64)


def exhaustive_numpy(Q, tol, chunk: int = 1 << 15):
    """Blocked dense evaluation of every word; same tie rule as the Gray-code walk."""
    m = Q.shape[0]
    best_H, best_word = np.inf, 0
    for start in range(0, 1 << m, chunk):
        words = np.arange(start, min(start + chunk, 1 << m), dtype=np.int64)
        B = words_to_bits(words, m)
        H = np.einsum("ni,ni->n", B @ Q, B)
        cmin = float(H.min())
        if cmin < best_H - tol:
            best_H = cmin
            best_word = int(words[np.argmax(H <= cmin + tol)])
        elif cmin <= best_H + tol:
            best_H = min(best_H, cmin)
    return best_word, best_H


if HAVE_NUMBA:
    sa_sweeps_numba = numba.njit(cache=True, nogil=True)(_sa_sweeps_py)
    exhaustive_numba = numba.njit(cache=True, nogil=True)(_exhaustive_py)
else:  # pragma: no cover
    sa_sweeps_numba = None
    exhaustive_numba = None
