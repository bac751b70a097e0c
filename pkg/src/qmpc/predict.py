"""Factorised multi-step prediction ``x_plus = omega @ mu(c)``.

The prediction matrix stacks one coefficient block per horizon step.  Block
``k`` is obtained by substituting the previous block (as a polynomial in the
reduced command vector ``c``) and the ``k``-th command sample into the
discrete model, then truncating at the chosen degree.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DiscreteModel
from .polyalg import MonomialBasis, PolyVec, basis_build, eval_mu, eval_mu_batch, poly_compose_trunc

MAX_DEGREE = 6


class RankDeficientBlocking(ValueError):
    pass


def blocking_matrix(T: int, n_u: int, block_lengths=None) -> np.ndarray:
    """Piecewise-constant move-blocking matrix of shape ``(T*n_u, n_blocks*n_u)``.

    ``block_lengths`` must sum to ``T``; ``None`` means one block per step.
    Column ``b*n_u + j`` drives input ``j`` during block ``b``.
    """
    if block_lengths is None:
        block_lengths = [1] * T
    block_lengths = [int(b) for b in block_lengths]
    if sum(block_lengths) != T or min(block_lengths) < 1:
        raise ValueError(f"block lengths {block_lengths} must be positive and sum to T={T}")
    gamma = np.zeros((T * n_u, len(block_lengths) * n_u))
    k = 0
    for b, length in enumerate(block_lengths):
        for _ in range(length):
            gamma[k * n_u : (k + 1) * n_u, b * n_u : (b + 1) * n_u] = np.eye(n_u)
            k += 1
    return gamma


def selection_u(k: int, T: int, n_u: int) -> np.ndarray:
    """S_k^u: picks command sample ``k`` (1-based) out of the stacked sequence."""
    S = np.zeros((n_u, T * n_u))
    S[:, (k - 1) * n_u : k * n_u] = np.eye(n_u)
    return S


def selection_x(k: int, T: int, n_x: int) -> np.ndarray:
    """S_k^x: picks predicted state ``k`` (2..T+1) out of ``(x_2, ..., x_{T+1})``."""
    S = np.zeros((n_x, T * n_x))
    S[:, (k - 2) * n_x : (k - 1) * n_x] = np.eye(n_x)
    return S


@dataclass(frozen=True)
class PredictionOperator:
    omega: np.ndarray  # (T*n_x, n_mu)
    basis: MonomialBasis
    T: int
    gamma: np.ndarray  # (T*n_u, n_c)
    n_x: int
    x1: np.ndarray

    @property
    def n_c(self) -> int:
        return self.gamma.shape[1]

    @property
    def n_u(self) -> int:
        return self.gamma.shape[0] // self.T

    def block(self, k: int) -> np.ndarray:
        """F_k, the coefficient block predicting x_{k+1}."""
        return self.omega[(k - 1) * self.n_x : k * self.n_x]

    def state_poly(self) -> PolyVec:
        return PolyVec(self.omega, self.basis)


def _check_gamma(gamma: np.ndarray, T: int, n_u: int) -> np.ndarray:
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if gamma.shape[0] != T * n_u:
        raise ValueError(f"blocking matrix needs {T * n_u} rows, has {gamma.shape[0]}")
    if np.linalg.matrix_rank(gamma) < gamma.shape[1]:
        raise RankDeficientBlocking("blocking matrix must have full column rank")
    return gamma


def omega_from_x1(model: DiscreteModel, x1, gamma, T: int, alpha: int) -> PredictionOperator:
    """Run the coefficient recursion from a given first prediction ``x1``."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if not 1 <= alpha <= MAX_DEGREE:
        raise ValueError(f"degree must lie in [1, {MAX_DEGREE}], got {alpha}")
    n_x, n_u = model.n_x, model.n_u
    gamma = _check_gamma(gamma, T, n_u)
    basis = basis_build(gamma.shape[1], alpha)
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x_sub = PolyVec.constant(x1, basis)
    blocks = []
    for k in range(T):
        u_sub = PolyVec.affine(gamma[k * n_u : (k + 1) * n_u], 0.0, basis)
        x_sub = poly_compose_trunc(model.f, x_sub, u_sub, alpha)
        blocks.append(x_sub.coeffs)
    omega = np.vstack(blocks)
    omega.setflags(write=False)
    return PredictionOperator(omega, basis, T, gamma, n_x, x1)


def build_omega(model: DiscreteModel, x_t, u_t, gamma, T: int, alpha: int) -> PredictionOperator:
    """Prediction operator about the current measurement ``x_t`` and applied command ``u_t``."""
    x_t = np.atleast_1d(np.asarray(x_t, dtype=float))
    u_t = np.atleast_1d(np.asarray(u_t, dtype=float))
    if x_t.size != model.n_x or u_t.size != model.n_u:
        raise ValueError(f"expected x_t of size {model.n_x} and u_t of size {model.n_u}")
    return omega_from_x1(model, model(x_t, u_t), gamma, T, alpha)


def predict_sequence(op: PredictionOperator, c) -> np.ndarray:
    """``(x_2, ..., x_{T+1})`` stacked, for command parameters ``c``."""
    return op.omega @ eval_mu(op.basis, c)


def predict_many(op: PredictionOperator, cs) -> np.ndarray:
    """Predictions for each row of ``cs``; shape ``(N, T*n_x)``."""
    return eval_mu_batch(op.basis, cs) @ op.omega.T
