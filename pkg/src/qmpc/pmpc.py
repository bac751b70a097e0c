"""Polynomial MPC objective, a classical box-constrained reference solver and the
per-sample receding-horizon controller."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .model import DiscreteModel
from .polyalg import eval_mu, jacobian_mu
from .predict import PredictionOperator, blocking_matrix, build_omega, predict_sequence

BACKENDS = ("classical", "exhaustive", "sa")


class NonFiniteObjective(FloatingPointError):
    pass


def _diag(w, n: int, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim == 2:
        if np.any(w != np.diag(np.diag(w))):
            raise ValueError(f"{name} must be diagonal")
        w = np.diag(w)
    w = np.broadcast_to(w, (n,)).copy()
    if np.any(w < 0):
        raise ValueError(f"{name} must have non-negative entries")
    return w


@dataclass(frozen=True)
class MpcConfig:
    """Horizon, weights, move blocking, expansion degree and command box.

    ``Q``, ``P``, ``R`` hold the diagonals (scalars broadcast).  ``c_lo`` and
    ``c_hi`` bound the reduced command vector and broadcast to its length.
    """

    T: int
    Q: object
    P: object
    R: object
    n_x: int
    n_u: int
    c_lo: object
    c_hi: object
    gamma_blocks: tuple | None = None
    alpha: int = 1
    n_b: int = 8
    multistarts: int = 8

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("horizon must be >= 1")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("Q", _diag(self.Q, self.n_x, "Q"))
        set_("P", _diag(self.P, self.n_x, "P"))
        set_("R", _diag(self.R, self.n_u, "R"))
        if self.gamma_blocks is not None:
            set_("gamma_blocks", tuple(int(b) for b in self.gamma_blocks))
        n_c = self.gamma.shape[1]
        lo = np.broadcast_to(np.asarray(self.c_lo, dtype=float), (n_c,)).copy()
        hi = np.broadcast_to(np.asarray(self.c_hi, dtype=float), (n_c,)).copy()
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(lo < hi)):
            raise ValueError("command bounds must be finite with c_lo < c_hi")
        set_("c_lo", lo)
        set_("c_hi", hi)
        if self.n_b < 1:
            raise ValueError("n_b must be >= 1")

    @property
    def gamma(self) -> np.ndarray:
        return blocking_matrix(self.T, self.n_u, self.gamma_blocks)

    @property
    def n_c(self) -> int:
        return self.gamma.shape[1]

    def W_u(self) -> np.ndarray:
        return np.diag(np.tile(self.R, self.T))

    def W_x(self) -> np.ndarray:
        return np.diag(np.concatenate([np.tile(self.Q, self.T - 1), self.P]))


@dataclass(frozen=True)
class ObjectiveData:
    W_u: np.ndarray
    W_x: np.ndarray
    W_mu: np.ndarray
    omega_op: PredictionOperator
    r: np.ndarray
    lin: np.ndarray = field(repr=False)  # omega^T W_x r

    @property
    def basis(self):
        return self.omega_op.basis

    @property
    def r_cost(self) -> float:
        """The constant ``r^T W_x r`` dropped from the polynomial objective."""
        return float(self.r @ self.W_x @ self.r)


def selection_c(basis) -> np.ndarray:
    """S^c with ``c = S^c mu(c)``."""
    S = np.zeros((basis.n_vars, basis.size))
    S[np.arange(basis.n_vars), basis.linear_indices()] = 1.0
    return S


def assemble_objective(cfg: MpcConfig, op: PredictionOperator, r) -> ObjectiveData:
    r = np.asarray(r, dtype=float).ravel()
    if r.size != op.omega.shape[0]:
        raise ValueError(f"reference must have length {op.omega.shape[0]}, got {r.size}")
    if op.gamma.shape != cfg.gamma.shape or op.T != cfg.T:
        raise ValueError("prediction operator does not match the configuration")
    W_u, W_x = cfg.W_u(), cfg.W_x()
    Sc = selection_c(op.basis)
    G = op.gamma @ Sc
    W_mu = G.T @ W_u @ G + op.omega.T @ W_x @ op.omega
    W_mu = 0.5 * (W_mu + W_mu.T)
    lin = op.omega.T @ (W_x @ r)
    return ObjectiveData(W_u, W_x, W_mu, op, r, lin)


def eval_jp(obj: ObjectiveData, c) -> float:
    """``mu^T W_mu mu - 2 r^T W_x omega mu``."""
    mu = eval_mu(obj.basis, c)
    return float(mu @ obj.W_mu @ mu - 2.0 * obj.lin @ mu)


def eval_jp_batch(obj: ObjectiveData, mus: np.ndarray) -> np.ndarray:
    """Objective for each row of a monomial matrix ``(N, n_mu)``."""
    return np.einsum("ij,jk,ik->i", mus, obj.W_mu, mus) - 2.0 * mus @ obj.lin


def grad_jp(obj: ObjectiveData, c) -> np.ndarray:
    mu = eval_mu(obj.basis, c)
    return jacobian_mu(obj.basis, c).T @ (2.0 * (obj.W_mu @ mu) - 2.0 * obj.lin)


def tracking_cost(cfg: MpcConfig, model: DiscreteModel, x1, c, r) -> float:
    """Horizon cost evaluated by iterating the model itself (no expansion)."""
    u_seq = (cfg.gamma @ np.asarray(c, dtype=float)).reshape(cfg.T, cfg.n_u)
    xs = model.iterate(x1, u_seq)
    err = np.asarray(r, dtype=float).reshape(cfg.T, cfg.n_x) - xs
    cost = float(np.sum(u_seq**2 * cfg.R))
    cost += float(np.sum(err[:-1] ** 2 * cfg.Q)) + float(np.sum(err[-1] ** 2 * cfg.P))
    return cost


def projected_gradient_norm(obj: ObjectiveData, cfg: MpcConfig, c) -> float:
    c = np.asarray(c, dtype=float)
    g = grad_jp(obj, c)
    return float(np.max(np.abs(np.clip(c - g, cfg.c_lo, cfg.c_hi) - c)))


def _pgd(fun, grad, x, lo, hi, tol, max_iter):
    x = np.clip(x, lo, hi)
    f, g = fun(x), grad(x)
    step = 1.0 / max(np.max(np.abs(g)), 1.0)
    for _ in range(max_iter):
        if np.max(np.abs(np.clip(x - g, lo, hi) - x)) < tol:
            break
        while True:
            xn = np.clip(x - step * g, lo, hi)
            fn = fun(xn)
            if not np.isfinite(fn):
                raise NonFiniteObjective(f"objective is {fn} at {xn}")
            if fn <= f + 1e-4 * g @ (xn - x) or step < 1e-18:
                break
            step *= 0.5
        s = xn - x
        gn = grad(xn)
        sy = s @ (gn - g)
        step = (s @ s) / sy if sy > 0 else 2.0 * step
        x, f, g = xn, fn, gn
        if not np.any(s):
            break
    return x


def _newton_polish(H, grad, x, lo, hi, tol, rounds):
    # active-set refinement for a quadratic objective with constant Hessian H
    for _ in range(rounds):
        g = grad(x)
        if np.max(np.abs(np.clip(x - g, lo, hi) - x)) < tol:
            break
        free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        if not free.any():
            break
        d = np.zeros_like(x)
        d[free] = np.linalg.lstsq(H[np.ix_(free, free)], -g[free], rcond=None)[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            room = np.where(d > 0, (hi - x) / d, np.where(d < 0, (lo - x) / d, np.inf))
        tau = min(1.0, float(np.min(room)))
        x = np.clip(x + tau * d, lo, hi)
    return x


def solve_classical(obj: ObjectiveData, cfg: MpcConfig, tol: float = 1e-10, max_iter: int = 5000):
    """Box-constrained minimisation of the polynomial objective.

    Projected gradient descent (Barzilai-Borwein steps, Armijo backtracking)
    from ``cfg.multistarts`` points of an unscrambled Sobol sequence over the
    box.  For the affine model the objective is a convex quadratic and each
    run is finished with active-set Newton steps.  Returns ``(c_star, J_star)``;
    ties go to the lowest start index.
    """
    lo, hi = cfg.c_lo, cfg.c_hi
    n_c = lo.size
    fun = lambda c: eval_jp(obj, c)  # noqa: E731
    grad = lambda c: grad_jp(obj, c)  # noqa: E731
    starts = qmc.Sobol(d=n_c, scramble=False).random(max(cfg.multistarts, 1))
    starts = 0.5 * (lo + hi) + (starts - 0.5) * (hi - lo) * 0.999
    H = None
    if obj.basis.degree == 1:
        Sc = selection_c(obj.basis)
        H = 2.0 * Sc @ obj.W_mu @ Sc.T
    best_c, best_J = None, np.inf
    for x0 in starts:
        x = _pgd(fun, grad, x0, lo, hi, tol, max_iter)
        if H is not None:
            x = _newton_polish(H, grad, x, lo, hi, tol, rounds=2 * n_c + 4)
        J = fun(x)
        if not np.isfinite(J):
            raise NonFiniteObjective(f"objective is {J} at {x}")
        if J < best_J:
            best_c, best_J = x, J
    return best_c, best_J


@dataclass(frozen=True)
class ControllerStep:
    u: np.ndarray
    c: np.ndarray
    J_P: float
    J_full: float
    wall_time: float
    backend: str
    n_qubo_vars: int = 0


def rhs_controller_step(
    cfg: MpcConfig,
    model: DiscreteModel,
    x_t,
    u_t,
    r_window,
    backend: str = "classical",
    schedule=None,
    constraints=(),
    penalty: float | None = None,
) -> ControllerStep:
    """One receding-horizon solve: returns the first command sample of the optimum.

    ``r_window`` holds the reference for ``t+1 .. t+T+1`` (``T+1`` rows); the
    first row is not weighted by the objective.
    """
    from . import qubo, solve

    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; choose from {BACKENDS}")
    t0 = time.perf_counter()
    r_window = np.asarray(r_window, dtype=float).reshape(-1, cfg.n_x)
    if r_window.shape[0] != cfg.T + 1:
        raise ValueError(f"reference window must cover T+1={cfg.T + 1} steps")
    r = r_window[1:].ravel()
    op = build_omega(model, x_t, u_t, cfg.gamma, cfg.T, cfg.alpha)
    obj = assemble_objective(cfg, op, r)
    m = 0
    if backend == "classical":
        c, J = solve_classical(obj, cfg)
    else:
        enc = qubo.BinaryEncoding(cfg.c_lo, cfg.c_hi, cfg.n_b)
        if cfg.alpha == 1:
            q = qubo.build_affine_qubo(obj, enc)
        else:
            q = qubo.compile_polynomial_qubo(obj, enc, penalty)
        if constraints:
            blocks, offset = [], q.m
            for con in constraints:
                blk = qubo.compile_constraint(con, enc, offset=offset, omega_op=op)
                blocks.append(blk)
                offset = blk.m
            q = qubo.assemble_constrained_qubo(q, blocks)
        m = q.m
        if backend == "exhaustive":
            res = solve.solve_exhaustive(q)
        else:
            res = solve.solve_sa(q, schedule or solve.SaSchedule())
        c = qubo.decode(q, res.xi_best)
        J = eval_jp(obj, c)
    u = (cfg.gamma[: cfg.n_u] @ c).copy()
    return ControllerStep(u, c, J, J + obj.r_cost, time.perf_counter() - t0, backend, m)


def predicted_states(cfg: MpcConfig, model: DiscreteModel, x_t, u_t, c) -> np.ndarray:
    op = build_omega(model, x_t, u_t, cfg.gamma, cfg.T, cfg.alpha)
    return predict_sequence(op, c).reshape(cfg.T, cfg.n_x)
