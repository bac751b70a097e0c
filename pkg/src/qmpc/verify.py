"""Randomised verification suites with brute-force oracles.

Each suite returns a :class:`SuiteReport`: one row per instance plus an
overall verdict.  The oracles here enumerate directly (grids, all bit words)
and never go through the solvers they check.
"""
from __future__ import annotations

import itertools
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .model import ContinuousDynamics, DiscreteModel
from .pmpc import MpcConfig, assemble_objective, eval_jp, eval_jp_batch, grad_jp, solve_classical
from .polyalg import PolyVec, basis_build, eval_mu_batch
from .predict import build_omega, omega_from_x1, predict_sequence
from .qubo import (
    BinaryEncoding,
    bp_eval_all,
    build_affine_qubo,
    decode,
    default_penalty,
    reduce_degree,
    to_ising,
)
from .solve import SaSchedule, solve_exhaustive, solve_sa


@dataclass
class SuiteReport:
    name: str
    rows: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)  # file name -> exported text
    passed: bool = True
    seconds: float = 0.0
    summary: str = ""

    def add(self, ok: bool, **row):
        row["ok"] = bool(ok)
        self.rows.append(row)
        self.passed &= bool(ok)

    def to_dict(self, timing: bool = True) -> dict:
        doc = {"suite": self.name, "passed": self.passed, "summary": self.summary, "rows": self.rows}
        if timing:
            doc["seconds"] = self.seconds
        return doc


def all_bits(m: int) -> np.ndarray:
    """Every 0/1 vector of length m, first entry most significant."""
    words = np.arange(1 << m, dtype=np.int64)
    return ((words[:, None] >> np.arange(m - 1, -1, -1)[None, :]) & 1).astype(float)


# -- instance generators --------------------------------------------------------


def random_linear_model(rng, n_x: int, n_u: int, drift: bool = True) -> DiscreteModel:
    """``x+ = A x + B u (+ d)`` with spectral radius of A at most 1."""
    A = rng.normal(size=(n_x, n_x))
    A *= rng.uniform(0.5, 1.0) / max(1.0, np.max(np.abs(np.linalg.eigvals(A))))
    B = rng.normal(size=(n_x, n_u))
    d = rng.normal(scale=0.1, size=n_x) if drift else np.zeros(n_x)
    f = PolyVec.affine(np.hstack([A, B]), d, basis_build(n_x + n_u, 1))
    return DiscreteModel(f, n_x, n_u, 1.0)


def random_blocks(rng, T: int, n_c: int) -> list[int]:
    cuts = np.sort(rng.choice(np.arange(1, T), size=n_c - 1, replace=False)) if n_c > 1 else []
    edges = [0, *cuts, T]
    return [int(b - a) for a, b in zip(edges[:-1], edges[1:])]


def random_affine_instance(rng, n_c: int, n_b: int, T: int, n_x: int | None = None):
    """A random input-affine MPC objective; returns ``(cfg, obj)``."""
    n_x = n_x or int(rng.integers(1, 3))
    model = random_linear_model(rng, n_x, 1)
    T = max(T, n_c)
    cfg = MpcConfig(
        T=T, Q=rng.uniform(0.5, 2.0, n_x), P=rng.uniform(0.5, 3.0, n_x), R=rng.uniform(0.05, 1.0),
        n_x=n_x, n_u=1, c_lo=rng.uniform(-2.0, -0.5, n_c), c_hi=rng.uniform(0.5, 2.0, n_c),
        gamma_blocks=random_blocks(rng, T, n_c), alpha=1, n_b=n_b,
    )
    op = omega_from_x1(model, rng.normal(size=n_x), cfg.gamma, T, 1)
    r = rng.normal(size=T * n_x)
    return cfg, assemble_objective(cfg, op, r)


# -- oracles ----------------------------------------------------------------------


def grid_oracle(obj, cfg: MpcConfig, points: int = 2001, chunk: int = 1 << 18):
    """Minimise the objective over a uniform ``points``-per-dimension grid of the box."""
    axes = [np.linspace(lo, hi, points) for lo, hi in zip(cfg.c_lo, cfg.c_hi)]
    n = points ** len(axes)
    best_J, best_c = np.inf, None
    for start in range(0, n, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, n)), (points,) * len(axes))
        cs = np.stack([ax[i] for ax, i in zip(axes, idx)], axis=1)
        J = eval_jp_batch(obj, eval_mu_batch(obj.basis, cs))
        k = int(np.argmin(J))
        if J[k] < best_J:
            best_J, best_c = float(J[k]), cs[k]
    return best_c, best_J


def sampled_lipschitz(obj, cfg: MpcConfig, rng, samples: int = 2000) -> float:
    """Max of ``||grad J||_1`` (the constant for the inf-norm) over corners and random points."""
    corners = np.array(list(itertools.product(*zip(cfg.c_lo, cfg.c_hi))))
    pts = np.vstack([corners, rng.uniform(cfg.c_lo, cfg.c_hi, size=(samples, cfg.c_lo.size))])
    return max(float(np.sum(np.abs(grad_jp(obj, c)))) for c in pts)


def brute_force_qubo(Q: np.ndarray) -> tuple[float, np.ndarray]:
    X = all_bits(Q.shape[0])
    H = np.einsum("ni,ij,nj->n", X, Q, X)
    return float(H.min()), X[int(np.argmin(H))]


# -- suites -----------------------------------------------------------------------


def qubo_identity_suite(n_instances: int = 25, seed: int = 0, tol: float = 1e-9) -> SuiteReport:
    """``H(xi) + constant == J_P(decode(xi))`` on every assignment of random affine instances."""
    rep = SuiteReport("qubo-identity")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for k in range(n_instances):
        n_c, n_b, T = int(rng.integers(1, 4)), int(rng.integers(1, 5)), int(rng.integers(2, 7))
        cfg, obj = random_affine_instance(rng, n_c, n_b, T)
        q = build_affine_qubo(obj, BinaryEncoding(cfg.c_lo, cfg.c_hi, n_b))
        X = all_bits(q.m)
        H = np.einsum("ni,ij,nj->n", X, q.Q, X) + q.constant
        cs = cfg.c_lo + (X.reshape(-1, n_c, n_b) @ (2.0 ** np.arange(n_b - 1, -1, -1))) * (cfg.c_hi - cfg.c_lo) / (2**n_b - 1)
        J = np.array([eval_jp(obj, c) for c in cs])
        err = float(np.max(np.abs(H - J) / np.maximum(1.0, np.abs(J))))
        rep.add(err <= tol, instance=k, n_c=n_c, n_b=n_b, T=cfg.T, m=q.m, max_rel_err=err)
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"{sum(r['ok'] for r in rep.rows)}/{n_instances} instances exact to {tol:g}"
    return rep


def discretisation_bound_suite(n_instances: int = 10, seed: int = 1, n_bits=range(2, 9), points: int = 2001) -> SuiteReport:
    """Discretisation bound of the exhaustive QUBO solution against a fine grid oracle.

    Checks ``||c_q - c_g||_inf <= ||c_hi - c_lo||_inf / (2^n_b - 1)`` and
    ``|J(c_q) - J(c_g)| <= gamma * ||c_hi - c_lo||_inf / (2^n_b - 1)`` (plus
    round-off) where ``c_g`` is the oracle grid minimiser and ``gamma`` the
    sampled max of ``||grad J||_1``.  Rows also record the oracle's own grid
    step ``h_g``.
    """
    rep = SuiteReport("theorem1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for k in range(n_instances):
        n_c = 1 + k % 2
        cfg, obj = random_affine_instance(rng, n_c, 8, int(rng.integers(2, 7)))
        c_g, J_g = grid_oracle(obj, cfg, points)
        h_g = float(np.max(cfg.c_hi - cfg.c_lo)) / (points - 1)
        gamma = sampled_lipschitz(obj, cfg, rng)
        width = float(np.max(cfg.c_hi - cfg.c_lo))
        for n_b in n_bits:
            q = build_affine_qubo(obj, BinaryEncoding(cfg.c_lo, cfg.c_hi, n_b))
            c_q = decode(q, solve_exhaustive(q).xi_best)
            bound = width / (2**n_b - 1)
            dist = float(np.max(np.abs(c_q - c_g)))
            gap = abs(eval_jp(obj, c_q) - J_g)
            ok = dist <= bound and gap <= gamma * bound + 1e-9 * (1 + abs(J_g))
            rep.add(ok, instance=k, n_c=n_c, n_b=n_b, dist=dist, bound=bound, J_gap=gap, J_bound=gamma * bound,
                    oracle_step=h_g)
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"{sum(r['ok'] for r in rep.rows)}/{len(rep.rows)} (instance, n_b) rows within bound"
    return rep


def random_binary_poly(rng, n_vars: int, max_degree: int, n_terms: int) -> dict:
    poly = {(): float(rng.normal())}
    for _ in range(n_terms):
        deg = int(rng.integers(1, max_degree + 1))
        mono = tuple(sorted(rng.choice(n_vars, size=min(deg, n_vars), replace=False).tolist()))
        poly[mono] = poly.get(mono, 0.0) + float(rng.normal())
    return poly


def gadget_suite(n_instances: int = 50, seed: int = 2, tol: float = 1e-9) -> SuiteReport:
    """Quadratised polynomial plus Rosenberg penalties has the same minimum and minimiser set."""
    rep = SuiteReport("gadget")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for k in range(n_instances):
        n = int(rng.integers(3, 7))
        poly = random_binary_poly(rng, n, 4, int(rng.integers(3, 12)))
        lam = 2.0 * sum(abs(v) for v in poly.values())
        reduced, U, m = reduce_degree(poly, 2, n)
        Xo = all_bits(n)
        vo = bp_eval_all(poly, Xo)
        Xr = all_bits(m)
        vr = bp_eval_all(reduced, Xr) + lam * np.einsum("ni,ij,nj->n", Xr, U, Xr)
        min_o, min_r = vo.min(), vr.min()
        set_o = {tuple(r) for r in Xo[vo <= min_o + tol].astype(int)}
        set_r = {tuple(r[:n]) for r in Xr[vr <= min_r + tol].astype(int)}
        ok = abs(min_o - min_r) <= tol * (1 + abs(min_o)) and set_o == set_r
        rep.add(ok, instance=k, n_vars=n, m=m, min_original=float(min_o), min_reduced=float(min_r))
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"{sum(r['ok'] for r in rep.rows)}/{n_instances} polynomials preserved"
    return rep


def ising_suite(n_instances: int = 25, seed: int = 3, tol: float = 1e-12) -> SuiteReport:
    from .qubo import QuboProblem

    rep = SuiteReport("ising")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for k in range(n_instances):
        m = int(rng.integers(1, 13))
        q = QuboProblem(rng.normal(size=(m, m)))
        ising = to_ising(q)
        X = all_bits(m)
        S = 2 * X - 1
        H = np.einsum("ni,ij,nj->n", X, q.Q, X)
        E = np.einsum("ni,ij,nj->n", S, ising.J, S) + S @ ising.h + ising.offset
        err = float(np.max(np.abs(H - E)))
        rep.add(err <= tol, instance=k, m=m, max_abs_err=err)
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"{sum(r['ok'] for r in rep.rows)}/{n_instances} identities within {tol:g}"
    return rep


def prediction_suite(n_instances: int = 10, seed: int = 4, tol: float = 1e-10) -> SuiteReport:
    """Linear models: factorised prediction equals direct iteration.  Quadratic input:
    the affine truncation error scales as ``||c||^2``."""
    rep = SuiteReport("prediction")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    for k in range(n_instances):
        n_x, n_u, T = int(rng.integers(1, 5)), int(rng.integers(1, 3)), int(rng.integers(2, 11))
        model = random_linear_model(rng, n_x, n_u)
        n_blocks = int(rng.integers(1, T + 1))
        from .predict import blocking_matrix

        gamma = blocking_matrix(T, n_u, random_blocks(rng, T, n_blocks))
        x_t, u_t = rng.normal(size=n_x), rng.normal(size=n_u)
        op = build_omega(model, x_t, u_t, gamma, T, 1)
        err = 0.0
        for _ in range(20):
            c = rng.normal(size=gamma.shape[1])
            x = model(x_t, u_t)
            direct = []
            for u in (gamma @ c).reshape(T, n_u):
                x = model(x, u)
                direct.append(x)
            err = max(err, float(np.max(np.abs(predict_sequence(op, c) - np.concatenate(direct)))))
        rep.add(err <= tol, case="linear", instance=k, n_x=n_x, n_u=n_u, T=T, max_abs_err=err)
    # x+ = 0.8 x + u + 0.5 u^2, affine expansion in c
    f = PolyVec.from_terms(1, basis_build(2, 2), [(0, (1, 0), 0.8), (0, (0, 1), 1.0), (0, (0, 2), 0.5)])
    model = DiscreteModel(f, 1, 1, 1.0)
    T = 4
    op = omega_from_x1(model, [0.3], np.eye(T), T, 1)
    direction = rng.normal(size=T)
    direction /= np.linalg.norm(direction)
    ratios = {}
    for scale in (1e-1, 1e-2, 1e-3):
        c = scale * direction
        exact = model.iterate([0.3], c.reshape(T, 1)).ravel()
        ratios[scale] = float(np.linalg.norm(predict_sequence(op, c) - exact) / scale**2)
    stable = abs(ratios[1e-2] - ratios[1e-3]) / ratios[1e-3] < 0.10
    rep.add(stable, case="quadratic-truncation", ratios={str(k): v for k, v in ratios.items()})
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"{sum(r['ok'] for r in rep.rows)}/{len(rep.rows)} checks"
    return rep


def sa_quality_suite(n_instances: int = 100, m: int = 12, restarts: int = 20, sweeps: int = 2000,
                     seed: int = 5, required: int = 95) -> SuiteReport:
    """Best-of-restarts annealing against the brute-force optimum."""
    from .qubo import QuboProblem

    rep = SuiteReport("sa-quality")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    hits = 0
    for k in range(n_instances):
        q = QuboProblem(rng.normal(size=(m, m)))
        H_opt, _ = brute_force_qubo(q.Q)
        res = solve_sa(q, SaSchedule(sweeps=sweeps, restarts=restarts, seed=k))
        hit = res.H_best <= H_opt + 1e-9 * (1 + abs(H_opt))
        below = res.H_best < H_opt - 1e-9 * (1 + abs(H_opt))
        hits += hit
        rep.rows.append(dict(instance=k, H_opt=H_opt, H_sa=res.H_best, hit=bool(hit), ok=not below))
        if below:
            rep.passed = False
    rep.passed &= hits >= required
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"SA matched the optimum on {hits}/{n_instances} instances (need {required})"
    return rep


def benchmark_plant() -> ContinuousDynamics:
    """Scalar first-order lag ``xdot = -x + u``."""
    f = PolyVec.from_terms(1, basis_build(2, 1), [(0, (1, 0), -1.0), (0, (0, 1), 1.0)])
    return ContinuousDynamics(f, 1, 1)


def benchmark_mpc(n_b: int = 8) -> MpcConfig:
    return MpcConfig(T=10, Q=10.0, P=10.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=3.0,
                     gamma_blocks=(1, 9), alpha=1, n_b=n_b)


def closed_loop_suite(steps: int = 100, seed: int = 0, sweeps: int = 1000, restarts: int = 10,
                      record_timing: bool = False) -> SuiteReport:
    """SA-QUBO against classical control of the benchmark plant under a unit step.

    Trajectories and metrics are kept as artifacts; solve times are logged as
    zero unless ``record_timing`` so the exports are reproducible.
    """
    from .sim import SimConfig, compute_metrics, run_closed_loop, trajectory_csv

    rep = SuiteReport("closed-loop")
    t0 = time.perf_counter()
    mpc = benchmark_mpc()
    runs = {}
    for backend in ("classical", "sa"):
        cfg = SimConfig(benchmark_plant(), mpc, 0.05, steps, (0.0,), [[1.0]], backend=backend, seed=seed,
                        schedule=SaSchedule(sweeps=sweeps, restarts=restarts), record_timing=record_timing)
        runs[backend] = run_closed_loop(cfg)
        rep.artifacts[f"trajectory_{backend}.csv"] = trajectory_csv(runs[backend])
        rep.artifacts[f"metrics_{backend}.json"] = json.dumps(compute_metrics(runs[backend]), indent=1, sort_keys=True)
    width = float(np.max(mpc.c_hi - mpc.c_lo))
    du = float(np.max(np.abs(runs["sa"].u_cmd - runs["classical"].u_cmd)))
    cost = {b: compute_metrics(t)["total_cost"] for b, t in runs.items()}
    rel = abs(cost["sa"] - cost["classical"]) / cost["classical"]
    rep.add(du <= 2 * width / 255, check="command", max_diff=du, bound=2 * width / 255)
    rep.add(rel <= 0.02, check="cost", classical=cost["classical"], sa=cost["sa"], rel_diff=rel)
    rep.add(all(t.delay_ok() for t in runs.values()), check="delay")
    rep.seconds = time.perf_counter() - t0
    rep.summary = f"max command diff {du:.4g} (bound {2 * width / 255:.4g}), cost diff {100 * rel:.3g}%"
    return rep


SUITES = {
    "qubo-identity": qubo_identity_suite,
    "theorem1": discretisation_bound_suite,
    "gadget": gadget_suite,
    "ising": ising_suite,
    "prediction": prediction_suite,
    "sa-quality": sa_quality_suite,
    "closed-loop": closed_loop_suite,
}
