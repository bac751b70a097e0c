"""Closed-loop receding-horizon simulation against the RK4-integrated plant.

At sample ``i`` the state is measured and a command is computed; that command
is held on ``[t_{i+1}, t_{i+2})``, so the plant always runs with the command
computed one sample earlier (zero at start).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .model import ContinuousDynamics, euler_discretize, plant_step_rk4
from .pmpc import MpcConfig, rhs_controller_step
from .solve import SaSchedule


class SimulationError(RuntimeError):
    """A controller or plant step failed; ``partial`` holds the steps completed so far."""

    def __init__(self, message, partial: "Trajectory"):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SimConfig:
    plant: ContinuousDynamics
    mpc: MpcConfig
    T_s: float
    steps: int
    x0: tuple
    reference: object  # (N, n_x) array, rows past the end hold the last value
    backend: str = "classical"
    seed: int = 0
    T_d: float | None = None
    schedule: SaSchedule | None = None
    substeps: int = 1
    constraints: tuple = ()
    penalty: float | None = None
    record_timing: bool = True

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.T_d is not None and not np.isclose(self.T_d, self.T_s, rtol=1e-12, atol=0):
            raise ValueError(f"model discretisation time {self.T_d} must equal the sampling time {self.T_s}")
        ref = np.atleast_2d(np.asarray(self.reference, dtype=float))
        if ref.shape[1] != self.plant.n_x:
            ref = ref.reshape(-1, self.plant.n_x)
        object.__setattr__(self, "reference", ref)

    def ref(self, i: int) -> np.ndarray:
        return self.reference[min(i, self.reference.shape[0] - 1)]


@dataclass
class Trajectory:
    """Per-sample log.  ``u[i]`` is the command held on ``[t_i, t_{i+1})`` and
    ``u_cmd[i]`` the command computed from the measurement ``x[i]``."""

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    r: np.ndarray
    J: np.ndarray
    J_full: np.ndarray
    wall_time: np.ndarray
    u_cmd: np.ndarray
    c: np.ndarray
    backend: str
    mpc: MpcConfig = field(repr=False)
    x_final: np.ndarray | None = None

    def __len__(self):
        return self.t.size

    def delay_ok(self) -> bool:
        return bool(np.all(self.u[0] == 0) and np.array_equal(self.u[1:], self.u_cmd[:-1]))


def _assemble(rows, mpc, backend, x_final=None) -> Trajectory:
    n_x, n_u = mpc.n_x, mpc.n_u
    col = lambda k, w: np.array([r[k] for r in rows], dtype=float).reshape(len(rows), w)  # noqa: E731
    return Trajectory(
        t=col("t", 1)[:, 0],
        x=col("x", n_x),
        u=col("u", n_u),
        r=col("r", n_x),
        J=col("J", 1)[:, 0],
        J_full=col("J_full", 1)[:, 0],
        wall_time=col("wall", 1)[:, 0],
        u_cmd=col("u_cmd", n_u),
        c=col("c", mpc.n_c),
        backend=backend,
        mpc=mpc,
        x_final=x_final,
    )


def run_closed_loop(cfg: SimConfig) -> Trajectory:
    mpc, plant = cfg.mpc, cfg.plant
    if (mpc.n_x, mpc.n_u) != (plant.n_x, plant.n_u):
        raise ValueError("MPC configuration and plant disagree on dimensions")
    model = euler_discretize(plant, cfg.T_s if cfg.T_d is None else cfg.T_d)
    sched = cfg.schedule or SaSchedule()
    x = np.asarray(cfg.x0, dtype=float).reshape(plant.n_x)
    u = np.zeros(plant.n_u)
    rows = []
    for i in range(cfg.steps):
        window = np.array([cfg.ref(i + k) for k in range(1, mpc.T + 2)])
        try:
            step = rhs_controller_step(
                mpc, model, x, u, window, cfg.backend,
                schedule=replace(sched, seed=cfg.seed * 1_000_003 + i),
                constraints=cfg.constraints, penalty=cfg.penalty,
            )
        except Exception as exc:
            raise SimulationError(f"controller failed at step {i}: {exc}", _assemble(rows, mpc, cfg.backend, x)) from exc
        rows.append(dict(
            t=i * cfg.T_s, x=x, u=u, r=cfg.ref(i), J=step.J_P, J_full=step.J_full,
            wall=step.wall_time if cfg.record_timing else 0.0, u_cmd=step.u, c=step.c,
        ))
        try:
            x = plant_step_rk4(plant, x, u, cfg.T_s, cfg.substeps)
        except FloatingPointError as exc:
            raise SimulationError(f"plant diverged at step {i}: {exc}", _assemble(rows, mpc, cfg.backend)) from exc
        u = step.u
    return _assemble(rows, mpc, cfg.backend, x)


def compute_metrics(traj: Trajectory) -> dict:
    """Flat metrics record.

    Keys: ``steps``; ``rms_tracking_error`` over all samples and states;
    ``total_cost`` = sum of ``u'Ru + e'Qe`` over the logged samples with
    ``e = r - x``; ``mean_wall_ms``/``max_wall_ms`` per controller solve;
    ``saturation_fraction`` of computed command components sitting on a bound.
    """
    mpc = traj.mpc
    if len(traj) == 0:
        return dict(steps=0, rms_tracking_error=0.0, total_cost=0.0, mean_wall_ms=0.0,
                    max_wall_ms=0.0, saturation_fraction=0.0)
    err = traj.r - traj.x
    cost = float(np.sum(traj.u**2 * mpc.R) + np.sum(err**2 * mpc.Q))
    lo, hi = mpc.c_lo[: mpc.n_u], mpc.c_hi[: mpc.n_u]
    tol = 1e-9 * (hi - lo)
    sat = (np.abs(traj.u_cmd - lo) <= tol) | (np.abs(traj.u_cmd - hi) <= tol)
    return dict(
        steps=int(len(traj)),
        rms_tracking_error=float(np.sqrt(np.mean(err**2))),
        total_cost=cost,
        mean_wall_ms=float(np.mean(traj.wall_time) * 1e3),
        max_wall_ms=float(np.max(traj.wall_time) * 1e3),
        saturation_fraction=float(np.mean(sat)),
    )


def _fmt(v) -> str:
    return f"{float(v):.17g}"


def trajectory_csv(traj: Trajectory) -> str:
    n_x, n_u = traj.x.shape[1], traj.u.shape[1]
    header = (["t"] + [f"x_{i + 1}" for i in range(n_x)] + [f"u_{i + 1}" for i in range(n_u)]
              + [f"r_{i + 1}" for i in range(n_x)] + ["J", "wall_ms", "backend"])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(traj)):
        vals = [traj.t[i], *traj.x[i], *traj.u[i], *traj.r[i], traj.J[i], traj.wall_time[i] * 1e3]
        w.writerow([_fmt(v) for v in vals] + [traj.backend])
    return buf.getvalue()


def write_trajectory_csv(traj: Trajectory, path) -> None:
    Path(path).write_text(trajectory_csv(traj))


def read_trajectory_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {k: [r[k] for r in rows] for k in rows[0]} if rows else {}


def write_metrics_json(metrics: dict, path) -> None:
    Path(path).write_text(json.dumps(metrics, indent=1, sort_keys=True) + "\n")
