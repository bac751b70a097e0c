"""Polynomial model predictive control compiled to QUBO form.

Modules: ``polyalg`` (truncated polynomial algebra), ``model`` (dynamics and
integrators), ``predict`` (prediction matrix), ``pmpc`` (objective and
classical solver), ``qubo`` (encoding, compilation, Ising form, file formats),
``solve`` (exhaustive and annealing solvers), ``sim`` (closed loop) and
``cli``.
"""
from .model import ContinuousDynamics, DiscreteModel, euler_discretize, plant_step_rk4
from .pmpc import MpcConfig, assemble_objective, eval_jp, rhs_controller_step, solve_classical
from .polyalg import PolyVec, basis_build, poly_compose_trunc, poly_mul_trunc
from .predict import PredictionOperator, blocking_matrix, build_omega, predict_sequence
from .qubo import (
    BinaryEncoding,
    QuboProblem,
    build_affine_qubo,
    compile_polynomial_qubo,
    decode,
    to_ising,
)
from .sim import SimConfig, Trajectory, compute_metrics, run_closed_loop
from .solve import SaSchedule, solve_exhaustive, solve_sa

__version__ = "0.1.0"

__all__ = [
    "BinaryEncoding", "ContinuousDynamics", "DiscreteModel", "MpcConfig", "PolyVec", "PredictionOperator",
    "QuboProblem", "SaSchedule", "SimConfig", "Trajectory", "assemble_objective", "basis_build",
    "blocking_matrix", "build_affine_qubo", "build_omega", "compile_polynomial_qubo", "compute_metrics",
    "decode", "euler_discretize", "eval_jp", "plant_step_rk4", "poly_compose_trunc", "poly_mul_trunc",
    "predict_sequence", "rhs_controller_step", "run_closed_loop", "solve_classical", "solve_exhaustive",
    "solve_sa", "to_ising",
]
