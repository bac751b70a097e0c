"""``qmpc`` command line: compile, solve, simulate, verify, export.

Every command prints one JSON line first (machine readable) and then a short
human summary.  Exit codes: 0 success, 2 configuration error, 3 numerical or
solver failure, 4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import qubo as qb
from .model import ModelFileError, dynamics_from_dict, euler_discretize
from .pmpc import MpcConfig, assemble_objective
from .predict import RankDeficientBlocking, build_omega
from .sim import SimConfig, compute_metrics, run_closed_loop, write_metrics_json, write_trajectory_csv
from .solve import SaSchedule, solve_exhaustive, solve_sa

log = logging.getLogger("qmpc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERIFY = 0, 2, 3, 4

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_num_or_vec = {"oneOf": [_num, _vec]}
_pos_int = {"type": "integer", "minimum": 1}

_TERM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["row", "coeff"],
    "properties": {
        "row": {"type": "integer", "minimum": 0},
        "exponents_x": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "exponents_u": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "coeff": _num,
    },
}

MODEL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["n_x", "n_u", "terms"],
    "properties": {"n_x": _pos_int, "n_u": _pos_int, "T_d": {"type": "number", "exclusiveMinimum": 0},
                   "terms": {"type": "array", "items": _TERM}},
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "ExperimentConfig",
    "type": "object",
    "additionalProperties": False,
    "required": ["model", "mpc"],
    "properties": {
        "model": {"oneOf": [{"type": "string"}, MODEL_SCHEMA]},
        "mpc": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T", "Q", "P", "R", "c_lo", "c_hi"],
            "properties": {
                "T": _pos_int, "Q": _num_or_vec, "P": _num_or_vec, "R": _num_or_vec,
                "c_lo": _num_or_vec, "c_hi": _num_or_vec,
                "gamma_blocks": {"type": "array", "items": _pos_int, "minItems": 1},
                "alpha": {"type": "integer", "minimum": 1, "maximum": 6},
                "n_b": {"type": "integer", "minimum": 1, "maximum": 52},
                "multistarts": _pos_int,
            },
        },
        "sim": {
            "type": "object",
            "additionalProperties": False,
            "required": ["T_s", "steps", "x0", "reference"],
            "properties": {
                "T_s": {"type": "number", "exclusiveMinimum": 0},
                "steps": _pos_int,
                "x0": _vec,
                "reference": {"type": "array", "minItems": 1, "items": {"oneOf": [_num, _vec]}},
                "substeps": _pos_int,
                "record_timing": {"type": "boolean"},
            },
        },
        "state": {
            "type": "object",
            "additionalProperties": False,
            "required": ["x"],
            "properties": {
                "x": _vec, "u": _vec,
                "reference": {"type": "array", "minItems": 1, "items": {"oneOf": [_num, _vec]}},
            },
        },
        "constraints": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["step", "a", "bound"],
                "properties": {
                    "step": {"type": "integer", "minimum": 2},
                    "a": _vec,
                    "bound": _num,
                    "sense": {"enum": ["le", "ge", "eq"]},
                    "slack_bits": {"type": "integer", "minimum": 0, "maximum": 16},
                    "C_s": {"type": "number", "exclusiveMinimum": 0},
                    "weight": {"type": "number", "exclusiveMinimum": 0},
                    "penalty": {"type": "number", "exclusiveMinimum": 0},
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "backend": {"enum": ["classical", "exhaustive", "sa"]},
                "sweeps": _pos_int,
                "restarts": _pos_int,
                "seed": {"type": "integer", "minimum": 0},
                "beta_start": {"type": "number", "exclusiveMinimum": 0},
                "beta_end": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "penalty": {"type": "number", "exclusiveMinimum": 0},
        "out": {"type": "string"},
    },
}


class ConfigError(ValueError):
    pass


class VerificationFailed(RuntimeError):
    pass


# -- configuration ------------------------------------------------------------


def load_config(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    validate_config(doc)
    doc["_base"] = str(path.parent)
    return doc


def validate_config(doc: dict) -> None:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None


def _model(doc):
    spec = doc["model"]
    if isinstance(spec, str):
        p = Path(spec)
        if not p.is_absolute():
            p = Path(doc.get("_base", ".")) / p
        try:
            spec = json.loads(p.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load model file {p}: {exc}") from None
        try:
            jsonschema.validate(spec, MODEL_SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"model file {p}: {exc.message}") from None
    try:
        return dynamics_from_dict(spec)
    except ModelFileError as exc:
        raise ConfigError(str(exc)) from None


def _mpc(doc, dyn, n_b=None) -> MpcConfig:
    m = dict(doc["mpc"])
    if n_b is not None:
        m["n_b"] = n_b
    blocks = m.pop("gamma_blocks", None)
    try:
        return MpcConfig(n_x=dyn.n_x, n_u=dyn.n_u, gamma_blocks=blocks, **m)
    except ValueError as exc:
        raise ConfigError(f"mpc: {exc}") from None


def _schedule(doc, args) -> SaSchedule:
    s = dict(doc.get("solver", {}))
    s.pop("backend", None)
    if getattr(args, "sweeps", None) is not None:
        s["sweeps"] = args.sweeps
    if getattr(args, "restarts", None) is not None:
        s["restarts"] = args.restarts
    if getattr(args, "seed", None) is not None:
        s["seed"] = args.seed
    try:
        return SaSchedule(**s)
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from None


def _backend(doc, args) -> str:
    return args.backend or doc.get("solver", {}).get("backend", "classical")


def _constraints(doc) -> tuple:
    return tuple(qb.StateConstraint(c["step"], tuple(c["a"]), c["bound"], c.get("sense", "le"), c.get("slack_bits"),
                                    c.get("C_s"), c.get("weight", 1.0), c.get("penalty"))
                 for c in doc.get("constraints", ()))


def _ref_rows(ref, n_x: int) -> np.ndarray:
    rows = [np.broadcast_to(np.asarray(r, dtype=float), (n_x,)) for r in ref]
    return np.array(rows)


def _T_d(doc, dyn_T_d):
    T_s = doc.get("sim", {}).get("T_s")
    if dyn_T_d is not None and T_s is not None and not np.isclose(dyn_T_d, T_s, rtol=1e-12, atol=0):
        raise ConfigError(f"model T_d={dyn_T_d} differs from sampling time T_s={T_s}")
    T_d = dyn_T_d if dyn_T_d is not None else T_s
    if T_d is None:
        raise ConfigError("need a discretisation time: model T_d or sim.T_s")
    return T_d


def _out_dir(doc, args) -> Path:
    out = Path(args.out or doc.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def compile_from_config(doc: dict, n_b: int | None = None):
    """Build the QUBO for the operating point in ``state``; returns ``(q, info)``."""
    dyn, dyn_T_d = _model(doc)
    mpc = _mpc(doc, dyn, n_b)
    model = euler_discretize(dyn, _T_d(doc, dyn_T_d))
    st = doc.get("state") or {}
    sim = doc.get("sim", {})
    x = np.asarray(st.get("x", sim.get("x0", [0.0] * dyn.n_x)), dtype=float)
    u = np.asarray(st.get("u", [0.0] * dyn.n_u), dtype=float)
    if x.size != dyn.n_x or u.size != dyn.n_u:
        raise ConfigError("state.x / state.u have the wrong length")
    ref = _ref_rows(st.get("reference", sim.get("reference", [[0.0] * dyn.n_x])), dyn.n_x)
    window = ref[np.minimum(np.arange(1, mpc.T + 2), ref.shape[0] - 1)]
    try:
        op = build_omega(model, x, u, mpc.gamma, mpc.T, mpc.alpha)
    except RankDeficientBlocking as exc:
        raise ConfigError(str(exc)) from None
    obj = assemble_objective(mpc, op, window[1:].ravel())
    enc = qb.BinaryEncoding(mpc.c_lo, mpc.c_hi, mpc.n_b)
    if mpc.alpha == 1:
        q = qb.build_affine_qubo(obj, enc)
    else:
        q = qb.compile_polynomial_qubo(obj, enc, doc.get("penalty"))
    cons = _constraints(doc)
    if cons:
        blocks, offset = [], q.m
        for con in cons:
            blk = qb.compile_constraint(con, enc, offset=offset, omega_op=op)
            blocks.append(blk)
            offset = blk.m
        q = qb.assemble_constrained_qubo(q, blocks)
    info = {"m": q.m, "m0": enc.m0, "n_mu": obj.basis.size, "n_c": mpc.n_c, "alpha": mpc.alpha,
            "n_b": mpc.n_b, "groups": q.group_sizes(), "constant": q.constant}
    return q, info


# -- commands -------------------------------------------------------------------


def cmd_compile(args) -> tuple[dict, str]:
    doc = load_config(args.config)
    q, info = compile_from_config(doc, args.nb)
    out = _out_dir(doc, args)
    qb.write_coo(q, out / "qubo.coo")
    qb.write_json(q, out / "qubo.json")
    qb.write_json(qb.to_ising(q), out / "ising.json")
    info["files"] = sorted(str(out / f) for f in ("qubo.coo", "qubo.json", "ising.json"))
    groups = ", ".join(f"{k}={v}" for k, v in info["groups"].items())
    return info, f"compiled QUBO with m={info['m']} (m0={info['m0']}, n_mu={info['n_mu']}; {groups})"


def _solution_doc(q, res) -> dict:
    doc = {"backend": res.backend, "m": q.m, "xi": [int(v) for v in res.xi_best], "H": res.H_best,
           "value": res.H_best + q.constant, "sample_energies": [h for _, h in res.samples]}
    if q.encoding is not None:
        doc["c"] = [float(v) for v in qb.decode(q, res.xi_best)]
    return doc


def cmd_solve(args) -> tuple[dict, str]:
    try:
        q = qb.read_qubo(args.qubo)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read QUBO {args.qubo}: {exc}") from None
    doc = load_config(args.config) if args.config else {"solver": {}}
    backend = args.backend or doc.get("solver", {}).get("backend", "sa")
    if backend == "classical":
        raise ConfigError("a QUBO file needs the exhaustive or sa backend")
    if backend == "exhaustive":
        res = solve_exhaustive(q)
    else:
        res = solve_sa(q, _schedule(doc, args))
    sol = _solution_doc(q, res)
    out = _out_dir(doc, args)
    (out / "solution.json").write_text(json.dumps(sol, indent=1) + "\n")
    sol = dict(sol, wall_time=res.wall_time, file=str(out / "solution.json"))
    return sol, f"{backend}: H={res.H_best:.12g}, H+constant={sol['value']:.12g} in {res.wall_time:.3g} s"


def sim_config_from(doc: dict, args) -> SimConfig:
    if "sim" not in doc:
        raise ConfigError("simulate needs a 'sim' section")
    dyn, dyn_T_d = _model(doc)
    mpc = _mpc(doc, dyn, getattr(args, "nb", None))
    s = doc["sim"]
    _T_d(doc, dyn_T_d)
    sched = _schedule(doc, args)
    try:
        return SimConfig(
            plant=dyn, mpc=mpc, T_s=s["T_s"], steps=s["steps"], x0=tuple(s["x0"]),
            reference=_ref_rows(s["reference"], dyn.n_x), backend=_backend(doc, args), seed=sched.seed,
            T_d=dyn_T_d, schedule=sched, substeps=s.get("substeps", 1), constraints=_constraints(doc),
            penalty=doc.get("penalty"),
            record_timing=s.get("record_timing", True) and not getattr(args, "no_timing", False),
        )
    except ValueError as exc:
        raise ConfigError(f"sim: {exc}") from None


def cmd_simulate(args) -> tuple[dict, str]:
    doc = load_config(args.config)
    cfg = sim_config_from(doc, args)
    traj = run_closed_loop(cfg)
    out = _out_dir(doc, args)
    metrics = compute_metrics(traj)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_metrics_json(metrics, out / "metrics.json")
    res = dict(metrics, backend=cfg.backend, files=[str(out / "metrics.json"), str(out / "trajectory.csv")])
    return res, (f"{cfg.backend}: {metrics['steps']} steps, rms error {metrics['rms_tracking_error']:.4g}, "
                 f"cost {metrics['total_cost']:.6g}, mean solve {metrics['mean_wall_ms']:.3g} ms")


def cmd_verify(args) -> tuple[dict, str]:
    from .verify import SUITES

    names = list(SUITES) if args.suite == "all" else [args.suite]
    reports = []
    for name in names:
        kw = {} if args.seed is None else {"seed": args.seed}
        rep = SUITES[name](**kw)
        log.info("%s: %s", name, rep.summary)
        reports.append(rep)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            (out / f"verify_{rep.name}.json").write_text(json.dumps(rep.to_dict(timing=False), indent=1) + "\n")
            for name, text in rep.artifacts.items():
                (out / name).write_text(text)
    result = {"passed": all(r.passed for r in reports),
              "suites": [{"suite": r.name, "passed": r.passed, "summary": r.summary, "seconds": r.seconds}
                         for r in reports]}
    lines = [f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.summary}" for r in reports]
    if args.suite == "theorem1" or (args.suite == "all" and args.verbose):
        rep = next(r for r in reports if r.name == "theorem1")
        lines.append("instance n_b       dist      bound      J_gap    J_bound ok")
        lines += [f"{r['instance']:8d} {r['n_b']:3d} {r['dist']:10.3e} {r['bound']:10.3e} "
                  f"{r['J_gap']:10.3e} {r['J_bound']:10.3e} {'y' if r['ok'] else 'n'}" for r in rep.rows]
    summary = "\n".join(lines)
    if not result["passed"]:
        raise VerificationFailed(json.dumps(result), summary)
    return result, summary


def cmd_export(args) -> tuple[dict, str]:
    try:
        q = qb.read_qubo(args.qubo)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read QUBO {args.qubo}: {exc}") from None
    out = Path(args.out or f"{Path(args.qubo).stem}.{'coo' if args.format == 'coo' else 'json'}")
    if out.is_dir():
        out = out / f"{args.format}.{'coo' if args.format == 'coo' else 'json'}"
    if args.format == "coo":
        qb.write_coo(q, out)
    elif args.format == "json":
        qb.write_json(q, out)
    else:
        qb.write_json(qb.to_ising(q), out)
    return {"format": args.format, "m": q.m, "file": str(out)}, f"wrote {args.format} export of m={q.m} to {out}"


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmpc", description="Polynomial MPC to QUBO compiler and simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="ExperimentConfig JSON")
        sp.add_argument("--out", help="output directory (overrides config 'out')")
        sp.add_argument("--seed", type=int, help="random seed (overrides config)")

    def solver_flags(sp):
        sp.add_argument("--backend", choices=["classical", "exhaustive", "sa"])
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--sweeps", type=int)

    sp = sub.add_parser("compile", help="build the QUBO for the configured operating point")
    common(sp)
    sp.add_argument("--nb", type=int, help="bits per command (overrides mpc.n_b)")
    sp.set_defaults(func=cmd_compile)

    sp = sub.add_parser("solve", help="minimise a QUBO file")
    sp.add_argument("qubo", help="coordinate-list or JSON QUBO file")
    common(sp, config_required=False)
    solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("simulate", help="closed-loop receding-horizon simulation")
    common(sp)
    solver_flags(sp)
    sp.add_argument("--nb", type=int, help="bits per command (overrides mpc.n_b)")
    sp.add_argument("--no-timing", action="store_true", help="log zero solve times (bit-reproducible exports)")
    sp.set_defaults(func=cmd_simulate)

    from .verify import SUITES

    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("suite", choices=[*SUITES, "all"])
    sp.add_argument("--out", help="directory for per-suite JSON reports")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--verbose", action="store_true")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("export", help="convert a QUBO file between formats")
    sp.add_argument("qubo")
    sp.add_argument("--format", choices=["coo", "json", "ising"], default="json")
    sp.add_argument("--out", help="output file or directory")
    sp.set_defaults(func=cmd_export)
    return p


def _emit(result: dict, summary: str) -> None:
    print(json.dumps(result, sort_keys=True, default=float))
    if summary:
        print(summary)


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("QMPC_LOG", "WARNING").upper(), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    for flag in ("nb", "restarts", "sweeps"):
        v = getattr(args, flag, None)
        if v is not None and v < 1:
            _emit({"error": f"--{flag} must be >= 1", "exit_code": EXIT_CONFIG}, "")
            return EXIT_CONFIG
    try:
        result, summary = args.func(args)
    except ConfigError as exc:
        _emit({"error": str(exc), "exit_code": EXIT_CONFIG}, f"configuration error: {exc}")
        return EXIT_CONFIG
    except VerificationFailed as exc:
        doc, summary = exc.args
        _emit(json.loads(doc), summary)
        return EXIT_VERIFY
    except (qb.QuboCapacityError, ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        log.debug("failure", exc_info=True)
        _emit({"error": f"{type(exc).__name__}: {exc}", "exit_code": EXIT_NUMERIC}, f"failed: {exc}")
        return EXIT_NUMERIC
    _emit(result, summary)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
