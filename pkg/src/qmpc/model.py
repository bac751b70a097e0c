"""Plant vector fields, their Euler-discretised prediction models and an RK4 plant step."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .polyalg import PolyVec, basis_build


class IntegrationDivergence(FloatingPointError):
    """The plant integrator produced a non-finite state."""


@dataclass(frozen=True)
class ContinuousDynamics:
    """``xdot = f_c(x, u)`` with ``f_c`` polynomial in the stacked vector ``(x, u)``."""

    f_c: PolyVec
    n_x: int
    n_u: int

    def __post_init__(self):
        if self.f_c.n_rows != self.n_x or self.f_c.n_vars != self.n_x + self.n_u:
            raise ValueError(
                f"vector field must have {self.n_x} rows over {self.n_x + self.n_u} variables, "
                f"got {self.f_c.n_rows} rows over {self.f_c.n_vars}"
            )

    def __call__(self, x, u) -> np.ndarray:
        return self.f_c(np.concatenate([np.atleast_1d(x), np.atleast_1d(u)]).astype(float))


@dataclass(frozen=True)
class DiscreteModel:
    """``x_next = f(x, u)``; ``f`` polynomial in ``(x, u)``."""

    f: PolyVec
    n_x: int
    n_u: int
    T_d: float

    def __call__(self, x, u) -> np.ndarray:
        return self.f(np.concatenate([np.atleast_1d(x), np.atleast_1d(u)]).astype(float))

    def iterate(self, x1, inputs) -> np.ndarray:
        """Apply the model to ``x1`` once per row of ``inputs``; returns the visited states after x1."""
        x = np.atleast_1d(np.asarray(x1, dtype=float))
        out = []
        for u in np.atleast_2d(inputs):
            x = self(x, u)
            out.append(x)
        return np.array(out)


def state_identity(n_x: int, n_u: int, degree: int = 1) -> PolyVec:
    basis = basis_build(n_x + n_u, max(degree, 1))
    A = np.hstack([np.eye(n_x), np.zeros((n_x, n_u))])
    return PolyVec.affine(A, 0.0, basis)


def euler_discretize(dyn: ContinuousDynamics, T_d: float) -> DiscreteModel:
    """Forward Euler: ``f(x, u) = x + T_d * f_c(x, u)``, exactly polynomial."""
    if not T_d > 0:
        raise ValueError(f"discretisation time must be positive, got {T_d}")
    f = state_identity(dyn.n_x, dyn.n_u, dyn.f_c.basis.degree) + dyn.f_c.scale(T_d)
    return DiscreteModel(f, dyn.n_x, dyn.n_u, float(T_d))


def plant_step_rk4(dyn: ContinuousDynamics, x, u, T_s: float, substeps: int = 1) -> np.ndarray:
    """Advance the plant by ``T_s`` seconds holding ``u`` constant (classical RK4)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if x.size != dyn.n_x or u.size != dyn.n_u:
        raise ValueError(f"expected x of size {dyn.n_x} and u of size {dyn.n_u}")
    h = T_s / substeps
    for _ in range(substeps):
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = dyn(x, u)
            k2 = dyn(x + 0.5 * h * k1, u)
            k3 = dyn(x + 0.5 * h * k2, u)
            k4 = dyn(x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise IntegrationDivergence(f"non-finite plant state {x}")
    return x


# -- model files --------------------------------------------------------------

_MODEL_KEYS = {"n_x", "n_u", "terms", "T_d"}
_TERM_KEYS = {"row", "exponents_x", "exponents_u", "coeff"}


class ModelFileError(ValueError):
    pass


def dynamics_from_dict(doc: dict) -> tuple[ContinuousDynamics, float | None]:
    """Parse a model document; returns the dynamics and its ``T_d`` (if given).

    Schema::

        {"n_x": int, "n_u": int, "T_d": float,
         "terms": [{"row": int, "exponents_x": [int]*n_x,
                    "exponents_u": [int]*n_u, "coeff": float}, ...]}
    """
    unknown = set(doc) - _MODEL_KEYS
    if unknown:
        raise ModelFileError(f"unknown model fields: {sorted(unknown)}")
    try:
        n_x, n_u, terms = int(doc["n_x"]), int(doc["n_u"]), doc["terms"]
    except KeyError as exc:
        raise ModelFileError(f"missing model field {exc}") from None
    if n_x < 1 or n_u < 1:
        raise ModelFileError("n_x and n_u must be >= 1")
    parsed = []
    for t in terms:
        bad = set(t) - _TERM_KEYS
        if bad:
            raise ModelFileError(f"unknown term fields: {sorted(bad)}")
        ex = [int(e) for e in t.get("exponents_x", [0] * n_x)]
        eu = [int(e) for e in t.get("exponents_u", [0] * n_u)]
        row = int(t["row"])
        if len(ex) != n_x or len(eu) != n_u or not 0 <= row < n_x or min(ex + eu) < 0:
            raise ModelFileError(f"malformed term {t}")
        parsed.append((row, tuple(ex + eu), float(t["coeff"])))
    degree = max([sum(e) for _, e, _ in parsed] + [1])
    f_c = PolyVec.from_terms(n_x, basis_build(n_x + n_u, degree), parsed)
    T_d = doc.get("T_d")
    return ContinuousDynamics(f_c, n_x, n_u), (None if T_d is None else float(T_d))


def dynamics_to_dict(dyn: ContinuousDynamics, T_d: float | None = None) -> dict:
    terms = [
        {"row": r, "exponents_x": list(e[: dyn.n_x]), "exponents_u": list(e[dyn.n_x :]), "coeff": c}
        for r, e, c in dyn.f_c.terms()
    ]
    doc = {"n_x": dyn.n_x, "n_u": dyn.n_u, "terms": terms}
    if T_d is not None:
        doc["T_d"] = T_d
    return doc


def load_model(path) -> tuple[ContinuousDynamics, float | None]:
    return dynamics_from_dict(json.loads(Path(path).read_text()))
