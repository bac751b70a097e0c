"""Compilation of the polynomial MPC problem into QUBO and Ising form.

Binary polynomials (:data:`BinPoly`) are dictionaries mapping a sorted tuple of
variable indices to a coefficient; since ``xi**k == xi`` for binary variables
every monomial is multilinear and ``()`` holds the constant term.
"""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .pmpc import ObjectiveData
from .polyalg import PolyVec, eval_mu_batch
from .predict import PredictionOperator, selection_x

BinPoly = dict  # tuple[int, ...] -> float

M_MAX_EXHAUSTIVE = 24
M_MAX_SA = 4096


class QuboCapacityError(RuntimeError):
    """Compilation would need more binary variables than allowed."""


class ConstraintRangeWarning(UserWarning):
    pass


# -- binary encoding ------------------------------------------------------------


@dataclass(frozen=True)
class BinaryEncoding:
    """Fixed-point encoding ``c = c_lo + C_b Xi eta`` with ``eta = (2^(n_b-1), ..., 2, 1)``.

    Variable ``i`` owns bits ``i*n_b .. (i+1)*n_b - 1``, most significant first.
    """

    c_lo: np.ndarray
    c_hi: np.ndarray
    n_b: int

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.c_lo, dtype=float)).copy()
        hi = np.broadcast_to(np.asarray(self.c_hi, dtype=float), lo.shape).copy()
        if not np.all(lo < hi) or self.n_b < 1:
            raise ValueError("encoding needs c_lo < c_hi and n_b >= 1")
        object.__setattr__(self, "c_lo", lo)
        object.__setattr__(self, "c_hi", hi)
        object.__setattr__(self, "n_b", int(self.n_b))

    @property
    def n_c(self) -> int:
        return self.c_lo.size

    @property
    def m0(self) -> int:
        return self.n_c * self.n_b

    @property
    def eta(self) -> np.ndarray:
        return 2.0 ** np.arange(self.n_b - 1, -1, -1)

    @property
    def C_b(self) -> np.ndarray:
        """Diagonal of the scaling matrix, i.e. the grid step per variable."""
        return (self.c_hi - self.c_lo) / (2.0**self.n_b - 1)

    def bit_weights(self) -> np.ndarray:
        """``dc/dxi`` as an ``(n_c, m0)`` matrix."""
        W = np.zeros((self.n_c, self.m0))
        for i in range(self.n_c):
            W[i, i * self.n_b : (i + 1) * self.n_b] = self.C_b[i] * self.eta
        return W

    def grid(self, i: int) -> np.ndarray:
        return self.c_lo[i] + self.C_b[i] * np.arange(2**self.n_b)

    def to_dict(self) -> dict:
        return {"c_lo": self.c_lo.tolist(), "c_hi": self.c_hi.tolist(), "n_b": self.n_b}


def encode(enc: BinaryEncoding, xi0) -> np.ndarray:
    """Real command vector represented by the encoding bits ``xi0``."""
    xi0 = np.asarray(xi0, dtype=float).ravel()
    if xi0.size != enc.m0:
        raise ValueError(f"expected {enc.m0} encoding bits, got {xi0.size}")
    Xi = xi0.reshape(enc.n_c, enc.n_b)
    return enc.c_lo + enc.C_b * (Xi @ enc.eta)


def nearest_bits(enc: BinaryEncoding, c) -> np.ndarray:
    """Bits of the grid point nearest to ``c`` (clipped to the box)."""
    c = np.clip(np.asarray(c, dtype=float), enc.c_lo, enc.c_hi)
    ints = np.rint((c - enc.c_lo) / enc.C_b).astype(np.int64)
    bits = (ints[:, None] >> np.arange(enc.n_b - 1, -1, -1)[None, :]) & 1
    return bits.ravel().astype(np.int8)


# -- problem containers ---------------------------------------------------------


def _sym(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


@dataclass(frozen=True)
class QuboProblem:
    """``min xi^T Q xi``; the full objective value is ``xi^T Q xi + constant``.

    ``groups`` is a tuple of ``(label, start, stop)`` ranges covering the
    variables: ``xi0`` encoding bits, ``xi1`` degree-reduction bits of the
    objective, and per constraint a slack range and a reduction range.
    """

    Q: np.ndarray
    constant: float = 0.0
    groups: tuple = ()
    encoding: BinaryEncoding | None = None

    def __post_init__(self):
        Q = _sym(np.atleast_2d(self.Q))
        if Q.shape[0] != Q.shape[1]:
            raise ValueError("QUBO matrix must be square")
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "groups", tuple((str(g), int(a), int(b)) for g, a, b in self.groups))

    @property
    def m(self) -> int:
        return self.Q.shape[0]

    def energy(self, xi) -> float:
        xi = np.asarray(xi, dtype=float)
        return float(xi @ self.Q @ xi)

    def value(self, xi) -> float:
        return self.energy(xi) + self.constant

    def group(self, label: str) -> tuple[int, int]:
        for g, a, b in self.groups:
            if g == label:
                return a, b
        raise KeyError(label)

    def group_sizes(self) -> dict:
        return {g: b - a for g, a, b in self.groups}


@dataclass(frozen=True)
class IsingProblem:
    """``H(xi) = s^T J s + h s + offset`` with ``s = 2 xi - 1``.

    ``constant`` carries the QUBO offset so ``H + constant`` is the full objective.
    """

    J: np.ndarray
    h: np.ndarray
    offset: float
    constant: float = 0.0
    groups: tuple = ()

    def energy_spins(self, s) -> float:
        s = np.asarray(s, dtype=float)
        return float(s @ self.J @ s + self.h @ s + self.offset)


def to_ising(q: QuboProblem) -> IsingProblem:
    """Spin form: ``J = Q/4``, ``h = (1^T Q)/2``, ``offset = 1^T Q 1 / 4``."""
    Q = q.Q
    return IsingProblem(Q / 4.0, Q.sum(axis=0) / 2.0, float(Q.sum()) / 4.0, q.constant, q.groups)


def decode(q: QuboProblem, xi) -> np.ndarray:
    """Command vector from a full assignment; only the encoding bits are read."""
    if q.encoding is None:
        raise ValueError("this QUBO carries no encoding")
    xi = np.asarray(xi).ravel()
    if xi.size != q.m:
        raise ValueError(f"expected {q.m} bits, got {xi.size}")
    return encode(q.encoding, xi[: q.encoding.m0])


# -- binary polynomial helpers --------------------------------------------------


def bp_add(a: BinPoly, b: BinPoly, scale: float = 1.0) -> BinPoly:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + scale * v
    return out


def bp_mul(a: BinPoly, b: BinPoly) -> BinPoly:
    out: BinPoly = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(sorted(set(ka) | set(kb)))
            out[k] = out.get(k, 0.0) + va * vb
    return out


def bp_flatten(poly) -> BinPoly:
    """Normalise keys by idempotence: any repeated index collapses to one."""
    out: BinPoly = {}
    for k, v in dict(poly).items():
        k = tuple(sorted(set(k)))
        out[k] = out.get(k, 0.0) + v
    return out


def bp_degree(poly: BinPoly) -> int:
    return max((len(k) for k, v in poly.items() if v != 0), default=0)


def bp_eval(poly: BinPoly, xi) -> float:
    xi = np.asarray(xi)
    return float(sum(v * np.prod(xi[list(k)]) if k else v for k, v in poly.items()))


def bp_eval_all(poly: BinPoly, X: np.ndarray) -> np.ndarray:
    """Evaluate on every row of a 0/1 matrix."""
    out = np.zeros(X.shape[0])
    for k, v in poly.items():
        out += v * (np.prod(X[:, list(k)], axis=1) if k else 1.0)
    return out


def bp_clean(poly: BinPoly, tol: float = 1e-14) -> BinPoly:
    return {k: v for k, v in poly.items() if abs(v) >= tol}


def encoded_variables(enc: BinaryEncoding) -> list[BinPoly]:
    """Each command component as an affine binary polynomial."""
    out = []
    for i in range(enc.n_c):
        p = {(): float(enc.c_lo[i])}
        for j in range(enc.n_b):
            p[(i * enc.n_b + j,)] = float(enc.C_b[i] * enc.eta[j])
        out.append(p)
    return out


def poly_in_bits(poly: PolyVec, enc: BinaryEncoding, row: int = 0) -> BinPoly:
    """Substitute the encoding into one row of a polynomial in ``c``."""
    cvars = encoded_variables(enc)
    powers: dict = {}

    def power(i, e):
        if (i, e) not in powers:
            powers[(i, e)] = {(): 1.0} if e == 0 else bp_mul(power(i, e - 1), cvars[i])
        return powers[(i, e)]

    out: BinPoly = {}
    for j, exps in enumerate(poly.basis.monomials):
        coeff = poly.coeffs[row, j]
        if coeff == 0:
            continue
        term = {(): 1.0}
        for i, e in enumerate(exps):
            if e:
                term = bp_mul(term, power(i, e))
        out = bp_add(out, term, coeff)
    return bp_clean(out)


# -- degree reduction -----------------------------------------------------------


def rosenberg_penalty(xl, xi, xj):
    """``3 xl - 2 xl xi - 2 xl xj + xi xj``: zero iff ``xl == xi*xj``, else >= 1."""
    return 3 * xl - 2 * xl * xi - 2 * xl * xj + xi * xj


def reduce_degree(poly: BinPoly, target_degree: int, next_var_index: int, pairs: dict | None = None):
    """Quadratise ``poly`` by repeated substitution ``xi_l = xi_i xi_j``.

    Within a monomial the two lowest-indexed factors are replaced first; a
    pair already substituted (also across calls sharing ``pairs``) reuses its
    variable.  Returns ``(reduced, Upsilon, n_vars)`` where ``Upsilon`` is the
    ``n_vars x n_vars`` penalty matrix with ``Upsilon[i, j] = 1``,
    ``Upsilon[l, i] = Upsilon[l, j] = -2`` and ``Upsilon[l, l] = 3`` per
    substitution, so ``xi^T Upsilon xi`` sums the Rosenberg penalties.
    """
    if target_degree < 1:
        raise ValueError("target degree must be >= 1")
    pairs = {} if pairs is None else pairs
    nxt = max([next_var_index] + [l + 1 for l in pairs.values()])
    reduced: BinPoly = {}
    for mono, coeff in bp_flatten(poly).items():
        mono = tuple(sorted(mono))
        while len(mono) > target_degree:
            key = (mono[0], mono[1])
            if key not in pairs:
                pairs[key] = nxt
                nxt += 1
            mono = tuple(sorted(mono[2:] + (pairs[key],)))
        reduced[mono] = reduced.get(mono, 0.0) + coeff
    n_vars = max([nxt] + [max(k) + 1 for k in reduced if k])
    return reduced, upsilon_matrix(pairs, n_vars), n_vars


def upsilon_matrix(pairs: dict, n_vars: int) -> np.ndarray:
    U = np.zeros((n_vars, n_vars))
    for (i, j), l in pairs.items():
        U[i, j] = 1.0
        U[l, i] = -2.0
        U[l, j] = -2.0
        U[l, l] = 3.0
    return U


def quadratic_to_matrix(poly: BinPoly, m: int) -> tuple[np.ndarray, float]:
    """Symmetric matrix ``Q`` and constant with ``xi^T Q xi + const == poly(xi)`` on binaries."""
    Q = np.zeros((m, m))
    const = 0.0
    for k, v in poly.items():
        if len(k) == 0:
            const += v
        elif len(k) == 1:
            Q[k[0], k[0]] += v
        elif len(k) == 2:
            Q[k[0], k[1]] += 0.5 * v
            Q[k[1], k[0]] += 0.5 * v
        else:
            raise ValueError(f"monomial {k} has degree > 2")
    return Q, const


def default_penalty(Q_obj: np.ndarray, constant: float = 0.0) -> float:
    return 2.0 * (float(np.abs(Q_obj).sum()) + abs(constant))


# -- objective compilation ------------------------------------------------------


def _objective_matrix(obj: ObjectiveData, M: np.ndarray, mu_lo: np.ndarray) -> tuple[np.ndarray, float]:
    W = obj.W_mu
    h = 2.0 * (mu_lo @ W - obj.lin) @ M
    Q = M.T @ W @ M + np.diag(h)
    const = float(mu_lo @ W @ mu_lo - 2.0 * obj.lin @ mu_lo)
    return Q, const


def build_affine_qubo(obj: ObjectiveData, enc: BinaryEncoding) -> QuboProblem:
    """QUBO of the affine-model problem: ``Q = M^T W_mu M + diag(h)``.

    ``M`` is the Jacobian of ``(C_b Xi eta, 1)`` with respect to the bits and
    ``h = 2 (mu_lo^T W_mu - r^T W_x omega) M`` with ``mu_lo = (c_lo, 1)``.
    """
    basis = obj.basis
    if basis.degree != 1:
        raise ValueError(f"affine compilation needs degree 1, got {basis.degree}")
    if basis.n_vars != enc.n_c:
        raise ValueError("encoding and objective disagree on the number of commands")
    M = np.zeros((basis.size, enc.m0))
    M[: enc.n_c] = enc.bit_weights()
    mu_lo = np.append(enc.c_lo, 1.0)
    Q, const = _objective_matrix(obj, M, mu_lo)
    return QuboProblem(Q, const, (("xi0", 0, enc.m0),), enc)


def compile_polynomial_qubo(
    obj: ObjectiveData, enc: BinaryEncoding, penalty: float | None = None, m_max: int = M_MAX_SA
) -> QuboProblem:
    """QUBO of a polynomial-model problem (degree > 1).

    Every monomial of ``mu`` is expanded over the encoding bits and reduced to
    a single variable by shared Rosenberg substitutions, which makes ``mu``
    affine in ``(xi0, xi1)``.  Monomials with zero weight in the objective are
    skipped.  ``penalty`` defaults to ``2 (sum|Q_obj| + |constant|)``.
    """
    basis = obj.basis
    if basis.degree < 2:
        raise ValueError("polynomial compilation needs degree > 1; use build_affine_qubo")
    if basis.n_vars != enc.n_c:
        raise ValueError("encoding and objective disagree on the number of commands")
    used = np.any(obj.W_mu != 0, axis=0) | (obj.lin != 0)
    cvars = encoded_variables(enc)
    pairs: dict = {}
    reduced = []
    n_vars = enc.m0
    for k, exps in enumerate(basis.monomials):
        if not used[k]:
            reduced.append({})
            continue
        term = {(): 1.0}
        for i, e in enumerate(exps):
            for _ in range(e):
                term = bp_mul(term, cvars[i])
        red, _, n = reduce_degree(bp_clean(term), 1, n_vars, pairs)
        n_vars = max(n_vars, n)
        if n_vars > m_max:
            raise QuboCapacityError(f"degree reduction needs {n_vars} variables, cap is {m_max}")
        reduced.append(red)
    M = np.zeros((basis.size, n_vars))
    mu_lo = np.zeros(basis.size)
    for k, red in enumerate(reduced):
        for mono, v in red.items():
            if mono:
                M[k, mono[0]] += v
            else:
                mu_lo[k] += v
    Q_obj, const = _objective_matrix(obj, M, mu_lo)
    lam = default_penalty(Q_obj, const) if penalty is None else float(penalty)
    Q = Q_obj + lam * _sym(upsilon_matrix(pairs, n_vars))
    groups = [("xi0", 0, enc.m0)]
    if n_vars > enc.m0:
        groups.append(("xi1", enc.m0, n_vars))
    return QuboProblem(Q, const, tuple(groups), enc)


# -- constraints ----------------------------------------------------------------


@dataclass(frozen=True)
class PolyConstraint:
    """``P_d(c) <= 0`` (``sense="le"``) or ``P_d(c) == 0`` (``sense="eq"``).

    ``weight`` scales the squared residual; ``penalty`` is the gadget weight
    for the degree-reduction bits (defaults from the block's coefficients).
    """

    poly: PolyVec
    sense: str = "le"
    slack_bits: int | None = None
    C_s: float | None = None
    weight: float = 1.0
    penalty: float | None = None

    def __post_init__(self):
        if self.sense not in ("le", "eq"):
            raise ValueError(f"sense must be 'le' or 'eq', got {self.sense!r}")
        if self.poly.n_rows != 1:
            raise ValueError("a constraint is a single polynomial")

    def resolve(self, op: PredictionOperator | None = None) -> "PolyConstraint":
        return self

    def n_slack(self) -> int:
        if self.sense == "eq":
            return 0
        return 4 if self.slack_bits is None else int(self.slack_bits)


@dataclass(frozen=True)
class StateConstraint:
    """``a . x_k  (<=|>=|==)  bound`` on predicted state ``k`` (2..T+1)."""

    step: int
    a: tuple
    bound: float
    sense: str = "le"
    slack_bits: int | None = None
    C_s: float | None = None
    weight: float = 1.0
    penalty: float | None = None

    def resolve(self, op: PredictionOperator | None = None) -> PolyConstraint:
        if op is None:
            raise ValueError("state constraints need the prediction operator")
        a = np.asarray(self.a, dtype=float).reshape(1, -1)
        row = a @ selection_x(self.step, op.T, op.n_x) @ op.omega
        row[0, op.basis.constant_index] -= self.bound
        sign = -1.0 if self.sense == "ge" else 1.0
        sense = "eq" if self.sense == "eq" else "le"
        return PolyConstraint(PolyVec(sign * row, op.basis), sense, self.slack_bits, self.C_s, self.weight, self.penalty)


@dataclass(frozen=True)
class ConstraintBlock:
    Q_c: np.ndarray
    Upsilon: np.ndarray
    constant: float
    penalty: float
    groups: tuple
    C_s: float = 0.0
    poly: BinPoly = field(default_factory=dict, repr=False)  # reduced penalty polynomial

    @property
    def m(self) -> int:
        return self.Q_c.shape[0]


def _sample_grid(enc: BinaryEncoding, max_points: int = 20000) -> np.ndarray:
    per_dim = 2**enc.n_b
    if per_dim**enc.n_c <= max_points:
        axes = [enc.grid(i) for i in range(enc.n_c)]
    else:
        k = max(2, int(max_points ** (1.0 / enc.n_c)))
        axes = [np.linspace(enc.c_lo[i], enc.c_hi[i], k) for i in range(enc.n_c)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, enc.n_c)


def slack_requirement(poly: PolyVec, enc: BinaryEncoding) -> float:
    """Largest slack ``-P_d(c)`` needed over (a sample of) the encoded grid."""
    vals = eval_mu_batch(poly.basis, _sample_grid(enc)) @ poly.coeffs[0]
    return float(max(0.0, -vals.min()))


def compile_constraint(
    constraint,
    enc: BinaryEncoding,
    offset: int,
    slack_bits: int | None = None,
    C_s: float | None = None,
    omega_op: PredictionOperator | None = None,
) -> ConstraintBlock:
    """Penalty block ``weight * (P_d(c) + s)^2`` reduced to a quadratic.

    Slack bits occupy ``offset .. offset+slack_bits`` and reduction bits
    follow.  The returned matrices are square of size ``m_i`` (the end of this
    block's range) and are meant to be zero-padded by
    :func:`assemble_constrained_qubo`.
    """
    con = constraint.resolve(omega_op)
    if con.poly.n_vars != enc.n_c:
        raise ValueError("constraint polynomial and encoding disagree on the number of commands")
    sb = con.n_slack() if slack_bits is None else int(slack_bits)
    if con.sense == "le" and sb < 1:
        raise ValueError("an inequality constraint needs at least one slack bit")
    if con.sense == "eq":
        sb = 0
    C_s = con.C_s if C_s is None else C_s
    residual = poly_in_bits(con.poly, enc)
    if sb:
        need = slack_requirement(con.poly, enc)
        top = 2.0**sb - 1
        if C_s is None:
            C_s = need / top if need > 0 else 1.0 / top
        elif C_s * top < need * (1 - 1e-12):
            warnings.warn(
                f"slack range [0, {C_s * top:g}] is smaller than the largest needed slack {need:g}; "
                "the constraint may be unrepresentable",
                ConstraintRangeWarning,
                stacklevel=2,
            )
        eta = 2.0 ** np.arange(sb - 1, -1, -1)
        residual = bp_add(residual, {(offset + j,): float(C_s * eta[j]) for j in range(sb)})
    square = bp_clean({k: con.weight * v for k, v in bp_mul(residual, residual).items()})
    reduced, U, n_vars = reduce_degree(square, 2, offset + sb)
    n_vars = max(n_vars, offset + sb)
    Q_c, const = quadratic_to_matrix(reduced, n_vars)
    U = np.pad(U, (0, n_vars - U.shape[0]))
    lam = default_penalty(Q_c, const) if con.penalty is None else float(con.penalty)
    groups = []
    if sb:
        groups.append(("slack", offset, offset + sb))
    if n_vars > offset + sb:
        groups.append(("reduction", offset + sb, n_vars))
    return ConstraintBlock(Q_c, U, const, lam, tuple(groups), float(C_s or 0.0), reduced)


def _pad(A: np.ndarray, m: int) -> np.ndarray:
    return np.pad(A, (0, m - A.shape[0]))


def assemble_constrained_qubo(base: QuboProblem, blocks, penalties=None) -> QuboProblem:
    """Sum of the zero-padded base matrix and ``Q_c + penalty * Upsilon`` per constraint."""
    blocks = list(blocks)
    if not blocks:
        return base
    if penalties is None:
        penalties = [b.penalty for b in blocks]
    if len(penalties) != len(blocks) or any(p <= 0 for p in penalties):
        raise ValueError("need one positive penalty weight per constraint")
    m = max([base.m] + [b.m for b in blocks])
    Q = _pad(base.Q, m)
    const = base.constant
    groups = list(base.groups)
    end = base.m
    for n, (blk, lam) in enumerate(zip(blocks, penalties), start=1):
        for label, a, b in blk.groups:
            if a < end:
                raise ValueError(f"constraint {n} group {label!r} [{a}, {b}) overlaps earlier variables")
            groups.append((f"{label}{n}", a, b))
            end = b
        Q = Q + _pad(blk.Q_c, m) + lam * _pad(_sym(blk.Upsilon), m)
        const += blk.constant
    return QuboProblem(Q, const, tuple(groups), base.encoding)


# -- file formats ---------------------------------------------------------------

_HEADER = re.compile(r"#\s*qubo\s+m=(\d+)\s+constant=(\S+)")


def _upper_entries(A: np.ndarray):
    # off-diagonal pairs merged so that xi^T A xi is preserved
    U = np.triu(A + A.T, 1) + np.diag(np.diag(A))
    rows, cols = np.nonzero(U)
    return [(int(i), int(j), float(U[i, j])) for i, j in zip(rows, cols)]


def _from_entries(m: int, entries) -> np.ndarray:
    A = np.zeros((m, m))
    for i, j, v in entries:
        i, j = int(i), int(j)
        if i == j:
            A[i, i] += v
        else:
            A[i, j] += 0.5 * v
            A[j, i] += 0.5 * v
    return A


def write_coo(q: QuboProblem, path) -> None:
    """Coordinate list: ``# qubo m=<m> constant=<c>`` then ``i j value`` (i <= j)."""
    lines = [f"# qubo m={q.m} constant={q.constant!r}"]
    lines += [f"{i} {j} {v!r}" for i, j, v in _upper_entries(q.Q)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_coo(path) -> QuboProblem:
    text = Path(path).read_text().splitlines()
    match = _HEADER.match(text[0]) if text else None
    if not match:
        raise ValueError(f"{path}: missing '# qubo m=... constant=...' header")
    m, const = int(match.group(1)), float(match.group(2))
    entries = []
    for line in text[1:]:
        if line.strip() and not line.startswith("#"):
            i, j, v = line.split()
            entries.append((int(i), int(j), float(v)))
    return QuboProblem(_from_entries(m, entries), const, (("xi0", 0, m),))


def qubo_to_dict(q: QuboProblem) -> dict:
    doc = {
        "kind": "qubo",
        "m": q.m,
        "constant": q.constant,
        "entries": [[i, j, v] for i, j, v in _upper_entries(q.Q)],
        "groups": [list(g) for g in q.groups],
    }
    if q.encoding is not None:
        doc["encoding"] = q.encoding.to_dict()
    return doc


def qubo_from_dict(doc: dict) -> QuboProblem:
    if doc.get("kind", "qubo") != "qubo":
        raise ValueError(f"expected a qubo document, got kind={doc.get('kind')!r}")
    enc = doc.get("encoding")
    enc = BinaryEncoding(enc["c_lo"], enc["c_hi"], enc["n_b"]) if enc else None
    groups = doc.get("groups") or [("xi0", 0, doc["m"])]
    return QuboProblem(_from_entries(doc["m"], doc["entries"]), doc["constant"], groups, enc)


def ising_to_dict(ising: IsingProblem) -> dict:
    return {
        "kind": "ising",
        "m": int(ising.J.shape[0]),
        "offset": ising.offset,
        "constant": ising.constant,
        "entries": [[i, j, v] for i, j, v in _upper_entries(ising.J)],
        "h": [float(v) for v in ising.h],
        "groups": [list(g) for g in ising.groups],
    }


def ising_from_dict(doc: dict) -> IsingProblem:
    J = _from_entries(doc["m"], doc["entries"])
    return IsingProblem(J, np.asarray(doc["h"], dtype=float), float(doc["offset"]), float(doc.get("constant", 0.0)),
                        tuple(tuple(g) for g in doc.get("groups", ())))


def write_json(obj, path) -> None:
    doc = ising_to_dict(obj) if isinstance(obj, IsingProblem) else qubo_to_dict(obj)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def read_qubo(path) -> QuboProblem:
    """Load either export format, chosen by content."""
    text = Path(path).read_text()
    if text.lstrip().startswith("#"):
        return read_coo(path)
    return qubo_from_dict(json.loads(text))
