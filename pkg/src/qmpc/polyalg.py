"""Dense truncated multivariate polynomials.

A :class:`MonomialBasis` enumerates every monomial of total degree ``<= degree``
in graded lexicographic order with the constant monomial last, so that the
affine basis is ``(c_1, ..., c_n, 1)``.  A :class:`PolyVec` stores a stack of
polynomials as a coefficient matrix against such a basis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb
from typing import Sequence

import numpy as np

ZERO_TOL = 1e-14


def _exponent_tuples(n_vars: int, total: int) -> list[tuple[int, ...]]:
    # all exponent vectors of exactly `total`, descending lex
    if n_vars == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _exponent_tuples(n_vars - 1, total - first):
            out.append((first,) + rest)
    return out


@dataclass(frozen=True, eq=False)
class MonomialBasis:
    n_vars: int
    degree: int
    exponents: np.ndarray  # (n_mu, n_vars), read-only
    _index: dict = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.exponents.shape[0]

    @property
    def monomials(self) -> list[tuple[int, ...]]:
        return [tuple(int(v) for v in row) for row in self.exponents]

    def index(self, exps: Sequence[int]) -> int:
        """Position of a monomial, or -1 if it is not in the basis."""
        return self._index.get(tuple(int(e) for e in exps), -1)

    @property
    def constant_index(self) -> int:
        return self.size - 1

    def linear_indices(self) -> np.ndarray:
        """Indices of c_1..c_n, in variable order."""
        eye = np.eye(self.n_vars, dtype=int)
        return np.array([self.index(row) for row in eye])

    def degrees(self) -> np.ndarray:
        return self.exponents.sum(axis=1)

    def __eq__(self, other):
        if not isinstance(other, MonomialBasis):
            return NotImplemented
        return self.n_vars == other.n_vars and self.degree == other.degree

    def __hash__(self):
        return hash((self.n_vars, self.degree))

    def __repr__(self):
        return f"MonomialBasis(n_vars={self.n_vars}, degree={self.degree}, size={self.size})"


@lru_cache(maxsize=None)
def basis_build(n_vars: int, degree: int) -> MonomialBasis:
    """Graded-lex monomial basis, highest degree first and constant last."""
    if n_vars < 1:
        raise ValueError(f"n_vars must be >= 1, got {n_vars}")
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    rows = []
    for d in range(degree, -1, -1):
        rows.extend(_exponent_tuples(n_vars, d))
    exps = np.array(rows, dtype=np.int64).reshape(-1, n_vars)
    exps.setflags(write=False)
    assert exps.shape[0] == comb(n_vars + degree, degree)
    return MonomialBasis(n_vars, degree, exps, {r: i for i, r in enumerate(rows)})


@lru_cache(maxsize=None)
def _product_table(n_vars: int, deg_a: int, deg_b: int, deg_out: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(i, j, k) triples with monomial_a[i] * monomial_b[j] = monomial_out[k]."""
    ba, bb, bo = (basis_build(n_vars, d) for d in (deg_a, deg_b, deg_out))
    ii, jj, kk = [], [], []
    for i, ea in enumerate(ba.monomials):
        for j, eb in enumerate(bb.monomials):
            k = bo.index([x + y for x, y in zip(ea, eb)])
            if k >= 0:
                ii.append(i)
                jj.append(j)
                kk.append(k)
    return np.array(ii, dtype=np.int64), np.array(jj, dtype=np.int64), np.array(kk, dtype=np.int64)


def eval_mu(basis: MonomialBasis, c) -> np.ndarray:
    """Values of every basis monomial at ``c``."""
    c = np.asarray(c, dtype=float)
    if c.shape != (basis.n_vars,):
        raise ValueError(f"expected a vector of length {basis.n_vars}, got shape {c.shape}")
    return np.prod(c[None, :] ** basis.exponents, axis=1)


def eval_mu_batch(basis: MonomialBasis, cs) -> np.ndarray:
    """Row-wise :func:`eval_mu` for an ``(N, n_vars)`` array."""
    cs = np.atleast_2d(np.asarray(cs, dtype=float))
    if cs.shape[1] != basis.n_vars:
        raise ValueError(f"expected {basis.n_vars} columns, got {cs.shape[1]}")
    out = np.ones((cs.shape[0], basis.size))
    for v in range(basis.n_vars):
        out *= cs[:, v : v + 1] ** basis.exponents[None, :, v]
    return out


def jacobian_mu(basis: MonomialBasis, c) -> np.ndarray:
    """d mu / d c, shape ``(n_mu, n_vars)``."""
    c = np.asarray(c, dtype=float)
    e = basis.exponents
    jac = np.zeros((basis.size, basis.n_vars))
    for v in range(basis.n_vars):
        lowered = e.copy()
        lowered[:, v] = np.maximum(e[:, v] - 1, 0)
        jac[:, v] = e[:, v] * np.prod(c[None, :] ** lowered, axis=1)
    return jac


def _clean(coeffs: np.ndarray) -> np.ndarray:
    coeffs = np.array(coeffs, dtype=float)
    coeffs[np.abs(coeffs) < ZERO_TOL] = 0.0
    return coeffs


class PolyVec:
    """A column of polynomials ``coeffs @ mu(c)`` over a shared basis."""

    __slots__ = ("coeffs", "basis")

    def __init__(self, coeffs, basis: MonomialBasis):
        coeffs = _clean(np.atleast_2d(coeffs))
        if coeffs.shape[1] != basis.size:
            raise ValueError(f"coefficient matrix has {coeffs.shape[1]} columns, basis has {basis.size}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "basis", basis)

    def __setattr__(self, name, value):
        raise AttributeError("PolyVec is immutable")

    @property
    def n_rows(self) -> int:
        return self.coeffs.shape[0]

    @property
    def n_vars(self) -> int:
        return self.basis.n_vars

    @classmethod
    def zeros(cls, n_rows: int, basis: MonomialBasis) -> "PolyVec":
        return cls(np.zeros((n_rows, basis.size)), basis)

    @classmethod
    def constant(cls, values, basis: MonomialBasis) -> "PolyVec":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        coeffs = np.zeros((values.size, basis.size))
        coeffs[:, basis.constant_index] = values
        return cls(coeffs, basis)

    @classmethod
    def affine(cls, A, b, basis: MonomialBasis) -> "PolyVec":
        """Rows ``A @ c + b``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != basis.n_vars:
            raise ValueError("affine map width does not match the basis")
        coeffs = np.zeros((A.shape[0], basis.size))
        coeffs[:, basis.linear_indices()] = A
        coeffs[:, basis.constant_index] = np.broadcast_to(np.asarray(b, dtype=float), (A.shape[0],))
        return cls(coeffs, basis)

    @classmethod
    def from_terms(cls, n_rows: int, basis: MonomialBasis, terms) -> "PolyVec":
        """Build from ``(row, exponents, coeff)`` triples; repeated terms add up."""
        coeffs = np.zeros((n_rows, basis.size))
        for row, exps, coeff in terms:
            k = basis.index(exps)
            if k < 0:
                raise ValueError(f"monomial {tuple(exps)} is not in {basis}")
            coeffs[row, k] += coeff
        return cls(coeffs, basis)

    def row(self, i: int) -> "PolyVec":
        return PolyVec(self.coeffs[i : i + 1], self.basis)

    def rows(self, idx) -> "PolyVec":
        return PolyVec(self.coeffs[idx], self.basis)

    def degree(self) -> int:
        nz = np.any(self.coeffs != 0, axis=0)
        return int(self.basis.degrees()[nz].max()) if nz.any() else 0

    def lift(self, degree: int) -> "PolyVec":
        """Re-express in a basis of another degree; dropping terms above it."""
        target = basis_build(self.n_vars, degree)
        coeffs = np.zeros((self.n_rows, target.size))
        for j, exps in enumerate(self.basis.monomials):
            k = target.index(exps)
            if k >= 0:
                coeffs[:, k] = self.coeffs[:, j]
        return PolyVec(coeffs, target)

    def __call__(self, c) -> np.ndarray:
        return self.coeffs @ eval_mu(self.basis, c)

    def __add__(self, other: "PolyVec") -> "PolyVec":
        a, b = _common(self, other)
        return PolyVec(a.coeffs + b.coeffs, a.basis)

    def __sub__(self, other: "PolyVec") -> "PolyVec":
        a, b = _common(self, other)
        return PolyVec(a.coeffs - b.coeffs, a.basis)

    def scale(self, s) -> "PolyVec":
        s = np.asarray(s, dtype=float)
        return PolyVec(self.coeffs * (s[:, None] if s.ndim else s), self.basis)

    def linear_map(self, A) -> "PolyVec":
        """Rows ``A @ self``."""
        return PolyVec(np.atleast_2d(np.asarray(A, dtype=float)) @ self.coeffs, self.basis)

    def vstack(self, other: "PolyVec") -> "PolyVec":
        a, b = _common(self, other)
        return PolyVec(np.vstack([a.coeffs, b.coeffs]), a.basis)

    def terms(self):
        """Yield ``(row, exponents, coeff)`` for non-zero coefficients."""
        mons = self.basis.monomials
        for i, j in zip(*np.nonzero(self.coeffs)):
            yield int(i), mons[j], float(self.coeffs[i, j])

    def allclose(self, other: "PolyVec", atol: float = 1e-12) -> bool:
        a, b = _common(self, other)
        return a.coeffs.shape == b.coeffs.shape and np.allclose(a.coeffs, b.coeffs, rtol=0, atol=atol)

    def __repr__(self):
        return f"PolyVec(n_rows={self.n_rows}, {self.basis})"


def _common(a: PolyVec, b: PolyVec) -> tuple[PolyVec, PolyVec]:
    if a.n_vars != b.n_vars:
        raise ValueError(f"variable count mismatch: {a.n_vars} vs {b.n_vars}")
    d = max(a.basis.degree, b.basis.degree)
    return a.lift(d), b.lift(d)


def _mul_coeffs(a: np.ndarray, b: np.ndarray, table, size: int) -> np.ndarray:
    """Row-wise truncated product of coefficient matrices (rows broadcast)."""
    ii, jj, kk = table
    out = np.zeros((max(a.shape[0], b.shape[0]), size))
    if kk.size:
        np.add.at(out.T, kk, (a[:, ii] * b[:, jj]).T)
    return out


def poly_mul_trunc(a: PolyVec, b: PolyVec, alpha: int) -> PolyVec:
    """Row-wise product ``a * b`` with every monomial of degree > alpha dropped.

    Single-row operands broadcast against multi-row ones.
    """
    if a.n_vars != b.n_vars:
        raise ValueError(f"basis mismatch: {a.n_vars} vs {b.n_vars} variables")
    if a.n_rows != b.n_rows and 1 not in (a.n_rows, b.n_rows):
        raise ValueError(f"row count mismatch: {a.n_rows} vs {b.n_rows}")
    out_basis = basis_build(a.n_vars, alpha)
    table = _product_table(a.n_vars, a.basis.degree, b.basis.degree, alpha)
    return PolyVec(_mul_coeffs(a.coeffs, b.coeffs, table, out_basis.size), out_basis)


def poly_compose_trunc(f: PolyVec, x_sub: PolyVec, u_sub: PolyVec, alpha: int) -> PolyVec:
    """Substitute ``(x, u) -> (x_sub(c), u_sub(c))`` into ``f`` and truncate at ``alpha``.

    ``f`` is a polynomial in ``n_x + n_u`` variables ordered ``(x, u)``.
    """
    subs = x_sub.vstack(u_sub) if x_sub.n_rows and u_sub.n_rows else (x_sub if x_sub.n_rows else u_sub)
    if subs.n_rows != f.n_vars:
        raise ValueError(f"f has {f.n_vars} variables but {subs.n_rows} substitutions were given")
    subs = subs.lift(alpha)
    basis_c = subs.basis
    fb = f.basis
    # value of every monomial of f after substitution, built by peeling one factor
    values = np.zeros((fb.size, basis_c.size))
    done = np.zeros(fb.size, dtype=bool)
    values[fb.constant_index, basis_c.constant_index] = 1.0
    done[fb.constant_index] = True
    table = _product_table(basis_c.n_vars, alpha, alpha, alpha)
    for k in np.argsort(fb.degrees(), kind="stable"):
        if done[k]:
            continue
        exps = fb.exponents[k].copy()
        v = int(np.nonzero(exps)[0][0])
        exps[v] -= 1
        parent = fb.index(exps)
        values[k] = _mul_coeffs(values[parent : parent + 1], subs.coeffs[v : v + 1], table, basis_c.size)[0]
        done[k] = True
    return PolyVec(f.coeffs @ values, basis_c)
