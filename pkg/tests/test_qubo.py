import itertools
import warnings

import numpy as np
import pytest

from qmpc.pmpc import MpcConfig, assemble_objective, eval_jp
from qmpc.predict import omega_from_x1
from qmpc.qubo import (
    BinaryEncoding,
    ConstraintRangeWarning,
    PolyConstraint,
    QuboCapacityError,
    QuboProblem,
    StateConstraint,
    assemble_constrained_qubo,
    bp_eval,
    bp_eval_all,
    build_affine_qubo,
    compile_constraint,
    compile_polynomial_qubo,
    decode,
    default_penalty,
    encode,
    nearest_bits,
    reduce_degree,
    rosenberg_penalty,
    to_ising,
    upsilon_matrix,
)
from qmpc.polyalg import PolyVec, basis_build
from qmpc.solve import solve_exhaustive
from qmpc.verify import all_bits, random_affine_instance

from conftest import poly_model


def test_encode_examples():
    assert encode(BinaryEncoding(0.0, 7.0, 3), [1, 1, 1])[0] == 7.0
    assert encode(BinaryEncoding(-1.0, 1.0, 2), [0, 0])[0] == -1.0
    assert encode(BinaryEncoding(-1.0, 1.0, 2), [1, 0])[0] == pytest.approx(1 / 3, abs=1e-15)
    with pytest.raises(ValueError):
        encode(BinaryEncoding(-1.0, 1.0, 2), [1, 0, 1])


def test_encoding_endpoints_and_step(rng):
    lo, hi = rng.uniform(-5, 0, 3), rng.uniform(0.1, 5, 3)
    for n_b in range(1, 12):
        enc = BinaryEncoding(lo, hi, n_b)
        np.testing.assert_allclose(encode(enc, np.zeros(enc.m0)), lo, atol=1e-12)
        np.testing.assert_allclose(encode(enc, np.ones(enc.m0)), hi, atol=1e-12)
        np.testing.assert_allclose(enc.C_b, (hi - lo) / (2**n_b - 1))
        np.testing.assert_array_equal(enc.eta, 2.0 ** np.arange(n_b - 1, -1, -1))


def test_nearest_bits_round_trip(rng):
    enc = BinaryEncoding([-1.0, 0.0], [2.0, 5.0], 6)
    for _ in range(50):
        xi = rng.integers(0, 2, enc.m0)
        np.testing.assert_array_equal(nearest_bits(enc, encode(enc, xi)), xi)


def _square_objective(lo, hi, n_b):
    # x+ = u, T=1, Q=P=1, R=0, r=0: J_P(c) = c^2
    cfg = MpcConfig(T=1, Q=1.0, P=1.0, R=0.0, n_x=1, n_u=1, c_lo=lo, c_hi=hi)
    obj = assemble_objective(cfg, omega_from_x1(poly_model(1, 1, [(0, (0, 1), 1.0)]), [0.0], cfg.gamma, 1, 1), [0.0])
    return obj, BinaryEncoding(lo, hi, n_b)


def test_affine_qubo_hand_example():
    obj, enc = _square_objective(0.0, 3.0, 2)
    q = build_affine_qubo(obj, enc)
    np.testing.assert_allclose(q.Q, [[4, 2], [2, 1]], atol=1e-14)
    assert q.constant == 0.0
    res = solve_exhaustive(q)
    np.testing.assert_array_equal(res.xi_best, [0, 0])
    assert decode(q, res.xi_best)[0] == 0.0


def test_affine_qubo_optimum_at_lower_bound():
    obj, enc = _square_objective(1.0, 4.0, 3)
    q = build_affine_qubo(obj, enc)
    np.testing.assert_array_equal(solve_exhaustive(q).xi_best, 0)


def test_affine_identity_all_assignments(rng):
    cfg, obj = random_affine_instance(rng, 2, 3, 4)
    q = build_affine_qubo(obj, BinaryEncoding(cfg.c_lo, cfg.c_hi, 3))
    assert q.m == 6
    for xi in itertools.product([0, 1], repeat=6):
        J = eval_jp(obj, decode(q, xi))
        assert q.value(xi) == pytest.approx(J, rel=1e-9, abs=1e-9)


def test_affine_qubo_rejects_higher_degree():
    cfg = MpcConfig(T=1, Q=1.0, P=1.0, R=0.0, n_x=1, n_u=1, c_lo=-1, c_hi=1, alpha=2)
    m = poly_model(1, 1, [(0, (0, 2), 1.0)])
    obj = assemble_objective(cfg, omega_from_x1(m, [0.0], cfg.gamma, 1, 2), [0.0])
    with pytest.raises(ValueError):
        build_affine_qubo(obj, BinaryEncoding(-1, 1, 2))


def test_rosenberg_penalty_values():
    assert rosenberg_penalty(1, 1, 0) == 1
    for a, b in itertools.product([0, 1], repeat=2):
        assert rosenberg_penalty(a * b, a, b) == 0
        assert rosenberg_penalty(1 - a * b, a, b) >= 1


def test_cubic_monomial_reduction():
    reduced, U, n = reduce_degree({(0, 1, 2): 1.0}, 2, 3)
    assert n == 4
    assert reduced == {(2, 3): 1.0}
    want = np.zeros((4, 4))
    want[0, 1], want[3, 0], want[3, 1], want[3, 3] = 1, -2, -2, 3
    np.testing.assert_array_equal(U, want)
    lam = 2.0
    X = all_bits(4)
    vals = bp_eval_all(reduced, X) + lam * np.einsum("ni,ij,nj->n", X, U, X)
    orig = bp_eval_all({(0, 1, 2): 1.0}, all_bits(3))
    assert vals.min() == orig.min()
    restricted = {tuple(r[:3]) for r in X[vals == vals.min()].astype(int)}
    assert restricted == {tuple(r) for r in all_bits(3)[orig == orig.min()].astype(int)}


def test_reduction_flattens_powers_and_shares_pairs():
    reduced, U, n = reduce_degree({(0, 0, 1): 2.0, (0, 1, 2): 1.0, (0, 1, 3): -1.0}, 2, 4)
    assert n == 5
    assert reduced == {(0, 1): 2.0, (2, 4): 1.0, (3, 4): -1.0}
    assert upsilon_matrix({(0, 1): 4}, 5)[4, 4] == 3


def test_polynomial_qubo_identity_on_consistent_assignments():
    m = poly_model(1, 1, [(0, (1, 0), 0.9), (0, (0, 1), 1.0), (0, (0, 2), 0.5)])
    cfg = MpcConfig(T=1, Q=1.0, P=2.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=2.0, alpha=2)
    obj = assemble_objective(cfg, omega_from_x1(m, [0.3], cfg.gamma, 1, 2), [1.2])
    enc = BinaryEncoding(cfg.c_lo, cfg.c_hi, 2)
    q = compile_polynomial_qubo(obj, enc)
    a, b = q.group("xi1")
    assert (a, b) == (2, 3)
    for xi0 in itertools.product([0, 1], repeat=2):
        xi = np.array([*xi0, xi0[0] * xi0[1]])
        assert q.value(xi) == pytest.approx(eval_jp(obj, encode(enc, xi0)), rel=1e-12, abs=1e-12)


def test_polynomial_qubo_minimiser_is_consistent(rng):
    m = poly_model(1, 1, [(0, (1, 0), 0.5), (0, (0, 1), 1.0), (0, (0, 2), -0.4), (0, (1, 1), 0.3)])
    cfg = MpcConfig(T=2, Q=1.0, P=2.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=2.0, alpha=2)
    obj = assemble_objective(cfg, omega_from_x1(m, [0.3], cfg.gamma, 2, 2), [1.2, 0.8])
    enc = BinaryEncoding(cfg.c_lo, cfg.c_hi, 2)
    q = compile_polynomial_qubo(obj, enc)
    res = solve_exhaustive(q)
    xi = res.xi_best
    X = all_bits(enc.m0)
    best = min(eval_jp(obj, encode(enc, x)) for x in X)
    assert q.value(xi) == pytest.approx(best, rel=1e-9, abs=1e-9)
    assert eval_jp(obj, decode(q, xi)) == pytest.approx(best, rel=1e-9, abs=1e-9)
    # gadget bits must equal the products they stand for
    lam = 1.0
    U = (compile_polynomial_qubo(obj, enc, penalty=2 * lam).Q - compile_polynomial_qubo(obj, enc, penalty=lam).Q) / lam
    assert abs(xi @ U @ xi) < 1e-9


def test_polynomial_degenerate_equals_affine(rng):
    m = poly_model(1, 1, [(0, (1, 0), 0.7), (0, (0, 1), 1.0)], degree=2)
    cfg2 = MpcConfig(T=3, Q=1.0, P=2.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=2.0, alpha=2, gamma_blocks=[1, 2])
    cfg1 = MpcConfig(T=3, Q=1.0, P=2.0, R=0.1, n_x=1, n_u=1, c_lo=-1.0, c_hi=2.0, alpha=1, gamma_blocks=[1, 2])
    r = [1.0, 0.5, 0.2]
    obj2 = assemble_objective(cfg2, omega_from_x1(m, [0.3], cfg2.gamma, 3, 2), r)
    obj1 = assemble_objective(cfg1, omega_from_x1(m, [0.3], cfg1.gamma, 3, 1), r)
    enc = BinaryEncoding(cfg1.c_lo, cfg1.c_hi, 3)
    q2, q1 = compile_polynomial_qubo(obj2, enc), build_affine_qubo(obj1, enc)
    assert q2.m == q1.m
    np.testing.assert_allclose(q2.Q, q1.Q, atol=1e-12)
    assert q2.constant == pytest.approx(q1.constant, abs=1e-12)


def test_polynomial_capacity_error():
    m = poly_model(1, 1, [(0, (0, 3), 1.0)])
    cfg = MpcConfig(T=2, Q=1.0, P=1.0, R=0.0, n_x=1, n_u=1, c_lo=-1.0, c_hi=1.0, alpha=3)
    obj = assemble_objective(cfg, omega_from_x1(m, [0.0], cfg.gamma, 2, 3), [0.0, 0.0])
    with pytest.raises(QuboCapacityError):
        compile_polynomial_qubo(obj, BinaryEncoding(cfg.c_lo, cfg.c_hi, 6), m_max=30)


def test_large_penalty_enforces_gadgets(rng):
    m = poly_model(1, 1, [(0, (1, 0), 0.5), (0, (0, 1), 1.0), (0, (0, 2), 0.8)])
    cfg = MpcConfig(T=2, Q=1.0, P=1.0, R=0.0, n_x=1, n_u=1, c_lo=-1.0, c_hi=1.0, alpha=2)
    obj = assemble_objective(cfg, omega_from_x1(m, [0.0], cfg.gamma, 2, 2), [0.9, -0.4])
    enc = BinaryEncoding(cfg.c_lo, cfg.c_hi, 2)
    q0 = compile_polynomial_qubo(obj, enc, penalty=1e-300)
    lam_min = default_penalty(q0.Q, q0.constant)
    for scale in (1.0, 10.0):
        q = compile_polynomial_qubo(obj, enc, penalty=lam_min * scale)
        xi = solve_exhaustive(q).xi_best
        U = (q.Q - q0.Q) / (lam_min * scale)
        assert abs(xi @ U @ xi) < 1e-9


def _one_var_constraint(poly_terms, sense, slack_bits=None, C_s=None, n_b=2):
    basis = basis_build(1, max([sum(e) for e, _ in poly_terms] + [1]))
    p = PolyVec.from_terms(1, basis, [(0, e, v) for e, v in poly_terms])
    enc = BinaryEncoding(-1.0, 1.0, n_b)
    return PolyConstraint(p, sense, slack_bits, C_s), enc


def test_equality_penalty_picks_nearest_grid_points():
    con, enc = _one_var_constraint([((1,), 1.0)], "eq")
    blk = compile_constraint(con, enc, offset=enc.m0)
    X = all_bits(blk.m)
    vals = np.einsum("ni,ij,nj->n", X, blk.Q_c, X) + blk.constant
    cs = np.array([encode(enc, x[: enc.m0])[0] for x in X])
    chosen = set(np.round(cs[vals <= vals.min() + 1e-12], 12))
    assert chosen == {round(-1 / 3, 12), round(1 / 3, 12)}
    assert vals.min() > 0


def test_inequality_zero_penalty_set():
    con, enc = _one_var_constraint([((1,), 1.0)], "le", slack_bits=2)
    blk = compile_constraint(con, enc, offset=enc.m0)
    assert blk.groups == (("slack", 2, 4),)
    X = all_bits(blk.m)
    vals = np.einsum("ni,ij,nj->n", X, blk.Q_c, X) + blk.constant
    zero = X[np.abs(vals) < 1e-12]
    cs = {round(encode(enc, x[:2])[0], 12) for x in zero}
    assert cs == {-1.0, round(-1 / 3, 12)}
    for x in zero:
        s = blk.C_s * (2 * x[2] + x[3])
        assert encode(enc, x[:2])[0] + s == pytest.approx(0.0, abs=1e-12)


def test_zero_constraint_gives_zero_block():
    con, enc = _one_var_constraint([], "eq")
    blk = compile_constraint(con, enc, offset=enc.m0)
    assert not blk.Q_c.any() and blk.constant == 0.0


def test_short_slack_range_warns():
    con, enc = _one_var_constraint([((1,), 1.0)], "le", slack_bits=2, C_s=0.01)
    with pytest.warns(ConstraintRangeWarning):
        compile_constraint(con, enc, offset=enc.m0)


def test_inequality_needs_slack():
    con, enc = _one_var_constraint([((1,), 1.0)], "le", slack_bits=0)
    with pytest.raises(ValueError):
        compile_constraint(con, enc, offset=enc.m0)


def test_cubic_constraint_is_quadratised():
    con, enc = _one_var_constraint([((2,), 1.0), ((0,), -0.25)], "le", slack_bits=2, n_b=3)
    blk = compile_constraint(con, enc, offset=enc.m0)
    labels = [g[0] for g in blk.groups]
    assert labels == ["slack", "reduction"]
    assert blk.Upsilon.any()
    # with consistent gadget bits the block reproduces weight * (P + s)^2
    reduced = blk.poly
    X = all_bits(enc.m0 + 2)
    for x in X:
        full = _extend_with_products(x, blk)
        s = blk.C_s * (2 * x[3] + x[4])
        c = encode(enc, x[:3])[0]
        assert bp_eval(reduced, full) == pytest.approx((c * c - 0.25 + s) ** 2, abs=1e-10)


def _extend_with_products(x, blk):
    m = blk.m
    full = np.zeros(m)
    full[: x.size] = x
    U = blk.Upsilon
    for l in range(x.size, m):
        i, j = np.nonzero(U[l, :l] == -2)[0]
        full[l] = full[i] * full[j]
    return full


def test_assembly_empty_and_linear():
    obj, enc = _square_objective(-1.0, 1.0, 2)
    base = build_affine_qubo(obj, enc)
    assert assemble_constrained_qubo(base, []) is base
    con1, _ = _one_var_constraint([((1,), 1.0), ((0,), -0.5)], "le", slack_bits=2)
    con2, _ = _one_var_constraint([((1,), 1.0)], "eq")
    b1 = compile_constraint(con1, enc, offset=2)
    b2 = compile_constraint(con2, enc, offset=b1.m)
    q = assemble_constrained_qubo(base, [b1, b2], penalties=[3.0, 4.0])
    m = q.m
    pad = lambda A: np.pad(A, (0, m - A.shape[0]))  # noqa: E731
    sym = lambda A: 0.5 * (A + A.T)  # noqa: E731
    want = pad(base.Q) + pad(b1.Q_c) + 3.0 * pad(sym(b1.Upsilon)) + pad(b2.Q_c) + 4.0 * pad(sym(b2.Upsilon))
    np.testing.assert_allclose(q.Q, want, atol=1e-14)
    assert q.constant == pytest.approx(base.constant + b1.constant + b2.constant)
    assert [g[0] for g in q.groups] == ["xi0", "slack1"]


def test_assembly_rejects_overlap_and_bad_penalty():
    obj, enc = _square_objective(-1.0, 1.0, 2)
    base = build_affine_qubo(obj, enc)
    con, _ = _one_var_constraint([((1,), 1.0)], "le", slack_bits=2)
    blk = compile_constraint(con, enc, offset=1)
    with pytest.raises(ValueError):
        assemble_constrained_qubo(base, [blk])
    good = compile_constraint(con, enc, offset=2)
    with pytest.raises(ValueError):
        assemble_constrained_qubo(base, [good], penalties=[0.0])


def test_equality_with_large_weight_picks_feasible_optimum():
    # J_P(c) = (c - 0.9)^2 on a 3-bit grid over [-1, 1], constraint c = 1/7 exactly on the grid
    cfg = MpcConfig(T=1, Q=1.0, P=1.0, R=0.0, n_x=1, n_u=1, c_lo=-1.0, c_hi=1.0)
    obj = assemble_objective(cfg, omega_from_x1(poly_model(1, 1, [(0, (0, 1), 1.0)]), [0.0], cfg.gamma, 1, 1), [0.9])
    enc = BinaryEncoding(-1.0, 1.0, 3)
    base = build_affine_qubo(obj, enc)
    p = PolyVec.from_terms(1, basis_build(1, 1), [(0, (1,), 1.0), (0, (0,), -1 / 7)])
    blk = compile_constraint(PolyConstraint(p, "eq", weight=1e4), enc, offset=3)
    q = assemble_constrained_qubo(base, [blk])
    assert decode(q, solve_exhaustive(q).xi_best)[0] == pytest.approx(1 / 7, abs=1e-12)


def test_state_constraint_resolves_from_prediction():
    m = poly_model(1, 1, [(0, (1, 0), 0.5), (0, (0, 1), 1.0)])
    op = omega_from_x1(m, [1.0], np.eye(2), 2, 1)
    con = StateConstraint(step=3, a=(1.0,), bound=0.2, sense="ge").resolve(op)
    # x_3 = 0.5 c1 + c2 + 0.25 >= 0.2  <=>  -(0.5 c1 + c2 + 0.05) <= 0
    np.testing.assert_allclose(con.poly.coeffs, [[-0.5, -1.0, -0.05]], atol=1e-15)
    assert con.sense == "le"


def test_ising_hand_example():
    ising = to_ising(QuboProblem([[4, 2], [2, 1]]))
    np.testing.assert_array_equal(ising.J, [[1, 0.5], [0.5, 0.25]])
    np.testing.assert_array_equal(ising.h, [3, 1.5])
    assert ising.offset == 2.25
    assert ising.energy_spins([1, -1]) == 4.0


def test_ising_zero_matrix():
    ising = to_ising(QuboProblem(np.zeros((3, 3))))
    assert not ising.J.any() and not ising.h.any() and ising.offset == 0.0


def test_ising_identity_random(rng):
    for m in range(1, 11):
        q = QuboProblem(rng.normal(size=(m, m)))
        ising = to_ising(q)
        for xi in all_bits(m):
            assert abs(q.energy(xi) - ising.energy_spins(2 * xi - 1)) <= 1e-12


def test_decode_ignores_auxiliary_bits():
    obj, enc = _square_objective(-1.0, 1.0, 2)
    q = QuboProblem(np.zeros((5, 5)), 0.0, (("xi0", 0, 2), ("xi1", 2, 5)), enc)
    assert decode(q, [1, 0, 1, 1, 1])[0] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        decode(q, [1, 0])
    with pytest.raises(ValueError):
        decode(QuboProblem(np.zeros((2, 2))), [0, 0])


def test_qubo_is_symmetrised_and_frozen():
    q = QuboProblem([[1.0, 2.0], [0.0, 3.0]])
    np.testing.assert_array_equal(q.Q, [[1, 1], [1, 3]])
    with pytest.raises(ValueError):
        q.Q[0, 0] = 5.0


def test_monotone_refinement_on_nested_grids(rng):
    # grids for n_b = 2, 4, 8 are nested because 3 | 15 | 255
    for _ in range(5):
        cfg, obj = random_affine_instance(rng, 1, 8, 4)
        vals = []
        for n_b in (2, 4, 8):
            q = build_affine_qubo(obj, BinaryEncoding(cfg.c_lo, cfg.c_hi, n_b))
            vals.append(eval_jp(obj, decode(q, solve_exhaustive(q).xi_best)))
        assert vals[0] >= vals[1] - 1e-9 and vals[1] >= vals[2] - 1e-9


def test_monotone_refinement_fails_on_non_nested_grids():
    # J_P = (c - 1/3)^2 on [0, 1]: n_b = 2 hits 1/3 exactly, n_b = 3 cannot
    cfg = MpcConfig(T=1, Q=1.0, P=1.0, R=0.0, n_x=1, n_u=1, c_lo=0.0, c_hi=1.0)
    obj = assemble_objective(cfg, omega_from_x1(poly_model(1, 1, [(0, (0, 1), 1.0)]), [0.0], cfg.gamma, 1, 1), [1 / 3])
    best = {}
    for n_b in (2, 3):
        q = build_affine_qubo(obj, BinaryEncoding(0.0, 1.0, n_b))
        best[n_b] = eval_jp(obj, decode(q, solve_exhaustive(q).xi_best)) + obj.r_cost
    assert best[2] == pytest.approx(0.0, abs=1e-15)
    assert best[3] > best[2]
