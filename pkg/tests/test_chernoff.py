"""Product formulas: iterated applications, derivative probes, convergence,
stability, uniqueness, and regularity diagnostics."""

import numpy as np
import pytest

from chernoff_kit import chernoff as ch
from chernoff_kit import operators as ops
from chernoff_kit.lcs_core import LatticeSpec, StateVector, l2_family
from chernoff_kit.scenarios import dissipative_operator

# the standard 2x2 splitting pair: exp(A) and exp(B) have closed forms
A2 = np.array([[0.0, 1.0], [0.0, 0.0]])
B2 = np.array([[0.0, 0.0], [1.0, 0.0]])


def _scalar_ie():
    return ch.implicit_euler(ops.diagonal(np.array([-1.0])))


def _one():
    return StateVector(np.array([1.0]))


# ---------------------------------------------------------------- products


def test_product_apply_identity():
    rng = np.random.default_rng(0)
    h = StateVector(rng.standard_normal(5))
    out = ch.product_apply(ch.identity_chernoff(5), 1.0, 7, h)
    assert np.array_equal(out.coords, h.coords)


def test_product_apply_implicit_euler_scalar():
    out = ch.product_apply(_scalar_ie(), 1.0, 10, _one())
    assert out.coords[0] == pytest.approx((1.1) ** -10, abs=1e-15)


def test_product_apply_lie_pair_single_step():
    F = ch.lie_trotter(ops.semigroup(ops.dense(A2)), ops.semigroup(ops.dense(B2)))
    out = ch.product_apply(F, 1.0, 1, StateVector(np.array([1.0, 0.0])))
    # exp(A2) = [[1,1],[0,1]], exp(B2) = [[1,0],[1,1]]: product sends e1 to (2,1)
    assert np.allclose(out.coords, np.array([2.0, 1.0]), atol=1e-13)


def test_product_apply_argument_guards():
    with pytest.raises(ValueError):
        ch.product_apply(_scalar_ie(), -1.0, 2, _one())
    with pytest.raises(ValueError):
        ch.product_apply(_scalar_ie(), 1.0, 0, _one())


def test_product_apply_nonfinite_guard():
    F = ch.ChernoffFn(
        eval=lambda s, a: np.full_like(a, np.nan),
        dim=1,
        claimed_derivative=ops.zero(1),
        label="bad",
    )
    with pytest.raises(ch.NonFiniteStateError):
        ch.product_apply(F, 1.0, 3, _one())


def test_product_path_endpoints_and_scalar_value():
    h = _one()
    path = ch.product_path(_scalar_ie(), 1.0, 100, [0.0, 0.5, 1.0], h)
    assert np.array_equal(path[0].coords, h.coords)
    assert path[1].coords[0] == pytest.approx((1.01) ** -50, abs=1e-15)
    full = ch.product_apply(_scalar_ie(), 1.0, 100, h)
    assert np.array_equal(path[2].coords, full.coords)


def test_product_path_exact_semigroup_n_independent():
    rng = np.random.default_rng(1)
    Z = ops.dense(rng.standard_normal((4, 4)) * 0.5)
    F = ch.semigroup_chernoff(ops.semigroup(Z, method="dense_expm"))
    h = StateVector(rng.standard_normal(4))
    a = ch.product_apply(F, 0.8, 5, h)
    b = ch.product_apply(F, 0.8, 5 * 8, h)
    assert np.allclose(a.coords, b.coords, atol=1e-12)


def test_derivative_path_cases():
    h = _one()
    Z = ops.diagonal(np.array([-1.0]))
    zero_path = ch.derivative_path(
        ch.identity_chernoff(1), ops.zero(1), 1.0, 10, [0.0, 1.0], h
    )
    assert all(np.all(p.coords == 0) for p in zero_path)
    path = ch.derivative_path(_scalar_ie(), Z, 1.0, 100, [0.0, 1.0], h)
    assert path[0].coords[0] == pytest.approx(-1.0)  # s = 0 gives Zh
    assert path[1].coords[0] == pytest.approx(-((1.01) ** -100), abs=1e-15)


# ------------------------------------------------- derivative probe


def test_effective_derivative_probe_scalar():
    Z = ops.diagonal(np.array([-1.0]))
    fam = ch.ApproximatingFamily.constant(_one(), StateVector(np.array([-1.0])))
    s_grid = (0.1, 0.03, 0.01, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8)
    res = ch.effective_derivative_probe(ch.implicit_euler(Z), fam, s_grid)
    assert res.verdict
    # at s = 0.01 the difference quotient is (1/1.01 - 1)/0.01 = -0.9900990...
    i = res.s_grid.index(0.01)
    quotient_err = res.quotient_errors["l2"][i]
    assert quotient_err == pytest.approx(abs((1 / 1.01 - 1) / 0.01 + 1.0), abs=1e-12)


def test_effective_derivative_probe_identity():
    h = _one()
    fam = ch.ApproximatingFamily.constant(h, StateVector(np.zeros(1)))
    res = ch.effective_derivative_probe(
        ch.identity_chernoff(1), fam, [0.1, 0.01, 0.001, 0.0001]
    )
    assert res.verdict
    assert max(res.quotient_errors["l2"]) == 0.0
    assert max(res.target_errors["l2"]) == 0.0


def test_effective_derivative_probe_wrong_claim_fails():
    Z = ops.diagonal(np.array([-1.0]))
    fam = ch.ApproximatingFamily.constant(_one(), StateVector(np.array([1.0])))
    res = ch.effective_derivative_probe(
        ch.implicit_euler(Z), fam, [10.0 ** -k for k in range(1, 8)]
    )
    assert not res.verdict


# --------------------------------------------- small-step consistency


def test_small_step_identity_zero():
    curves = ch.small_step_consistency(
        ch.identity_chernoff(3), StateVector(np.ones(3)), [0.1, 0.01]
    )
    assert max(curves["l2"]) == 0.0


def test_small_step_scalar_bound():
    # |(1+x)^{-i} - 1| <= i*x, so the curve is bounded by eps itself;
    # oracle: the same maximization via the closed scalar form
    eps_grid = [0.1, 0.03, 0.01]
    curves = ch.small_step_consistency(_scalar_ie(), _one(), eps_grid)
    for eps, val in zip(eps_grid, curves["l2"]):
        oracle = max(
            abs((1 + frac * eps / i) ** -i - 1.0)
            for frac in (0.25, 0.5, 1.0)
            for i in (1, 2, 4, 8, 16)
        )
        assert val == pytest.approx(oracle, rel=1e-12)
        assert val <= eps * (1 + 1e-12)


def test_small_step_lie_bound():
    rng = np.random.default_rng(2)
    A = ops.dense(rng.standard_normal((4, 4)) * 0.3)
    B = ops.dense(rng.standard_normal((4, 4)) * 0.3)
    c = ops.operator_norm(A) + ops.operator_norm(B)
    F = ch.lie_trotter(ops.semigroup(A, method="dense_expm"),
                       ops.semigroup(B, method="dense_expm"))
    g = StateVector(rng.standard_normal(4))
    eps_grid = [0.2, 0.05, 0.01]
    curves = ch.small_step_consistency(F, g, eps_grid)
    gn = float(np.linalg.norm(g.coords))
    for eps, val in zip(eps_grid, curves["l2"]):
        assert val <= (np.exp(c * eps) - 1.0) * gn * (1 + 1e-10)


# ------------------------------------------ step-difference consistency


def test_step_difference_identity_zero():
    curves = ch.step_difference_consistency(
        ch.identity_chernoff(2), StateVector(np.ones(2)), 1.0, [0.1, 0.01]
    )
    assert max(curves["l2"]) == 0.0


def test_step_difference_scalar_bound():
    curves = ch.step_difference_consistency(_scalar_ie(), _one(), 1.0, [0.1, 0.01])
    # mean-value bound on (1+x)^{-m}: differences over a window eps stay O(eps)
    assert curves["l2"][-1] <= 0.011
    assert curves["l2"][0] <= 0.11
    assert curves["l2"][1] < curves["l2"][0]


# ---------------------------------------------------- Lie splitting


def test_lie_trotter_with_zero_part_is_exact():
    rng = np.random.default_rng(3)
    Z = ops.dense(rng.standard_normal((3, 3)) * 0.5)
    F = ch.lie_trotter(ops.semigroup(ops.zero(3)), ops.semigroup(Z, method="dense_expm"))
    S = ops.semigroup(Z, method="dense_expm")
    h = StateVector(rng.standard_normal(3))
    for n in (1, 3, 10):
        got = ch.product_apply(F, 1.0, n, h)
        want = S.apply_array(1.0, h.coords)
        assert np.allclose(got.coords, want, atol=1e-12)


def test_lie_trotter_single_step_vs_exact_sum():
    F = ch.lie_trotter(ops.semigroup(ops.dense(A2)), ops.semigroup(ops.dense(B2)))
    got = ch.product_apply(F, 1.0, 1, StateVector(np.array([1.0, 0.0])))
    want = np.array([np.cosh(1.0), np.sinh(1.0)])
    # the n = 1 splitting defect for the noncommuting pair
    assert np.allclose(got.coords, np.array([2.0, 1.0]), atol=1e-13)
    assert np.linalg.norm(got.coords - want) > 0.3


def test_lie_trotter_commuting_diagonals_exact():
    rng = np.random.default_rng(4)
    for _ in range(5):
        a = rng.standard_normal(6) - 0.5
        b = rng.standard_normal(6) - 0.5
        F = ch.lie_trotter(ops.semigroup(ops.diagonal(a)), ops.semigroup(ops.diagonal(b)))
        S = ops.semigroup(ops.diagonal(a + b))
        h = StateVector(rng.standard_normal(6) + 1j * rng.standard_normal(6))
        for n in (1, 4, 32):
            got = ch.product_apply(F, 1.0, n, h)
            assert np.allclose(got.coords, S.apply_array(1.0, h.coords), atol=1e-12)


def test_lie_trotter_dim_mismatch():
    with pytest.raises(ops.DimensionMismatchError):
        ch.lie_trotter(ops.semigroup(ops.zero(2)), ops.semigroup(ops.zero(3)))


# ---------------------------------------------------- convergence


def test_chernoff_converge_exact_is_flagged():
    rng = np.random.default_rng(5)
    Z = ops.dense(rng.standard_normal((3, 3)) * 0.5)
    S = ops.semigroup(Z, method="dense_expm")
    F = ch.semigroup_chernoff(S)
    h = StateVector(rng.standard_normal(3))
    rep = ch.chernoff_converge(F, S, h, 1.0, [16, 32, 64, 128], [0.5, 1.0], l2_family())
    assert np.max(rep.uniform_errors["l2"]) <= 1e-12
    assert rep.fitted_rate["l2"] is None  # floor-level tail, no rate


def test_chernoff_converge_lie_rate_one():
    SA = ops.semigroup(ops.dense(A2), method="dense_expm")
    SB = ops.semigroup(ops.dense(B2), method="dense_expm")
    F = ch.lie_trotter(SA, SB)
    ref = ops.semigroup(ops.dense(A2 + B2), method="dense_expm")
    h = StateVector(np.array([1.0, 0.0]))
    rep = ch.chernoff_converge(
        F, ref, h, 1.0, [16, 32, 64, 128], np.linspace(0.0, 1.0, 5), l2_family()
    )
    slope, resid = rep.fitted_rate["l2"]
    assert 0.8 <= slope <= 1.2


def test_chernoff_converge_scalar_closed_form():
    Z = ops.diagonal(np.array([-1.0]))
    rep = ch.chernoff_converge(
        ch.implicit_euler(Z),
        ops.semigroup(Z),
        _one(),
        1.0,
        [16, 32, 64, 128, 256],
        [1.0],
        l2_family(),
    )
    errs = rep.uniform_errors["l2"]
    for n, e in zip(rep.n_grid, errs):
        assert e == pytest.approx(abs((1 + 1 / n) ** -n - np.exp(-1.0)), rel=1e-10)
    for a, b in zip(errs, errs[1:]):
        assert abs(a / b - 2.0) <= 0.3  # halving within 15%


def test_chernoff_converge_self_convergence_mode():
    Z = ops.diagonal(np.array([-1.0]))
    rep = ch.chernoff_converge(
        ch.implicit_euler(Z), None, _one(), 1.0, [16, 32, 64, 128], [1.0], l2_family()
    )
    assert rep.self_convergence
    # first column has no predecessor path; the rest are genuine differences
    assert all(e > 0 for e in rep.uniform_errors["l2"][1:])


def test_chernoff_converge_random_stable_first_order():
    # first-order methods on random 10x10 stable operators, ||Z|| <= 2
    fam = l2_family()
    for seed in (0, 1, 2):
        Z = dissipative_operator(10, seed=seed)
        M = Z.matrix
        S_part = ops.dense((M - M.T) / 2.0)
        P_part = ops.dense((M + M.T) / 2.0)
        ref = ops.semigroup(Z, method="dense_expm")
        rng = np.random.default_rng(seed + 100)
        h = StateVector(rng.standard_normal(10))
        n_grid = [16, 32, 64, 128, 256]
        for F in (
            ch.implicit_euler(Z),
            ch.lie_trotter(ops.semigroup(S_part, method="dense_expm"),
                           ops.semigroup(P_part, method="dense_expm")),
        ):
            rep = ch.chernoff_converge(F, ref, h, 1.0, n_grid, [0.5, 1.0], fam)
            slope, _ = rep.fitted_rate["l2"]
            assert 0.8 <= slope <= 1.2, (seed, F.label, slope)


# ------------------------------------------------------ stability


def test_stability_estimate_contraction():
    Z = dissipative_operator(8, seed=3)
    F = ch.implicit_euler(Z)
    lat = LatticeSpec.geometric(1.0, steps_per_decade=4, decades=1)
    M, a = ch.stability_estimate(F, lat)
    assert M <= 1 + 1e-8
    assert a <= 1e-8


def test_stability_estimate_growth_scalar():
    F = ch.ChernoffFn(
        eval=lambda s, x: (1.0 + s) * x,
        dim=1,
        claimed_derivative=ops.identity(1),
        label="growth",
        eval_adjoint=lambda s, x: (1.0 + s) * x,
    )
    lat = LatticeSpec.geometric(1.0, steps_per_decade=6, decades=2)
    M, a = ch.stability_estimate(F, lat)
    # (1+step)^m <= e^{m step} with near-equality at small steps
    assert M == pytest.approx(1.0, abs=1e-6)
    assert a == pytest.approx(1.0, abs=0.05)


def test_stability_estimate_identity():
    lat = LatticeSpec.geometric(1.0, steps_per_decade=4, decades=1)
    M, a = ch.stability_estimate(ch.identity_chernoff(3), lat)
    assert M == pytest.approx(1.0, abs=1e-12)
    assert a == pytest.approx(0.0, abs=1e-12)


# ------------------------------------------------------ uniqueness


def test_uniqueness_same_function_is_zero():
    rng = np.random.default_rng(6)
    Z = ops.dense(rng.standard_normal((4, 4)) * 0.4)
    S = ops.semigroup(Z, method="dense_expm")
    F = ch.semigroup_chernoff(S)
    h = StateVector(rng.standard_normal(4))
    dev = ch.uniqueness_cross_check([F, F], h, 1.0, 1000, l2_family())
    assert dev == 0.0


def test_uniqueness_scalar_closed_form():
    Z = ops.diagonal(np.array([-1.0]))
    F_ie = ch.implicit_euler(Z)
    F_ex = ch.semigroup_chernoff(ops.semigroup(Z))
    dev = ch.uniqueness_cross_check([F_ie, F_ex], _one(), 1.0, 10**4, l2_family())
    oracle = abs((1 + 1e-4) ** -(10**4) - np.exp(-1.0))
    assert dev == pytest.approx(oracle, rel=1e-6)
    assert dev == pytest.approx(1.8e-5, rel=0.03)


def test_uniqueness_three_ways_2x2():
    Z = ops.dense(A2 + B2)
    fns = [
        ch.lie_trotter(ops.semigroup(ops.dense(A2), method="dense_expm"),
                       ops.semigroup(ops.dense(B2), method="dense_expm")),
        ch.implicit_euler(Z),
        ch.semigroup_chernoff(ops.semigroup(Z, method="dense_expm")),
    ]
    h = StateVector(np.array([1.0, 0.0]))
    dev = ch.uniqueness_cross_check(fns, h, 1.0, 10**4, l2_family())
    assert dev < 1e-2


# ------------------------------------------------------ regularity


def test_regularity_zero_generator():
    F = ch.identity_chernoff(3)
    h = StateVector(np.ones(3))
    out = ch.regularity_check(F, ops.zero(3), h, 1.0, 64, np.linspace(0, 1, 5), l2_family())
    assert out["l2"]["coarse"] == 0.0 and out["l2"]["refined"] == 0.0


def test_regularity_scalar_modulus():
    Z = ops.diagonal(np.array([-1.0]))
    F = ch.semigroup_chernoff(ops.semigroup(Z))
    t_grid = np.linspace(0.0, 1.0, 5)
    delta = 0.25
    out = ch.regularity_check(F, Z, _one(), 1.0, 256, t_grid, l2_family())
    mod = out["l2"]["coarse"]
    assert mod == pytest.approx(1 - np.exp(-delta), rel=1e-2)
    assert mod <= delta
    # the midpoint refinement roughly halves the modulus
    assert out["l2"]["refined"] == pytest.approx(1 - np.exp(-delta / 2), rel=1e-2)


def test_regularity_dense_bound():
    Z = ops.dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    F = ch.semigroup_chernoff(ops.semigroup(Z, method="dense_expm"))
    t_grid = np.linspace(0.0, 1.0, 9)
    delta = 0.125
    h = StateVector(np.array([1.0, 0.0]) / 1.0)
    out = ch.regularity_check(F, Z, h, 1.0, 512, t_grid, l2_family())
    nz = ops.operator_norm(Z)
    bound = nz**2 * np.exp(nz * 1.0) * delta
    assert out["l2"]["coarse"] <= bound
