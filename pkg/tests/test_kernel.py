import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from deepbenders.kernel import (HAS_CONIC, LinearProgram, LpSolver, QuadraticProgram, Status,
                                check_farkas, check_ray, solve_lp, solve_qp)

needs_conic = pytest.mark.skipif(not HAS_CONIC, reason="no conic solver")


def test_bounded_max():
    out = solve_lp(LinearProgram([1.0], [[1.0]], ["<"], [3.0], maximize=True))
    assert out.status is Status.OPTIMAL
    assert out.x == pytest.approx([3.0])
    assert out.duals == pytest.approx([1.0])


def test_unbounded_ray():
    lp = LinearProgram([1.0], maximize=True)
    out = solve_lp(lp)
    assert out.status is Status.UNBOUNDED
    assert out.ray == pytest.approx([1.0])
    assert check_ray(lp, out.ray)


def test_infeasible_farkas():
    lp = LinearProgram([1.0], [[1.0], [1.0]], [">", "<"], [1.0, 0.0])
    out = solve_lp(lp)
    assert out.status is Status.INFEASIBLE
    assert check_farkas(lp, out.farkas)


def test_micro_dual_subproblem():
    # max p1 s.t. p1 <= 2 (objective on p2 is zero at y = 0)
    lp = LinearProgram([1.0, 0.0], [[1.0, 0.0]], ["<"], [2.0], maximize=True)
    out = solve_lp(lp)
    assert out.objective == pytest.approx(2.0)


def test_warm_resolve_after_cost_change():
    rng = np.random.default_rng(0)
    A = rng.uniform(0, 1, (6, 8))
    lp = LinearProgram(rng.uniform(1, 2, 8), A, [">"] * 6, np.ones(6))
    s = LpSolver(lp)
    s.solve()
    new = rng.uniform(1, 3, 8)
    s.set_costs(np.arange(8), new)
    warm = s.solve().objective
    cold = solve_lp(LinearProgram(new, A, [">"] * 6, np.ones(6))).objective
    assert warm == pytest.approx(cold, abs=1e-8)


def test_row_edits():
    s = LpSolver(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [">"], [1.0]))
    assert s.solve().objective == pytest.approx(1.0)
    s.set_row_rhs([0], [4.0])
    assert s.solve().objective == pytest.approx(4.0)
    s.add_rows(sp.csr_matrix([[1.0, 0.0]]), [">"], [5.0])
    assert s.solve().objective == pytest.approx(5.0)
    s.set_col_bounds([0], 0.0, 2.0)
    out = s.solve()
    assert out.status is Status.INFEASIBLE


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_strong_duality_random(seed):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 6), rng.integers(1, 6)
    A = rng.uniform(0.1, 1, (m, n))
    c = rng.uniform(0.5, 2, n)
    b = rng.uniform(0, 1, m)
    out = solve_lp(LinearProgram(c, A, [">"] * m, b))
    assert out.status is Status.OPTIMAL
    dual = float(out.duals @ b)
    assert abs(out.objective - dual) <= 1e-6 * (1 + abs(out.objective))
    ref = linprog(c, A_ub=-A, b_ub=-b, method="highs")
    assert out.objective == pytest.approx(ref.fun, abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_farkas_pairing(seed):
    # primal min c.x, A x >= b - B y is infeasible exactly when its dual is unbounded
    rng = np.random.default_rng(seed)
    m, n = 3, 2
    A = rng.normal(size=(m, n))
    b = rng.normal(size=m) * 3
    c = rng.uniform(0.1, 1, n)
    primal = solve_lp(LinearProgram(c, A, [">"] * m, b))
    dual = solve_lp(LinearProgram(b, A.T, ["<"] * n, c, maximize=True))
    assert (primal.status is Status.INFEASIBLE) == (dual.status is Status.UNBOUNDED)


@needs_conic
def test_qp_halfspace_projection():
    out = solve_qp(QuadraticProgram(np.array([2.0, 2.0]), np.zeros(2), [[0.0, 1.0]], [">"], [2.0]))
    assert out.x == pytest.approx([0.0, 2.0], abs=1e-7)
    assert out.objective == pytest.approx(4.0, abs=1e-7)


@needs_conic
def test_qp_two_constraints():
    out = solve_qp(QuadraticProgram(np.array([2.0, 2.0]), np.zeros(2),
                                    [[-1.0, 1.0], [1.0, 0.0]], [">", ">"], [2.0, 0.0]))
    assert out.x == pytest.approx([0.0, 2.0], abs=1e-7)
    assert np.all(out.duals >= -1e-8)


@needs_conic
def test_qp_infeasible():
    out = solve_qp(QuadraticProgram(np.array([2.0]), np.zeros(1), [[1.0], [1.0]], [">", "<"],
                                    [1.0, 0.0]))
    assert out.status is Status.INFEASIBLE
