import math

import numpy as np
import pytest

from deepbenders.cflp import CflpOracle, generate_cst, to_problem_data
from deepbenders.gpa import GpaConfig, gpa_separate, project, seed_initial_halfspaces
from deepbenders.model import (Cut, CutKind, MasterPoint, ScalingInfo, compute_scaling_beta,
                               micro_instance)
from deepbenders.separation import DspOracle, build_nsp, DistanceStrategy, Variant, separate_cb

M1 = micro_instance()
ONE = ScalingInfo(1.0)
ORIGIN = MasterPoint([0.0], 0.0)


def cut(a_y, a_gamma, rhs):
    return Cut(np.atleast_1d(np.asarray(a_y, dtype=float)), a_gamma, rhs,
               CutKind.OPTIMALITY if a_gamma else CutKind.FEASIBILITY)


def test_project_empty():
    z, d, mult = project(ORIGIN, [], 2)
    assert z == pytest.approx([0.0, 0.0]) and d == 0.0 and mult.size == 0


@pytest.mark.parametrize("q", [1, 2, math.inf])
def test_project_single_flat_cut(q):
    z, d, _ = project(ORIGIN, [cut(0.0, 1.0, 2.0)], q)
    assert z == pytest.approx([0.0, 2.0], abs=1e-7)
    assert d == pytest.approx(2.0, abs=1e-7)


def test_project_l1_two_cuts():
    z, d, _ = project(ORIGIN, [cut(-1.0, 1.0, 2.0), cut(1.0, 0.0, 0.0)], 1)
    assert d == pytest.approx(2.0)
    assert z == pytest.approx([0.0, 2.0])


def test_project_l2_two_cuts():
    # the line projection (-1, 1) violates y >= 0
    z, d, mult = project(ORIGIN, [cut(-1.0, 1.0, 2.0), cut(1.0, 0.0, 0.0)], 2)
    assert z == pytest.approx([0.0, 2.0], abs=1e-6)
    assert np.all(mult >= 0)


def test_seeds():
    assert seed_initial_halfspaces(None) == []
    assert seed_initial_halfspaces(GpaConfig(), {"n": 3}) == []
    b = seed_initial_halfspaces(GpaConfig(seed_bounds=True), {"n": 3})
    assert len(b) == 6 and all(c.source == "bound" for c in b)
    pool = [cut(1.0, 1.0, 0.0), cut(0.5, 1.0, 1.0)]
    assert seed_initial_halfspaces(GpaConfig(reuse_pool=True), {"n": 1, "pool": pool}) == pool


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_micro_depth(p):
    res, state = gpa_separate(ORIGIN, p, DspOracle(M1), M1, ONE)
    assert res.depth == pytest.approx(2.0, abs=1e-6)
    assert state.lower_bound <= state.upper_bound + 1e-7


def test_first_cut_is_classical():
    res, _ = gpa_separate(ORIGIN, 2.0, DspOracle(M1), M1, ONE)
    cb = separate_cb(ORIGIN, M1, ONE).cut
    assert res.cuts[0].coefficients() == pytest.approx(cb.coefficients())
    assert res.cuts[0].rhs == pytest.approx(cb.rhs)


def test_point_inside_epigraph():
    res, state = gpa_separate(MasterPoint([0.0], 3.0), 2.0, DspOracle(M1), M1, ONE)
    assert res.depth == 0.0 and res.optimal and not res.cuts


def test_single_iteration_is_classical():
    res, state = gpa_separate(ORIGIN, 2.0, DspOracle(M1), M1, ONE,
                              GpaConfig(max_iter=1, emit_aggregate=False))
    cb = separate_cb(ORIGIN, M1, ONE).cut
    assert len(res.cuts) == 1 and state.h == 1
    assert res.cuts[0].coefficients() == pytest.approx(cb.coefficients())


@pytest.fixture(scope="module")
def cst():
    cf = generate_cst(8, 12, 5.0, 3)
    inst = to_problem_data(cf)
    oracle = CflpOracle(cf, inst)
    scaling = compute_scaling_beta(inst, np.full(cf.n, 0.5), oracle)
    return cf, inst, scaling


def _points(inst, scaling, oracle, rng, count):
    for _ in range(count):
        y = rng.random(inst.n)
        ans = oracle.solve(y)
        g = ans.value / scaling.beta * 0.5 if ans.bounded else 0.0
        yield MasterPoint(y, g, scaling.beta)


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_bounds_monotone(cst, p):
    cf, inst, scaling = cst
    rng = np.random.default_rng(1)
    for pt in _points(inst, scaling, CflpOracle(cf, inst), rng, 4):
        _, st = gpa_separate(pt, p, CflpOracle(cf, inst), inst, scaling,
                             GpaConfig(max_iter=50))
        lo = np.array(st.lower_history)
        hi = np.array(st.upper_history)
        assert np.all(np.diff(lo) >= -1e-9)
        fin = hi[np.isfinite(hi)]
        assert np.all(np.diff(fin) <= 1e-9)
        assert np.all(lo[np.isfinite(hi)] <= hi[np.isfinite(hi)] + 1e-7)


@pytest.mark.parametrize("p,variant", [(1.0, Variant.L1), (2.0, Variant.L2),
                                       (math.inf, Variant.LINF)])
def test_converges_to_direct(cst, p, variant):
    cf, inst, scaling = cst
    rng = np.random.default_rng(2)
    sep = build_nsp(DistanceStrategy(variant), inst, scaling)
    for pt in _points(inst, scaling, CflpOracle(cf, inst), rng, 3):
        res, _ = gpa_separate(pt, p, CflpOracle(cf, inst), inst, scaling,
                              GpaConfig(max_iter=1000, tol=1e-9))
        assert res.depth == pytest.approx(sep.separate(pt).depth, rel=1e-4)


def test_violated_only_policy(cst):
    cf, inst, scaling = cst
    rng = np.random.default_rng(3)
    cfg = GpaConfig(max_iter=20, emit_all=False)
    for pt in _points(inst, scaling, CflpOracle(cf, inst), rng, 4):
        res, _ = gpa_separate(pt, 1.0, CflpOracle(cf, inst), inst, scaling, cfg)
        for c in res.cuts:
            assert c.violation_at(pt.y_hat, pt.gamma_hat) > cfg.sep_tol


def test_feasibility_cut_when_projection_leaves_domain(cst):
    cf, inst, scaling = cst
    pt = MasterPoint(np.zeros(cf.n), 0.0, scaling.beta)
    res, st = gpa_separate(pt, 2.0, CflpOracle(cf, inst), inst, scaling, GpaConfig(max_iter=3))
    first = res.cuts[0]
    assert first.kind is CutKind.FEASIBILITY and first.a_gamma == 0.0
    assert math.isinf(st.upper_history[0])


def test_rejects_other_norms():
    with pytest.raises(ValueError):
        gpa_separate(ORIGIN, 3.0, DspOracle(M1), M1, ONE)
