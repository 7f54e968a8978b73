import math

import numpy as np
import pytest
import scipy.sparse as sp

from deepbenders import separation as S
from deepbenders.errors import (CorePointOutsideDomain, DegenerateNormalization, NspUnbounded,
                                UnsupportedStrategy, ZeroNorm)
from deepbenders.model import (DualCertificate, MasterPoint, ProblemData, ScalingInfo,
                               micro_instance, violation)

M1 = micro_instance()
ONE = ScalingInfo(1.0)
ORIGIN = MasterPoint([0.0], 0.0)


def nsp(variant, core=None):
    return S.build_nsp(S.DistanceStrategy(variant, core_point=core), M1, ONE)


def test_parse_strategy():
    assert S.parse_strategy("LINF") is S.Variant.LINF
    with pytest.raises(UnsupportedStrategy):
        S.parse_strategy("l3")


def test_core_point_required():
    with pytest.raises(ValueError):
        S.DistanceStrategy(S.Variant.MWP)


def test_separate_cb_micro():
    res = S.separate_cb(ORIGIN, M1, ONE)
    assert res.depth == pytest.approx(2.0)
    assert res.certificate.p == pytest.approx([2.0, 0.0])
    assert res.certificate.pi0 == 1.0


def test_separate_cb_at_the_epigraph():
    res = S.separate_cb(MasterPoint([0.0], 2.0), M1, ONE)
    assert res.optimal and res.cut is None


def test_separate_cb_outside_domain():
    # y >= 1 is required: y <= 1 - x with x >= 0 and no way to cover the row at y = 0
    inst = ProblemData(np.ones(1), np.ones(1), sp.csr_matrix([[-1.0]]), sp.csr_matrix([[1.0]]),
                       np.array([1.0]))
    res = S.separate_cb(MasterPoint([0.0], 0.0), inst, ONE)
    assert math.isinf(res.depth)
    assert res.certificate.pi0 == 0.0


@pytest.mark.parametrize("variant", ["linf", "l1", "l2", "l4", "cb"])
def test_micro_depth_two(variant):
    assert nsp(variant).separate(ORIGIN).depth == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("variant", ["l1", "l2"])
def test_micro_flat_cut(variant):
    # gamma >= 2 is strictly deepest for these norms; gamma >= 2 + y ties under linf
    cut = nsp(variant).separate(ORIGIN).cut
    assert cut.a_y == pytest.approx([0.0], abs=1e-6)
    assert cut.rhs / cut.a_gamma == pytest.approx(2.0, abs=1e-6)


def test_linf_certificate_is_a_tie():
    # p = (2, 0) and p = (2, 1) both reach depth 2; their coefficient vectors (-1, 1) and
    # (0, 1) have the same max-norm
    res = nsp("linf").separate(ORIGIN)
    c = res.certificate
    assert c.p[0] == pytest.approx(2.0) and c.pi0 == pytest.approx(1.0)
    assert 0.0 <= c.p[1] <= 1.0 + 1e-9
    assert violation(c, ORIGIN, M1) == pytest.approx(2.0)


def test_linear_pseudonorm_depths_micro():
    # MIS: g = p1 + p2 + pi0, best ratio 2/3; RL1: g = p1 + p2 + 4 pi0, ratio 2/6
    assert nsp("mis").separate(ORIGIN).depth == pytest.approx(2 / 3)
    assert nsp("rl1").separate(ORIGIN).depth == pytest.approx(1 / 3)


def test_weights():
    w, w0 = S.weights_mis(M1)
    assert list(w) == [1.0, 1.0] and w0 == 1.0
    w, w0 = S.weights_rl1(M1, ONE)
    assert list(w) == [1.0, 1.0] and w0 == 4.0
    w, w0 = S.weights_cb(M1, ONE)
    assert list(w) == [0.0, 0.0] and w0 == 1.0


def test_weights_mis_zero_row():
    inst = ProblemData(np.ones(1), np.ones(1), sp.csr_matrix([[1.0], [1.0]]),
                       sp.csr_matrix([[1.0], [0.0]]), np.ones(2))
    w, _ = S.weights_mis(inst)
    assert list(w) == [1.0, 0.0]


def test_weights_mis_override():
    w, w0 = S.weights_mis(M1, ([3.0, 0.0], 2.0))
    assert list(w) == [3.0, 0.0] and w0 == 2.0


def test_weights_mis_no_rows():
    inst = ProblemData(np.ones(1), np.ones(1), sp.csr_matrix((0, 1)), sp.csr_matrix((0, 1)),
                       np.zeros(0))
    w, w0 = S.weights_mis(inst)
    assert w.size == 0 and w0 == 1.0


def test_weights_mwp_micro():
    w, w0 = S.weights_mwp(M1, [0.5])
    assert w == pytest.approx([-0.5, 0.5])
    assert w0 == pytest.approx(1.0)


def test_weights_mwp_outside_domain():
    inst = ProblemData(np.ones(1), np.ones(1), sp.csr_matrix([[-1.0]]), sp.csr_matrix([[1.0]]),
                       np.array([1.0]))
    with pytest.raises(CorePointOutsideDomain):
        S.weights_mwp(inst, [0.0])


def test_weights_cw_micro():
    w, w0 = S.weights_cw(M1, [0.5], ORIGIN, 2.5)
    assert w == pytest.approx([0.5, 0.5])
    assert w0 == pytest.approx(1.0)
    w1, w01 = S.weights_cw(M1, [0.5], MasterPoint([0.0], -0.75), 2.5)
    assert w01 - w0 == pytest.approx(0.75)


def test_weights_cw_degenerate():
    with pytest.raises(DegenerateNormalization):
        S.weights_cw(M1, [0.5], MasterPoint([0.5], 2.5), 2.5)


def test_cw_depth_micro():
    assert nsp("cw", [0.5]).separate(ORIGIN).depth == pytest.approx(1.0)


def test_mwp_zero_on_tight_certificates():
    # the flat certificate is tight at the core point, so the normalization vanishes
    with pytest.raises(NspUnbounded) as exc:
        nsp("mwp", [0.5]).separate(ORIGIN)
    assert exc.value.certificate is not None


def test_charnes_cooper():
    c = DualCertificate([2.0, 1.0], 1.0)
    assert S.charnes_cooper_scale(c, lambda z: z.pi0).p == pytest.approx([2.0, 1.0])
    out = S.charnes_cooper_scale(c.scaled(7.0), lambda z: z.pi0)
    assert out.p == pytest.approx([2.0, 1.0])
    out = S.charnes_cooper_scale(c, 4.0)
    assert out.p == pytest.approx([0.5, 0.25]) and out.pi0 == pytest.approx(0.25)
    with pytest.raises(ZeroNorm):
        S.charnes_cooper_scale(c, 0.0)


@pytest.mark.parametrize("alpha", [1e-3, 1.0, 1e3])
def test_normalized_distance_homogeneous(alpha):
    c = DualCertificate([2.0, 0.5], 1.0)
    for v in ("l1", "l2", "linf", "mis", "rl1"):
        base = S.normalized_distance(v, c, ORIGIN, M1, ONE)
        assert S.normalized_distance(v, c.scaled(alpha), ORIGIN, M1, ONE) == pytest.approx(base)


def test_separate_l2_micro():
    res = S.separate_l2(ORIGIN, M1, ONE)
    assert res.depth == pytest.approx(2.0, abs=1e-7)
    assert res.projection == pytest.approx([0.0, 2.0], abs=1e-6)


def test_separate_l2_inside_and_boundary():
    assert S.separate_l2(MasterPoint([0.0], 5.0), M1, ONE).optimal
    assert S.separate_l2(MasterPoint([0.0], 2.0), M1, ONE).depth == pytest.approx(0.0, abs=1e-7)


def test_repeat_is_deterministic():
    sep = nsp("l1")
    a = sep.separate(MasterPoint([0.3], 0.5)).depth
    sep.separate(MasterPoint([0.9], -1.0))
    b = sep.separate(MasterPoint([0.3], 0.5)).depth
    assert a == pytest.approx(b, abs=1e-9)


def test_project_epigraph_micro():
    for q in (1.0, 2.0, math.inf):
        dist, proj, cert = S.project_epigraph(ORIGIN, M1, ONE, q)
        assert dist == pytest.approx(2.0, abs=1e-6)
        assert cert is not None


def test_depth_chain_on_micro_points():
    rng = np.random.default_rng(3)
    seps = {v: nsp(v) for v in ("linf", "l4", "l2", "l1", "rl1")}
    for _ in range(20):
        pt = MasterPoint([rng.random()], rng.uniform(-3, 2))
        chain = [S.separate_cb(pt, M1, ONE).depth] + [seps[v].separate(pt).depth
                                                     for v in ("linf", "l4", "l2", "l1", "rl1")]
        assert all(a >= b - 1e-6 for a, b in zip(chain, chain[1:])), chain
