"""Distance functions and their separation problems.

Every separator maximizes the violation of a certificate at a master
point subject to a normalization ``g(p, pi0) <= 1`` (or ``= 1`` for the
linear pseudonorms).  The LP models use the arrangement

    tau = B'p - pi0 f,   objective  b.p - y_hat.tau - beta*gamma_hat*pi0

so moving to a new point only touches the costs of ``tau_j`` whose
``y_hat_j`` changed and the cost of ``pi0``.  Norm constraints act on the
scaled coefficient vector ``(tau, beta*pi0)``.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernel
from .errors import (CorePointOutsideDomain, DegenerateNormalization, DspUnbounded,
                     NspUnbounded, UnsupportedStrategy, ZeroNorm)
from .kernel import INF, LinearProgram, LpSolver, QuadraticProgram, SocConstraint, Status
from .model import (ZERO_TOL, Cut, DualCertificate, MasterPoint, ProblemData, ScalingInfo,
                    cut_from_certificate, violation)

log = logging.getLogger(__name__)

SEP_TOL = 1e-6


class Variant(str, enum.Enum):
    CB = "cb"
    MIS = "mis"
    RL1 = "rl1"
    MWP = "mwp"
    CW = "cw"
    L1 = "l1"
    L2 = "l2"
    L4 = "l4"
    LINF = "linf"


LINEAR_PSEUDONORMS = (Variant.CB, Variant.MIS, Variant.RL1, Variant.MWP, Variant.CW)


def parse_strategy(text: str) -> Variant:
    try:
        return Variant(text.strip().lower())
    except ValueError:
        raise UnsupportedStrategy(
            f"unknown strategy {text!r}; expected one of {', '.join(v.value for v in Variant)}"
        ) from None


@dataclass
class DistanceStrategy:
    variant: Variant
    core_point: np.ndarray | None = None
    mis_weights: tuple[np.ndarray, float] | None = None

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = parse_strategy(self.variant)
        needs_core = self.variant in (Variant.MWP, Variant.CW)
        if needs_core and self.core_point is None:
            raise ValueError(f"{self.variant.value} needs a core point")
        if self.core_point is not None:
            self.core_point = np.asarray(self.core_point, dtype=float)


@dataclass
class SeparationResult:
    certificate: DualCertificate | None
    depth: float
    cut: Cut | None
    optimal: bool
    norm_value: float = float("nan")
    strategy: str = ""
    projection: np.ndarray | None = None
    cuts: list[Cut] = field(default_factory=list)

    def __post_init__(self):
        if self.cut is not None and not self.cuts:
            self.cuts = [self.cut]


# ---------------------------------------------------------------------------
# classical dual subproblem

@dataclass
class DspAnswer:
    bounded: bool
    certificate: DualCertificate
    value: float  # Q(y) including f.y; inf when unbounded
    q_tilde: float

    @property
    def u(self) -> np.ndarray:
        return self.certificate.p


class DspOracle:
    """max p.(b - B y) s.t. A'p <= c, p >= 0, kept warm across calls."""

    def __init__(self, inst: ProblemData):
        self.inst = inst
        m = inst.m
        lp = LinearProgram(np.zeros(m), inst.A.T.tocsr(), ["<"] * inst.n_prime, inst.c,
                           np.zeros(m), np.full(m, INF), maximize=True)
        self._lp = LpSolver(lp)
        self._obj = np.zeros(m)
        self.calls = 0

    def solve(self, y) -> DspAnswer:
        inst = self.inst
        y = np.asarray(y, dtype=float)
        obj = inst.b - inst.B @ y
        changed = np.flatnonzero(obj != self._obj)
        self._lp.set_costs(changed, obj[changed])
        self._obj = obj
        self.calls += 1
        out = self._lp.solve()
        fy = float(inst.f @ y)
        if out.status is Status.OPTIMAL:
            u = np.clip(out.x, 0.0, None)
            qt = float(u @ obj)
            return DspAnswer(True, DualCertificate(u, 1.0), qt + fy, qt)
        if out.status is Status.UNBOUNDED:
            ray = np.clip(out.ray, 0.0, None)
            return DspAnswer(False, DualCertificate(ray, 0.0), math.inf, math.inf)
        raise DspUnbounded("dual subproblem infeasible: the instance is unbounded below")


def separate_cb(point: MasterPoint, inst: ProblemData, scaling: ScalingInfo,
                oracle=None, tol: float = SEP_TOL) -> SeparationResult:
    """Classical cut from the dual subproblem at ``point.y_hat``."""
    oracle = oracle or DspOracle(inst)
    ans = oracle.solve(point.y_hat)
    cert = ans.certificate
    if ans.bounded:
        depth = (ans.value - point.eta_hat) / scaling.beta
        g = scaling.beta
    else:
        depth = math.inf
        g = 0.0
    cut = None
    if depth > tol:
        cut = cut_from_certificate(cert, inst, scaling, source="cb")
    return SeparationResult(cert, depth, cut, depth <= tol, g, "cb")


# ---------------------------------------------------------------------------
# weights

def weights_mis(inst: ProblemData, override=None):
    if override is not None:
        w, w0 = override
        return np.asarray(w, dtype=float), float(w0)
    nnz_rows = np.diff(inst.B.tocsr().indptr) if inst.m else np.zeros(0)
    absB = abs(inst.B).sum(axis=1).A1 if inst.m else np.zeros(0)
    w = np.where((nnz_rows > 0) & (absB > 0), 1.0, 0.0)
    return w, 1.0


def weights_rl1(inst: ProblemData, scaling: ScalingInfo):
    w = abs(inst.B).sum(axis=1).A1 if inst.m else np.zeros(0)
    return w, scaling.beta + float(np.abs(inst.f).sum())


def weights_cb(inst: ProblemData, scaling: ScalingInfo):
    return np.zeros(inst.m), scaling.beta


def weights_mwp(inst: ProblemData, core_point, oracle=None):
    oracle = oracle or DspOracle(inst)
    y = np.asarray(core_point, dtype=float)
    ans = oracle.solve(y)
    if not ans.bounded:
        raise CorePointOutsideDomain("core point is outside the domain of Q")
    return inst.B @ y - inst.b, ans.q_tilde


def weights_cw(inst: ProblemData, core_point, point: MasterPoint, q_core: float):
    y = np.asarray(core_point, dtype=float)
    d = y - point.y_hat
    w = inst.B @ d
    w0 = q_core - point.eta_hat - float(inst.f @ d)
    if np.max(np.abs(w), initial=0.0) <= ZERO_TOL and w0 <= ZERO_TOL:
        raise DegenerateNormalization("separated point coincides with the core point")
    return w, w0


def charnes_cooper_scale(cert: DualCertificate, g) -> DualCertificate:
    """Rescale ``cert`` so that the positively homogeneous ``g`` equals 1."""
    val = g(cert) if callable(g) else float(g)
    if not val > ZERO_TOL * 1e-3:
        raise ZeroNorm("normalization vanishes on the certificate")
    return cert.scaled(1.0 / val)


def coefficient_vector(cert: DualCertificate, inst: ProblemData, scaling: ScalingInfo):
    """Scaled coefficient vector (B'p - pi0 f, beta pi0)."""
    return np.append(inst.B.T @ cert.p - cert.pi0 * inst.f, scaling.beta * cert.pi0)


def norm_value(variant: Variant, cert: DualCertificate, inst: ProblemData, scaling: ScalingInfo,
               weights=None) -> float:
    """g(p, pi0) for ``variant``; linear pseudonorms need ``weights``."""
    variant = Variant(variant)
    v = coefficient_vector(cert, inst, scaling)
    if variant is Variant.L1:
        return float(np.abs(v).sum())
    if variant is Variant.L2:
        return float(np.linalg.norm(v))
    if variant is Variant.L4:
        return float(np.sum(v ** 4) ** 0.25)
    if variant is Variant.LINF:
        return float(np.max(np.abs(v)))
    if weights is None:
        if variant is Variant.CB:
            weights = weights_cb(inst, scaling)
        elif variant is Variant.MIS:
            weights = weights_mis(inst)
        elif variant is Variant.RL1:
            weights = weights_rl1(inst, scaling)
        else:
            raise ValueError(f"{variant.value} weights depend on the core point")
    w, w0 = weights
    return float(np.asarray(w) @ cert.p + w0 * cert.pi0)


def normalized_distance(variant, cert, point, inst, scaling, weights=None) -> float:
    g = norm_value(variant, cert, inst, scaling, weights)
    if g <= 0:
        raise ZeroNorm("normalization vanishes on the certificate")
    return violation(cert, point, inst) / g


# ---------------------------------------------------------------------------
# normalized separation problems

class Separator:
    variant: Variant

    def separate(self, point: MasterPoint) -> SeparationResult:
        raise NotImplementedError

    def _result(self, cert, depth, g, point=None, projection=None) -> SeparationResult:
        cut = None
        if depth > self.tol:
            cut = cut_from_certificate(cert, self.inst, self.scaling, source=self.variant.value)
        return SeparationResult(cert, depth, cut, depth <= self.tol, g, self.variant.value,
                                projection=projection)


class CbSeparator(Separator):
    variant = Variant.CB

    def __init__(self, inst, scaling, oracle=None, tol=SEP_TOL):
        self.inst, self.scaling, self.tol = inst, scaling, tol
        self.oracle = oracle or DspOracle(inst)

    def separate(self, point):
        return separate_cb(point, self.inst, self.scaling, self.oracle, self.tol)


class LpSeparator(Separator):
    """NSP as a persistent LP for LINF, L1 and the linear pseudonorms."""

    def __init__(self, variant: Variant, inst: ProblemData, scaling: ScalingInfo, *,
                 weights=None, core_point=None, q_core=None, tol=SEP_TOL):
        self.variant, self.inst, self.scaling, self.tol = variant, inst, scaling, tol
        self.core_point, self.q_core = core_point, q_core
        m, n, npr = inst.m, inst.n, inst.n_prime
        beta = scaling.beta
        self.ip0 = m
        self.itau = m + 1 + np.arange(n)
        ncol = m + 1 + n
        lb = np.concatenate([np.zeros(m + 1), np.full(n, -INF)])
        ub = np.full(ncol, INF)
        BT = inst.B.T.tocsr()
        # tau - B'p + pi0 f = 0
        rows = [sp.hstack([-BT, sp.csr_matrix(inst.f.reshape(-1, 1)), sp.identity(n)])]
        senses = ["="] * n
        rhs = [np.zeros(n)]
        if npr:
            rows.append(sp.hstack([inst.A.T, sp.csr_matrix(-inst.c.reshape(-1, 1)),
                                   sp.csr_matrix((npr, n))]))
            senses += ["<"] * npr
            rhs.append(np.zeros(npr))
        self.norm_row = None
        if variant is Variant.LINF:
            lb[self.itau], ub[self.itau] = -1.0, 1.0
            ub[self.ip0] = 1.0 / beta
        elif variant is Variant.L1:
            ncol += n
            lb = np.concatenate([lb, np.zeros(n)])
            ub = np.concatenate([ub, np.full(n, INF)])
            rows = [sp.hstack([r, sp.csr_matrix((r.shape[0], n))]) for r in rows]
            I = sp.identity(n)
            Z = sp.csr_matrix((n, m))
            z1 = sp.csr_matrix((n, 1))
            rows.append(sp.hstack([Z, z1, I, -I]))
            rows.append(sp.hstack([Z, z1, -I, -I]))
            senses += ["<"] * (2 * n)
            rhs += [np.zeros(n), np.zeros(n)]
            last = np.zeros(ncol)
            last[self.ip0] = beta
            last[m + 1 + n:] = 1.0
            rows.append(sp.csr_matrix(last.reshape(1, -1)))
            senses.append("<")
            rhs.append(np.ones(1))
        else:
            if variant is Variant.CW:
                # g = tau.(y_core - y_hat) + pi0 (Q(y_core) - eta_hat); filled per point
                row = np.zeros(ncol)
                row[self.ip0] = 1.0
            else:
                w, w0 = weights
                row = np.concatenate([np.asarray(w, dtype=float), [w0], np.zeros(n)])
            self.weights = weights
            rows.append(sp.csr_matrix(row.reshape(1, -1)))
            senses.append("=")
            rhs.append(np.ones(1))
            self.norm_row = len(senses) - 1
        A = sp.vstack(rows, format="csr")
        c = np.zeros(ncol)
        c[:m] = inst.b
        lp = LinearProgram(c, A, senses, np.concatenate(rhs), lb, ub, maximize=True)
        self._lp = LpSolver(lp)
        self._y_prev = np.zeros(n)
        self._cw_prev = None

    def _update(self, point: MasterPoint):
        y = point.y_hat
        changed = np.flatnonzero(y != self._y_prev)
        self._lp.set_costs(self.itau[changed], -y[changed])
        self._y_prev = y.copy()
        self._lp.set_costs([self.ip0], [-self.scaling.beta * point.gamma_hat])
        if self.variant is Variant.CW:
            w, w0 = weights_cw(self.inst, self.core_point, point, self.q_core)
            d = self.core_point - y
            coef = np.append(d, self.q_core - point.eta_hat)
            cols = np.append(self.itau, self.ip0)
            if self._cw_prev is None:
                sel = np.arange(coef.size)
            else:
                sel = np.flatnonzero(coef != self._cw_prev)
            self._lp.set_row_coeffs(self.norm_row, cols[sel], coef[sel])
            self._cw_prev = coef
            self.weights = (w, w0)

    def _cert_from(self, v):
        m = self.inst.m
        return DualCertificate(np.clip(v[:m], 0.0, None), max(v[self.ip0], 0.0))

    def separate(self, point):
        self._update(point)
        out = self._lp.solve()
        if out.status is Status.UNBOUNDED:
            cert = self._cert_from(out.ray)
            raise NspUnbounded(f"{self.variant.value} normalization is zero on a violated ray", cert)
        if out.status is not Status.OPTIMAL:
            raise DspUnbounded("separation problem infeasible")
        cert = self._cert_from(out.x)
        depth = float(out.objective)
        g = self.norm_of(cert)
        if depth > self.tol and abs(g - 1.0) > 1e-6:
            log.warning("normalization not binding: g = %.3g", g)
        return self._result(cert, depth, g)

    def norm_of(self, cert):
        w = self.weights if self.variant in LINEAR_PSEUDONORMS else None
        return norm_value(self.variant, cert, self.inst, self.scaling, w)


class L2Separator(Separator):
    variant = Variant.L2

    def __init__(self, inst, scaling, tol=SEP_TOL, oracle=None):
        self.inst, self.scaling, self.tol = inst, scaling, tol
        self.oracle = oracle or DspOracle(inst)

    def separate(self, point):
        dist, proj, cert = project_epigraph(point, self.inst, self.scaling, 2, self.oracle)
        if cert is None:
            return SeparationResult(None, dist, None, True, float("nan"), "l2", projection=proj)
        g = norm_value(Variant.L2, cert, self.inst, self.scaling)
        return self._result(cert, dist, g, projection=proj)


class L4Separator(Separator):
    """NSP with ||(tau, beta pi0)||_4 <= 1 as an SOCP.

    With v the coefficient vector: v_k^2 <= s_k (rotated cones) and
    ||s||_2 <= 1.
    """

    variant = Variant.L4

    def __init__(self, inst, scaling, tol=SEP_TOL):
        if not kernel.HAS_CONIC:
            raise UnsupportedStrategy("l4 needs quadratic-constraint support")
        self.inst, self.scaling, self.tol = inst, scaling, tol
        m, n, npr = inst.m, inst.n, inst.n_prime
        self.nv = m + 1 + n + (n + 1)
        self.ip0 = m
        self.itau = m + 1 + np.arange(n)
        self.isv = m + 1 + n + np.arange(n + 1)
        BT = inst.B.T.tocsr()
        rows = [sp.hstack([-BT, sp.csr_matrix(inst.f.reshape(-1, 1)), sp.identity(n),
                           sp.csr_matrix((n, n + 1))])]
        senses = ["="] * n
        if npr:
            rows.append(sp.hstack([inst.A.T, sp.csr_matrix(-inst.c.reshape(-1, 1)),
                                   sp.csr_matrix((npr, n + n + 1))]))
            senses += ["<"] * npr
        self.A = sp.vstack(rows, format="csr")
        self.senses = senses
        self.rhs = np.zeros(len(senses))
        lb = np.full(self.nv, -INF)
        lb[: m + 1] = 0.0
        lb[self.isv] = 0.0
        self.lb = lb
        socs = []
        G = sp.csr_matrix((np.ones(n + 1), (np.arange(n + 1), self.isv)), shape=(n + 1, self.nv))
        socs.append(SocConstraint(G, np.zeros(n + 1), np.zeros(self.nv), 1.0))
        comp = list(self.itau) + [self.ip0]
        scale = [1.0] * n + [scaling.beta]
        for k, (col, s) in enumerate(zip(comp, scale)):
            # ||(2 s v, sk - 1)|| <= sk + 1
            Gk = sp.csr_matrix(([2.0 * s, 1.0], ([0, 1], [col, self.isv[k]])), shape=(2, self.nv))
            gk = np.zeros(self.nv)
            gk[self.isv[k]] = 1.0
            socs.append(SocConstraint(Gk, np.array([0.0, -1.0]), gk, 1.0))
        self.socs = socs

    def separate(self, point):
        inst, m = self.inst, self.inst.m
        q = np.zeros(self.nv)
        q[:m] = -inst.b
        q[self.itau] = point.y_hat
        q[self.ip0] = self.scaling.beta * point.gamma_hat
        qp = QuadraticProgram(np.zeros(self.nv), q, self.A, self.senses, self.rhs,
                              self.lb, None, self.socs)
        out = kernel.solve_qp(qp)
        if out.status is not Status.OPTIMAL:
            raise DspUnbounded(f"l4 separation ended {out.status.value}")
        x = out.x
        cert = DualCertificate(np.clip(x[:m], 0.0, None), max(x[self.ip0], 0.0))
        depth = -out.objective
        g = norm_value(Variant.L4, cert, inst, self.scaling)
        return self._result(cert, depth, g)


def build_nsp(strategy: DistanceStrategy, inst: ProblemData, scaling: ScalingInfo, *,
              oracle=None, tol: float = SEP_TOL) -> Separator:
    """Persistent separator for ``strategy``."""
    if not isinstance(strategy, DistanceStrategy):
        strategy = DistanceStrategy(strategy)
    v = strategy.variant
    if v is Variant.CB:
        return CbSeparator(inst, scaling, oracle, tol)
    if v is Variant.L2:
        if not kernel.HAS_CONIC:
            raise UnsupportedStrategy("l2 needs a quadratic-program solver")
        return L2Separator(inst, scaling, tol, oracle)
    if v is Variant.L4:
        return L4Separator(inst, scaling, tol)
    if v in (Variant.L1, Variant.LINF):
        return LpSeparator(v, inst, scaling, tol=tol)
    if v is Variant.MIS:
        return LpSeparator(v, inst, scaling, weights=weights_mis(inst, strategy.mis_weights), tol=tol)
    if v is Variant.RL1:
        return LpSeparator(v, inst, scaling, weights=weights_rl1(inst, scaling), tol=tol)
    oracle = oracle or DspOracle(inst)
    if v is Variant.MWP:
        w = weights_mwp(inst, strategy.core_point, oracle)
        return LpSeparator(v, inst, scaling, weights=w, tol=tol)
    ans = oracle.solve(strategy.core_point)
    if not ans.bounded:
        raise CorePointOutsideDomain("core point is outside the domain of Q")
    return LpSeparator(v, inst, scaling, core_point=strategy.core_point, q_core=ans.value,
                       weights=(np.zeros(inst.m), 0.0), tol=tol)


def separate(strategy, point: MasterPoint, model: Separator) -> SeparationResult:
    """Separate ``point`` with a model from :func:`build_nsp`."""
    return model.separate(point)


def separate_l2(point: MasterPoint, inst: ProblemData, scaling: ScalingInfo,
                tol: float = SEP_TOL, oracle=None) -> SeparationResult:
    return L2Separator(inst, scaling, tol, oracle).separate(point)


# ---------------------------------------------------------------------------
# primal side: projection of a point onto the scaled epigraph

def project_epigraph(point: MasterPoint, inst: ProblemData, scaling: ScalingInfo, q,
                     oracle=None):
    """l_q projection of (y_hat, gamma_hat) onto the scaled epigraph.

    Variables (y, gamma, x) with y free.  Returns ``(distance, projection,
    certificate)``; the certificate comes from the multipliers of the
    epigraph row and of ``A x + B y >= b`` and is scaled so that the dual
    norm of its coefficient vector is 1.  It is ``None`` when the point is
    already in the epigraph, which is checked first with ``oracle`` (a
    fresh :class:`DspOracle` by default) because interior-point projections
    are only accurate to about the square root of the solver tolerance.
    """
    n, npr, m = inst.n, inst.n_prime, inst.m
    beta = scaling.beta
    ans = (oracle or DspOracle(inst)).solve(point.y_hat)
    if ans.bounded and ans.value / beta <= point.gamma_hat:
        return 0.0, point.coords(), None
    nz = n + 1 + npr
    # row 0: beta*gamma - c.x - f.y >= 0 ; rows 1..m: B y + A x >= b
    epi = sp.csr_matrix(np.concatenate([-inst.f, [beta], -inst.c]).reshape(1, -1))
    main = sp.hstack([inst.B, sp.csr_matrix((m, 1)), inst.A])
    rows = sp.vstack([epi, main], format="csr")
    rhs = np.concatenate([[0.0], inst.b])
    lb = np.concatenate([np.full(n + 1, -INF), np.zeros(npr)])
    ub = np.full(nz, INF)
    z0 = point.coords()
    q = float(q)
    if q == 2:
        P = np.concatenate([np.full(n + 1, 2.0), np.zeros(npr)])
        lin = np.concatenate([-2.0 * z0, np.zeros(npr)])
        qp = QuadraticProgram(P, lin, rows, [">"] * (m + 1), rhs, lb, ub, const=float(z0 @ z0))
        out = kernel.solve_qp(qp)
        if out.status is not Status.OPTIMAL:
            raise DspUnbounded(f"projection ended {out.status.value}")
        proj = out.x[: n + 1]
        dist = float(np.linalg.norm(proj - z0))
        mult = np.clip(out.duals, 0.0, None)
        dual_p = 2.0
    else:
        k = n + 1
        if math.isinf(q):
            # z - t <= z0, z + t >= z0
            extra = 1
            c = np.concatenate([np.zeros(nz), [1.0]])
            Zd = sp.hstack([sp.identity(k), sp.csr_matrix((k, npr))])
            ones = sp.csr_matrix(np.ones((k, 1)))
            box = sp.vstack([sp.hstack([Zd, -ones]), sp.hstack([Zd, ones])])
        elif q == 1:
            extra = k
            c = np.concatenate([np.zeros(nz), np.ones(k)])
            Zd = sp.hstack([sp.identity(k), sp.csr_matrix((k, npr))])
            box = sp.vstack([sp.hstack([Zd, -sp.identity(k)]), sp.hstack([Zd, sp.identity(k)])])
        else:
            raise ValueError("q must be 1, 2 or inf")
        A = sp.vstack([sp.hstack([rows, sp.csr_matrix((m + 1, extra))]), box], format="csr")
        senses = [">"] * (m + 1) + ["<"] * k + [">"] * k
        r = np.concatenate([rhs, z0, z0])
        lp = LinearProgram(c, A, senses, r, np.concatenate([lb, np.zeros(extra)]),
                           np.concatenate([ub, np.full(extra, INF)]))
        out = kernel.solve_lp(lp)
        if out.status is not Status.OPTIMAL:
            raise DspUnbounded(f"projection ended {out.status.value}")
        proj = out.x[: n + 1]
        d = proj - z0
        dist = float(np.max(np.abs(d)) if math.isinf(q) else np.abs(d).sum())
        mult = np.clip(out.duals[: m + 1], 0.0, None)
        dual_p = 1.0 if math.isinf(q) else math.inf
    cert = DualCertificate(mult[1:], mult[0])
    coef = coefficient_vector(cert, inst, scaling)
    cn = np.linalg.norm(coef, ord=dual_p)
    if dist <= SEP_TOL * 1e-3 or cn <= ZERO_TOL:
        return dist, proj, None
    return dist, proj, cert.scaled(1.0 / cn)
