"""Guided projections: deepest cuts from classical cuts.

The point is projected (in the l_q norm) onto the halfspaces collected so
far; the classical dual subproblem is then solved at the projected y,
which either certifies that the projection lies on the epigraph or yields
a new halfspace.  Projection distances give lower bounds on the depth and
feasible epigraph points ``(y, Q(y)/beta)`` give upper bounds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernel
from .errors import InfeasibleIntersection
from .kernel import INF, LinearProgram, QuadraticProgram, Status
from .model import (ZERO_TOL, Cut, CutKind, DualCertificate, MasterPoint, ProblemData,
                    ScalingInfo, cut_from_certificate)
from .separation import SEP_TOL, SeparationResult, coefficient_vector

log = logging.getLogger(__name__)


@dataclass
class GpaConfig:
    max_iter: int = 10
    tol: float = 1e-6
    sep_tol: float = SEP_TOL
    seed_bounds: bool = False
    reuse_pool: bool = False
    emit_all: bool = True
    emit_aggregate: bool = True


@dataclass
class GpaState:
    halfspaces: list[Cut] = field(default_factory=list)
    projection: np.ndarray | None = None
    certificates: list[DualCertificate] = field(default_factory=list)
    lower_bound: float = 0.0
    upper_bound: float = math.inf
    h: int = 0
    lower_history: list[float] = field(default_factory=list)
    upper_history: list[float] = field(default_factory=list)


def _norm(v, q):
    return float(np.linalg.norm(v, ord=q))


def _dual_exponent(q):
    if q == 2:
        return 2.0
    return math.inf if q == 1 else 1.0


def project(point, halfspaces: list[Cut], q):
    """l_q projection of ``point`` onto the intersection of ``halfspaces``.

    ``point`` is a MasterPoint or a coordinate vector (y, gamma).  Returns
    ``(projection, distance, multipliers)`` with one nonnegative multiplier
    per halfspace.
    """
    z0 = point.coords() if isinstance(point, MasterPoint) else np.asarray(point, dtype=float)
    k = z0.size
    H = len(halfspaces)
    if H == 0:
        return z0.copy(), 0.0, np.zeros(0)
    rows = sp.csr_matrix(np.array([h.coefficients() for h in halfspaces]))
    rhs = np.array([h.rhs for h in halfspaces])
    q = float(q)
    if q == 2:
        qp = QuadraticProgram(np.full(k, 2.0), -2.0 * z0, rows, [">"] * H, rhs,
                              const=float(z0 @ z0))
        out = kernel.solve_qp(qp)
        if out.status is not Status.OPTIMAL:
            raise InfeasibleIntersection(f"projection ended {out.status.value}")
        z = out.x
        mult = np.clip(out.duals, 0.0, None)
    else:
        extra = 1 if math.isinf(q) else k
        aux = sp.csr_matrix(np.ones((k, 1))) if extra == 1 else sp.identity(k, format="csr")
        I = sp.identity(k, format="csr")
        A = sp.vstack([sp.hstack([rows, sp.csr_matrix((H, extra))]),
                       sp.hstack([I, -aux]), sp.hstack([I, aux])], format="csr")
        c = np.concatenate([np.zeros(k), np.ones(extra)])
        lb = np.concatenate([np.full(k, -INF), np.zeros(extra)])
        lp = LinearProgram(c, A, [">"] * H + ["<"] * k + [">"] * k,
                           np.concatenate([rhs, z0, z0]), lb, None)
        out = kernel.solve_lp(lp)
        if out.status is not Status.OPTIMAL:
            raise InfeasibleIntersection(f"projection ended {out.status.value}")
        z = out.x[:k]
        mult = np.clip(out.duals[:H], 0.0, None)
    return z, _norm(z - z0, q), mult


def seed_initial_halfspaces(config: GpaConfig | None, context=None) -> list[Cut]:
    """Starting halfspaces: optional y bounds and an optional cut pool.

    ``context`` may provide ``n`` and ``pool`` (attributes or dict keys).
    """
    if config is None:
        return []
    get = (lambda k, d=None: context.get(k, d)) if isinstance(context, dict) else \
        (lambda k, d=None: getattr(context, k, d))
    out = []
    if config.reuse_pool and context is not None:
        out.extend(get("pool", []) or [])
    if config.seed_bounds and context is not None:
        n = get("n")
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            out.append(Cut(e, 0.0, 0.0, CutKind.FEASIBILITY, "bound"))
            out.append(Cut(-e, 0.0, -1.0, CutKind.FEASIBILITY, "bound"))
    return out


def gpa_separate(point: MasterPoint, p, dsp_oracle, inst: ProblemData, scaling: ScalingInfo,
                 config: GpaConfig | None = None, seeds: list[Cut] | None = None,
                 tag: str | None = None, first=None):
    """Approximate the l_p-deepest cut at ``point``.

    Returns ``(SeparationResult, GpaState)``.  ``result.cuts`` holds every
    distinct classical cut generated that is violated at the point, the
    first being the classical cut at ``point.y_hat``; ``result.cut`` is the
    aggregated cut whose normalized depth equals the final lower bound.
    ``first`` may carry the oracle answer at ``point.y_hat`` if known.
    """
    cfg = config or GpaConfig()
    p = float(p)
    q = {1.0: math.inf, 2.0: 2.0}.get(p, 1.0)
    if not math.isinf(p) and p not in (1.0, 2.0):
        raise ValueError("guided projections support p in {1, 2, inf}")
    tag = tag or {1.0: "l1", 2.0: "l2"}.get(p, "linf")
    beta = scaling.beta
    z0 = point.coords()
    state = GpaState(halfspaces=list(seeds or []), projection=z0.copy())
    n_seed = len(state.halfspaces)
    keys = {h.key() for h in state.halfspaces}
    generated: list[Cut] = []
    mult = np.zeros(n_seed)
    while state.h < cfg.max_iter:
        y_t = state.projection[:-1]
        if state.h == 0 and first is not None:
            ans = first
        else:
            ans = dsp_oracle.solve(y_t)
        cert = ans.certificate
        if ans.bounded:
            ub = _norm(z0 - np.append(y_t, ans.value / beta), q)
            state.upper_bound = min(state.upper_bound, ub)
            if ans.value / beta <= state.projection[-1] + cfg.sep_tol * 1e-3:
                # projection already in the epigraph
                state.upper_history.append(state.upper_bound)
                state.lower_history.append(state.lower_bound)
                break
        try:
            cut = cut_from_certificate(cert, inst, scaling, source=tag)
        except Exception:
            log.debug("vacuous certificate in guided projections")
            break
        if cut.key() in keys:
            log.debug("guided projections stalled on a repeated certificate")
            break
        keys.add(cut.key())
        state.halfspaces.append(cut)
        state.certificates.append(cut.certificate)
        generated.append(cut)
        state.h += 1
        z, dist, mult = project(z0, state.halfspaces, q)
        state.projection = z
        state.lower_bound = max(state.lower_bound, dist)
        state.lower_history.append(state.lower_bound)
        state.upper_history.append(state.upper_bound)
        if (math.isfinite(state.upper_bound)
                and state.upper_bound - state.lower_bound <= cfg.tol * max(1.0, state.upper_bound)):
            break
    if state.h == 0:
        return SeparationResult(None, 0.0, None, True, float("nan"), tag,
                                projection=state.projection), state
    if cfg.emit_all:
        emitted = list(generated)
    else:
        emitted = [c for c in generated
                   if c.violation_at(point.y_hat, point.gamma_hat) > cfg.sep_tol]
    depth = state.lower_bound
    agg = _aggregate(state.halfspaces[n_seed:], mult[n_seed:], inst, scaling, q)
    agg_cut = None
    if agg is not None and depth > cfg.sep_tol:
        try:
            agg_cut = cut_from_certificate(agg, inst, scaling, source=tag)
        except Exception:
            agg_cut = None
    if (cfg.emit_aggregate and agg_cut is not None and agg_cut.key() not in keys
            and agg_cut.violation_at(point.y_hat, point.gamma_hat) > cfg.sep_tol):
        emitted.append(agg_cut)
    res = SeparationResult(agg, depth, agg_cut, depth <= cfg.sep_tol, 1.0, tag,
                           projection=state.projection, cuts=emitted)
    if not res.optimal and not emitted:
        res.optimal = True
    return res, state


def _aggregate(cuts, mult, inst, scaling, q):
    if not cuts or mult.size == 0 or np.all(mult <= 0):
        return None
    m = inst.m
    p = np.zeros(m)
    pi0 = 0.0
    for lam, c in zip(mult, cuts):
        if lam > 0 and c.certificate is not None:
            p += lam * c.certificate.p
            pi0 += lam * c.certificate.pi0
    cert = DualCertificate(p, pi0)
    cn = np.linalg.norm(coefficient_vector(cert, inst, scaling), ord=_dual_exponent(q))
    if cn <= ZERO_TOL:
        return None
    return cert.scaled(1.0 / cn)
