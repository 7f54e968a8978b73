"""Master problem and the distance-based Benders loop.

The master is ``min gamma`` over binary y in Y, ``gamma >= gamma_low`` and
the pooled cuts.  It is solved by a small branch and bound on LP
relaxations (best bound first, most fractional variable, lowest index on
ties) whose node LPs start from the parent basis.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (CorePointOutsideDomain, DegenerateNormalization, DeepBendersError,
                     MasterInfeasible, NspUnbounded, UnsupportedStrategy, VacuousCertificate)
from .gpa import GpaConfig, gpa_separate, seed_initial_halfspaces
from .kernel import INF, LinearProgram, LpSolver, Status
from .model import (Cut, CutKind, MasterPoint, ProblemData, ScalingInfo, YDomain,
                    compute_scaling_beta, cut_from_certificate)
from .separation import (SEP_TOL, DistanceStrategy, DspOracle, SeparationResult, Variant,
                         build_nsp, parse_strategy)

log = logging.getLogger(__name__)

INT_TOL = 1e-6


class MasterModel:
    def __init__(self, n: int, y_domain: YDomain | None, gamma_low: float):
        self.n = n
        self.y_domain = y_domain or YDomain.binaries(n)
        self.gamma_low = float(gamma_low)
        self.cuts: list[Cut] = []
        self._keys: set = set()
        self.candidates: list[np.ndarray] = []
        c = np.zeros(n + 1)
        c[n] = 1.0
        G = self.y_domain.G
        A = sp.hstack([G, sp.csr_matrix((G.shape[0], 1))], format="csr")
        lb = np.concatenate([np.zeros(n), [self.gamma_low]])
        ub = np.concatenate([np.ones(n), [INF]])
        self._lp = LpSolver(LinearProgram(c, A, [">"] * G.shape[0], self.y_domain.h, lb, ub))
        self.nodes = 0

    def add_cut(self, cut: Cut) -> bool:
        key = cut.key()
        if key in self._keys:
            return False
        self._keys.add(key)
        self.cuts.append(cut)
        row = sp.csr_matrix(np.append(cut.a_y, cut.a_gamma).reshape(1, -1))
        self._lp.add_rows(row, [">"], [cut.rhs])
        return True

    def gamma_needed(self, y) -> float:
        """Smallest gamma making binary ``y`` master-feasible (inf if none)."""
        y = np.asarray(y, dtype=float)
        if not self.y_domain.contains(y):
            return math.inf
        g = self.gamma_low
        for c in self.cuts:
            lhs = c.a_y @ y
            if c.a_gamma > 0:
                g = max(g, (c.rhs - lhs) / c.a_gamma)
            elif lhs < c.rhs - 1e-9 * max(1.0, abs(c.rhs)):
                return math.inf
        return g

    def solve(self, beta: float = 1.0) -> MasterPoint:
        n = self.n
        best_val, best_y = math.inf, None
        for y in self.candidates:
            v = self.gamma_needed(y)
            if v < best_val:
                best_val, best_y = v, y
        seq = itertools.count()
        heap = [(-math.inf, -next(seq), np.zeros(n), np.ones(n), None)]
        lp = self._lp
        idx = np.arange(n)
        while heap:
            bound, _, lo, hi, basis = heapq.heappop(heap)
            if bound >= best_val - 1e-9 * max(1.0, abs(best_val)):
                continue
            lp.set_col_bounds(idx, lo, hi)
            if basis is not None:
                try:
                    lp.set_basis(basis)
                except Exception:
                    pass
            out = lp.solve()
            self.nodes += 1
            if out.status is not Status.OPTIMAL:
                continue
            val = out.objective
            if val >= best_val - 1e-9 * max(1.0, abs(best_val)):
                continue
            y = out.x[:n]
            frac = np.minimum(np.abs(y - np.round(y)), 1.0)
            j = int(np.argmax(frac))
            if frac[j] <= INT_TOL:
                yi = np.round(y)
                v = self.gamma_needed(yi)
                if v < best_val:
                    best_val, best_y = v, yi
                continue
            b = out.basis
            hi0 = hi.copy()
            hi0[j] = 0.0
            lo1 = lo.copy()
            lo1[j] = 1.0
            # ties on the bound go to the most recent node (dive)
            heapq.heappush(heap, (val, -next(seq), lo1, hi.copy(), b))
            heapq.heappush(heap, (val, -next(seq), lo.copy(), hi0, b))
        lp.set_col_bounds(idx, np.zeros(n), np.ones(n))
        if best_y is None or not math.isfinite(best_val):
            raise MasterInfeasible("no binary y satisfies the master constraints")
        return MasterPoint(best_y, best_val, beta)


def solve_master(model: MasterModel, beta: float = 1.0) -> MasterPoint:
    return model.solve(beta)


# ---------------------------------------------------------------------------
# driver

@dataclass
class BdConfig:
    strategy: str = "cb"
    mode: str = "direct"
    switch_gap: float | None = None
    sep_tol: float = SEP_TOL
    gpa_tol: float = 1e-6
    gpa_max_iter: int = 10
    # inside the driver GPA starts from the y bounds and the master's cut pool
    gpa_seed_bounds: bool = True
    gpa_reuse_pool: bool = True
    gpa_emit_all: bool = True
    gpa_emit_aggregate: bool = True
    max_iter: int = 10000
    gamma_low: float | None = None
    seed: int = 0
    time_limit: float | None = None


@dataclass
class BdRunReport:
    y_star: np.ndarray | None
    objective: float
    iterations: int
    optimality_cuts: int
    feasibility_cuts: int
    cuts_by_strategy: dict
    wall_time: float
    depth_log: list
    status: str
    lower_bound: float = -math.inf
    beta: float = 1.0
    switch_iteration: int | None = None
    cut_log: list = field(default_factory=list)
    error: str = ""


def repair_core_point(y, oracle, max_steps: int = 10):
    """Move ``y`` toward the all-ones vector until Q(y) is finite."""
    y = np.asarray(y, dtype=float)
    for t in np.linspace(0.0, 1.0, max_steps + 1):
        z = y + t * (1.0 - y)
        if oracle.solve(z).bounded:
            if t > 0:
                log.info("core point lifted by %.2f toward 1 to enter the domain of Q", t)
            return z
    raise CorePointOutsideDomain("no point on the segment to the all-ones vector has finite Q")


def bd_solve(inst: ProblemData, strategy="cb", mode: str = "direct",
             config: BdConfig | None = None, *, oracle=None, core_point=None,
             scaling: ScalingInfo | None = None) -> BdRunReport:
    """Benders loop with the given cut distance and separation mode."""
    cfg = config or BdConfig()
    t0 = time.perf_counter()
    variant = parse_strategy(strategy) if isinstance(strategy, str) else Variant(strategy)
    if mode not in ("direct", "gpa"):
        raise UnsupportedStrategy(f"unknown mode {mode!r}")
    if mode == "gpa" and variant not in (Variant.L1, Variant.L2, Variant.LINF, Variant.CB):
        raise UnsupportedStrategy(f"guided projections do not support {variant.value}")
    oracle = oracle or DspOracle(inst)
    if inst.n == 0:
        raise UnsupportedStrategy("no integer variables to decompose on")
    core = np.full(inst.n, 0.5) if core_point is None else np.asarray(core_point, dtype=float)
    try:
        core = repair_core_point(core, oracle)
    except CorePointOutsideDomain:
        if variant in (Variant.MWP, Variant.CW):
            raise
    if scaling is None:
        scaling = compute_scaling_beta(inst, core, oracle)
    beta = scaling.beta
    gamma_low = cfg.gamma_low if cfg.gamma_low is not None else -1e7 / beta
    master = MasterModel(inst.n, inst.y_domain, gamma_low)

    separator = None
    if mode == "direct" and variant is not Variant.CB:
        separator = build_nsp(DistanceStrategy(variant, core_point=core), inst, scaling,
                              oracle=oracle if variant not in (Variant.MWP, Variant.CW) else None,
                              tol=cfg.sep_tol)
    p_norm = {Variant.L1: 1.0, Variant.L2: 2.0, Variant.LINF: math.inf}.get(variant)
    gcfg = GpaConfig(max_iter=cfg.gpa_max_iter, tol=cfg.gpa_tol, sep_tol=cfg.sep_tol,
                     seed_bounds=cfg.gpa_seed_bounds, reuse_pool=cfg.gpa_reuse_pool,
                     emit_all=cfg.gpa_emit_all, emit_aggregate=cfg.gpa_emit_aggregate)

    opt_cuts = feas_cuts = 0
    by_strategy: dict = {}
    depth_log = []
    cut_log = []
    lb, ub = -math.inf, math.inf
    y_best = None
    switched = False
    switch_iter = None
    visited = set()
    status = "IterLimit"
    t = 0

    def add(cut: Cut, it: int) -> bool:
        nonlocal opt_cuts, feas_cuts
        if not master.add_cut(cut):
            return False
        if cut.kind is CutKind.OPTIMALITY:
            opt_cuts += 1
        else:
            feas_cuts += 1
        by_strategy[cut.source] = by_strategy.get(cut.source, 0) + 1
        cut_log.append((it, cut.source, cut.kind.value, switched))
        return True

    while t < cfg.max_iter:
        if cfg.time_limit is not None and time.perf_counter() - t0 > cfg.time_limit:
            status = "TimeLimit"
            break
        t += 1
        try:
            pt = master.solve(beta)
        except MasterInfeasible:
            status = "Infeasible"
            break
        lb = max(lb, beta * pt.gamma_hat)
        y = pt.y_hat
        ans = oracle.solve(y)
        key = tuple(np.round(y).astype(int).tolist())
        revisit = key in visited
        visited.add(key)
        if ans.bounded:
            master.candidates.append(y.copy())
            if ans.value < ub:
                ub, y_best = ans.value, y.copy()
        cb_depth = (ans.value - pt.eta_hat) / beta if ans.bounded else math.inf
        if cb_depth <= cfg.sep_tol or (ub - lb) / beta <= cfg.sep_tol:
            depth_log.append(min(cb_depth, (ub - lb) / beta))
            status = "Optimal"
            break
        if (cfg.switch_gap is not None and not switched and math.isfinite(ub)
                and (ub - lb) / max(1e-10, abs(ub)) <= cfg.switch_gap):
            switched = True
            switch_iter = t
        active = Variant.CB if switched else variant
        cuts: list[Cut] = []
        depth = cb_depth
        if active is Variant.CB:
            cuts = [cut_from_certificate(ans.certificate, inst, scaling, source="cb")]
        else:
            try:
                if mode == "gpa":
                    res, _ = gpa_separate(pt, p_norm, oracle, inst, scaling, gcfg,
                                          seeds=seed_initial_halfspaces(
                                              gcfg, {"n": inst.n, "pool": list(master.cuts)}),
                                          first=ans)
                    cuts = list(res.cuts)
                else:
                    res = separator.separate(pt)
                    cuts = [res.cut] if res.cut is not None else []
                depth = res.depth
            except NspUnbounded as exc:
                depth = math.inf
                try:
                    cuts = [cut_from_certificate(exc.certificate, inst, scaling, source=active.value)]
                except VacuousCertificate:
                    cuts = []
            except (DegenerateNormalization, VacuousCertificate) as exc:
                log.debug("falling back to the classical cut: %s", exc)
                cuts = []
        depth_log.append(depth)
        added = 0
        for c in cuts:
            if add(c, t):
                added += 1
        if added == 0 or revisit:
            cb = cut_from_certificate(ans.certificate, inst, scaling, source="cb")
            if add(cb, t):
                added += 1
        if added == 0:
            log.warning("no new cut at iteration %d; stopping", t)
            status = "Stalled"
            break
    if status == "IterLimit" and t < cfg.max_iter:
        status = "IterLimit"
    return BdRunReport(y_best, ub, t, opt_cuts, feas_cuts, by_strategy,
                       time.perf_counter() - t0, depth_log, status, lb, beta,
                       switch_iter, cut_log)
