"""LP and convex QP/SOCP solving.

LPs go to HiGHS through a persistent wrapper (``LpSolver``) so that
objective, bound and row edits re-solve from the previous basis.  Conic
programs go to Clarabel.  Both return a ``SolveOutcome`` whose dual vector
uses one convention throughout: ``duals[i]`` is the derivative of the
optimal objective with respect to the right-hand side of row ``i``.

Unbounded rays and infeasibility certificates are always checked before
they are returned; a failed check triggers an auxiliary LP that computes
a certificate from scratch.
"""

from __future__ import annotations

import enum
from collections.abc import Sequence
from dataclasses import dataclass, field

import highspy
import numpy as np
import scipy.sparse as sp

from .errors import NonConvexInput, NumericalFailure, UnsupportedStrategy

try:
    import clarabel
    HAS_CONIC = True
except ImportError:  # pragma: no cover
    clarabel = None
    HAS_CONIC = False

INF = highspy.kHighsInf
FEAS_TOL = 1e-7
RAY_TOL = 1e-9


class Status(enum.Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"


def _as_csr(A, ncols: int) -> sp.csr_matrix:
    if A is None:
        return sp.csr_matrix((0, ncols))
    return sp.csr_matrix(A, dtype=float)


def _sense_bounds(senses: Sequence[str], rhs: np.ndarray):
    lo = np.full(len(rhs), -INF)
    hi = np.full(len(rhs), INF)
    for i, s in enumerate(senses):
        if s in (">", ">="):
            lo[i] = rhs[i]
        elif s in ("<", "<="):
            hi[i] = rhs[i]
        elif s in ("=", "=="):
            lo[i] = hi[i] = rhs[i]
        else:
            raise ValueError(f"unknown row sense {s!r}")
    return lo, hi


@dataclass
class LinearProgram:
    """min/max c.x subject to rows ``A x (sense) rhs`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: sp.csr_matrix | None = None
    senses: Sequence[str] = ()
    rhs: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    maximize: bool = False

    def __post_init__(self):
        self.c = np.array(self.c, dtype=float).ravel()
        n = self.c.size
        self.A = _as_csr(self.A, n)
        self.rhs = np.zeros(0) if self.rhs is None else np.array(self.rhs, dtype=float).ravel()
        self.senses = list(self.senses)
        self.lb = np.zeros(n) if self.lb is None else np.array(self.lb, dtype=float).ravel()
        self.ub = np.full(n, INF) if self.ub is None else np.array(self.ub, dtype=float).ravel()
        m = self.A.shape[0]
        if self.A.shape[1] != n:
            raise ValueError("constraint matrix width differs from objective length")
        if not (len(self.senses) == m == self.rhs.size):
            raise ValueError("row senses / rhs length differ from row count")
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bound vectors have wrong length")

    @property
    def num_rows(self) -> int:
        return self.A.shape[0]

    @property
    def num_cols(self) -> int:
        return self.c.size

    def row_bounds(self):
        return _sense_bounds(self.senses, self.rhs)


@dataclass
class SocConstraint:
    """Second-order cone row ``||G x + h||_2 <= g.x + e``."""

    G: sp.csr_matrix
    h: np.ndarray
    g: np.ndarray
    e: float = 0.0


@dataclass
class QuadraticProgram:
    """min 1/2 x'Px + q.x + const over linear rows, bounds and SOC rows.

    ``P`` may be a 1-D array (diagonal) or a symmetric sparse matrix.
    """

    P: object
    q: np.ndarray
    A: sp.csr_matrix | None = None
    senses: Sequence[str] = ()
    rhs: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    socs: list[SocConstraint] = field(default_factory=list)
    const: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).ravel()
        n = self.q.size
        self.A = _as_csr(self.A, n)
        self.rhs = np.zeros(0) if self.rhs is None else np.array(self.rhs, dtype=float).ravel()
        self.senses = list(self.senses)
        self.lb = np.full(n, -INF) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, INF) if self.ub is None else np.array(self.ub, dtype=float).ravel()
        if self.A.shape[1] != n or len(self.senses) != self.A.shape[0] or self.rhs.size != self.A.shape[0]:
            raise ValueError("inconsistent QP dimensions")


@dataclass
class SolveOutcome:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    objective: float = float("nan")
    ray: np.ndarray | None = None
    farkas: np.ndarray | None = None
    farkas_cols: np.ndarray | None = None
    iterations: int = 0
    basis: object = None
    soc_duals: list[np.ndarray] = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def _fin(v):
    return np.isfinite(v) & (np.abs(v) < INF)


def check_ray(lp: LinearProgram, ray: np.ndarray, tol: float = RAY_TOL) -> bool:
    """True when ``ray`` is an improving recession direction of ``lp``."""
    ray = np.asarray(ray, dtype=float)
    scale = np.max(np.abs(ray)) if ray.size else 0.0
    if scale <= 0:
        return False
    r = ray / scale
    gain = lp.c @ r if lp.maximize else -(lp.c @ r)
    if gain <= tol:
        return False
    lo, hi = lp.row_bounds()
    Ar = lp.A @ r
    if np.any(Ar[_fin(lo)] < -tol) or np.any(Ar[_fin(hi)] > tol):
        return False
    if np.any(r[_fin(lp.lb)] < -tol) or np.any(r[_fin(lp.ub)] > tol):
        return False
    return True


def _farkas_bound(lp: LinearProgram, y: np.ndarray, tol: float):
    """Gap proving infeasibility for row multipliers ``y`` (positive if valid)."""
    lo, hi = lp.row_bounds()
    if np.any((y > tol) & ~_fin(lo)) or np.any((y < -tol) & ~_fin(hi)):
        return -np.inf
    yp = np.clip(y, 0, None)
    ym = np.clip(-y, 0, None)
    lower = yp[_fin(lo)] @ lo[_fin(lo)] - ym[_fin(hi)] @ hi[_fin(hi)]
    z = lp.A.T @ y
    # sup of z.x over the column box
    upper = 0.0
    for j, zj in enumerate(z):
        if zj > tol:
            if not _fin(lp.ub[j]):
                return -np.inf
            upper += zj * lp.ub[j]
        elif zj < -tol:
            if not _fin(lp.lb[j]):
                return -np.inf
            upper += zj * lp.lb[j]
    return lower - upper


def check_farkas(lp: LinearProgram, y: np.ndarray, tol: float = RAY_TOL) -> bool:
    y = np.asarray(y, dtype=float)
    scale = np.max(np.abs(y)) if y.size else 0.0
    if scale <= 0:
        return False
    return _farkas_bound(lp, y / scale, tol) > tol


class LpSolver:
    """Persistent HiGHS model supporting incremental edits and re-solves."""

    def __init__(self, lp: LinearProgram, *, iteration_limit: int | None = None):
        self.lp = lp
        self._absA = None
        self._h = h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("random_seed", 0)
        h.setOptionValue("primal_feasibility_tolerance", 1e-9)
        h.setOptionValue("dual_feasibility_tolerance", 1e-9)
        if iteration_limit is not None:
            h.setOptionValue("simplex_iteration_limit", int(iteration_limit))
        self._pass(lp)

    def _pass(self, lp: LinearProgram):
        model = highspy.HighsLp()
        model.num_col_ = lp.num_cols
        model.num_row_ = lp.num_rows
        model.col_cost_ = lp.c
        model.col_lower_ = lp.lb
        model.col_upper_ = lp.ub
        lo, hi = lp.row_bounds()
        model.row_lower_ = lo
        model.row_upper_ = hi
        csc = lp.A.tocsc()
        model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        model.a_matrix_.start_ = csc.indptr.astype(np.int32)
        model.a_matrix_.index_ = csc.indices.astype(np.int32)
        model.a_matrix_.value_ = csc.data
        model.a_matrix_.num_col_ = lp.num_cols
        model.a_matrix_.num_row_ = lp.num_rows
        if lp.maximize:
            model.sense_ = highspy.ObjSense.kMaximize
        self._h.passModel(model)

    # -- edits keep self.lp in sync so certificates can be checked --------
    def set_costs(self, idx, values):
        idx = np.asarray(idx, dtype=np.int32).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if idx.size == 0:
            return
        self.lp.c[idx] = values
        self._h.changeColsCost(idx.size, idx, values)

    def set_col_bounds(self, idx, lo, hi):
        idx = np.asarray(idx, dtype=np.int32).ravel()
        lo = np.full(idx.shape, lo, dtype=float) if np.ndim(lo) == 0 else np.array(lo, dtype=float)
        hi = np.full(idx.shape, hi, dtype=float) if np.ndim(hi) == 0 else np.array(hi, dtype=float)
        if idx.size == 0:
            return
        self.lp.lb[idx] = lo
        self.lp.ub[idx] = hi
        self._h.changeColsBounds(idx.size, idx, lo, hi)

    def set_row_rhs(self, idx, values):
        """Replace the right-hand side of rows, keeping their senses."""
        idx = np.asarray(idx, dtype=np.int32).ravel()
        values = np.asarray(values, dtype=float).ravel()
        if idx.size == 0:
            return
        self.lp.rhs[idx] = values
        self._absA = None
        lo, hi = _sense_bounds([self.lp.senses[i] for i in idx], values)
        self._h.changeRowsBounds(idx.size, idx, lo, hi)

    def add_rows(self, rows: sp.csr_matrix, senses: Sequence[str], rhs):
        rows = sp.csr_matrix(rows, dtype=float)
        rhs = np.asarray(rhs, dtype=float).ravel()
        lo, hi = _sense_bounds(senses, rhs)
        self._h.addRows(rows.shape[0], lo, hi, rows.nnz,
                        rows.indptr[:-1].astype(np.int32),
                        rows.indices.astype(np.int32), rows.data)
        self.lp.A = sp.vstack([self.lp.A, rows], format="csr")
        self._absA = None
        self.lp.senses = list(self.lp.senses) + list(senses)
        self.lp.rhs = np.concatenate([self.lp.rhs, rhs])

    def set_coeff(self, row: int, col: int, value: float):
        self.set_row_coeffs(row, [col], [value])

    def set_row_coeffs(self, row: int, cols, values):
        cols = np.asarray(cols, dtype=int).ravel()
        values = np.asarray(values, dtype=float).ravel()
        for j, v in zip(cols, values):
            self._h.changeCoeff(int(row), int(j), float(v))
        A = self.lp.A.tolil()
        A[int(row), cols] = values
        self.lp.A = A.tocsr()
        self._absA = None

    def get_basis(self):
        return self._h.getBasis()

    def set_basis(self, basis):
        if basis is not None:
            self._h.setBasis(basis)

    # -- solve -------------------------------------------------------------
    def solve(self) -> SolveOutcome:
        h = self._h
        h.run()
        st = h.getModelStatus()
        if st not in (highspy.HighsModelStatus.kOptimal,
                      highspy.HighsModelStatus.kInfeasible,
                      highspy.HighsModelStatus.kUnbounded,
                      highspy.HighsModelStatus.kUnboundedOrInfeasible):
            # one cold retry before giving up
            h.clearSolver()
            h.run()
            st = h.getModelStatus()
        iters = int(h.getInfo().simplex_iteration_count)
        if st == highspy.HighsModelStatus.kOptimal:
            sol = h.getSolution()
            x = np.array(sol.col_value)
            duals = np.array(sol.row_dual)
            rc = np.array(sol.col_dual)
            self._check_optimal(x)
            return SolveOutcome(Status.OPTIMAL, x=x, duals=duals, reduced_costs=rc,
                                objective=float(h.getInfo().objective_function_value),
                                iterations=iters, basis=h.getBasis())
        if st == highspy.HighsModelStatus.kUnbounded:
            return self._unbounded(iters)
        if st == highspy.HighsModelStatus.kInfeasible:
            return self._infeasible(iters)
        if st == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            if _feasible_point(self.lp) is not None:
                return self._unbounded(iters)
            return self._infeasible(iters)
        raise NumericalFailure(f"LP solver ended with status {h.modelStatusToString(st)}")

    def _check_optimal(self, x):
        lp = self.lp
        Ax = lp.A @ x
        if self._absA is None:
            self._absA = abs(lp.A)
            self._bounds = lp.row_bounds()
        lo, hi = self._bounds
        mag = self._absA @ np.abs(x)
        rtol = FEAS_TOL * (1.0 + mag + np.where(_fin(lo), np.abs(lo), 0) + np.where(_fin(hi), np.abs(hi), 0))
        bad = np.any((Ax < lo - rtol) & _fin(lo)) or np.any((Ax > hi + rtol) & _fin(hi))
        ctol = FEAS_TOL * (1.0 + np.abs(x))
        bad = bad or np.any(x < lp.lb - ctol) or np.any(x > lp.ub + ctol)
        if bad:
            raise NumericalFailure("LP optimum violates its constraints")

    def _unbounded(self, iters):
        ray = None
        try:
            _, has, r = self._h.getPrimalRay()
            if has:
                ray = np.array(r)
        except Exception:  # older bindings
            ray = None
        if ray is None or not check_ray(self.lp, ray):
            ray = _aux_ray(self.lp)
        if ray is None:
            raise NumericalFailure("LP reported unbounded but no improving ray exists")
        ray = ray / np.max(np.abs(ray))
        return SolveOutcome(Status.UNBOUNDED, ray=ray,
                            objective=INF if self.lp.maximize else -INF, iterations=iters)

    def _infeasible(self, iters):
        y = None
        try:
            _, has, r = self._h.getDualRay()
            if has:
                y = np.array(r)
        except Exception:
            y = None
        cols = None
        if y is None or not check_farkas(self.lp, y):
            y, cols = _aux_farkas(self.lp)
        if y is None:
            raise NumericalFailure("LP reported infeasible but no certificate exists")
        return SolveOutcome(Status.INFEASIBLE, farkas=y, farkas_cols=cols,
                            objective=-INF if self.lp.maximize else INF, iterations=iters)


def _feasible_point(lp: LinearProgram):
    aux = LinearProgram(np.zeros(lp.num_cols), lp.A, lp.senses, lp.rhs, lp.lb.copy(), lp.ub.copy())
    s = LpSolver(aux)
    s._h.run()
    if s._h.getModelStatus() == highspy.HighsModelStatus.kOptimal:
        return np.array(s._h.getSolution().col_value)
    return None


def _aux_ray(lp: LinearProgram):
    """max gain.r over the recession cone intersected with the unit box."""
    lo, hi = lp.row_bounds()
    rl = np.where(_fin(lo), 0.0, -INF)
    ru = np.where(_fin(hi), 0.0, INF)
    cl = np.where(_fin(lp.lb), 0.0, -1.0)
    cu = np.where(_fin(lp.ub), 0.0, 1.0)
    sign = 1.0 if lp.maximize else -1.0
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    model = highspy.HighsLp()
    model.num_col_, model.num_row_ = lp.num_cols, lp.num_rows
    model.col_cost_ = sign * lp.c
    model.col_lower_, model.col_upper_ = cl, cu
    model.row_lower_, model.row_upper_ = rl, ru
    csc = lp.A.tocsc()
    model.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    model.a_matrix_.start_ = csc.indptr.astype(np.int32)
    model.a_matrix_.index_ = csc.indices.astype(np.int32)
    model.a_matrix_.value_ = csc.data
    model.sense_ = highspy.ObjSense.kMaximize
    h.passModel(model)
    h.run()
    if h.getModelStatus() != highspy.HighsModelStatus.kOptimal:
        return None
    r = np.array(h.getSolution().col_value)
    return r if check_ray(lp, r) else None


def _aux_farkas(lp: LinearProgram):
    """Farkas multipliers from an LP over (y+, y-, w+, w-) >= 0.

    The combined inequality ``(A'(y+ - y-) + w+ - w-).x >= y+.lo - y-.hi +
    w+.lb - w-.ub`` has zero left-hand side and a right-hand side that is
    maximized subject to a unit-sum normalization.
    """
    m, n = lp.num_rows, lp.num_cols
    lo, hi = lp.row_bounds()
    fl, fh = _fin(lo), _fin(hi)
    fb, fu = _fin(lp.lb), _fin(lp.ub)
    At = lp.A.T.tocsr()
    I = sp.identity(n, format="csr")
    M = sp.hstack([At, -At, I, -I], format="csr")
    obj = np.concatenate([np.where(fl, lo, 0), -np.where(fh, hi, 0),
                          np.where(fb, lp.lb, 0), -np.where(fu, lp.ub, 0)])
    ub = np.concatenate([np.where(fl, INF, 0), np.where(fh, INF, 0),
                         np.where(fb, INF, 0), np.where(fu, INF, 0)])
    rows = sp.vstack([M, sp.csr_matrix(np.ones((1, M.shape[1])))], format="csr")
    aux = LinearProgram(obj, rows, ["="] * n + ["<"], np.concatenate([np.zeros(n), [1.0]]),
                        np.zeros(M.shape[1]), ub, maximize=True)
    out = LpSolver(aux).solve()
    if not out.optimal or out.objective <= RAY_TOL:
        return None, None
    v = out.x
    y = v[:m] - v[m:2 * m]
    w = v[2 * m:2 * m + n] - v[2 * m + n:]
    return y, w


def solve_lp(lp: LinearProgram, warm_start=None, *, iteration_limit: int | None = None) -> SolveOutcome:
    """One-shot solve; ``warm_start`` is a basis from an earlier outcome."""
    solver = LpSolver(lp, iteration_limit=iteration_limit)
    if warm_start is not None:
        solver.set_basis(warm_start)
    return solver.solve()


# ---------------------------------------------------------------------------
# conic programs

_CL_SETTINGS = dict(tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10,
                    tol_ktratio=1e-8, max_iter=300)


def _psd_matrix(P, n):
    if P is None:
        return sp.csc_matrix((n, n))
    if isinstance(P, np.ndarray) and P.ndim == 1:
        if P.size != n:
            raise ValueError("diagonal P has wrong length")
        if np.any(P < 0):
            raise NonConvexInput("objective diagonal has a negative entry")
        return sp.diags(P, format="csc")
    M = sp.csc_matrix(P, dtype=float)
    if M.shape != (n, n):
        raise ValueError("P has wrong shape")
    if abs(M - M.T).max(initial=0.0) > 1e-12:
        raise NonConvexInput("objective matrix is not symmetric")
    if n <= 2000 and M.nnz:
        if np.linalg.eigvalsh(M.toarray()).min() < -1e-10:
            raise NonConvexInput("objective matrix is not positive semidefinite")
    return M


def solve_qp(qp: QuadraticProgram) -> SolveOutcome:
    """Solve a convex QP (optionally with SOC rows) with Clarabel."""
    if not HAS_CONIC:
        raise UnsupportedStrategy("conic programs need the clarabel package")
    n = qp.q.size
    P = _psd_matrix(qp.P, n)
    lo, hi = _sense_bounds(qp.senses, qp.rhs)
    A = qp.A
    eq = np.flatnonzero(_fin(lo) & _fin(hi) & (lo == hi))
    ge = np.flatnonzero(_fin(lo) & ~np.isin(np.arange(A.shape[0]), eq))
    le = np.flatnonzero(_fin(hi) & ~np.isin(np.arange(A.shape[0]), eq))
    blb = np.flatnonzero(_fin(qp.lb))
    bub = np.flatnonzero(_fin(qp.ub))
    I = sp.identity(n, format="csr")
    blocks = [A[eq], -A[ge], A[le], -I[blb], I[bub]]
    rhs = [lo[eq], -lo[ge], hi[le], -qp.lb[blb], qp.ub[bub]]
    n_lin = sum(b.shape[0] for b in blocks[1:])
    cones = []
    if eq.size:
        cones.append(clarabel.ZeroConeT(int(eq.size)))
    if n_lin:
        cones.append(clarabel.NonnegativeConeT(int(n_lin)))
    for soc in qp.socs:
        G = sp.csr_matrix(soc.G, dtype=float)
        blocks.append(sp.vstack([-sp.csr_matrix(np.asarray(soc.g, dtype=float).reshape(1, -1)), -G]))
        rhs.append(np.concatenate([[soc.e], np.asarray(soc.h, dtype=float)]))
        cones.append(clarabel.SecondOrderConeT(int(G.shape[0] + 1)))
    Acl = sp.vstack(blocks, format="csc") if blocks else sp.csc_matrix((0, n))
    bcl = np.concatenate(rhs) if rhs else np.zeros(0)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    for k, v in _CL_SETTINGS.items():
        setattr(settings, k, v)
    solver = clarabel.DefaultSolver(sp.triu(P, format="csc"), qp.q, Acl, bcl, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    x = np.array(sol.x)
    z = np.array(sol.z)
    if "PrimalInfeasible" in status:
        farkas = np.zeros(A.shape[0])
        k = eq.size
        farkas[eq] = -z[:k]
        farkas[ge] = z[k:k + ge.size]
        farkas[le] = -z[k + ge.size:k + ge.size + le.size]
        return SolveOutcome(Status.INFEASIBLE, farkas=farkas, objective=INF,
                            iterations=int(sol.iterations))
    if "DualInfeasible" in status:
        return SolveOutcome(Status.UNBOUNDED, ray=x / max(np.max(np.abs(x)), 1e-300),
                            objective=-INF, iterations=int(sol.iterations))
    if "Solved" not in status:
        raise NumericalFailure(f"conic solver ended with status {status}")
    _check_kkt(P, qp.q, Acl, bcl, x, z, eq.size)
    k = eq.size
    duals = np.zeros(A.shape[0])
    duals[eq] = -z[:k]
    duals[ge] = z[k:k + ge.size]
    duals[le] = -z[k + ge.size:k + ge.size + le.size]
    pos = k + ge.size + le.size
    rc = np.zeros(n)
    rc[blb] += z[pos:pos + blb.size]
    pos += blb.size
    rc[bub] -= z[pos:pos + bub.size]
    pos += bub.size
    soc_duals = []
    for soc in qp.socs:
        d = soc.h.size + 1
        soc_duals.append(z[pos:pos + d])
        pos += d
    obj = float(0.5 * x @ (P @ x) + qp.q @ x + qp.const)
    return SolveOutcome(Status.OPTIMAL, x=x, duals=duals, reduced_costs=rc, objective=obj,
                        iterations=int(sol.iterations), soc_duals=soc_duals)


def _check_kkt(P, q, A, b, x, z, n_eq, tol=1e-7):
    scale = 1.0 + max(np.max(np.abs(q), initial=0), np.max(np.abs(x), initial=0),
                      np.max(np.abs(z), initial=0))
    stat = P @ x + q + A.T @ z
    if np.max(np.abs(stat), initial=0.0) > tol * scale * 10:
        raise NumericalFailure("conic solution fails stationarity")
    s = b - A @ x
    if n_eq and np.max(np.abs(s[:n_eq])) > tol * scale * 10:
        raise NumericalFailure("conic solution fails equality rows")
