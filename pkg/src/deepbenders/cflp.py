"""Capacitated facility location.

Model: open facilities ``y_j`` (capacity ``s_j``, fixed cost ``f_j``) and
fractions ``x_lj`` of customer ``l``'s demand ``d_l`` served from ``j`` at
unit cost ``c_lj``::

    min  sum d_l c_lj x_lj + f.y
    s.t. sum_j x_lj >= 1              (demand, one row per customer)
         sum_l d_l x_lj <= s_j y_j    (capacity)
         x_lj <= y_j                  (variable upper bounds)
         sum_j s_j y_j >= sum_l d_l   (aggregate capacity, kept in the master)

In the generic form ``x_lj`` is column ``l*n + j`` and the rows are, in
order, the k demand rows, the n capacity rows and the n*k bound rows.
"""

from __future__ import annotations

import json
import logging
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import NumericalFailure, ParseError
from .kernel import LinearProgram, LpSolver, Status
from .model import (Cut, CutKind, DualCertificate, ProblemData, ScalingInfo, YDomain)
from .separation import DspAnswer, DspOracle

log = logging.getLogger(__name__)


class CapacityShortfall(UserWarning):
    pass


@dataclass
class CflpInstance:
    s: np.ndarray
    f: np.ndarray
    d: np.ndarray
    c: np.ndarray  # k x n unit costs
    name: str = ""

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float).ravel()
        self.f = np.asarray(self.f, dtype=float).ravel()
        self.d = np.asarray(self.d, dtype=float).ravel()
        self.c = np.asarray(self.c, dtype=float).reshape(self.d.size, self.s.size)

    @property
    def n(self) -> int:
        return self.s.size

    @property
    def k(self) -> int:
        return self.d.size

    @property
    def ratio(self) -> float:
        return float(self.s.sum() / self.d.sum())


def to_problem_data(cf: CflpInstance) -> ProblemData:
    n, k = cf.n, cf.k
    cost = (cf.d[:, None] * cf.c).ravel()
    cols = np.arange(n * k)
    lrow = cols // n
    jcol = cols % n
    # demand rows
    Ar = [lrow]
    Ac = [cols]
    Av = [np.ones(n * k)]
    # capacity rows
    Ar.append(k + jcol)
    Ac.append(cols)
    Av.append(-cf.d[lrow])
    # bound rows
    Ar.append(k + n + cols)
    Ac.append(cols)
    Av.append(-np.ones(n * k))
    m = k + n + n * k
    A = sp.csr_matrix((np.concatenate(Av), (np.concatenate(Ar), np.concatenate(Ac))),
                      shape=(m, n * k))
    Br = np.concatenate([k + np.arange(n), k + n + cols])
    Bc = np.concatenate([np.arange(n), jcol])
    Bv = np.concatenate([cf.s, np.ones(n * k)])
    B = sp.csr_matrix((Bv, (Br, Bc)), shape=(m, n))
    b = np.concatenate([np.ones(k), np.zeros(n + n * k)])
    ydom = YDomain(sp.csr_matrix(cf.s.reshape(1, -1)), np.array([cf.d.sum()]))
    return ProblemData(cost, cf.f, A, B, b, ydom, name=cf.name)


# ---------------------------------------------------------------------------
# continuous knapsack

def continuous_knapsack(coef, weight, cap):
    """min coef.a s.t. weight.a <= cap, 0 <= a <= 1 (weights > 0).

    Items with negative coefficients are taken in increasing order of
    ``coef/weight``; the critical item is located by repeated median
    partitioning, so the expected work is linear.  Returns
    ``(value, alpha, critical_ratio)``; the ratio is 0 when capacity is
    not exhausted.
    """
    coef = np.asarray(coef, dtype=float)
    weight = np.asarray(weight, dtype=float)
    alpha = np.zeros(coef.size)
    idx = np.flatnonzero(coef < 0)
    if idx.size == 0:
        return 0.0, alpha, 0.0
    c, w = coef[idx], weight[idx]
    if w.sum() <= cap:
        alpha[idx] = 1.0
        return float(c.sum()), alpha, 0.0
    r = c / w
    R = float(cap)
    value = 0.0
    # the candidate set shrinks geometrically; arrays are compacted with
    # boolean masks so every pass reads memory in order
    while True:
        pivot = np.partition(r, (r.size - 1) // 2)[(r.size - 1) // 2]
        below = r < pivot
        wL = w[below].sum()
        if wL > R:
            idx, c, w, r = idx[below], c[below], w[below], r[below]
            continue
        alpha[idx[below]] = 1.0
        value += c[below].sum()
        R -= wL
        tie = r == pivot
        wE = w[tie].sum()
        if wE >= R:
            alpha[idx[tie]] = R / wE
            value += pivot * R
            return float(value), alpha, float(pivot)
        alpha[idx[tie]] = 1.0
        value += c[tie].sum()
        R -= wE
        above = r > pivot
        idx, c, w, r = idx[above], c[above], w[above], r[above]


def knapsack_kappa(cf: CflpInstance, uD, j: int) -> float:
    """kappa_j = min sum (d_l c_lj - u_l) a_l s.t. sum d_l a_l <= s_j, a in [0,1]."""
    coef = cf.d * cf.c[:, j] - np.asarray(uD, dtype=float)
    return continuous_knapsack(coef, cf.d, cf.s[j])[0]


def _kappa_and_multipliers(cf: CflpInstance, u):
    """kappa_j together with (mu, nu) attaining -kappa_j = s_j mu_j + sum nu_lj."""
    n, k = cf.n, cf.k
    kappa = np.zeros(n)
    mu = np.zeros(n)
    nu = np.zeros((k, n))
    for j in range(n):
        coef = cf.d * cf.c[:, j] - u
        val, _, crit = continuous_knapsack(coef, cf.d, cf.s[j])
        kappa[j] = val
        mu[j] = max(0.0, -crit)
        nu[:, j] = np.maximum(0.0, -coef - cf.d * mu[j])
    return kappa, mu, nu


def cflp_cut(cf: CflpInstance, uD, scaling: ScalingInfo, source: str = "cb") -> Cut:
    """Cut eta >= sum u + sum (f_j + kappa_j) y_j in scaled coordinates."""
    u = np.asarray(uD, dtype=float)
    kappa, mu, nu = _kappa_and_multipliers(cf, u)
    cert = DualCertificate(np.concatenate([u, mu, nu.ravel()]), 1.0)
    return Cut(-(cf.f + kappa), scaling.beta, float(u.sum()), CutKind.OPTIMALITY, source, cert)


# ---------------------------------------------------------------------------
# transportation subproblem

@dataclass
class TransportationDual:
    uD: np.ndarray
    objective: float


class CflpOracle:
    """Dual subproblem oracle built on the reduced transportation problem.

    Certificates are returned in the row space of :func:`to_problem_data`
    so they plug into every generic routine.
    """

    def __init__(self, cf: CflpInstance, inst: ProblemData | None = None):
        self.cf = cf
        self.inst = inst or to_problem_data(cf)
        n, k = cf.n, cf.k
        cols = np.arange(n * k)
        lrow, jcol = cols // n, cols % n
        A = sp.csr_matrix((np.concatenate([np.ones(n * k), cf.d[lrow]]),
                           (np.concatenate([lrow, k + jcol]), np.concatenate([cols, cols]))),
                          shape=(k + n, n * k))
        lp = LinearProgram((cf.d[:, None] * cf.c).ravel(), A, [">"] * k + ["<"] * n,
                           np.concatenate([np.ones(k), cf.s]), np.zeros(n * k), np.ones(n * k))
        self._lp = LpSolver(lp)
        self._y = np.ones(n)
        self._generic = None
        self.calls = 0

    def transport(self, y):
        """Solve the transportation problem at ``y``; returns a SolveOutcome."""
        cf = self.cf
        n, k = cf.n, cf.k
        y = np.asarray(y, dtype=float)
        yc = np.maximum(y, 0.0)
        changed = np.flatnonzero(yc != self._y)
        if changed.size:
            self._lp.set_row_rhs(k + changed, cf.s[changed] * yc[changed])
            cols = (np.arange(k)[:, None] * n + changed[None, :]).ravel()
            self._lp.set_col_bounds(cols, 0.0, np.tile(yc[changed], k))
            self._y = yc
        return self._lp.solve()

    def solve(self, y) -> DspAnswer:
        cf = self.cf
        n, k = cf.n, cf.k
        y = np.asarray(y, dtype=float)
        self.calls += 1
        m = self.inst.m
        if np.min(y) < -1e-9:
            j = int(np.argmin(y))
            p = np.zeros(m)
            p[k + n + j] = 1.0  # bound row of customer 0 at facility j
            return DspAnswer(False, DualCertificate(p, 0.0), math.inf, math.inf)
        out = None
        for shift in (0.0, 1e-9, 1e-7):
            # a point on the capacity boundary can be infeasible by rounding
            # only; nudging it toward the all-ones vector settles the status
            try:
                out = self.transport(y + shift * (1.0 - y) if shift else y)
                break
            except NumericalFailure:
                log.debug("transportation solve failed at shift %g", shift)
        if out is None:
            return self._generic_solve(y)
        fy = float(cf.f @ y)
        if out.status is Status.OPTIMAL:
            u = np.clip(out.duals[:k], 0.0, None)
            kappa, mu, nu = _kappa_and_multipliers(cf, u)
            p = np.concatenate([u, mu, nu.ravel()])
            # the tight dual objective; equals the transport optimum
            qt = float(u.sum() + kappa @ y)
            if abs(qt - out.objective) > 1e-6 * max(1.0, abs(out.objective)):
                log.debug("transport dual gap %.3g", qt - out.objective)
            return DspAnswer(True, DualCertificate(p, 1.0), qt + fy, qt)
        if out.status is Status.INFEASIBLE and out.farkas is not None:
            fr = out.farkas
            u = np.clip(fr[:k], 0.0, None)
            mu = np.clip(-fr[k:k + n], 0.0, None)
            nu = np.maximum(0.0, u[:, None] - cf.d[:, None] * mu[None, :])
            p = np.concatenate([u, mu, nu.ravel()])
            viol = u.sum() - y @ (cf.s * mu + nu.sum(axis=0))
            if viol > 1e-9 * max(1.0, np.max(p)):
                return DspAnswer(False, DualCertificate(p / np.max(p), 0.0), math.inf, math.inf)
        return self._generic_solve(y)

    def _generic_solve(self, y) -> DspAnswer:
        if self._generic is None:
            self._generic = DspOracle(self.inst)
        return self._generic.solve(y)


def transportation_dsp(cf: CflpInstance, yHat, oracle: CflpOracle | None = None):
    """Demand-row duals at ``yHat``, or a full-row-space infeasibility ray."""
    oracle = oracle or CflpOracle(cf)
    ans = oracle.solve(yHat)
    if ans.bounded:
        return TransportationDual(ans.certificate.p[:cf.k].copy(), ans.q_tilde)
    return ans.certificate


def core_point(cf: CflpInstance, epsilon: float = 1e-3) -> np.ndarray:
    val = min(1.0 / cf.ratio + epsilon, 1.0)
    return np.full(cf.n, val)


# ---------------------------------------------------------------------------
# instance sources

def generate_cst(n: int, k: int, r: float, seed: int) -> CflpInstance:
    """Random instance with capacity/demand ratio ``r``.

    Draw order (numpy PCG64): s, the two parts of f, d, facility positions,
    customer positions.  Fixed costs use the capacities before rescaling.
    """
    if n < 1 or k < 1 or not r > 0:
        raise ValueError("need n, k >= 1 and r > 0")
    rng = np.random.default_rng(seed)
    s = rng.uniform(10, 160, n)
    f = rng.uniform(0, 90, n) + rng.uniform(100, 110, n) * np.sqrt(s)
    d = rng.uniform(5, 35, k)
    fac = rng.uniform(0, 1, (n, 2))
    cus = rng.uniform(0, 1, (k, 2))
    c = 10.0 * np.linalg.norm(cus[:, None, :] - fac[None, :, :], axis=2)
    s = s * (r * d.sum() / s.sum())
    return CflpInstance(s, f, d, c, name=f"cst_{n}_{k}_{r:g}_{seed}")


def write_cst(cf: CflpInstance, path, meta: dict) -> None:
    """Model text format plus a JSON sidecar ``<path>.json``."""
    from .model import write_instance
    with open(path, "w") as fh:
        fh.write(write_instance(to_problem_data(cf)))
    with open(str(path) + ".json", "w") as fh:
        json.dump(dict(meta), fh, sort_keys=True)


def parse_orlib_cap(text: str, name: str = "") -> CflpInstance:
    """Parse an OR-Library ``cap`` file.

    Allocation costs in the file are for a customer's whole demand, so
    unit costs are recovered as cost / d_l.
    """
    toks = []
    for ln, line in enumerate(text.splitlines(), start=1):
        for t in line.split():
            toks.append((t, ln))
    pos = 0

    def take(kind=float):
        nonlocal pos
        if pos >= len(toks):
            raise ParseError("unexpected end of file", toks[-1][1] if toks else None, pos)
        t, ln = toks[pos]
        pos += 1
        try:
            return kind(t)
        except ValueError:
            raise ParseError(f"bad token {t!r}", ln, pos - 1) from None

    n = take(int)
    k = take(int)
    if n < 1 or k < 1:
        raise ParseError("facility and customer counts must be positive", 1)
    s = np.zeros(n)
    f = np.zeros(n)
    for j in range(n):
        s[j] = take()
        f[j] = take()
    d = np.zeros(k)
    c = np.zeros((k, n))
    for l in range(k):
        d[l] = take()
        ln = toks[pos - 1][1]
        if d[l] <= 0:
            raise ParseError("customer demand must be positive", ln, pos - 1)
        for j in range(n):
            c[l, j] = take() / d[l]
    if pos != len(toks):
        raise ParseError(f"{len(toks) - pos} trailing tokens", toks[pos][1], pos)
    if s.sum() < d.sum():
        warnings.warn("total capacity is below total demand", CapacityShortfall)
    return CflpInstance(s, f, d, c, name=name)


def write_orlib_cap(cf: CflpInstance) -> str:
    lines = [f"{cf.n} {cf.k}"]
    for j in range(cf.n):
        lines.append(f"{float(cf.s[j])!r} {float(cf.f[j])!r}")
    for l in range(cf.k):
        lines.append(repr(float(cf.d[l])))
        lines.append(" ".join(repr(float(v)) for v in cf.c[l] * cf.d[l]))
    return "\n".join(lines) + "\n"


def read_orlib_cap(path) -> CflpInstance:
    with open(path) as fh:
        return parse_orlib_cap(fh.read(), name=os.path.splitext(os.path.basename(str(path)))[0])
