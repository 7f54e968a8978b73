"""Problem data, master points, certificates and cuts.

The MILP handled throughout is::

    min  c.x + f.y   s.t.  A x + B y >= b,  x >= 0,  y in Y

with ``Y`` the binary vectors satisfying optional rows ``G y >= h``.
Master-space quantities live in scaled coordinates ``(y, gamma)`` with
``eta = beta * gamma``.  A certificate ``(p, pi0)`` of the cone

    Pi = {(p, pi0) >= 0 : p'A <= pi0 c'}

yields the cut ``(p'B - pi0 f') y + beta pi0 gamma >= p'b``.
"""

from __future__ import annotations

import enum
import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DspUnbounded, ParseError, VacuousCertificate
from .kernel import LinearProgram, solve_lp

log = logging.getLogger(__name__)

ZERO_TOL = 1e-9
FEAS_TOL = 1e-7


@dataclass
class YDomain:
    """Binary y with side rows ``G y >= h``."""

    G: sp.csr_matrix
    h: np.ndarray

    @classmethod
    def binaries(cls, n: int) -> "YDomain":
        return cls(sp.csr_matrix((0, n)), np.zeros(0))

    @property
    def num_rows(self) -> int:
        return self.G.shape[0]

    def contains(self, y, tol: float = 1e-9) -> bool:
        y = np.asarray(y, dtype=float)
        return bool(np.all(self.G @ y >= self.h - tol))


@dataclass
class ProblemData:
    c: np.ndarray
    f: np.ndarray
    A: sp.csr_matrix
    B: sp.csr_matrix
    b: np.ndarray
    y_domain: YDomain | None = None
    name: str = ""

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        self.f = np.asarray(self.f, dtype=float).ravel()
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.A = sp.csr_matrix(self.A, dtype=float)
        self.B = sp.csr_matrix(self.B, dtype=float)
        if self.y_domain is None:
            self.y_domain = YDomain.binaries(self.f.size)

    @property
    def n(self) -> int:
        return self.f.size

    @property
    def n_prime(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class StructuralError:
    code: str
    field: str
    detail: str = ""


def validate(inst: ProblemData) -> list[StructuralError]:
    errs = []
    m = inst.A.shape[0]
    if inst.A.shape[1] != inst.c.size:
        errs.append(StructuralError("DimensionMismatch", "A", "columns differ from |c|"))
    if inst.B.shape[0] != m:
        errs.append(StructuralError("DimensionMismatch", "B", "rows differ from rows of A"))
    if inst.B.shape[1] != inst.f.size:
        errs.append(StructuralError("DimensionMismatch", "B", "columns differ from |f|"))
    if inst.b.size != m:
        errs.append(StructuralError("DimensionMismatch", "b", f"|b|={inst.b.size}, m={m}"))
    yd = inst.y_domain
    if yd.G.shape[1] != inst.f.size or yd.h.size != yd.G.shape[0]:
        errs.append(StructuralError("DimensionMismatch", "Y", "side rows do not match y"))
    for name in ("c", "f", "b"):
        if not np.all(np.isfinite(getattr(inst, name))):
            errs.append(StructuralError("NonFinite", name))
    for name in ("A", "B"):
        if not np.all(np.isfinite(getattr(inst, name).data)):
            errs.append(StructuralError("NonFinite", name))
    return errs


@dataclass
class ScalingInfo:
    beta: float = 1.0

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")


@dataclass
class MasterPoint:
    y_hat: np.ndarray
    gamma_hat: float
    beta: float = 1.0

    def __post_init__(self):
        self.y_hat = np.asarray(self.y_hat, dtype=float).ravel()
        self.gamma_hat = float(self.gamma_hat)

    @classmethod
    def from_eta(cls, y_hat, eta_hat: float, beta: float = 1.0) -> "MasterPoint":
        return cls(y_hat, eta_hat / beta, beta)

    @property
    def eta_hat(self) -> float:
        return self.beta * self.gamma_hat

    def coords(self) -> np.ndarray:
        """The point as one vector ``(y, gamma)``."""
        return np.append(self.y_hat, self.gamma_hat)


@dataclass
class DualCertificate:
    p: np.ndarray
    pi0: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).ravel()
        self.pi0 = float(self.pi0)

    def scaled(self, alpha: float) -> "DualCertificate":
        return DualCertificate(alpha * self.p, alpha * self.pi0)

    def cone_residual(self, inst: ProblemData) -> float:
        """Largest violation of the cone conditions (0 when inside)."""
        worst = max(0.0, -self.pi0, -np.min(self.p, initial=0.0))
        if inst.n_prime:
            worst = max(worst, np.max(inst.A.T @ self.p - self.pi0 * inst.c, initial=0.0))
        return float(worst)

    def in_cone(self, inst: ProblemData, tol: float = FEAS_TOL) -> bool:
        scale = max(1.0, np.max(np.abs(self.p), initial=0.0), abs(self.pi0))
        return self.cone_residual(inst) <= tol * scale


class CutKind(str, enum.Enum):
    OPTIMALITY = "optimality"
    FEASIBILITY = "feasibility"


@dataclass
class Cut:
    """Halfspace ``a_y.y + a_gamma*gamma >= rhs`` in scaled master space."""

    a_y: np.ndarray
    a_gamma: float
    rhs: float
    kind: CutKind
    source: str = "cb"
    certificate: DualCertificate | None = field(default=None, compare=False, repr=False)

    def slack(self, y, gamma) -> float:
        return float(self.a_y @ np.asarray(y, dtype=float) + self.a_gamma * gamma - self.rhs)

    def violation_at(self, y, gamma) -> float:
        return -self.slack(y, gamma)

    def coefficients(self) -> np.ndarray:
        return np.append(self.a_y, self.a_gamma)

    def key(self, grain: float = 1e-9) -> tuple:
        v = np.append(self.coefficients(), self.rhs)
        return tuple(np.round(v / grain).astype(np.int64).tolist())


def violation(cert: DualCertificate, point: MasterPoint, inst: ProblemData) -> float:
    if cert.p.size != inst.m or point.y_hat.size != inst.n:
        raise ValueError("dimension mismatch between certificate, point and instance")
    r = inst.b - inst.B @ point.y_hat
    return float(cert.p @ r + cert.pi0 * (inst.f @ point.y_hat - point.eta_hat))


def cut_from_certificate(cert: DualCertificate, inst: ProblemData, scaling: ScalingInfo,
                         source: str = "cb", normalize: bool = True) -> Cut:
    """Cut induced by ``cert``.

    With ``normalize`` the certificate is rescaled so that pi0 = 1 for
    optimality cuts and the largest |a_y| is 1 for feasibility cuts, which
    makes cuts from proportional certificates identical.
    """
    a_y = inst.B.T @ cert.p - cert.pi0 * inst.f
    a_gamma = scaling.beta * cert.pi0
    coef_norm = max(np.max(np.abs(a_y), initial=0.0), abs(a_gamma))
    if coef_norm <= ZERO_TOL:
        raise VacuousCertificate("certificate yields an all-zero cut")
    kind = CutKind.OPTIMALITY if cert.pi0 > ZERO_TOL else CutKind.FEASIBILITY
    rhs = float(cert.p @ inst.b)
    if kind is CutKind.FEASIBILITY:
        a_gamma = 0.0
    if normalize:
        s = cert.pi0 if kind is CutKind.OPTIMALITY else np.max(np.abs(a_y))
        a_y, a_gamma, rhs = a_y / s, a_gamma / s, rhs / s
        cert = cert.scaled(1.0 / s)
    return Cut(np.asarray(a_y, dtype=float), float(a_gamma), float(rhs), kind, source, cert)


def compute_scaling_beta(inst: ProblemData, core_point, dsp_oracle=None) -> ScalingInfo:
    """beta = mean |u'B - f| with u the dual solution at ``core_point``.

    Falls back to beta = 1 when that value vanishes or the dual is unbounded.
    """
    if inst.n == 0:
        return ScalingInfo(1.0)
    if dsp_oracle is None:
        from .separation import DspOracle
        dsp_oracle = DspOracle(inst)
    try:
        ans = dsp_oracle.solve(np.asarray(core_point, dtype=float))
    except DspUnbounded:
        ans = None
    if ans is None or not ans.bounded:
        log.warning("dual subproblem unbounded at the core point; using beta = 1")
        return ScalingInfo(1.0)
    beta = float(np.mean(np.abs(inst.B.T @ ans.u - inst.f)))
    if not math.isfinite(beta) or beta <= ZERO_TOL:
        return ScalingInfo(1.0)
    return ScalingInfo(beta)


def psp_value(inst: ProblemData, y) -> float:
    """Q(y) = f.y + min{c.x : A x >= b - B y, x >= 0}; +inf when infeasible."""
    y = np.asarray(y, dtype=float)
    rhs = inst.b - inst.B @ y
    if inst.n_prime == 0:
        return float(inst.f @ y) if np.all(rhs <= FEAS_TOL) else math.inf
    out = solve_lp(LinearProgram(inst.c, inst.A, [">"] * inst.m, rhs))
    if out.status.value == "Infeasible":
        return math.inf
    if out.status.value == "Unbounded":
        return -math.inf
    return float(out.objective + inst.f @ y)


# ---------------------------------------------------------------------------
# plain-text interchange format

def write_instance(inst: ProblemData) -> str:
    lines = [f"{inst.n} {inst.n_prime} {inst.m}"]
    fmt = lambda v: repr(float(v))
    lines.append(" ".join(["c"] + [fmt(v) for v in inst.c]))
    lines.append(" ".join(["f"] + [fmt(v) for v in inst.f]))
    lines.append(" ".join(["b"] + [fmt(v) for v in inst.b]))
    for tag, M in (("A", inst.A), ("B", inst.B), ("Y", inst.y_domain.G)):
        coo = M.tocoo()
        order = np.lexsort((coo.col, coo.row))
        for k in order:
            lines.append(f"{tag} {coo.row[k]} {coo.col[k]} {fmt(coo.data[k])}")
    for i, v in enumerate(inst.y_domain.h):
        lines.append(f"Yb {i} {fmt(v)}")
    return "\n".join(lines) + "\n"


def read_instance(source: str | os.PathLike, name: str = "") -> ProblemData:
    """Parse the text format; ``source`` is a path or the text itself."""
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source
                                           and os.path.exists(source)):
        name = name or os.path.splitext(os.path.basename(str(source)))[0]
        with open(source) as fh:
            text = fh.read()
    else:
        text = str(source)
    header = None
    vecs = {}
    trip = {"A": [], "B": [], "Y": []}
    yb = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if header is None:
                if len(tok) != 3:
                    raise ParseError("header must be 'n nprime m'", ln)
                header = tuple(int(t) for t in tok)
            elif tok[0] in ("c", "f", "b"):
                vecs[tok[0]] = np.array([float(t) for t in tok[1:]])
            elif tok[0] in trip:
                if len(tok) != 4:
                    raise ParseError(f"{tok[0]} triplet needs 3 fields", ln)
                trip[tok[0]].append((int(tok[1]), int(tok[2]), float(tok[3])))
            elif tok[0] == "Yb":
                if len(tok) != 3:
                    raise ParseError("Yb needs row and value", ln)
                yb[int(tok[1])] = float(tok[2])
            else:
                raise ParseError(f"unknown record {tok[0]!r}", ln, 0)
        except ValueError as exc:
            raise ParseError(f"bad number: {exc}", ln) from None
    if header is None:
        raise ParseError("empty instance")
    n, n_prime, m = header
    for key, size in (("c", n_prime), ("f", n), ("b", m)):
        vecs.setdefault(key, np.zeros(0))
        if vecs[key].size != size:
            raise ParseError(f"vector {key} has {vecs[key].size} entries, expected {size}")

    def build(entries, shape):
        if not entries:
            return sp.csr_matrix(shape)
        r, c, v = zip(*entries)
        if max(r) >= shape[0] or max(c) >= shape[1] or min(r) < 0 or min(c) < 0:
            raise ParseError("triplet index out of range")
        return sp.csr_matrix((v, (r, c)), shape=shape)

    ny = max([i + 1 for i, _, _ in trip["Y"]] + [i + 1 for i in yb], default=0)
    h = np.zeros(ny)
    for i, v in yb.items():
        h[i] = v
    ydom = YDomain(build(trip["Y"], (ny, n)), h)
    return ProblemData(vecs["c"], vecs["f"], build(trip["A"], (m, n_prime)),
                       build(trip["B"], (m, n)), vecs["b"], ydom, name=name)


def micro_instance() -> ProblemData:
    """The two-row, one-facility toy used in the tests and demos.

    Q(y) = 3y + 2 max(0, 1 - y) for y >= 0.
    """
    A = sp.csr_matrix([[1.0], [0.0]])
    B = sp.csr_matrix([[1.0], [1.0]])
    return ProblemData([2.0], [3.0], A, B, [1.0, 0.0], name="micro")
