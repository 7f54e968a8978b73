"""Experiment orchestration, CSV reporting and the brute-force oracle."""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .cflp import CflpInstance, CflpOracle, core_point, generate_cst, to_problem_data
from .errors import DeepBendersError, TooLarge
from .kernel import LinearProgram, LpSolver, Status, solve_lp
from .master import BdConfig, bd_solve, repair_core_point
from .model import MasterPoint, ProblemData, read_instance

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
COLUMNS = ["schema", "instance", "n", "k", "r", "seed", "strategy", "mode", "switch",
           "status", "iterations", "optimality_cuts", "feasibility_cuts", "wall_ms",
           "objective", "oracle", "verified", "error"]
TIME_COLUMNS = ("wall_ms",)
ORACLE_MAX_N = 20
VERIFY_TOL = 1e-5


# ---------------------------------------------------------------------------
# brute force

@dataclass
class OracleResult:
    status: str
    objective: float
    y: np.ndarray | None


def brute_force_oracle(inst: ProblemData) -> OracleResult:
    """Enumerate every binary y in Y and solve the remaining LP for each."""
    n = inst.n
    if n > ORACLE_MAX_N:
        raise TooLarge(f"brute force limited to n <= {ORACLE_MAX_N}, got {n}")
    m = inst.m
    if n == 0:
        out = solve_lp(LinearProgram(inst.c, inst.A, [">"] * m, inst.b))
        if out.status is Status.OPTIMAL:
            return OracleResult("Optimal", float(out.objective), np.zeros(0))
        return OracleResult(out.status.value, math.inf, None)
    solver = LpSolver(LinearProgram(inst.c, inst.A, [">"] * m, inst.b)) if inst.n_prime else None
    rows = np.arange(m)
    best, arg = math.inf, None
    for bits in itertools.product((0.0, 1.0), repeat=n):
        y = np.array(bits)
        if not inst.y_domain.contains(y):
            continue
        rhs = inst.b - inst.B @ y
        if solver is None:
            if np.any(rhs > 1e-9):
                continue
            val = 0.0
        else:
            solver.set_row_rhs(rows, rhs)
            out = solver.solve()
            if out.status is Status.INFEASIBLE:
                continue
            if out.status is not Status.OPTIMAL:
                return OracleResult("Unbounded", -math.inf, y)
            val = out.objective
        val += float(inst.f @ y)
        if arg is None or val < best - 1e-12 * max(1.0, abs(best)):
            best, arg = val, y
    if arg is None:
        return OracleResult("Infeasible", math.inf, None)
    return OracleResult("Optimal", best, arg)


# ---------------------------------------------------------------------------
# configuration

@dataclass
class InstanceSource:
    path: str | None = None
    cst: tuple | None = None        # (n, k, r, seed)

    @property
    def label(self) -> str:
        if self.cst is not None:
            n, k, r, seed = self.cst
            return f"cst_{n}_{k}_{r:g}_{seed}"
        return os.path.splitext(os.path.basename(self.path))[0]


@dataclass
class ExperimentConfig:
    instances: list[InstanceSource]
    strategies: list[str]
    modes: list[str] = field(default_factory=lambda: ["direct"])
    switch_gap: float | None = None
    tol: float = 1e-6
    max_iters: int = 10000
    workers: int = 1
    output: str = "results.csv"
    aggregate: bool = False
    verify: bool = True

    def __post_init__(self):
        if not self.instances:
            raise ValueError("experiment needs at least one instance")
        if not self.strategies:
            raise ValueError("experiment needs at least one strategy")


def parse_cst(text) -> tuple:
    """``"n,k,r,seed"`` (or a 4-sequence) to a typed tuple."""
    parts = text.split(",") if isinstance(text, str) else list(text)
    if len(parts) != 4:
        raise ValueError(f"CST instance needs n,k,r,seed: {text!r}")
    n, k, r, seed = parts
    return int(n), int(k), float(r), int(seed)


def load_config(path) -> ExperimentConfig:
    """Read a TOML experiment file.

    Keys: ``instances`` (paths), ``cst`` (list of ``[n, k, r, seed]``),
    ``cst_grid`` (table with lists ``n``, ``k``, ``r``, ``seeds``),
    ``strategies``, ``modes``, ``switch_gap``, ``tol``, ``max_iters``,
    ``workers``, ``output``, ``aggregate``, ``verify``.
    """
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    srcs = [InstanceSource(path=p if os.path.isabs(p) else os.path.join(base, p))
            for p in raw.get("instances", [])]
    srcs += [InstanceSource(cst=parse_cst(t)) for t in raw.get("cst", [])]
    grid = raw.get("cst_grid")
    if grid:
        for n, k, r, s in itertools.product(grid["n"], grid["k"], grid["r"], grid["seeds"]):
            srcs.append(InstanceSource(cst=(int(n), int(k), float(r), int(s))))
    out = raw.get("output", "results.csv")
    return ExperimentConfig(
        instances=srcs, strategies=list(raw.get("strategies", [])),
        modes=list(raw.get("modes", ["direct"])), switch_gap=raw.get("switch_gap"),
        tol=float(raw.get("tol", 1e-6)), max_iters=int(raw.get("max_iters", 10000)),
        workers=int(raw.get("workers", 1)),
        output=out if os.path.isabs(out) else os.path.join(base, out),
        aggregate=bool(raw.get("aggregate", False)), verify=bool(raw.get("verify", True)))


# ---------------------------------------------------------------------------
# running

@dataclass
class ResultRow:
    instance: str
    n: int
    k: int | str
    r: float | str
    seed: int | str
    strategy: str
    mode: str
    switch: bool
    status: str = ""
    iterations: int | float = 0
    optimality_cuts: int | float = 0
    feasibility_cuts: int | float = 0
    wall_ms: float = 0.0
    objective: float = math.nan
    oracle: float | str = ""
    verified: bool | str = ""
    error: str = ""
    schema: int = SCHEMA_VERSION

    def as_dict(self) -> dict:
        d = asdict(self)
        for key in ("objective", "oracle", "r", "wall_ms", "iterations",
                    "optimality_cuts", "feasibility_cuts"):
            v = d[key]
            if isinstance(v, float):
                d[key] = "" if math.isnan(v) else repr(round(v, 9) if key != "wall_ms" else round(v, 3))
        return d


def load_source(src: InstanceSource):
    """Return ``(ProblemData, CflpInstance or None)``."""
    if src.cst is not None:
        cf = generate_cst(*src.cst)
        return to_problem_data(cf), cf
    return read_instance(src.path), None


def solve_instance(inst: ProblemData, strategy: str, mode: str, config: BdConfig,
                   cf: CflpInstance | None = None):
    """bd_solve with a fresh oracle; CFLP instances use the transportation oracle."""
    if cf is not None:
        cfg = BdConfig(**{**asdict(config), "gamma_low": 0.0 if config.gamma_low is None
                          else config.gamma_low})
        return bd_solve(inst, strategy, mode, cfg, oracle=CflpOracle(cf, inst),
                        core_point=core_point(cf))
    return bd_solve(inst, strategy, mode, config)


def _run_job(job):
    src, strategy, mode, bd_kw, oracle_value = job
    inst, cf = load_source(src)
    n, k, r, seed = (src.cst if src.cst is not None else (inst.n, "", "", ""))
    row = ResultRow(src.label, n, k, r, seed, strategy, mode, bd_kw.get("switch_gap") is not None)
    try:
        rep = solve_instance(inst, strategy, mode, BdConfig(**bd_kw), cf)
        row.status = rep.status
        row.iterations = rep.iterations
        row.optimality_cuts = rep.optimality_cuts
        row.feasibility_cuts = rep.feasibility_cuts
        row.wall_ms = rep.wall_time * 1e3
        row.objective = rep.objective if rep.status == "Optimal" else math.nan
    except DeepBendersError as exc:
        row.status = "Error"
        row.error = f"{type(exc).__name__}: {exc}"
    if oracle_value is not None:
        row.oracle = oracle_value
        ok = (row.status == "Optimal" and math.isfinite(oracle_value)
              and abs(row.objective - oracle_value) / max(1.0, abs(oracle_value)) <= VERIFY_TOL)
        row.verified = ok
    return row


def _oracle_values(config: ExperimentConfig):
    vals = {}
    if not config.verify:
        return vals
    for src in config.instances:
        inst, _ = load_source(src)
        if inst.n <= ORACLE_MAX_N:
            vals[src.label] = brute_force_oracle(inst).objective
    return vals


def _aggregate(rows: list[ResultRow]) -> list[ResultRow]:
    """Average groups of CST replicates that differ only in the seed."""
    groups: dict = {}
    for r in rows:
        if r.seed == "" or r.instance.startswith("avg"):
            continue
        groups.setdefault((r.n, r.k, r.r, r.strategy, r.mode, r.switch), []).append(r)
    out = []
    for (n, k, rr, strat, mode, sw), grp in groups.items():
        for i in range(0, len(grp) - len(grp) % 4, 4):
            chunk = grp[i:i + 4]
            mean = lambda key: float(np.mean([getattr(c, key) for c in chunk]))
            seeds = "-".join(str(c.seed) for c in chunk)
            ok = all(c.status == "Optimal" for c in chunk)
            out.append(ResultRow(f"avg_cst_{n}_{k}_{rr:g}", n, k, rr, seeds, strat, mode, sw,
                                 "avg" if ok else "avg-incomplete", mean("iterations"),
                                 mean("optimality_cuts"), mean("feasibility_cuts"),
                                 mean("wall_ms"), mean("objective") if ok else math.nan))
    return out


def run_experiments(config: ExperimentConfig, out=None) -> list[ResultRow]:
    """Run every (instance, strategy, mode) and write the CSV.

    ``out`` may be a path or a text stream; it defaults to ``config.output``.
    Rows keep the job order whatever the worker count.
    """
    bd_kw = dict(switch_gap=config.switch_gap, sep_tol=config.tol, max_iter=config.max_iters)
    oracle = _oracle_values(config)
    jobs = [(src, s, m, bd_kw, oracle.get(src.label))
            for src in config.instances for s in config.strategies for m in config.modes]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_run_job, jobs))
    else:
        rows = [_run_job(j) for j in jobs]
    if config.aggregate:
        rows = rows + _aggregate(rows)
    write_csv(rows, out if out is not None else config.output)
    return rows


def write_csv(rows: list[ResultRow], out) -> None:
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="") as fh:
            write_csv(rows, fh)
        return
    w = csv.DictWriter(out, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r.as_dict())


# ---------------------------------------------------------------------------
# property suites

@dataclass
class SuiteResult:
    name: str
    passed: bool
    checks: int
    detail: str = ""


@dataclass
class VerifyReport:
    suites: list[SuiteResult]
    seconds: float

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.suites)

    def lines(self) -> list[str]:
        return [f"{'PASS' if s.passed else 'FAIL'} {s.name} ({s.checks} checks){': ' + s.detail if s.detail else ''}"
                for s in self.suites]


def _sample_points(inst, oracle, beta, rng, count):
    """Random binary master points strictly below the epigraph."""
    pts = []
    tries = 0
    while len(pts) < count and tries < 20 * count:
        tries += 1
        y = (rng.random(inst.n) < rng.uniform(0.2, 0.8)).astype(float)
        ans = oracle.solve(y)
        if ans.bounded:
            gamma = ans.value / beta * rng.uniform(0.3, 0.95)
        else:
            gamma = rng.uniform(0.0, 10.0)
        pts.append(MasterPoint(y, gamma, beta))
    return pts


def verify_properties(seeds=(0, 1), sizes=((6, 8), (8, 12)), r_values=(5.0, 10.0),
                      points_per_instance: int = 4, rl1_sign_flip: bool = False) -> VerifyReport:
    """Run the invariant suites on freshly generated CST instances.

    ``rl1_sign_flip`` injects a sign error into the RL1 weights; the
    depth-chain suite must then fail.
    """
    from . import separation as S
    from .cflp import continuous_knapsack
    from .model import compute_scaling_beta, violation

    t0 = time.perf_counter()
    stats = {k: [0, 0, ""] for k in ("oracle_agreement", "depth_chain", "duality",
                                      "support", "binding_normalization", "cone_membership",
                                      "knapsack")}

    def record(name, ok, detail=""):
        s = stats[name]
        s[0] += 1
        if not ok:
            s[1] += 1
            s[2] = s[2] or detail

    rng = np.random.default_rng(12345)
    for (n, k), r, seed in itertools.product(sizes, r_values, seeds):
        cf = generate_cst(n, k, r, seed)
        inst = to_problem_data(cf)
        truth = brute_force_oracle(inst).objective if n <= ORACLE_MAX_N else None
        for strat in ("cb", "l1", "linf"):
            rep = solve_instance(inst, strat, "direct", BdConfig(), cf)
            if truth is not None:
                ok = rep.status == "Optimal" and abs(rep.objective - truth) <= VERIFY_TOL * max(1, abs(truth))
                record("oracle_agreement", ok, f"{cf.name}/{strat}: {rep.objective} vs {truth}")
        oracle = CflpOracle(cf, inst)
        core = repair_core_point(core_point(cf), oracle)
        scaling = compute_scaling_beta(inst, core, oracle)
        beta = scaling.beta
        seps = {v: S.build_nsp(S.DistanceStrategy(v, core_point=core), inst, scaling, oracle=oracle)
                for v in (S.Variant.LINF, S.Variant.L1, S.Variant.L2)}
        w, w0 = S.weights_rl1(inst, scaling)
        if rl1_sign_flip:
            w, w0 = -w, -w0
        seps[S.Variant.RL1] = S.LpSeparator(S.Variant.RL1, inst, scaling, weights=(w, w0))
        for pt in _sample_points(inst, oracle, beta, rng, points_per_instance):
            depth = {}
            for v, sep in seps.items():
                try:
                    res = sep.separate(pt) if sep is not None else None
                except DeepBendersError as exc:
                    res = None
                    record("binding_normalization", False, f"{v.value}: {exc}")
                if res is None:
                    depth[v] = math.nan
                    continue
                depth[v] = res.depth
                if res.certificate is not None and res.depth > 1e-6:
                    record("cone_membership", res.certificate.in_cone(inst, 1e-6),
                           f"{v.value} certificate outside the cone")
                    if v is not S.Variant.RL1:
                        g = S.norm_value(v, res.certificate, inst, scaling)
                        record("binding_normalization", abs(g - 1) <= 1e-6, f"{v.value}: g={g}")
            cb = S.separate_cb(pt, inst, scaling, oracle).depth
            chain = [cb, depth[S.Variant.LINF], depth[S.Variant.L2], depth[S.Variant.L1],
                     depth[S.Variant.RL1]]
            ok = all(a >= b - 1e-6 for a, b in zip(chain, chain[1:]))
            record("depth_chain", ok, f"chain {chain}")
            for v, q in ((S.Variant.L1, math.inf), (S.Variant.L2, 2.0), (S.Variant.LINF, 1.0)):
                dist, proj, cert = S.project_epigraph(pt, inst, scaling, q)
                record("duality", abs(dist - depth[v]) <= 1e-6,
                       f"{v.value}: depth {depth[v]} vs distance {dist}")
                if cert is not None and proj is not None:
                    at = MasterPoint(proj[:-1], proj[-1], beta)
                    record("support", abs(violation(cert, at, inst)) <= 1e-6,
                           f"{v.value}: violation at projection")
        for _ in range(5):
            kk = int(rng.integers(1, 30))
            coef = rng.normal(size=kk)
            wgt = rng.uniform(0.1, 5, kk)
            cap = float(rng.uniform(0, wgt.sum()))
            val, _, _ = continuous_knapsack(coef, wgt, cap)
            lp = solve_lp(LinearProgram(coef, wgt.reshape(1, -1), ["<"], [cap],
                                        np.zeros(kk), np.ones(kk)))
            record("knapsack", abs(val - lp.objective) <= 1e-8, f"{val} vs {lp.objective}")
    suites = [SuiteResult(name, fails == 0 and checks > 0, checks, detail if fails else "")
              for name, (checks, fails, detail) in stats.items()]
    return VerifyReport(suites, time.perf_counter() - t0)
