"""Budget-constrained plan search, sensitivity and stability studies.

The plan search minimizes Avar(xi_p hat) over (n, f, M, omega1): for a fixed
threshold the integer cells of the budget grid are scanned exhaustively, and
the lower envelope phi(omega1) is minimized by a log-spaced coarse grid
followed by golden-section refinement inside the best bracket.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, InfeasibleBudgetError, OptimizationFailure, SsadtError
from .firstpassage import bs_plan, min_crossing_cdf
from .fisher import fisher_batch, quadratic_forms, quantile_gradient
from .inference import fit_mle
from .model import CostModel, ModelParams, StressSpec, TestPlan, cost_of
from .simulate import default_workers, simulate_batch

log = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
TABLE1_COLUMNS = ("p", "xi_p", "min_cv", "omega1_star", "elev_prob_Mm1f", "elev_prob_Mf", "n", "f", "M",
                  "elev_prob_T_hours")
SENS_COLUMNS = ("p", "eps1", "eps2", "eps3", "min_cv", "omega1_star", "n", "f", "M", "error")
STAB_COLUMNS = ("n", "f", "M", "omega1", "reps", "fitted", "bias_a", "mse_a", "bias_b", "mse_b",
                "bias_beta", "mse_beta", "exclusion_rate")


# ---------------------------------------------------------------------------
# budget grid


@dataclass(frozen=True)
class PlanGrid:
    """Feasible (n, f, M) cells, sorted by n then f."""

    n: np.ndarray
    f: np.ndarray
    M: np.ndarray

    def __len__(self):
        return len(self.n)

    def cells(self) -> list[tuple[int, int, int]]:
        return list(zip(self.n.tolist(), self.f.tolist(), self.M.tolist()))


def _dec(x) -> Fraction:
    # decimal reading of the configured cost, so that e.g. 1.9 is 19/10 exactly
    return Fraction(repr(float(x)))


def feasible_grid(costs: CostModel) -> PlanGrid:
    """All integer cells (n, f, M) with M >= 2 allowed by the budget.

    n_max = floor((C_b - 2 C_op) / (2 C_mea + C_it)); for each n,
    f_max = floor((C_b - 2 C_mea n - n C_it) / (2 C_op)); for each (n, f),
    M = floor((C_b - n C_it) / (n C_mea + f C_op)).  Floors are exact.
    """
    op, mea, it, cb = (_dec(x) for x in (costs.c_op, costs.c_mea, costs.c_it, costs.budget))
    if op <= 0 or mea < 0 or it < 0:
        raise DomainError("operation cost must be positive and other costs non-negative")
    if 2 * mea + it <= 0:
        raise DomainError("per-unit costs must not both be zero")
    n_max = math.floor((cb - 2 * op) / (2 * mea + it))
    ns, fs, Ms = [], [], []
    for n in range(1, n_max + 1):
        f_max = math.floor((cb - 2 * mea * n - n * it) / (2 * op))
        for f in range(1, f_max + 1):
            M = math.floor((cb - n * it) / (n * mea + f * op))
            if M >= 2:
                ns.append(n)
                fs.append(f)
                Ms.append(M)
    if not ns:
        raise InfeasibleBudgetError(f"budget {costs.budget} admits no plan with n >= 1, f >= 1, M >= 2")
    grid = PlanGrid(np.array(ns), np.array(fs), np.array(Ms))
    tc = cost_of(grid.n, grid.f, grid.M, costs)
    assert np.all(tc <= costs.budget * (1 + 1e-12)), "grid cell over budget"
    return grid


# ---------------------------------------------------------------------------
# inner minimization over the grid


@dataclass
class _Objective:
    """phi(omega1) for several p at once; Fisher matrices are shared across p."""

    grid: PlanGrid
    params: ModelParams
    stress: StressSpec
    mapping: str
    h: np.ndarray  # (P, 3)
    dens: np.ndarray  # (P,)
    log: list = field(default_factory=list)
    cache: dict = field(default_factory=dict)
    failed: set = field(default_factory=set)

    def __call__(self, omega1: float):
        if omega1 in self.cache:
            return self.cache[omega1]
        g = self.grid
        with np.errstate(all="ignore"):
            mats = fisher_batch(g.n, g.f, g.M, omega1, self.params, self.stress, self.mapping)
            bad = ~np.all(np.isfinite(mats.reshape(len(g), -1)), axis=1)
            mats[bad] = np.nan
            avar = quadratic_forms(mats, self.h) / self.dens**2
        avar[~(avar > 0)] = np.nan
        skipped = int(np.isnan(avar[:, 0]).sum())
        if skipped:
            log.debug("omega1=%.6g: %d of %d cells singular or not positive definite", omega1, skipped, len(g))
        best = np.full(len(self.dens), np.inf)
        idx = np.full(len(self.dens), -1)
        for j in range(len(self.dens)):
            col = avar[:, j]
            if np.all(np.isnan(col)):
                self.failed.add(omega1)
                continue
            i = int(np.nanargmin(col))  # grid order is (n, f) ascending, so ties go to smaller n then f
            best[j], idx[j] = col[i], i
            self.log.append((j, int(g.n[i]), int(g.f[i]), int(g.M[i]), float(omega1), float(col[i])))
        self.cache[omega1] = (best, idx)
        return best, idx


def _objective(ps, params, stress, costs, D, mapping, grid=None) -> _Objective:
    grid = feasible_grid(costs) if grid is None else grid
    hs, dens = [], []
    for p in ps:
        if not 0 < p < 1:
            raise DomainError("p must lie in (0, 1)")
        _, h, f0 = quantile_gradient(p, params, stress, D)
        hs.append(h)
        dens.append(f0)
    return _Objective(grid, params, stress, mapping, np.array(hs), np.array(dens))


def phi_of_omega1(omega1: float, p: float, params: ModelParams, stress: StressSpec, costs: CostModel,
                  D: float, mapping: str = "scale", grid: PlanGrid | None = None):
    """Minimum Avar over the budget grid at a fixed threshold, with its plan.

    Returns (inf, None) when no cell has a usable information matrix.
    """
    if not 0 < omega1 < D:
        raise DomainError("omega1 must lie in (0, D)")
    obj = _objective([p], params, stress, costs, D, mapping, grid)
    best, idx = obj(float(omega1))
    if idx[0] < 0:
        log.warning("omega1=%.6g: every grid cell failed", omega1)
        return math.inf, None
    i = idx[0]
    g = obj.grid
    return float(best[0]), TestPlan(int(g.n[i]), int(g.f[i]), int(g.M[i]), float(omega1), D)


# ---------------------------------------------------------------------------
# outer minimization over omega1


@dataclass(frozen=True)
class DesignReport:
    p: float
    omega1_star: float
    n_star: int
    f_star: int
    M_star: int
    min_cv: float
    avar_star: float
    xi_p_hat: float
    elevation_prob: float
    elevation_prob_Mf: float
    elevation_prob_T_hours: float
    mapping_used: str
    grid_log: tuple = field(default=(), repr=False, compare=False)

    @property
    def plan(self) -> tuple[int, int, int]:
        return (self.n_star, self.f_star, self.M_star)

    def table_row(self) -> dict:
        return {
            "p": self.p, "xi_p": self.xi_p_hat, "min_cv": self.min_cv, "omega1_star": self.omega1_star,
            "elev_prob_Mm1f": self.elevation_prob, "elev_prob_Mf": self.elevation_prob_Mf,
            "n": self.n_star, "f": self.f_star, "M": self.M_star,
            "elev_prob_T_hours": self.elevation_prob_T_hours,
        }

    def to_dict(self, with_log: bool = False) -> dict:
        d = self.table_row()
        d.update(avar_star=self.avar_star, mapping_used=self.mapping_used)
        if with_log:
            d["grid_log"] = [dict(zip(("n", "f", "M", "omega1", "avar"), r)) for r in self.grid_log]
        return d


def _golden(fun, lo, hi, tol):
    """Golden-section search for a minimum of fun on [lo, hi]; returns (x, fx) of the best point seen."""
    c = hi - INV_PHI * (hi - lo)
    d = lo + INV_PHI * (hi - lo)
    fc, fd = fun(c), fun(d)
    seen = [(fc, c), (fd, d)]
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - INV_PHI * (hi - lo)
            fc = fun(c)
            seen.append((fc, c))
        else:
            lo, c, fc = c, d, fd
            d = lo + INV_PHI * (hi - lo)
            fd = fun(d)
            seen.append((fd, d))
    fx, x = min(seen)
    return x, fx


def _elevation_probs(plan: TestPlan, params, stress, mapping):
    bs = bs_plan(plan, params, stress, mapping)
    t = np.array([(plan.M - 1) * plan.f, plan.M * plan.f, stress.unit_hours * plan.M * plan.f], dtype=float)
    return [float(v) for v in min_crossing_cdf(t, plan.n, bs)]


def optimize_designs(ps, params: ModelParams, stress: StressSpec, costs: CostModel, D: float,
                     mapping: str = "scale", n_coarse: int = 200, tol: float | None = None,
                     grid: PlanGrid | None = None) -> list[DesignReport]:
    """Optimal plan for each p; the coarse omega1 grid is evaluated once for all p."""
    ps = [float(p) for p in ps]
    obj = _objective(ps, params, stress, costs, D, mapping, grid)
    tol = 1e-4 * D if tol is None else tol
    coarse = np.geomspace(1e-4 * D, 0.999 * D, n_coarse)
    vals = np.array([obj(float(w))[0] for w in coarse])  # (n_coarse, P)
    if obj.failed:
        log.info("%d of %d coarse thresholds (from %.4g up) have no usable grid cell; phi set to inf there",
                 len(obj.failed), n_coarse, min(obj.failed))
    reports = []
    for j, p in enumerate(ps):
        col = vals[:, j]
        if not np.any(np.isfinite(col)):
            raise OptimizationFailure(f"no threshold gives a usable information matrix for p={p}")
        i = int(np.argmin(col))
        lo = coarse[max(i - 1, 0)]
        hi = coarse[min(i + 1, n_coarse - 1)]
        w, fw = _golden(lambda x: obj(float(x))[0][j], lo, hi, tol)
        if not fw <= col[i]:
            w, fw = float(coarse[i]), float(col[i])
        assert fw <= col[i]
        k = int(obj(float(w))[1][j])
        g = obj.grid
        plan = TestPlan(int(g.n[k]), int(g.f[k]), int(g.M[k]), float(w), D)
        xi = quantile_gradient(p, params, stress, D)[0]
        e = _elevation_probs(plan, params, stress, mapping)
        entries = tuple(r[1:] for r in obj.log if r[0] == j)
        reports.append(DesignReport(
            p=p, omega1_star=float(w), n_star=plan.n, f_star=plan.f, M_star=plan.M,
            min_cv=float(math.sqrt(fw) / xi), avar_star=float(fw), xi_p_hat=float(xi),
            elevation_prob=e[0], elevation_prob_Mf=e[1], elevation_prob_T_hours=e[2],
            mapping_used=mapping, grid_log=entries,
        ))
    return reports


def optimize_design(p: float, params: ModelParams, stress: StressSpec, costs: CostModel, D: float,
                    mapping: str = "scale", **kw) -> DesignReport:
    return optimize_designs([p], params, stress, costs, D, mapping, **kw)[0]


# ---------------------------------------------------------------------------
# sensitivity


@dataclass(frozen=True)
class SensitivityRow:
    eps: tuple[float, float, float]
    p: float
    report: DesignReport | None
    error: str = ""

    def to_dict(self) -> dict:
        d = {"p": self.p, "eps1": self.eps[0], "eps2": self.eps[1], "eps3": self.eps[2]}
        if self.report is not None:
            r = self.report
            d.update(min_cv=r.min_cv, omega1_star=r.omega1_star, n=r.n_star, f=r.f_star, M=r.M_star, error="")
        else:
            d.update(min_cv="", omega1_star="", n="", f="", M="", error=self.error)
        return d


def sensitivity_study(eps_list, p: float, params: ModelParams, stress: StressSpec, costs: CostModel, D: float,
                      mapping: str = "scale", **kw) -> list[SensitivityRow]:
    """One plan search per relative perturbation ((1+e1) a, (1+e2) b, (1+e3) beta)."""
    grid = feasible_grid(costs)
    rows = []
    for eps in eps_list:
        eps = tuple(float(e) for e in eps)
        try:
            perturbed = params.perturbed(eps)
            rep = optimize_design(p, perturbed, stress, costs, D, mapping, grid=grid, **kw)
            rows.append(SensitivityRow(eps, p, rep))
        except (SsadtError, AssertionError) as exc:
            log.warning("sensitivity row %s failed: %s", eps, exc)
            rows.append(SensitivityRow(eps, p, None, str(exc)))
    return rows


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityRow:
    plan: TestPlan
    reps: int
    fitted: int
    bias: np.ndarray
    mse: np.ndarray

    @property
    def exclusion_rate(self) -> float:
        return 1.0 - self.fitted / self.reps

    def to_dict(self) -> dict:
        return {
            "n": self.plan.n, "f": self.plan.f, "M": self.plan.M, "omega1": self.plan.omega1,
            "reps": self.reps, "fitted": self.fitted,
            "bias_a": self.bias[0], "mse_a": self.mse[0], "bias_b": self.bias[1], "mse_b": self.mse[1],
            "bias_beta": self.bias[2], "mse_beta": self.mse[2], "exclusion_rate": self.exclusion_rate,
        }


def _fit_chunk(args):
    plan, params, stress, seed, reps = args
    out = []
    for obs in simulate_batch(plan, params, stress, len(reps), seed, first_rep=reps[0]):
        try:
            out.append(fit_mle(obs, stress, params, seed=seed).theta_hat.as_array())
        except SsadtError as exc:
            log.debug("rep %d not fitted: %s", obs.rep, exc)
            out.append(None)
    return out


def stability_study(plans, reps: int, seed: int, params: ModelParams, stress: StressSpec,
                    workers: int | None = None, max_exclusion: float = 0.01) -> list[StabilityRow]:
    """Bias and MSE of the MLE over simulated tests at each plan.

    Fits start at the true parameters.  Failed fits are excluded; an
    exclusion rate above ``max_exclusion`` is logged as an error.
    """
    if reps < 100:
        raise DomainError("reps must be >= 100")
    workers = default_workers() if workers is None else workers
    truth = params.as_array()
    rows = []
    for plan in plans:
        chunks = [c.tolist() for c in np.array_split(np.arange(reps), max(1, workers) * 4) if len(c)]
        args = [(plan, params, stress, seed, c) for c in chunks]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(_fit_chunk, args))
        else:
            parts = [_fit_chunk(a) for a in args]
        est = np.array([x for part in parts for x in part if x is not None])
        fitted = len(est)
        if fitted == 0:
            raise OptimizationFailure(f"no replication could be fitted at {plan}")
        err = est - truth
        row = StabilityRow(plan, reps, fitted, err.mean(axis=0), (err**2).mean(axis=0))
        if row.exclusion_rate > max_exclusion:
            log.error("exclusion rate %.3f at %s exceeds %.3f", row.exclusion_rate, plan, max_exclusion)
        rows.append(row)
    return rows
