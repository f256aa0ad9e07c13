"""Expected Fisher information of the two-level SSADT likelihood and the
delta-method asymptotic variance of the lifetime quantile estimator.

The information splits into the gamma-increment part, which depends on the
plan only through the expected number of intervals spent under each stress,
and the part contributed by the elevation-index term log P(kappa1).  The
latter is assembled from the scalars A, C and termD (called D in the
appendix algebra; renamed to avoid a clash with the critical level D).

The batch functions work on arrays of cells (n, f, M, omega1) so the design
search can evaluate thousands of plans per threshold in one pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from . import specfun
from .errors import ConditioningError, DomainError, NumericalError
from .firstpassage import bs_argument, bs_coefficients, cell_probs, kappa1_pmf, kappa1_pmf_exact
from .lifetime import LifetimeBs, h_vector, lifetime_pdf, lifetime_quantile
from .model import KELVIN_OFFSET, ModelParams, StressSpec, TestPlan, arrhenius_rate

log = logging.getLogger(__name__)

B_SCALE = 1e-3  # b is solved for in units of 1000 degrees


@dataclass(frozen=True)
class FisherMatrix:
    """Symmetric 3 x 3 information matrix ordered (a, b, beta)."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=float)
        e = 0.5 * (e + e.T)
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def is_positive_definite(self) -> bool:
        return bool(np.all(np.linalg.eigvalsh(_scaled(self.entries)) > 0))

    def to_dict(self) -> dict:
        names = ("a", "b", "beta")
        return {
            "order": list(names),
            "matrix": self.entries.tolist(),
        }


@dataclass(frozen=True)
class AvarResult:
    avar: float
    cv: float
    xi_p: float
    plan: TestPlan

    def to_dict(self) -> dict:
        return {
            "avar": self.avar,
            "cv": self.cv,
            "xi_p": self.xi_p,
            "plan": {"n": self.plan.n, "f": self.plan.f, "M": self.plan.M, "omega1": self.plan.omega1, "D": self.plan.D},
        }


@dataclass(frozen=True)
class HelperTerms:
    """Building blocks of the expected information for one plan.

    c1, c2, g1 and g1_prime are functions of time; g1 and g1_prime are the
    first and second derivatives of the minimum-crossing cdf with respect to
    its normal argument c1.
    """

    c1: Callable
    c2: Callable
    g1: Callable
    g1_prime: Callable
    G: Callable
    E_kappa: float
    A: float
    C: float
    termD: float
    gamma1: float
    alpha1: float


def _two_levels(stress: StressSpec):
    if stress.m != 2:
        raise DomainError("the information matrix is implemented for two test stresses")
    return stress.levels


def _ragged(M):
    """Flattened (cell index, k) for k = 1..M-1 of every cell."""
    lengths = M - 1
    cell = np.repeat(np.arange(len(M)), lengths)
    starts = np.cumsum(lengths) - lengths
    k = np.arange(lengths.sum()) - np.repeat(starts, lengths) + 1
    return cell, k, starts, lengths


def _segment_sum(values, starts):
    return np.add.reduceat(values, starts) if len(values) else np.zeros(len(starts))


def _cut_quantities(n, f, M, omega1, alpha1, beta, mapping):
    """c1, c2, G, S, g1, g1' at the inner cut points kf, flattened over cells."""
    cell, k, starts, lengths = _ragged(M)
    nn = n[cell].astype(float)
    t = (f[cell] * k).astype(float)
    delta, gam = bs_coefficients(alpha1, beta, omega1, mapping)
    delta = np.broadcast_to(delta, n.shape)[cell]
    gam = np.broadcast_to(gam, n.shape)[cell]
    c1 = bs_argument(t, delta, gam)
    r = np.sqrt(t / gam)
    c2 = (r + 1.0 / r) / delta
    log_unit_sf = special.log_ndtr(-c1)
    log_s = nn * log_unit_sf
    S = np.exp(log_s)
    G = -np.expm1(log_s)
    phi = specfun.norm_pdf(c1)
    with np.errstate(over="ignore", invalid="ignore"):
        g1 = nn * np.exp((nn - 1.0) * log_unit_sf) * phi
        first = np.where(nn > 1, nn * (nn - 1.0) * np.exp((nn - 2.0) * log_unit_sf) * phi * phi, 0.0)
    g1p = -first - c1 * g1
    return dict(cell=cell, k=k, starts=starts, lengths=lengths, t=t, c1=c1, c2=c2, G=G, S=S,
                g1=g1, g1p=g1p, gam=gam)


def _cell_probs_ragged(q):
    """Probabilities of cells 1..M-1 (flattened) and of the capped cell M (per cell)."""
    G, S, starts = q["G"], q["S"], q["starts"]
    G_prev = np.concatenate(([0.0], G[:-1]))
    S_prev = np.concatenate(([1.0], S[:-1]))
    G_prev[starts] = 0.0
    S_prev[starts] = 1.0
    inner = np.where(G < 0.5, G - G_prev, S_prev - S)
    last = S[starts + q["lengths"] - 1]
    return inner, last


def _delta_ratio(u, v, inner, last, q):
    """sum over all M cells of (Delta u)(Delta v) / P, with u = v = 0 beyond the cuts."""
    starts, lengths = q["starts"], q["lengths"]
    u_prev = np.concatenate(([0.0], u[:-1]))
    v_prev = np.concatenate(([0.0], v[:-1]))
    u_prev[starts] = 0.0
    v_prev[starts] = 0.0
    du, dv = u - u_prev, v - v_prev
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(inner > 0, du * dv / inner, 0.0)
    tail_u = u[starts + lengths - 1]
    tail_v = v[starts + lengths - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(last > 0, tail_u * tail_v / last, 0.0)
    return _segment_sum(terms, starts) + tail


def _telescoped(x, q):
    """The printed second-derivative piece: -sum_{k=2}^{M-1} Delta x(kf) - x(f) + x((M-1)f).

    It vanishes identically; it is kept so the assembled value follows the
    displayed algebra term by term.
    """
    starts, lengths = q["starts"], q["lengths"]
    x_prev = np.concatenate(([0.0], x[:-1]))
    diffs = x - x_prev
    diffs[starts] = 0.0
    return -_segment_sum(diffs, starts) - x[starts] + x[starts + lengths - 1]


def _kappa_terms(n, f, M, omega1, alpha1, beta, mapping):
    """E_kappa, P(kappa1 = M), A, C, termD for every cell."""
    q = _cut_quantities(n, f, M, omega1, alpha1, beta, mapping)
    inner, last = _cell_probs_ragged(q)
    E_kappa = _segment_sum(q["k"] * inner, q["starts"])
    t, g1, g1p, c1, c2, gam = q["t"], q["g1"], q["g1p"], q["c1"], q["c2"], q["gam"]
    u = c2 * g1                        # 2 dG/da
    v = np.sqrt(alpha1 / t) * g1       # beta / gamma1 * dG/dbeta (scale mapping)
    w = gam * v                        # beta * dG/dbeta (scale mapping)
    A = _delta_ratio(u, u, inner, last, q) + _telescoped(c1 * g1 + c2 * c2 * g1p, q)
    C = _delta_ratio(v, u, inner, last, q) + _telescoped(v + gam * (alpha1 / t) * g1p, q)
    termD = _delta_ratio(w, w, inner, last, q) - _telescoped(2.0 * w + g1p * w * w, q)
    gam_cell = np.broadcast_to(bs_coefficients(alpha1, beta, omega1, mapping)[1], n.shape)
    if mapping == "rate":
        # under the rate reading dc1/dbeta changes sign; only the cross term is affected
        C = -C
    return E_kappa, last, A, C, termD, gam_cell


def fisher_batch(n, f, M, omega1, params: ModelParams, stress: StressSpec, mapping="scale") -> np.ndarray:
    """Expected information matrices, shape (K, 3, 3), for K cells."""
    n = np.atleast_1d(np.asarray(n, dtype=np.int64))
    f = np.atleast_1d(np.asarray(f, dtype=np.int64))
    M = np.atleast_1d(np.asarray(M, dtype=np.int64))
    n, f, M = np.broadcast_arrays(n, f, M)
    omega1 = np.broadcast_to(np.asarray(omega1, dtype=float), n.shape)
    if np.any(M < 2):
        raise DomainError("M must be >= 2")
    S1, S2 = _two_levels(stress)
    T1, T2 = KELVIN_OFFSET + S1, KELVIN_OFFSET + S2
    alpha1 = arrhenius_rate(params, S1)
    alpha2 = arrhenius_rate(params, S2)
    beta = params.beta

    E_kappa, p_last, A, C, termD, gam = _kappa_terms(n, f, M, omega1, alpha1, beta, mapping)
    G_last = 1.0 - p_last

    nf = n * f.astype(float)
    q1 = nf * f * alpha1**2 * specfun.trigamma(f * alpha1)
    q2 = nf * f * alpha2**2 * specfun.trigamma(f * alpha2)

    def weigh(x1, x2):
        return (x1 - x2) * E_kappa + M * x1 * p_last + M * x2 * G_last

    out = np.empty(n.shape + (3, 3))
    out[:, 0, 0] = weigh(q1, q2) + A / 4.0
    out[:, 1, 1] = weigh(q1 / T1**2, q2 / T2**2) + A / (4.0 * T1**2)
    out[:, 0, 1] = weigh(q1 / T1, q2 / T2) + A / (4.0 * T1)
    out[:, 0, 2] = C * gam / (2.0 * beta) + nf / beta * weigh(alpha1, alpha2)
    out[:, 1, 2] = C * gam / (2.0 * beta * T1) + nf / beta * weigh(alpha1 / T1, alpha2 / T2)
    out[:, 2, 2] = termD / beta**2 + nf / beta**2 * weigh(alpha1, alpha2)
    out[:, 1, 0] = out[:, 0, 1]
    out[:, 2, 0] = out[:, 0, 2]
    out[:, 2, 1] = out[:, 1, 2]
    return out


def helper_terms(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale") -> HelperTerms:
    S1, _ = _two_levels(stress)
    alpha1 = arrhenius_rate(params, S1)
    delta, gam = bs_coefficients(alpha1, params.beta, plan.omega1, mapping)
    n = plan.n
    E_kappa, _, A, C, termD, _ = _kappa_terms(
        np.array([n]), np.array([plan.f]), np.array([plan.M]), np.array([plan.omega1]), alpha1, params.beta, mapping
    )

    def c1(t):
        return bs_argument(np.asarray(t, dtype=float), delta, gam)

    def c2(t):
        r = np.sqrt(np.asarray(t, dtype=float) / gam)
        return (r + 1.0 / r) / delta

    def g1(t):
        c = c1(t)
        return n * specfun.norm_sf(c) ** (n - 1) * specfun.norm_pdf(c)

    def g1_prime(t):
        c = c1(t)
        sf, ph = specfun.norm_sf(c), specfun.norm_pdf(c)
        first = n * (n - 1) * sf ** (n - 2) * ph * ph if n > 1 else 0.0
        return -first - n * c * sf ** (n - 1) * ph

    def G(t):
        return -np.expm1(n * special.log_ndtr(-c1(t)))

    return HelperTerms(c1, c2, g1, g1_prime, G, float(E_kappa[0]), float(A[0]), float(C[0]), float(termD[0]),
                       float(gam), float(alpha1))


def fisher_info(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale") -> FisherMatrix:
    mat = fisher_batch(plan.n, plan.f, plan.M, plan.omega1, params, stress, mapping)[0]
    if not np.all(np.isfinite(mat)):
        raise NumericalError(f"non-finite information matrix for {plan}")
    return FisherMatrix(mat)


# ---------------------------------------------------------------------------
# delta method

_SCALE = np.array([1.0, 1.0 / B_SCALE, 1.0])


def _scaled(mat):
    return mat * _SCALE[..., :, None] * _SCALE[..., None, :]


def quadratic_forms(mats: np.ndarray, h: np.ndarray):
    """h' I^-1 h per matrix, with NaN where I is not positive definite.

    b is rescaled by 1e-3 before the solve; the quadratic form is invariant.
    h may be (3,) or (P, 3); the result is (K,) or (K, P).
    """
    ms = _scaled(mats)
    hs = np.atleast_2d(h) * _SCALE
    eig_min = np.linalg.eigvalsh(ms)[:, 0]
    eig_max = np.abs(np.linalg.eigvalsh(ms)[:, -1])
    ok = np.isfinite(eig_min) & (eig_min > 1e-13 * eig_max)
    out = np.full((len(ms), hs.shape[0]), np.nan)
    if np.any(ok):
        sol = np.linalg.solve(ms[ok], np.broadcast_to(hs.T, (int(ok.sum()),) + hs.T.shape))
        out[ok] = np.einsum("pi,kip->kp", hs, sol)
    return out[:, 0] if np.ndim(h) == 1 else out


def quantile_gradient(p, params: ModelParams, stress: StressSpec, D: float):
    """(xi_p, h(xi_p), f0(xi_p)) for the use-condition lifetime."""
    lb = LifetimeBs.from_model(params, stress, D)
    xi = lifetime_quantile(p, lb)
    return xi, h_vector(xi, params, stress, D), lifetime_pdf(xi, lb)


def avar_quantile(plan: TestPlan, params: ModelParams, stress: StressSpec, D: float | None = None, p: float = 0.5,
                  mapping="scale", info: FisherMatrix | None = None) -> AvarResult:
    """Avar(xi_p hat) = h' I^-1 h / f0(xi_p)^2."""
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    D = plan.D if D is None else D
    info = info or fisher_info(plan, params, stress, mapping)
    xi, h, dens = quantile_gradient(p, params, stress, D)
    qf = quadratic_forms(info.entries[None], h)[0]
    if not np.isfinite(qf) or qf <= 0:
        raise ConditioningError(f"information matrix is singular or not positive definite for {plan}", plan=plan)
    avar = float(qf / dens**2)
    return AvarResult(avar=avar, cv=float(np.sqrt(avar) / xi), xi_p=float(xi), plan=plan)


# ---------------------------------------------------------------------------
# independent checks


def _cross_entropy(theta, pmf0, plan, params0, stress, mapping):
    """E_0[l(theta)] under the likelihood's own model at params0 (per dataset)."""
    a, b, beta = theta
    S1, S2 = _two_levels(stress)
    p_theta = ModelParams(a, b, beta)
    pmf = kappa1_pmf(plan, p_theta, stress, mapping).probs
    f, M, n = plan.f, plan.M, plan.n

    def per_increment(S):
        s0 = f * arrhenius_rate(params0, S)
        s = f * arrhenius_rate(p_theta, S)
        return ((s - 1) * (specfun.digamma(s0) + np.log(params0.beta)) - s0 * params0.beta / beta
                - specfun.log_gamma(s) - s * np.log(beta))

    e1, e2 = per_increment(S1), per_increment(S2)
    k = np.arange(1, M + 1)
    n1 = np.where(k < M, k, M)
    gamma_part = n * (n1 * e1 + (M - n1) * e2)
    with np.errstate(divide="ignore"):
        return float(np.sum(pmf0 * (np.log(pmf) + gamma_part)))


def fisher_info_numeric(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale",
                        step: float = 2e-4) -> FisherMatrix:
    """Information as the negative Hessian of the expected log-likelihood.

    Differentiates E_theta0[l(theta)] numerically at theta0 in the coordinates
    (a, b/1000, log beta); since its gradient vanishes at theta0 the Hessian
    maps back to (a, b, beta) by the diagonal Jacobian alone.  This route
    shares nothing with :func:`fisher_batch` beyond the kappa1 pmf.
    """
    pmf0 = kappa1_pmf(plan, params, stress, mapping).probs
    return _expected_hessian(plan, params, stress, mapping, pmf0, step)


def protocol_expected_information(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale",
                                  step: float = 2e-4) -> FisherMatrix:
    """Expected negative Hessian of the likelihood when kappa1 follows the
    exact threshold protocol rather than the BS approximation.

    This is what the Monte Carlo observed information estimates, since the
    simulator applies the elevation rule to gamma increments directly.
    """
    pmf0 = kappa1_pmf_exact(plan, params, stress).probs
    return _expected_hessian(plan, params, stress, mapping, pmf0, step)


def _expected_hessian(plan, params, stress, mapping, pmf0, step):
    x0 = np.array([params.a, params.b * B_SCALE, np.log(params.beta)])

    def fun(x):
        theta = (x[0], x[1] / B_SCALE, np.exp(x[2]))
        return _cross_entropy(theta, pmf0, plan, params, stress, mapping)

    hess = np.zeros((3, 3))
    eye = np.eye(3) * step
    f0 = fun(x0)
    for i in range(3):
        hess[i, i] = (fun(x0 + eye[i]) - 2 * f0 + fun(x0 - eye[i])) / step**2
        for j in range(i + 1, 3):
            hess[i, j] = hess[j, i] = (
                fun(x0 + eye[i] + eye[j]) - fun(x0 + eye[i] - eye[j])
                - fun(x0 - eye[i] + eye[j]) + fun(x0 - eye[i] - eye[j])
            ) / (4 * step**2)
    # curvature of beta = exp(x2) contributes the x2-gradient to the (2, 2) entry
    hess[2, 2] -= (fun(x0 + eye[2]) - fun(x0 - eye[2])) / (2 * step)
    jac = np.array([1.0, B_SCALE, 1.0 / params.beta])
    return FisherMatrix(-hess * jac[:, None] * jac[None, :])


MC_FLOOR = 1e-10  # relative allowance for entries whose MC variance is zero


@dataclass(frozen=True)
class FisherCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    protocol: np.ndarray
    mc_mean: np.ndarray | None
    mc_stderr: np.ndarray | None
    algebra_ok: bool
    mc_ok: bool | None

    @property
    def recommended(self) -> FisherMatrix:
        """The analytic matrix, or the numeric expectation if the algebra check failed."""
        return FisherMatrix(self.analytic if self.algebra_ok else self.numeric)

    def to_dict(self) -> dict:
        d = {
            "analytic": self.analytic.tolist(),
            "numeric_expectation": self.numeric.tolist(),
            "protocol_expectation": self.protocol.tolist(),
            "algebra_ok": self.algebra_ok,
            "substituted": not self.algebra_ok,
        }
        if self.mc_mean is not None:
            d.update(mc_mean=self.mc_mean.tolist(), mc_stderr=self.mc_stderr.tolist(), mc_ok=self.mc_ok)
        return d


def mc_agrees(analytic, mean, stderr, k: float = 3.0) -> np.ndarray:
    """Entrywise |analytic - mean| <= k stderr (plus a rounding floor)."""
    return np.abs(analytic - mean) <= k * stderr + MC_FLOOR * np.abs(analytic)


def mc_observed_information(plan: TestPlan, params: ModelParams, stress: StressSpec, reps: int = 2000,
                            seed: int = 0, mapping="scale", include_kappa=True, workers: int | None = None):
    """Mean and standard error of the observed information over simulated tests."""
    from .inference import observed_information
    from .simulate import simulate_batch

    batch = simulate_batch(plan, params, stress, reps, seed, workers=workers)
    mats = np.array([observed_information(params, obs, stress, include_kappa=include_kappa, mapping=mapping)
                     for obs in batch])
    return mats.mean(axis=0), mats.std(axis=0, ddof=1) / np.sqrt(len(mats))


def verify_fisher(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale", reps: int = 0,
                  seed: int = 0, rtol: float = 1e-5, workers: int | None = None) -> FisherCheck:
    """Compare the analytic matrix with the numeric expectation and, if reps > 0,
    with the Monte Carlo observed information (3 standard errors)."""
    analytic = fisher_info(plan, params, stress, mapping).entries
    numeric = fisher_info_numeric(plan, params, stress, mapping).entries
    scale = np.sqrt(np.outer(np.diag(analytic), np.diag(analytic)))
    algebra_ok = bool(np.all(np.abs(analytic - numeric) <= rtol * scale))
    if not algebra_ok:
        log.warning("analytic information disagrees with the numeric expectation for %s; "
                    "the numeric expectation is substituted", plan)
    mc_mean = mc_se = mc_ok = None
    if reps > 0:
        mc_mean, mc_se = mc_observed_information(plan, params, stress, reps, seed, mapping, workers=workers)
        mc_ok = bool(np.all(mc_agrees(analytic, mc_mean, mc_se)))
        if not mc_ok:
            log.warning("analytic information disagrees with the simulated observed information for %s; "
                        "compare protocol_expectation, which uses the exact kappa1 law", plan)
    protocol = protocol_expected_information(plan, params, stress, mapping).entries
    return FisherCheck(analytic, numeric, protocol, mc_mean, mc_se, algebra_ok, mc_ok)
