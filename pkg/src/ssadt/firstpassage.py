"""Birnbaum-Saunders approximations for threshold-crossing times.

A gamma process with shape rate alpha and scale beta reaches a level
increment d_omega at a time that is approximately BS(delta, gamma).  Two
parameter mappings are supported:

``scale`` (default)
    delta = sqrt(beta / d_omega), gamma = d_omega / (beta * alpha); this is the
    mapping under which the lifetime cdf of the ``lifetime`` module is a BS law.
``rate``
    delta = 1 / sqrt(beta * d_omega), gamma = beta * d_omega / alpha, i.e. beta
    read as a gamma *rate*.  Kept for diagnostics only.

The elevation index kappa1 is the measurement index at which the minimum
crossing time over the n units is first detected, capped at M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import specfun
from .errors import DomainError
from .model import ModelParams, StressSpec, TestPlan, arrhenius_rate

MAPPINGS = ("scale", "rate")


@dataclass(frozen=True)
class BsParams:
    delta: float
    gamma_scale: float

    def __post_init__(self):
        if not (self.delta > 0 and self.gamma_scale > 0):
            raise DomainError("BS parameters must be positive")


@dataclass(frozen=True)
class KappaPmf:
    m_measurements: int
    probs: np.ndarray

    def __getitem__(self, k):
        """P(kappa1 = k) for k = 1..M."""
        if not 1 <= k <= self.m_measurements:
            raise IndexError(k)
        return float(self.probs[k - 1])

    def mean(self) -> float:
        return float(np.dot(np.arange(1, self.m_measurements + 1), self.probs))


def bs_coefficients(alpha, beta, d_omega, mapping="scale"):
    """(delta, gamma) as arrays; the vectorized core of :func:`bs_from_model`."""
    if mapping == "scale":
        return np.sqrt(beta / d_omega), d_omega / (beta * alpha)
    if mapping == "rate":
        return 1.0 / np.sqrt(beta * d_omega), beta * d_omega / alpha
    raise DomainError(f"unknown BS mapping {mapping!r}; expected one of {MAPPINGS}")


def bs_from_model(params: ModelParams, temp_c: float, d_omega: float, mapping="scale") -> BsParams:
    if not d_omega > 0:
        raise DomainError("d_omega must be positive")
    alpha = arrhenius_rate(params, temp_c)
    delta, gam = bs_coefficients(alpha, params.beta, d_omega, mapping)
    return BsParams(float(delta), float(gam))


def bs_plan(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale") -> BsParams:
    """BS law of a single unit's crossing of omega1 under the first test stress."""
    return bs_from_model(params, stress.levels[0], plan.omega1, mapping)


def _check_t(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("time must be positive")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def bs_argument(t, delta, gamma_scale):
    """c1(t) = (sqrt(t/gamma) - sqrt(gamma/t)) / delta (no domain check)."""
    r = np.sqrt(t / gamma_scale)
    return (r - 1.0 / r) / delta


def bs_cdf(t, bs: BsParams):
    arr = _check_t(t)
    return _out(special.ndtr(bs_argument(arr, bs.delta, bs.gamma_scale)), t)


def bs_sf(t, bs: BsParams):
    arr = _check_t(t)
    return _out(special.ndtr(-bs_argument(arr, bs.delta, bs.gamma_scale)), t)


def bs_pdf(t, bs: BsParams):
    arr = _check_t(t)
    r = np.sqrt(arr / bs.gamma_scale)
    c = (r - 1.0 / r) / bs.delta
    dc_dt = (r + 1.0 / r) / (2.0 * bs.delta * arr)
    return _out(specfun.norm_pdf(c) * dc_dt, t)


def joint_passage_pdf(times, steps) -> float:
    """Per-unit joint density of the successive crossing times t_1 < ... < t_{m-1}.

    ``steps[k]`` is the BS law of the k-th waiting time t_k - t_{k-1}.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) != len(steps) or len(t) == 0:
        raise DomainError("need one BS step per crossing time")
    gaps = np.diff(np.concatenate(([0.0], t)))
    if np.any(gaps <= 0):
        raise DomainError("crossing times must be positive and strictly increasing")
    return float(np.prod([bs_pdf(g, s) for g, s in zip(gaps, steps)]))


def log_min_survival(t, n, delta, gamma_scale):
    """log P(min of n iid BS crossing times > t), array friendly."""
    return n * special.log_ndtr(-bs_argument(t, delta, gamma_scale))


def min_crossing_cdf(t, n: int, bs: BsParams):
    """G(t) = 1 - (1 - Phi(c1(t)))**n, computed without cancellation."""
    if n < 1:
        raise DomainError("n must be >= 1")
    arr = _check_t(t)
    return _out(-np.expm1(log_min_survival(arr, n, bs.delta, bs.gamma_scale)), t)


def min_crossing_sf(t, n: int, bs: BsParams):
    if n < 1:
        raise DomainError("n must be >= 1")
    arr = _check_t(t)
    return _out(np.exp(log_min_survival(arr, n, bs.delta, bs.gamma_scale)), t)


def cell_probs(G, S):
    """Cell probabilities of a discretized cdf given G and S = 1 - G at the inner cuts.

    G, S have shape (..., M-1); the result has shape (..., M).  Differences are
    taken on whichever of G or S is smaller so that tiny cells keep precision.
    """
    G = np.asarray(G, dtype=float)
    S = np.asarray(S, dtype=float)
    zeros = np.zeros(G.shape[:-1] + (1,))
    ones = np.ones_like(zeros)
    Gx = np.concatenate((zeros, G), axis=-1)
    Sx = np.concatenate((ones, S), axis=-1)
    from_g = np.diff(Gx, axis=-1)
    from_s = -np.diff(Sx, axis=-1)
    inner = np.where(Gx[..., 1:] < 0.5, from_g, from_s)
    return np.concatenate((inner, S[..., -1:]), axis=-1)


def kappa1_pmf(plan: TestPlan, params: ModelParams, stress: StressSpec, mapping="scale") -> KappaPmf:
    """P(kappa1 = k), k = 1..M, from the BS law of the minimum crossing time."""
    bs = bs_plan(plan, params, stress, mapping)
    t = plan.f * np.arange(1, plan.M, dtype=float)
    log_s = log_min_survival(t, plan.n, bs.delta, bs.gamma_scale)
    probs = cell_probs(-np.expm1(log_s), np.exp(log_s))
    return KappaPmf(plan.M, probs)


def exact_crossing_cdf(t, alpha, beta, d_omega):
    """Exact P(L(t) >= d_omega) for a gamma process Ga(alpha t, beta) started at 0."""
    return special.gammaincc(alpha * np.asarray(t, dtype=float), d_omega / beta)


def kappa1_pmf_exact(plan: TestPlan, params: ModelParams, stress: StressSpec) -> KappaPmf:
    """kappa1 pmf of the discrete-inspection protocol without the BS approximation.

    Before elevation every unit degrades under the first stress, so
    P(kappa1 <= k) = 1 - P(Ga(alpha1 k f, beta) < omega1)**n for k < M.
    """
    alpha1 = arrhenius_rate(params, stress.levels[0])
    t = plan.f * np.arange(1, plan.M, dtype=float)
    below = special.gammainc(alpha1 * t, plan.omega1 / params.beta)
    log_s = plan.n * np.log(below)
    probs = cell_probs(-np.expm1(log_s), np.exp(log_s))
    return KappaPmf(plan.M, probs)


# ---------------------------------------------------------------------------
# three stress levels (two elevation thresholds)


JOINT_FORMS = ("convolution", "product")


def _check_form(form):
    if form not in JOINT_FORMS:
        raise DomainError(f"unknown joint survival form {form!r}; expected one of {JOINT_FORMS}")


def unit_joint_survival_m3(t1, t2, steps, form="product"):
    """Per-unit P(tau_1 > t1, tau_2 > t2) for tau_2 = tau_1 + gap, gap independent.

    ``product`` is the factorised approximation (1 - F1(t1)) (1 - F2(t2 - t1)).
    It is exact for the event {tau_1 > t1, gap > t2 - t1} but is not a survival
    function of (tau_1, tau_2): it increases in t1 when t2 is held fixed.
    ``convolution`` integrates over tau_1 and is a proper joint survival:
    S1(t2) + int_{t1}^{t2} f1(u) S2(t2 - u) du for t2 > t1.

    For t2 <= t1 both forms reduce to 1 - F1(t1) because tau_2 > tau_1.
    """
    _check_form(form)
    s1, s2 = steps
    t1, t2 = np.broadcast_arrays(np.asarray(t1, dtype=float), np.asarray(t2, dtype=float))
    first = special.ndtr(-bs_argument(np.where(t1 > 0, t1, 1.0), s1.delta, s1.gamma_scale))
    first = np.where(t1 > 0, first, 1.0)
    gap = t2 - t1
    if form == "product":
        second = special.ndtr(-bs_argument(np.where(gap > 0, gap, 1.0), s2.delta, s2.gamma_scale))
        return first * np.where(gap > 0, second, 1.0)
    out = np.atleast_1d(np.array(first, dtype=float))
    flat1, flat2 = np.atleast_1d(t1), np.atleast_1d(t2)
    for idx in zip(*np.nonzero(np.atleast_1d(gap) > 0)):
        out[idx] = _convolved_survival(float(flat1[idx]), float(flat2[idx]), s1, s2)
    return out.reshape(np.shape(t1))[()]


def _convolved_survival(t1, t2, s1, s2):
    def integrand(u):
        c1 = bs_argument(u, s1.delta, s1.gamma_scale)
        dens = special.ndtr(-bs_argument(t2 - u, s2.delta, s2.gamma_scale)) if u < t2 else 1.0
        return math.exp(-0.5 * c1 * c1) / math.sqrt(2 * math.pi) * (1 / math.sqrt(u * s1.gamma_scale)
                                                                   + math.sqrt(s1.gamma_scale / u) / u) \
            / (2 * s1.delta) * dens

    lo = max(t1, 0.0)
    pts = [x for x in (s1.gamma_scale, t2 - s2.gamma_scale) if lo < x < t2]
    mass = 0.0
    if lo < t2:
        mass, _ = integrate.quad(integrand, lo if lo > 0 else 0.0, t2, points=pts or None, limit=200,
                                 epsabs=1e-14, epsrel=1e-11)
    return float(special.ndtr(-bs_argument(t2, s1.delta, s1.gamma_scale)) + mass)


def joint_min_survival_m3(t1, t2, n: int, steps, form="product"):
    """P(tau_(1),1 > t1, tau_(1),2 > t2) for the minima over n units."""
    if n < 1:
        raise DomainError("n must be >= 1")
    if not 0 < t1 < t2:
        raise DomainError("joint survival requires 0 < t1 < t2")
    return float(unit_joint_survival_m3(t1, t2, steps, form) ** n)


def _m3_steps(params, stress, omega1, omega2, mapping):
    if stress.m < 2:
        raise DomainError("three-level plans need at least two test stresses")
    if not 0 < omega1 < omega2:
        raise DomainError("thresholds must satisfy 0 < omega1 < omega2")
    return (
        bs_from_model(params, stress.levels[0], omega1, mapping),
        bs_from_model(params, stress.levels[1], omega2 - omega1, mapping),
    )


def kappa_joint_table_m3(n, f, M, omega1, omega2, params, stress, mapping="scale",
                         form="convolution") -> np.ndarray:
    """Full M x M table P(kappa1 = k1, kappa2 = k2) (row k1-1, column k2-1).

    Rectangle probabilities by inclusion-exclusion on the joint survival of the
    minima; cut points are kf for k < M and +inf for the capped cell M.  With
    ``form="product"`` some cells can be negative (see ``unit_joint_survival_m3``).
    """
    _check_form(form)
    steps = _m3_steps(params, stress, omega1, omega2, mapping)
    cuts = np.concatenate(([0.0], f * np.arange(1, M, dtype=float), [np.inf]))
    x1, x2 = np.meshgrid(cuts, cuts, indexing="ij")
    inf = np.isinf(x1) | np.isinf(x2)
    surv = unit_joint_survival_m3(np.where(inf, 1.0, x1), np.where(inf, 1.0, x2), steps, form) ** n
    surv = np.where(inf, 0.0, surv)
    table = surv[:-1, :-1] - surv[1:, :-1] - surv[:-1, 1:] + surv[1:, 1:]
    return np.triu(table)


def kappa_joint_pmf_m3(n, f, M, omega1, omega2, params, stress, k1, k2, mapping="scale",
                       form="convolution") -> float:
    if not 1 <= k1 <= k2 <= M:
        raise DomainError("need 1 <= k1 <= k2 <= M")
    return float(kappa_joint_table_m3(n, f, M, omega1, omega2, params, stress, mapping, form)[k1 - 1, k2 - 1])
