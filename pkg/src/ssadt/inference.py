"""Log-likelihood of theta = (a, b, beta) for one SSADT dataset and its MLE."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DomainError, NumericalError, OptimizationFailure
from .firstpassage import bs_argument, bs_coefficients
from .model import KELVIN_OFFSET, ModelParams, StressSpec

B_SCALE = 1e-3
N_STARTS = 5
JITTER = 0.05


@dataclass(frozen=True)
class FitResult:
    theta_hat: ModelParams
    loglik: float
    converged: bool
    iterations: int
    gradient_norm: float

    def to_dict(self) -> dict:
        return {
            "theta_hat": {"a": self.theta_hat.a, "b": self.theta_hat.b, "beta": self.theta_hat.beta},
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


class _Stats:
    """Sufficient statistics of an ObservationSet split by stress level."""

    def __init__(self, obs, stress: StressSpec):
        inc = obs.increments
        if np.any(~(inc > 0)):
            raise DomainError("increments must be positive")
        if stress.m != 2:
            raise DomainError("the likelihood is implemented for two test stresses")
        plan = obs.plan
        pre = np.arange(plan.M) < obs.kappa1
        logs = np.log(inc)
        self.count = np.array([plan.n * pre.sum(), plan.n * (~pre).sum()], dtype=float)
        self.sum_log = np.array([logs[:, pre].sum(), logs[:, ~pre].sum()])
        self.sum = np.array([inc[:, pre].sum(), inc[:, ~pre].sum()])
        self.inv_T = 1.0 / (KELVIN_OFFSET + np.array(stress.levels))
        self.plan = plan
        self.kappa1 = obs.kappa1


def _log_kappa_prob(kappa1, plan, alpha1, beta, mapping):
    delta, gam = bs_coefficients(alpha1, beta, plan.omega1, mapping)

    def log_sf(t):
        return plan.n * special.log_ndtr(-bs_argument(t, delta, gam))

    k, f, M = kappa1, plan.f, plan.M
    if k == M:
        return log_sf((M - 1) * f)
    hi = log_sf(k * f)
    if k == 1:
        return math.log(-math.expm1(hi)) if hi < 0 else -math.inf
    lo = log_sf((k - 1) * f)
    # P = S((k-1)f) - S(kf) = S((k-1)f) (1 - exp(hi - lo))
    diff = hi - lo
    return lo + math.log(-math.expm1(diff)) if diff < 0 else -math.inf


def _loglik(a, b, beta, st: _Stats, include_kappa, mapping):
    alphas = np.exp(a + b * st.inv_T)
    shapes = st.plan.f * alphas
    lb = math.log(beta)
    ll = float(np.sum((shapes - 1.0) * st.sum_log - st.sum / beta - st.count * (special.gammaln(shapes) + shapes * lb)))
    if include_kappa:
        ll += _log_kappa_prob(st.kappa1, st.plan, alphas[0], beta, mapping)
    return ll


def log_likelihood(theta: ModelParams, obs, stress: StressSpec, include_kappa=True, mapping="scale") -> float:
    """log P(kappa1) + sum of gamma log densities of the increments.

    Increments before the elevation index use shape f * alpha1, the rest
    f * alpha2; the gamma scale is beta.
    """
    st = _Stats(obs, stress)
    with np.errstate(all="ignore"):
        ll = _loglik(theta.a, theta.b, theta.beta, st, include_kappa, mapping)
    if not math.isfinite(ll):
        raise NumericalError("log-likelihood is not finite")
    return ll


def _to_x(theta: ModelParams) -> np.ndarray:
    return np.array([theta.a, theta.b * B_SCALE, math.log(theta.beta)])


def _from_x(x) -> ModelParams:
    return ModelParams(float(x[0]), float(x[1]) / B_SCALE, float(math.exp(x[2])))


def _objective(st, include_kappa, mapping):
    def neg(x):
        if not np.all(np.isfinite(x)) or abs(x[2]) > 700:
            return np.inf
        with np.errstate(all="ignore"):
            v = _loglik(x[0], x[1] / B_SCALE, math.exp(x[2]), st, include_kappa, mapping)
        return -v if math.isfinite(v) else np.inf

    return neg


def _kappa_logprob(st, mapping):
    def lp(x):
        with np.errstate(all="ignore"):
            alpha1 = math.exp(x[0] + x[1] / B_SCALE * st.inv_T[0])
            return _log_kappa_prob(st.kappa1, st.plan, alpha1, math.exp(x[2]), mapping)

    return lp


def _gradient(st, include_kappa, mapping, h=1e-6):
    """Gradient of the log-likelihood in (a, b/1000, log beta).

    Exact for the gamma part; the kappa1 term, a smooth scalar of order one,
    is differentiated by central differences.
    """
    lp = _kappa_logprob(st, mapping)

    def grad(x):
        with np.errstate(all="ignore"):
            beta = np.exp(x[2])
            shapes = st.plan.f * np.exp(x[0] + x[1] / B_SCALE * st.inv_T)
            dl_ds = (st.sum_log - st.count * (special.digamma(shapes) + x[2])) * shapes
            g = np.array([dl_ds.sum(), np.dot(dl_ds, st.inv_T) / B_SCALE, np.sum(st.sum / beta - st.count * shapes)])
        if include_kappa:
            g = g + _central_grad(lp, x, h)
        return g

    return grad


def _central_grad(fun, x, h=1e-6):
    g = np.empty(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _newton_polish(grad, x, gtol, steps=6, h=1e-5):
    """Newton steps on the gradient alone.

    Near the optimum of a large dataset the function value no longer resolves
    the remaining decrease, which stalls line searches; the gradient still does.
    Steps are kept only while they shrink the gradient norm.
    """
    g = grad(x)
    for _ in range(steps):
        gn = np.linalg.norm(g)
        if not np.isfinite(gn) or gn <= 0.1 * gtol:
            break
        hess = np.empty((3, 3))
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            hess[:, i] = (grad(x + e) - grad(x - e)) / (2 * h)
        try:
            step = np.linalg.solve(0.5 * (hess + hess.T), -g)
        except np.linalg.LinAlgError:
            break
        x_new = x + step
        g_new = grad(x_new)
        if not np.linalg.norm(g_new) < gn:
            break
        x, g = x_new, g_new
    return x


def fit_mle(obs, stress: StressSpec, init: ModelParams, include_kappa=True, mapping="scale",
            n_starts: int = N_STARTS, seed: int = 0, gtol: float = 1e-5) -> FitResult:
    """Maximize the log-likelihood over (a, b/1000, log beta).

    Each start runs Nelder-Mead, then BFGS, then a few Newton steps on the
    gradient; the best converged start is returned.
    """
    st = _Stats(obs, stress)
    neg = _objective(st, include_kappa, mapping)
    grad = _gradient(st, include_kappa, mapping)
    x0 = _to_x(init)
    f0 = neg(x0)
    rng = np.random.default_rng([int(seed), int(obs.rep), 0x5AD7])
    starts = [x0] + [x0 + JITTER * rng.standard_normal(3) for _ in range(n_starts - 1)]
    fatol = 1e-10 * max(1.0, abs(f0)) if math.isfinite(f0) else 1e-10
    best = None
    total_iter = 0
    for start in starts:
        if not math.isfinite(neg(start)):
            continue
        nm = optimize.minimize(neg, start, method="Nelder-Mead",
                               options={"xatol": 1e-8, "fatol": fatol, "maxfev": 5000})
        total_iter += nm.nit
        bf = optimize.minimize(neg, nm.x, method="BFGS", jac=lambda x: -grad(x),
                               options={"gtol": gtol * 0.1, "maxiter": 200})
        total_iter += bf.nit
        x = bf.x if bf.fun <= nm.fun else nm.x
        x = _newton_polish(grad, x, gtol)
        fx = neg(x)
        gnorm = float(np.linalg.norm(grad(x)))
        cand = (gnorm <= gtol and math.isfinite(gnorm), -fx, x, gnorm)
        if best is None or (cand[0], cand[1]) > (best[0], best[1]):
            best = cand
    if best is None:
        raise OptimizationFailure("no finite starting point", best=None)
    ok, ll, x, gnorm = best
    result = FitResult(_from_x(x), float(ll), bool(ok), total_iter, gnorm)
    if not ok:
        raise OptimizationFailure("no start reached the gradient tolerance", best=result)
    return result


def score(theta: ModelParams, obs, stress: StressSpec, include_kappa=True, mapping="scale") -> np.ndarray:
    """Gradient of the log-likelihood in (a, b, beta)."""
    st = _Stats(obs, stress)
    g = _gradient(st, include_kappa, mapping, h=1e-5)(_to_x(theta))
    return g * np.array([1.0, B_SCALE, 1.0 / theta.beta])


def _gamma_hessian(theta: ModelParams, st: _Stats) -> np.ndarray:
    """Exact Hessian in (a, b, beta) of the gamma-increment part of the log-likelihood."""
    beta = theta.beta
    shapes = st.plan.f * np.exp(theta.a + theta.b * st.inv_T)
    dl_ds = st.sum_log - st.count * (special.digamma(shapes) + math.log(beta))
    d2l_ds2 = -st.count * special.polygamma(1, shapes)
    w = np.stack([np.ones(2), st.inv_T])  # d log(shape) / d(a, b)
    hess = np.zeros((3, 3))
    curv = d2l_ds2 * shapes**2 + dl_ds * shapes
    hess[:2, :2] = (w * curv) @ w.T
    hess[:2, 2] = hess[2, :2] = -(w * st.count * shapes).sum(axis=1) / beta
    hess[2, 2] = np.sum(-2.0 * st.sum / beta**3 + st.count * shapes / beta**2)
    return hess


def observed_information(theta: ModelParams, obs, stress: StressSpec, include_kappa=True, mapping="scale",
                         step: float = 5e-4) -> np.ndarray:
    """Negative Hessian of the log-likelihood in (a, b, beta).

    The gamma part is differentiated exactly; the kappa1 term by central
    differences in (a, b/1000, log beta).
    """
    st = _Stats(obs, stress)
    hess = _gamma_hessian(theta, st)
    if include_kappa:
        x0 = _to_x(theta)
        lp = _kappa_logprob(st, mapping)

        hx = np.zeros((3, 3))
        eye = np.eye(3) * step
        f0 = lp(x0)
        for i in range(3):
            hx[i, i] = (lp(x0 + eye[i]) - 2 * f0 + lp(x0 - eye[i])) / step**2
            for j in range(i + 1, 3):
                hx[i, j] = hx[j, i] = (
                    lp(x0 + eye[i] + eye[j]) - lp(x0 + eye[i] - eye[j])
                    - lp(x0 - eye[i] + eye[j]) + lp(x0 - eye[i] - eye[j])
                ) / (4 * step**2)
        # beta = exp(x2): remove the first-order term before mapping back
        hx[2, 2] -= (lp(x0 + eye[2]) - lp(x0 - eye[2])) / (2 * step)
        jac = np.array([1.0, B_SCALE, 1.0 / theta.beta])
        hess = hess + hx * jac[:, None] * jac[None, :]
    if not np.all(np.isfinite(hess)):
        raise NumericalError("observed information is not finite")
    return -hess
