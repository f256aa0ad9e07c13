"""Use-condition lifetime law, its quantiles and the delta-method gradient."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import specfun
from .errors import DomainError
from .model import KELVIN_OFFSET, ModelParams, StressSpec, arrhenius_rate


@dataclass(frozen=True)
class LifetimeBs:
    """BS lifetime law at the use stress: shape alpha_star, scale (median) beta_star."""

    alpha_star: float
    beta_star: float

    def __post_init__(self):
        if not (self.alpha_star > 0 and self.beta_star > 0):
            raise DomainError("lifetime BS parameters must be positive")

    @classmethod
    def from_model(cls, params: ModelParams, stress: StressSpec, D: float) -> LifetimeBs:
        alpha0 = arrhenius_rate(params, stress.s0)
        return cls(math.sqrt(params.beta / D), D / (params.beta * alpha0))


def _check_t(t):
    arr = np.asarray(t, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("time must be positive")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _arg(t, lb):
    r = np.sqrt(t / lb.beta_star)
    return r, (r - 1.0 / r) / lb.alpha_star


def lifetime_cdf(t, lb: LifetimeBs):
    arr = _check_t(t)
    _, z = _arg(arr, lb)
    return _out(specfun.norm_cdf(z), t)


def lifetime_pdf(t, lb: LifetimeBs):
    arr = _check_t(t)
    _, z = _arg(arr, lb)
    dens = (1.0 + lb.beta_star / arr) / (2.0 * lb.alpha_star * np.sqrt(arr * lb.beta_star)) * specfun.norm_pdf(z)
    return _out(dens, t)


def lifetime_quantile(p, lb: LifetimeBs):
    """Closed-form BS quantile beta* (a z/2 + sqrt((a z/2)^2 + 1))^2."""
    z = specfun.norm_quantile(p)
    half = 0.5 * lb.alpha_star * np.asarray(z)
    # stable for both signs of z: w = half + sqrt(half^2 + 1) = 1 / (sqrt(half^2 + 1) - half)
    root = np.sqrt(half * half + 1.0)
    w = np.where(half >= 0, half + root, 1.0 / (root - half))
    return _out(lb.beta_star * w * w, p)


def h_vector(t: float, params: ModelParams, stress: StressSpec, D: float) -> np.ndarray:
    """Gradient (dF0/da, dF0/db, dF0/dbeta) of the lifetime cdf at time t.

    F0 depends on (a, b) only through alpha0 = exp(a + b / (273 + S0)), hence
    dF0/db = dF0/da / (273 + S0).
    """
    if not t > 0:
        raise DomainError("time must be positive")
    lb = LifetimeBs.from_model(params, stress, D)
    r, z = _arg(t, lb)
    phi = specfun.norm_pdf(z)
    d_a = (r + 1.0 / r) * phi / (2.0 * lb.alpha_star)
    d_b = d_a / (KELVIN_OFFSET + stress.s0)
    d_beta = phi / (r * params.beta * lb.alpha_star)
    return np.array([d_a, d_b, d_beta])
