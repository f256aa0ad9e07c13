import math

import numpy as np
import pytest

from ssadt.errors import DomainError
from ssadt.lifetime import LifetimeBs, h_vector, lifetime_cdf, lifetime_pdf, lifetime_quantile
from ssadt.model import ModelParams

TABLE1_XI = {0.1: 292795.6, 0.2: 307152.4, 0.3: 317950.3, 0.4: 327481.6, 0.5: 336650.3,
             0.6: 346075.7, 0.7: 356450.0, 0.8: 368981.1, 0.9: 387073.5}


def test_lifetime_parameters(theta, stress):
    lb = LifetimeBs.from_model(theta, stress, 5.0)
    alpha0 = math.exp(4.11 - 4006.46 / 323.0)
    assert lb.alpha_star == pytest.approx(math.sqrt(0.0594 / 5.0))
    assert lb.beta_star == pytest.approx(5.0 / (0.0594 * alpha0))


def test_median_is_scale(theta, stress):
    lb = LifetimeBs.from_model(theta, stress, 5.0)
    assert lifetime_quantile(0.5, lb) == pytest.approx(lb.beta_star, rel=1e-14)


@pytest.mark.parametrize("p,xi", sorted(TABLE1_XI.items()))
def test_quantiles_reproduce_table(theta, stress, p, xi):
    lb = LifetimeBs.from_model(theta, stress, 5.0)
    assert lifetime_quantile(p, lb) == pytest.approx(xi, rel=1e-3)


def test_quantile_inverts_cdf(theta, stress):
    lb = LifetimeBs.from_model(theta, stress, 5.0)
    p = np.array([1e-9, 1e-4, 0.01, 0.3, 0.77, 0.999, 1 - 1e-9])
    assert np.allclose(lifetime_cdf(lifetime_quantile(p, lb), lb), p, rtol=1e-9)


def test_pdf_vs_finite_difference(theta, stress):
    lb = LifetimeBs.from_model(theta, stress, 5.0)
    for t in (2.5e5, 3.3e5, 4.2e5):
        h = 1e-6 * t
        fd = (lifetime_cdf(t + h, lb) - lifetime_cdf(t - h, lb)) / (2 * h)
        assert lifetime_pdf(t, lb) == pytest.approx(fd, rel=1e-7)


def test_h_vector_vs_finite_difference(stress, rng):
    # 20 (t, theta) points around the case-study values
    for _ in range(20):
        th = ModelParams(4.11 * rng.uniform(0.9, 1.1), -4006.46 * rng.uniform(0.97, 1.03),
                         0.0594 * rng.uniform(0.8, 1.2))
        lb = LifetimeBs.from_model(th, stress, 5.0)
        t = lifetime_quantile(rng.uniform(0.05, 0.95), lb)
        h = h_vector(t, th, stress, 5.0)
        steps = np.array([1e-6, 1e-3, 1e-8])
        for i in range(3):
            e = np.zeros(3)
            e[i] = steps[i]
            up = lifetime_cdf(t, LifetimeBs.from_model(ModelParams(*(th.as_array() + e)), stress, 5.0))
            dn = lifetime_cdf(t, LifetimeBs.from_model(ModelParams(*(th.as_array() - e)), stress, 5.0))
            assert h[i] == pytest.approx((up - dn) / (2 * steps[i]), rel=1e-6)


def test_domain_errors(theta, stress):
    lb = LifetimeBs.from_model(theta, stress, 5.0)
    with pytest.raises(DomainError):
        lifetime_cdf(0.0, lb)
    with pytest.raises(DomainError):
        lifetime_quantile(1.0, lb)
    with pytest.raises(DomainError):
        h_vector(-1.0, theta, stress, 5.0)
