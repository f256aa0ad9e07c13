import json
import math

import numpy as np
import pytest

from ssadt.errors import ConfigError, DomainError, NumericalError
from ssadt.model import (CostModel, ModelParams, StressSpec, TestPlan, arrhenius_rate, case_study_config,
                         load_config, parse_config, total_cost)


def test_case_study_values(cfg):
    assert cfg.params == ModelParams(4.11, -4006.46, 0.0594)
    assert cfg.stress.s0 == 50 and cfg.stress.levels == (83.0, 133.0)
    assert cfg.D == 5
    assert cfg.costs == CostModel(1.9, 1.3, 53, 1500)


def test_arrhenius_rate(theta):
    assert arrhenius_rate(theta, 83.0) == pytest.approx(math.exp(4.11 - 4006.46 / 356.0), rel=1e-15)
    rates = arrhenius_rate(theta, np.array([50.0, 83.0, 133.0]))
    assert np.all(np.diff(rates) > 0)


def test_arrhenius_overflow_and_domain():
    with pytest.raises(NumericalError):
        arrhenius_rate(ModelParams(800.0, 0.0, 1.0), 50.0)
    with pytest.raises(DomainError):
        arrhenius_rate(ModelParams(0.0, 0.0, 1.0), -300.0)


def test_total_cost_case_study(cfg):
    tc = total_cost(TestPlan(13, 52, 7, 0.0502, 5), cfg.costs)
    assert tc == pytest.approx(1498.9, abs=1e-9)
    assert tc <= cfg.costs.budget


@pytest.mark.parametrize("kw", [
    dict(n=0, f=1, M=2, omega1=0.1, D=5), dict(n=1, f=0, M=2, omega1=0.1, D=5),
    dict(n=1, f=1, M=1, omega1=0.1, D=5), dict(n=1, f=1, M=2, omega1=5.0, D=5),
    dict(n=1, f=1, M=2, omega1=0.0, D=5), dict(n=1.5, f=1, M=2, omega1=0.1, D=5),
])
def test_plan_validation(kw):
    with pytest.raises(DomainError):
        TestPlan(**kw)


def test_param_and_stress_validation():
    with pytest.raises(DomainError):
        ModelParams(1.0, 1.0, 0.0)
    with pytest.raises(DomainError):
        StressSpec(90.0, (83.0, 133.0))
    with pytest.raises(DomainError):
        StressSpec(50.0, (133.0, 83.0))


def test_perturbed(theta):
    p = theta.perturbed((0.1, -0.2, 0.5))
    assert p.a == pytest.approx(4.521) and p.b == pytest.approx(-3205.168) and p.beta == pytest.approx(0.0891)


def test_config_schema_rejects_unknown_and_missing(cfg):
    raw = json.loads(json.dumps(cfg.raw))
    raw["extra"] = 1
    with pytest.raises(ConfigError):
        parse_config(raw)
    raw = json.loads(json.dumps(cfg.raw))
    del raw["costs"]["budget"]
    with pytest.raises(ConfigError, match="costs"):
        parse_config(raw)
    raw = json.loads(json.dumps(cfg.raw))
    raw["params"]["beta"] = -1
    with pytest.raises(ConfigError):
        parse_config(raw)


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "params": {"a": 1,}\n}')
    with pytest.raises(ConfigError, match=r"line 2, column \d+"):
        load_config(path)


def test_round_trip_config(tmp_path, cfg):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.raw))
    again = load_config(path)
    assert again.params == cfg.params and again.costs == cfg.costs and again.stress == cfg.stress
