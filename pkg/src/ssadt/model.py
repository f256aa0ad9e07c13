"""Domain value types, the Arrhenius link, the cost model and config loading."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ConfigError, DomainError, NumericalError

KELVIN_OFFSET = 273.0


@dataclass(frozen=True)
class ModelParams:
    """theta = (a, b, beta) of the Arrhenius-linked gamma process.

    ``beta`` is the gamma *scale*; the degradation rate at temperature S is
    ``exp(a + b / (273 + S))`` per time unit.
    """

    a: float
    b: float
    beta: float

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise DomainError("a and b must be finite")
        if not (math.isfinite(self.beta) and self.beta > 0.0):
            raise DomainError("beta must be finite and positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.beta])

    @classmethod
    def from_array(cls, x) -> ModelParams:
        return cls(float(x[0]), float(x[1]), float(x[2]))

    def perturbed(self, eps) -> ModelParams:
        """((1+e1) a, (1+e2) b, (1+e3) beta)."""
        e1, e2, e3 = eps
        return ModelParams(self.a * (1 + e1), self.b * (1 + e2), self.beta * (1 + e3))


@dataclass(frozen=True)
class StressSpec:
    """Use temperature ``s0`` and the ordered test temperatures, all in Celsius."""

    s0: float
    levels: tuple[float, ...]
    unit_hours: float = 1.0

    def __post_init__(self):
        levels = tuple(float(s) for s in self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise DomainError("at least one stress level is required")
        if any(s <= -KELVIN_OFFSET for s in (self.s0,) + levels):
            raise DomainError("temperatures must exceed -273 C")
        if self.s0 >= levels[0]:
            raise DomainError("use stress s0 must be below the first test level")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise DomainError("stress levels must be strictly increasing")
        if not self.unit_hours > 0:
            raise DomainError("unit_hours must be positive")

    @property
    def m(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class TestPlan:
    """Decision variables (n, f, M, omega1) plus the critical level D."""

    __test__ = False  # keep pytest from collecting this class

    n: int
    f: int
    M: int
    omega1: float
    D: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError("n must be a positive integer")
        if int(self.f) != self.f or self.f < 1:
            raise DomainError("f must be a positive integer")
        if int(self.M) != self.M or self.M < 2:
            raise DomainError("M must be an integer >= 2")
        if not self.D > 0:
            raise DomainError("D must be positive")
        if not 0.0 < self.omega1 < self.D:
            raise DomainError("omega1 must lie in (0, D)")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "f", int(self.f))
        object.__setattr__(self, "M", int(self.M))

    @property
    def duration(self) -> int:
        """Test length M * f in time units."""
        return self.f * self.M


@dataclass(frozen=True)
class CostModel:
    c_op: float
    c_mea: float
    c_it: float
    budget: float

    def __post_init__(self):
        if min(self.c_op, self.c_mea, self.c_it) < 0:
            raise DomainError("unit costs must be nonnegative")
        if not self.budget > 0:
            raise DomainError("budget must be positive")


def arrhenius_rate(params: ModelParams, temp_c):
    """alpha(S) = exp(a + b / (273 + S)); accepts scalar or array temperatures."""
    t = np.asarray(temp_c, dtype=float)
    if np.any(t <= -KELVIN_OFFSET):
        raise DomainError("temperature must exceed -273 C")
    with np.errstate(over="ignore"):
        rate = np.exp(params.a + params.b / (KELVIN_OFFSET + t))
    if not np.all(np.isfinite(rate)):
        raise NumericalError("Arrhenius rate overflowed")
    return float(rate) if np.ndim(temp_c) == 0 else rate


def total_cost(plan: TestPlan, costs: CostModel) -> float:
    """TC = C_op f M + C_mea n M + C_it n."""
    return cost_of(plan.n, plan.f, plan.M, costs)


def cost_of(n, f, M, costs: CostModel):
    return costs.c_op * f * M + costs.c_mea * n * M + costs.c_it * n


# ---------------------------------------------------------------------------
# JSON configuration

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["params", "stress", "plan", "costs"],
    "properties": {
        "params": {
            "type": "object",
            "additionalProperties": False,
            "required": ["a", "b", "beta"],
            "properties": {
                "a": {"type": "number"},
                "b": {"type": "number"},
                "beta": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "stress": {
            "type": "object",
            "additionalProperties": False,
            "required": ["s0", "levels"],
            "properties": {
                "s0": {"type": "number"},
                "levels": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                "unit_hours": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "required": ["D"],
            "properties": {"D": {"type": "number", "exclusiveMinimum": 0}},
        },
        "costs": {
            "type": "object",
            "additionalProperties": False,
            "required": ["c_op", "c_mea", "c_it", "budget"],
            "properties": {
                "c_op": {"type": "number", "minimum": 0},
                "c_mea": {"type": "number", "minimum": 0},
                "c_it": {"type": "number", "minimum": 0},
                "budget": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "p": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
    },
}


@dataclass(frozen=True)
class Config:
    params: ModelParams
    stress: StressSpec
    D: float
    costs: CostModel
    p: float = 0.5
    raw: dict = field(default_factory=dict, compare=False, repr=False)


def parse_config(data: dict) -> Config:
    try:
        jsonschema.validate(data, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    try:
        return Config(
            params=ModelParams(**data["params"]),
            stress=StressSpec(**data["stress"]),
            D=float(data["plan"]["D"]),
            costs=CostModel(**data["costs"]),
            p=float(data.get("p", 0.5)),
            raw=data,
        )
    except DomainError as exc:
        raise ConfigError(f"invalid config: {exc}") from None


def load_config(path) -> Config:
    """Read and validate a JSON config; malformed JSON reports line and column."""
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data)


def case_study_config() -> Config:
    """The carbon-film resistor case study bundled with the package."""
    path = Path(__file__).with_name("data") / "case_study.json"
    return load_config(path)
