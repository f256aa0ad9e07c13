"""Simulation of SSADT datasets under discrete, threshold-triggered elevation.

Every unit of every replication owns a counter-based Philox stream keyed on
the batch seed, with the (replication, unit) pair placed in the high words of
the counter.  Streams therefore never overlap and any replication can be
regenerated on its own.

Each unit stream draws M increments at the first-stress shape followed by M
increments at the second-stress shape; the observed increment in interval k
is taken from the first set for k < kappa1 and from the second otherwise.
Because kappa1 depends only on increments before it, this coupling has the
law of the sequential protocol.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._files import atomic_write
from .errors import DomainError, UnsupportedConfigurationError
from .model import ModelParams, StressSpec, TestPlan, arrhenius_rate

_TINY = np.finfo(float).tiny
CSV_COLUMNS = ("unit", "k", "time", "stress_c", "increment", "cum_level", "kappa1")


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, dtype=np.uint64)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by (seed, stream_id)."""

    seed: int
    stream_id: int

    @classmethod
    def for_unit(cls, seed: int, rep: int, unit: int) -> RngStream:
        return cls(int(seed), (int(rep) << 32) | int(unit))

    def generator(self, key: np.ndarray | None = None) -> np.random.Generator:
        key = _key(self.seed) if key is None else key
        counter = np.array([0, 0, self.stream_id & 0xFFFFFFFFFFFFFFFF, self.stream_id >> 64], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key, counter=counter))


def log_standard_gamma(shape, size, rng: np.random.Generator) -> np.ndarray:
    """log of Ga(shape, 1) draws by Marsaglia-Tsang squeeze/rejection.

    Shapes below one are boosted: Ga(s) = Ga(s + 1) * U**(1/s), applied in
    log space so that very small shapes do not underflow.
    """
    shape = np.broadcast_to(np.asarray(shape, dtype=float), size)
    if np.any(shape <= 0):
        raise DomainError("gamma shape must be positive")
    boost = shape < 1.0
    d = np.where(boost, shape + 1.0, shape) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(size)
    todo = np.arange(out.size)
    flat_d, flat_c = d.ravel(), c.ravel()
    res = out.ravel()
    while todo.size:
        x = rng.standard_normal(todo.size)
        u = rng.random(todo.size)
        v = 1.0 + flat_c[todo] * x
        pos = v > 0
        v3 = np.where(pos, v * v * v, 1.0)
        x2 = x * x
        squeeze = u < 1.0 - 0.0331 * x2 * x2
        with np.errstate(divide="ignore", invalid="ignore"):
            full = np.log(u) < 0.5 * x2 + flat_d[todo] * (1.0 - v3 + np.log(v3))
        ok = pos & (squeeze | full)
        res[todo[ok]] = np.log(flat_d[todo[ok]] * v3[ok])
        todo = todo[~ok]
    out = res.reshape(size)
    if np.any(boost):
        u = rng.random(size)
        out = np.where(boost, out + np.log(u) / shape, out)
    return out


def sample_gamma_increment(shape, scale, rng, size=None):
    """Ga(shape, scale) draws; draws below the smallest normal double are floored there."""
    if not scale > 0:
        raise DomainError("gamma scale must be positive")
    if isinstance(rng, RngStream):
        rng = rng.generator()
    shp = np.shape(shape) if size is None else size
    draws = np.maximum(scale * np.exp(log_standard_gamma(shape, shp, rng)), _TINY)
    return float(draws) if draws.ndim == 0 else draws


@dataclass(frozen=True)
class ObservationSet:
    """One simulated or recorded test: increments[i, k] is unit i's increment
    over (k f, (k+1) f], k = 0..M-1."""

    increments: np.ndarray
    kappa1: int
    plan: TestPlan
    seed: int = 0
    rep: int = 0
    meta: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.shape != (self.plan.n, self.plan.M):
            raise DomainError(f"increments must have shape (n, M) = {(self.plan.n, self.plan.M)}")
        if not 1 <= self.kappa1 <= self.plan.M:
            raise DomainError("kappa1 must lie in 1..M")
        object.__setattr__(self, "increments", inc)

    def levels(self) -> np.ndarray:
        """Cumulative degradation at the measurement times f, 2f, ..., Mf."""
        return np.cumsum(self.increments, axis=1)

    def recompute_kappa1(self) -> int:
        return elevation_index(self.increments, self.plan.omega1)


def elevation_index(increments, omega1) -> int:
    """First measurement k in 1..M-1 at which some unit has reached omega1, else M."""
    inc = np.asarray(increments)
    M = inc.shape[1]
    crossed = np.nonzero(np.cumsum(inc[:, : M - 1], axis=1).max(axis=0) >= omega1)[0]
    return int(crossed[0]) + 1 if crossed.size else M


def _check(plan: TestPlan, stress: StressSpec):
    if stress.m != 2:
        raise UnsupportedConfigurationError("simulation is implemented for two test stresses only")


def _simulate_one(plan, params, stress, seed, rep, key):
    s1 = plan.f * arrhenius_rate(params, stress.levels[0])
    s2 = plan.f * arrhenius_rate(params, stress.levels[1])
    shapes = np.repeat([s1, s2], plan.M)
    both = np.empty((plan.n, 2 * plan.M))
    for unit in range(plan.n):
        rng = RngStream.for_unit(seed, rep, unit).generator(key)
        both[unit] = sample_gamma_increment(shapes, params.beta, rng)
    low, high = both[:, :plan.M], both[:, plan.M:]
    kappa1 = elevation_index(low, plan.omega1)
    inc = np.where(np.arange(plan.M) < kappa1, low, high)
    return ObservationSet(inc, kappa1, plan, seed, rep)


def simulate_test(plan: TestPlan, params: ModelParams, stress: StressSpec, seed: int, rep: int = 0) -> ObservationSet:
    _check(plan, stress)
    return _simulate_one(plan, params, stress, seed, rep, _key(seed))


def _chunk(args):
    plan, params, stress, seed, reps = args
    key = _key(seed)
    return [_simulate_one(plan, params, stress, seed, r, key) for r in reps]


def default_workers() -> int:
    env = os.environ.get("SSADT_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate_batch(plan: TestPlan, params: ModelParams, stress: StressSpec, reps: int, seed: int,
                   workers: int | None = None, first_rep: int = 0) -> list[ObservationSet]:
    """Replications first_rep .. first_rep + reps - 1, ordered by replication id
    whatever the worker count."""
    _check(plan, stress)
    if reps < 1:
        raise DomainError("reps must be >= 1")
    ids = np.arange(first_rep, first_rep + reps)
    workers = 1 if workers is None else workers
    if workers <= 1 or reps < 200:
        return _chunk((plan, params, stress, seed, ids.tolist()))
    chunks = np.array_split(ids, workers * 4)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_chunk, [(plan, params, stress, seed, c.tolist()) for c in chunks if len(c)])
        return [obs for part in parts for obs in part]


# ---------------------------------------------------------------------------
# CSV dataset format


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_dataset_csv(observations, stress: StressSpec, path) -> None:
    """Write one row per (unit, measurement).  A leading ``rep`` column is added
    when more than one replication is written."""
    observations = list(observations)
    multi = len(observations) > 1
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow((("rep",) if multi else ()) + CSV_COLUMNS)
    for obs in observations:
        f = obs.plan.f
        cum = obs.levels()
        for i in range(obs.plan.n):
            for k in range(1, obs.plan.M + 1):
                s = stress.levels[0] if k - 1 < obs.kappa1 else stress.levels[1]
                row = (i + 1, k, k * f, _fmt(s), _fmt(obs.increments[i, k - 1]), _fmt(cum[i, k - 1]), obs.kappa1)
                writer.writerow(((obs.rep,) if multi else ()) + row)
    atomic_write(path, buf.getvalue())


def read_dataset_csv(path, omega1: float, D: float, rep: int | None = None) -> ObservationSet:
    """Read a dataset written by :func:`write_dataset_csv` (one replication)."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DomainError(f"{path}: dataset is empty")
    if "rep" in rows[0]:
        want = int(rows[0]["rep"]) if rep is None else rep
        rows = [r for r in rows if int(r["rep"]) == want]
        if not rows:
            raise DomainError(f"{path}: replication {rep} not found")
    missing = set(CSV_COLUMNS) - set(rows[0])
    if missing:
        raise DomainError(f"{path}: missing columns {sorted(missing)}")
    units = sorted({int(r["unit"]) for r in rows})
    ks = sorted({int(r["k"]) for r in rows})
    n, M = len(units), len(ks)
    if units != list(range(1, n + 1)) or ks != list(range(1, M + 1)) or len(rows) != n * M:
        raise DomainError(f"{path}: expected a complete unit x measurement grid")
    inc = np.empty((n, M))
    for r in rows:
        inc[int(r["unit"]) - 1, int(r["k"]) - 1] = float(r["increment"])
    f_vals = {int(r["time"]) // int(r["k"]) for r in rows}
    kap = {int(r["kappa1"]) for r in rows}
    if len(f_vals) != 1 or len(kap) != 1:
        raise DomainError(f"{path}: inconsistent measurement frequency or kappa1")
    plan = TestPlan(n, f_vals.pop(), M, omega1, D)
    return ObservationSet(inc, kap.pop(), plan, rep=int(rows[0].get("rep", 0)))
