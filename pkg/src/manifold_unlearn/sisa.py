"""Expected retraining cost of sharded / sliced training under unlearning
requests, in closed form and by Monte Carlo.

All costs are counted in samples retrained.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels

CSV_COLUMNS = ["kind", "N", "S", "K", "D", "R", "e_prime", "analytic", "mc_mean", "mc_stderr", "z_score"]


@dataclass(frozen=True)
class ShardingScenario:
    N: int
    S: int
    K: int

    def __post_init__(self):
        if not (self.N >= self.S >= 1):
            raise ValueError(f"need N >= S >= 1, got N={self.N}, S={self.S}")
        if not 1 <= self.K <= self.N:
            raise ValueError(f"need 1 <= K <= N, got K={self.K}")

    @property
    def shard_size(self) -> float:
        return self.N / self.S


@dataclass(frozen=True)
class SlicingScenario:
    D: int
    R: int
    e_prime: float
    K: int = 1

    def __post_init__(self):
        if not (self.D >= self.R >= 1):
            raise ValueError(f"need D >= R >= 1, got D={self.D}, R={self.R}")
        if self.e_prime <= 0:
            raise ValueError("e_prime must be positive")
        if self.K < 1:
            raise ValueError("K must be >= 1")


@dataclass(frozen=True)
class UniformMinSpec:
    a: float
    b: float
    n: int

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError("need a < b")
        if self.n < 1:
            raise ValueError("need n >= 1")


class MCEstimate(NamedTuple):
    mean: float
    std_error: float


def expected_seq_shard_cost(sc: ShardingScenario) -> float:
    """``(N/S - 1) K - sum_{i=1}^{K} (i - 1)/S`` for requests served one by one."""
    return (sc.N / sc.S - 1.0) * sc.K - sum((i - 1) / sc.S for i in range(1, sc.K + 1))


def expected_batch_shard_cost(sc: ShardingScenario) -> float:
    """``N (1 - (1 - 1/S)^K) - K`` for one batch of K requests."""
    return sc.N * (1.0 - (1.0 - 1.0 / sc.S) ** sc.K) - sc.K


def expected_seq_slice_cost(sl: SlicingScenario) -> float:
    """``e' D (2/3 + 1/(3R))`` for a single request on a uniformly random slice."""
    return sl.e_prime * sl.D * (2.0 / 3.0 + 1.0 / (3.0 * sl.R))


def expected_batch_slice_cost(sl: SlicingScenario) -> float:
    """Published closed form for a batch of K requests.

    It plugs the moments of the minimum of K *continuous* uniforms on
    ``[1, R]`` into the cost; the simulated process draws discrete slice
    indices, so the two differ for ``R > 1`` (see
    :func:`exact_batch_slice_cost`).
    """
    R, K = sl.R, sl.K
    inner = 1.0 + (2.0 * (R - 1) / (K + 1)) * ((K + 1) + R) / (K + 2) - (K + R) / (K + 1)
    return (2.0 * sl.e_prime * sl.D / (R * (R + 1))) * (R * (R + 1) / 2.0 - 0.5 * inner)


def exact_batch_slice_cost(sl: SlicingScenario) -> float:
    """Expected batch cost with the exact law of the minimum of K discrete
    uniform slice indices on ``{1..R}``."""
    R, K = sl.R, sl.K
    total = 0.0
    for r in range(1, R + 1):
        p = ((R - r + 1) / R) ** K - ((R - r) / R) ** K
        cost = (2.0 * sl.e_prime * sl.D / (R * (R + 1))) * (R * (R + 1) / 2.0 - r * (r - 1) / 2.0)
        total += p * cost
    return total


def uniform_min_moments(u: UniformMinSpec):
    """Mean and second moment of the minimum of ``n`` draws from U[a, b]."""
    a, b, n = u.a, u.b, u.n
    mean = (n * a + b) / (n + 1)
    second = a * a + (2.0 * (b - a) / (n + 1)) * ((n + 1) * a + b) / (n + 2)
    return mean, second


def _estimate(costs) -> MCEstimate:
    costs = np.asarray(costs, dtype=np.float64)
    if costs.size > 1:
        return MCEstimate(float(costs.mean()), float(costs.std(ddof=1) / math.sqrt(costs.size)))
    return MCEstimate(float(costs.mean()), 0.0)


def _without_replacement_costs(sc, trials, rng):
    # point p belongs to shard floor(p S / N); each request removes one point
    costs = np.empty(trials)
    owner = (np.arange(sc.N) * sc.S) // sc.N
    sizes0 = np.bincount(owner, minlength=sc.S)
    for tr in range(trials):
        sizes = sizes0.copy()
        cost = 0.0
        for p in rng.choice(sc.N, size=sc.K, replace=False):
            s = owner[p]
            cost += sizes[s] - 1
            sizes[s] -= 1
        costs[tr] = cost
    return costs


def simulate_shard_costs(sc: ShardingScenario, mode, trials, rng, without_replacement=False) -> MCEstimate:
    """Monte Carlo of the sharding request process.

    Requests land on i.i.d. uniform shards. ``sequential`` charges each
    request ``N/S - 1 - (earlier hits on its shard)``; ``batched`` charges
    ``N/S - u_j`` once per touched shard. ``without_replacement`` instead
    deletes distinct points from equal shards (sequential only; no closed
    form is claimed for it).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    if without_replacement:
        if mode != "sequential":
            raise ValueError("the without-replacement process is sequential only")
        return _estimate(_without_replacement_costs(sc, trials, rng))
    hits = rng.integers(0, sc.S, size=(trials, sc.K))
    if mode == "sequential":
        costs = _kernels.shard_sequential_costs(hits, sc.shard_size, sc.S)
    elif mode == "batched":
        costs = _kernels.shard_batched_costs(hits, sc.shard_size, sc.S)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _estimate(costs)


def simulate_slice_costs(sl: SlicingScenario, mode, trials, rng) -> MCEstimate:
    """Monte Carlo of the slicing cost: retrain slices ``r..R`` where ``r`` is
    uniform on ``{1..R}`` (sequential) or the minimum of K such draws (batched)."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(rng)
    if mode == "sequential":
        first = rng.integers(1, sl.R + 1, size=trials)
    elif mode == "batched":
        first = rng.integers(1, sl.R + 1, size=(trials, sl.K)).min(axis=1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return _estimate(_kernels.slice_costs(first, sl.R, float(sl.e_prime), float(sl.D)))


def simulate_uniform_min(u: UniformMinSpec, draws, rng):
    """Sample mean and second moment of the minimum, each with its standard error."""
    rng = np.random.default_rng(rng)
    m = rng.uniform(u.a, u.b, size=(draws, u.n)).min(axis=1)
    first = _estimate(m)
    second = _estimate(m * m)
    return first, second


def z_score(analytic, est: MCEstimate) -> float:
    if est.std_error == 0.0:
        return 0.0 if math.isclose(analytic, est.mean, rel_tol=1e-12, abs_tol=1e-9) else math.inf
    return abs(est.mean - analytic) / est.std_error


def default_grid():
    """Scenarios of the formula-vs-simulation check, as (kind, scenario) pairs."""
    rows = []
    for N in (100, 1000):
        for S in (1, 5, 10, 20):
            for K in (1, 5, 20):
                sc = ShardingScenario(N, S, K)
                rows.append(("seq_shard", sc))
                rows.append(("batch_shard", sc))
    for D in (100, 300):
        for R in (1, 2, 5, 20):
            rows.append(("seq_slice", SlicingScenario(D, R, 1.0)))
            for K in (1, 5, 20):
                rows.append(("batch_slice", SlicingScenario(D, R, 1.0, K)))
    return rows


_ANALYTIC = {
    "seq_shard": expected_seq_shard_cost,
    "batch_shard": expected_batch_shard_cost,
    "seq_slice": expected_seq_slice_cost,
    "batch_slice": expected_batch_slice_cost,
}


def compare(kind, scenario, trials, rng) -> dict:
    """One CSV row: scenario parameters, closed form, MC mean, stderr, z."""
    analytic = _ANALYTIC[kind](scenario)
    if kind.endswith("shard"):
        est = simulate_shard_costs(scenario, "sequential" if kind == "seq_shard" else "batched", trials, rng)
        params = {"N": scenario.N, "S": scenario.S, "K": scenario.K, "D": "", "R": "", "e_prime": ""}
    else:
        est = simulate_slice_costs(scenario, "sequential" if kind == "seq_slice" else "batched", trials, rng)
        params = {"N": "", "S": "", "K": scenario.K if kind == "batch_slice" else "", "D": scenario.D,
                  "R": scenario.R, "e_prime": scenario.e_prime}
    return {"kind": kind, **params, "analytic": analytic, "mc_mean": est.mean, "mc_stderr": est.std_error,
            "z_score": z_score(analytic, est)}


def run_grid(rows, trials, seed):
    """Evaluate every (kind, scenario) with its own child seed of ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(rows))
    return [compare(kind, sc, trials, np.random.default_rng(ss)) for (kind, sc), ss in zip(rows, children)]
