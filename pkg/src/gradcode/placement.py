"""Data placement across workers, replication, and the optimal cost planner.

Worker and partition indices are 1-based throughout the public interface.
"""

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import Infeasible, InvalidArgs, InvalidPlacement, NoPlan


@dataclass(frozen=True)
class Placement:
    """Which partitions live on which workers.

    ``gamma[n - 1]`` is the set of partitions held by worker ``n``.
    """

    n_workers: int
    n_partitions: int
    gamma: tuple

    def __post_init__(self):
        N, K = self.n_workers, self.n_partitions
        if not (isinstance(N, int) and N >= 1):
            raise InvalidPlacement(f"n_workers must be a positive integer, got {N!r}")
        if not (isinstance(K, int) and K >= 1):
            raise InvalidPlacement(f"n_partitions must be a positive integer, got {K!r}")
        gamma = tuple(frozenset(int(k) for k in g) for g in self.gamma)
        if len(gamma) != N:
            raise InvalidPlacement(f"gamma has {len(gamma)} entries for {N} workers")
        covered = set()
        for n, g in enumerate(gamma, start=1):
            if not g:
                raise InvalidPlacement(f"worker {n} holds no partitions")
            bad = [k for k in g if not 1 <= k <= K]
            if bad:
                raise InvalidPlacement(f"worker {n} references unknown partitions {sorted(bad)}")
            covered |= g
        missing = sorted(set(range(1, K + 1)) - covered)
        if missing:
            raise InvalidPlacement(f"partitions {missing} are not assigned to any worker")
        object.__setattr__(self, "gamma", gamma)

    @classmethod
    def from_sets(cls, gamma, n_partitions=None):
        gamma = [set(g) for g in gamma]
        if n_partitions is None:
            n_partitions = max((max(g) for g in gamma if g), default=0)
        return cls(len(gamma), n_partitions, tuple(gamma))

    def holds(self, n, k):
        return k in self.gamma[n - 1]

    def to_dict(self):
        return {
            "n_workers": self.n_workers,
            "n_partitions": self.n_partitions,
            "gamma": [sorted(g) for g in self.gamma],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc):
        unknown = set(doc) - {"n_workers", "n_partitions", "gamma"}
        if unknown:
            raise InvalidPlacement(f"unknown placement keys {sorted(unknown)}")
        try:
            return cls(doc["n_workers"], doc["n_partitions"], tuple(doc["gamma"]))
        except KeyError as exc:
            raise InvalidPlacement(f"placement is missing field {exc.args[0]!r}") from None

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def assignment_sets(p):
    """Return the list of worker sets holding each partition, indexed k-1."""
    sets = [set() for _ in range(p.n_partitions)]
    for n, g in enumerate(p.gamma, start=1):
        for k in g:
            sets[k - 1].add(n)
    return [frozenset(s) for s in sets]


def replication(p):
    return min(len(a) for a in assignment_sets(p))


@dataclass(frozen=True)
class CostQuery:
    s: int
    a: int
    d: int

    def __post_init__(self):
        if self.s < 0 or self.a < 0:
            raise InvalidArgs("s and a must be non-negative")
        if self.d < 1:
            raise InvalidArgs("d must be positive")


@dataclass(frozen=True)
class CostResult:
    cost: Fraction       # ideal d / m
    m: int
    share_length: int    # ceil(d / m), what is actually sent

    def symbolic(self):
        """Cost as a multiple of d, e.g. ``"d/2"``."""
        return "d" if self.m == 1 else f"d/{self.m}"


def optimal_cost(p, q):
    """Minimum per-worker communication cost d / (r - 2a - s)."""
    if q.s + q.a >= p.n_workers:
        raise InvalidArgs(f"s + a = {q.s + q.a} leaves no honest responsive worker (N={p.n_workers})")
    sizes = [len(a) for a in assignment_sets(p)]
    r = min(sizes)
    m = r - 2 * q.a - q.s
    if m <= 0:
        limiting = sizes.index(r) + 1
        raise Infeasible(
            f"replication r={r} does not exceed 2a+s={2 * q.a + q.s}; partition {limiting} is limiting",
            limiting_partition=limiting,
        )
    return CostResult(Fraction(q.d, m), m, math.ceil(q.d / m))


def sorted_partitions(p):
    """Partitions sorted by replication ascending, ties by index."""
    sets = assignment_sets(p)
    return sorted(range(1, p.n_partitions + 1), key=lambda k: (len(sets[k - 1]), k))


@dataclass(frozen=True)
class Feasibility:
    verdict: str             # "full" | "partial" | "infeasible"
    first_index: int = None  # position l in the sorted order (1-based), partial only
    recoverable: tuple = ()  # partition indices whose sum can be recovered


def feasibility_check(p, s, a):
    sets = assignment_sets(p)
    order = sorted_partitions(p)
    threshold = 2 * a + s
    ok = [k for k in order if len(sets[k - 1]) > threshold]
    if len(ok) == len(order):
        return Feasibility("full", 1, tuple(sorted(ok)))
    if not ok:
        return Feasibility("infeasible")
    first = order.index(ok[0]) + 1
    return Feasibility("partial", first, tuple(sorted(ok)))


@dataclass(frozen=True)
class PartialSumPlan:
    j: int                 # position in the sorted order (1-based)
    partitions: tuple      # partitions whose sum is recovered
    m: int
    cost: Fraction


def partial_sum_plan(p, s, a, budget, d):
    """Smallest sorted position j whose replication meets the cost budget."""
    if budget < 1:
        raise InvalidArgs("budget must be at least 1")
    sets = assignment_sets(p)
    order = sorted_partitions(p)
    for j, k in enumerate(order, start=1):
        m = len(sets[k - 1]) - 2 * a - s
        if m > 0 and Fraction(budget) >= Fraction(d, m):
            return PartialSumPlan(j, tuple(order[j - 1:]), m, Fraction(d, m))
    raise NoPlan(f"no partition subset meets budget R={budget} with s={s}, a={a}, d={d}")


def generate_placement(N, K, r_target, kind="uniform", seed=0):
    """Random placement in which every partition is held by at least ``r_target`` workers.

    ``uniform`` replicates every partition exactly ``r_target`` times using
    wrapped blocks over a shuffled worker order; ``skewed`` draws each
    replication from ``[r_target, N]``.
    """
    if N < 1 or K < 1:
        raise InvalidArgs("N and K must be positive")
    if not 1 <= r_target <= N:
        raise InvalidArgs(f"r_target={r_target} must lie in [1, N={N}]")
    rng = np.random.default_rng(seed)
    holders = []
    if kind == "uniform":
        if K * r_target < N:
            raise InvalidArgs(f"K*r = {K * r_target} partitions slots cannot cover N={N} workers")
        perm = rng.permutation(N) + 1
        offset = int(rng.integers(N))
        for k in range(K):
            start = offset + k * r_target
            holders.append({int(perm[(start + t) % N]) for t in range(r_target)})
    elif kind == "skewed":
        for k in range(K):
            size = int(rng.integers(r_target, N + 1))
            holders.append({int(w) + 1 for w in rng.choice(N, size=size, replace=False)})
        used = set().union(*holders)
        for n in range(1, N + 1):
            if n not in used:
                candidates = [k for k in range(K) if len(holders[k]) < N]
                holders[int(rng.choice(candidates))].add(n)
    else:
        raise InvalidArgs(f"unknown placement kind {kind!r}")
    gamma = [set() for _ in range(N)]
    for k, ws in enumerate(holders, start=1):
        for n in ws:
            gamma[n - 1].add(k)
    return Placement(N, K, tuple(gamma))


# The worked example used throughout the tests and the CLI self-test.
EXAMPLE_PLACEMENT = Placement(
    5, 5, ({1, 2, 3, 4, 5}, {1, 2, 3}, {1}, {2, 3, 4, 5}, {1, 4, 5})
)
