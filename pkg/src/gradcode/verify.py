"""Independent oracles and executable counterparts of the optimality argument."""

import itertools
import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg

from . import numeric
from .errors import DimensionMismatch, GradCodeError, NotApplicable, SingularMatrix
from .exact_coding import (
    CodedShare,
    encoding_matrix,
    make_scheme,
    recover_aggregate,
    slice_gradients,
)
from .numeric import EXACT
from .placement import assignment_sets, generate_placement, replication
from .simulator import SignFlipScale, corrupt_share


def oracle_aggregate(gradients):
    """Componentwise sum of the partial gradients."""
    rows = [np.asarray(g) for g in gradients]
    if not rows:
        raise DimensionMismatch("no gradients")
    if len({r.shape for r in rows}) != 1:
        raise DimensionMismatch("gradients have different lengths")
    total = rows[0]
    for r in rows[1:]:
        total = total + r
    return total


# -- converse witness ------------------------------------------------------


@dataclass
class Scenario:
    gradients: list        # K vectors (exact)
    adversaries: list      # workers with a nonzero eps
    eps: dict              # worker -> eps vector


@dataclass
class Witness:
    partition: int
    stragglers: list
    scenarios: tuple       # (Scenario, Scenario)
    delivered: tuple       # two dicts worker -> delivered payload

    def delivered_bytes(self, which):
        """Canonical serialization of one scenario's delivered share stack."""
        stack = self.delivered[which]
        docs = [CodedShare(n, numeric.Fraction(n), stack[n]).to_dict() for n in sorted(stack)]
        return json.dumps(docs, sort_keys=True).encode()

    def aggregates(self):
        return tuple(oracle_aggregate(s.gradients) for s in self.scenarios)

    def to_dict(self):
        def vec(v):
            return [numeric.fraction_str(x) for x in v]
        return {
            "partition": self.partition,
            "stragglers": self.stragglers,
            "scenarios": [
                {"gradients": [vec(g) for g in sc.gradients],
                 "adversaries": sc.adversaries,
                 "eps": {str(n): vec(e) for n, e in sc.eps.items()}}
                for sc in self.scenarios
            ],
        }


def _honest_shares(p, gradients):
    """Shares of every worker under the m = 1 exact encoder, keyed by worker."""
    grid_scheme = make_scheme(p, mode=EXACT, m=1, strict=False)
    sliced = slice_gradients(gradients, 1, EXACT)
    M = encoding_matrix(p, grid_scheme.grid, sliced.length, EXACT)
    stacked = M @ sliced.parts.ravel()
    L = sliced.length
    return {n: stacked[(n - 1) * L:n * L] for n in range(1, p.n_workers + 1)}


def _try_witness(p, j, stragglers, group1, group2, d):
    """Build the two scenarios for a candidate cover of A_j; None if they are distinguishable."""
    K = p.n_partitions
    base = [numeric.asarray([0] * d, EXACT) for _ in range(K)]
    g1 = [v.copy() for v in base]
    g2 = [v.copy() for v in base]
    g2[j - 1] = numeric.asarray(list(range(1, d + 1)), EXACT)
    sh1, sh2 = _honest_shares(p, g1), _honest_shares(p, g2)
    responders = [n for n in range(1, p.n_workers + 1) if n not in stragglers]
    eps1 = {n: sh2[n] - sh1[n] for n in group1}
    eps2 = {n: sh1[n] - sh2[n] for n in group2}
    del1 = {n: sh1[n] + eps1.get(n, 0) for n in responders}
    del2 = {n: sh2[n] + eps2.get(n, 0) for n in responders}
    if any(np.any(del1[n] != del2[n]) for n in responders):
        return None
    return Witness(
        j, sorted(stragglers),
        (Scenario(g1, sorted(group1), eps1), Scenario(g2, sorted(group2), eps2)),
        (del1, del2),
    )


def converse_witness(p, s, a, d=2):
    """Two indistinguishable scenarios with different aggregates.

    Picks the least-replicated partition j with |A_j| <= 2a + s, lets s of
    its holders straggle, and splits the remaining holders into two groups of
    at most a adversaries that each fake the other scenario's shares.
    """
    sets = assignment_sets(p)
    candidates = [k for k in range(1, p.n_partitions + 1) if len(sets[k - 1]) <= 2 * a + s]
    if not candidates:
        raise NotApplicable(f"every partition has more than 2a+s={2 * a + s} holders")
    j = min(candidates, key=lambda k: (len(sets[k - 1]), k))
    holders = sorted(sets[j - 1])
    stragglers = holders[:s]
    rest = holders[s:]
    w = _try_witness(p, j, set(stragglers), rest[:a], rest[a:2 * a], d)
    if w is None:   # cannot happen when the holders are fully covered
        raise NotApplicable("construction failed to produce identical stacks")
    return w


def exhaustive_witness_search(p, s, a, d=2):
    """Search every (partition, straggler set, adversary groups) in the proof's family.

    Returns the first witness found or ``None``.
    """
    N = p.n_workers
    workers = range(1, N + 1)
    for j in range(1, p.n_partitions + 1):
        for ns in range(0, min(s, N) + 1):
            for S in itertools.combinations(workers, ns):
                live = [n for n in workers if n not in S]
                for n1 in range(0, a + 1):
                    for G1 in itertools.combinations(live, n1):
                        rest = [n for n in live if n not in G1]
                        for n2 in range(0, a + 1):
                            for G2 in itertools.combinations(rest, n2):
                                w = _try_witness(p, j, set(S), list(G1), list(G2), d)
                                if w is not None:
                                    return w
    return None


# -- round trips -----------------------------------------------------------


@dataclass
class RoundtripReport:
    passed: int = 0
    failed: int = 0
    counterexamples: list = field(default_factory=list)
    max_rel_error: float = 0.0

    @property
    def ok(self):
        return self.failed == 0

    def to_json(self):
        return json.dumps(asdict(self), default=str)


def _subsets_up_to(items, k):
    for size in range(0, k + 1):
        yield from itertools.combinations(items, size)


def random_gradients(K, d, mode, rng):
    ints = rng.integers(-20, 21, size=(K, d))
    if mode == EXACT:
        return numeric.asarray(ints.tolist(), EXACT)
    return rng.normal(size=(K, d))


def roundtrip_check(p, scheme, seed, exhaustive=False, d=None, corruption=SignFlipScale(-2),
                    float_tol=1e-8, max_cases=None):
    """Encode random gradients and check exact recovery under straggler/adversary patterns.

    With ``exhaustive`` (and N <= 10) every straggler subset of size <= s and
    every adversary subset of size <= a of the responders is tried; otherwise
    one random pattern of full size is drawn.
    """
    rng = np.random.default_rng(seed)
    N = p.n_workers
    if d is None:
        d = int(rng.integers(1, 25))
    grads = random_gradients(p.n_partitions, d, scheme.mode, rng)
    truth = oracle_aggregate(grads)
    shares = scheme.encode_all(scheme.slice(grads))
    report = RoundtripReport()
    if exhaustive and N <= 10:
        patterns = ((S, A) for S in _subsets_up_to(range(1, N + 1), scheme.s)
                    for A in _subsets_up_to([n for n in range(1, N + 1) if n not in S], scheme.a))
    else:
        S = tuple(sorted(rng.choice(N, size=scheme.s, replace=False) + 1)) if scheme.s else ()
        live = [n for n in range(1, N + 1) if n not in S]
        A = tuple(sorted(rng.choice(live, size=min(scheme.a, len(live)), replace=False))) if scheme.a else ()
        patterns = [(S, tuple(int(x) for x in A))]
    for case, (S, A) in enumerate(patterns):
        if max_cases is not None and case >= max_cases:
            break
        delivered = [corrupt_share(sh, corruption, seed=seed) if sh.worker in A else sh
                     for sh in shares if sh.worker not in S]
        try:
            result = scheme.decode(delivered)
            agg = recover_aggregate(result.poly, scheme.grid, d)
        except GradCodeError as exc:
            report.failed += 1
            report.counterexamples.append({"stragglers": list(S), "adversaries": list(A), "error": repr(exc)})
            continue
        if scheme.mode == EXACT:
            good = bool(np.all(agg == truth)) and result.flagged <= set(A)
        else:
            rel = float(np.linalg.norm(agg - truth) / max(np.linalg.norm(truth), 1e-300))
            report.max_rel_error = max(report.max_rel_error, rel)
            good = rel <= float_tol
        if good:
            report.passed += 1
        else:
            report.failed += 1
            report.counterexamples.append({
                "stragglers": list(S), "adversaries": list(A),
                "flagged": sorted(result.flagged),
            })
    return report


def random_feasible_config(rng, max_N=12, max_K=10, max_s=3, max_a=2, mode=EXACT):
    """Draw (placement, scheme) with r > 2a + s."""
    while True:
        N = int(rng.integers(1, max_N + 1))
        s = int(rng.integers(0, max_s + 1))
        a = int(rng.integers(0, max_a + 1)) if mode == EXACT else 0
        if 2 * a + s + 1 > N:
            continue
        K = int(rng.integers(1, max_K + 1))
        r = int(rng.integers(2 * a + s + 1, N + 1))
        kind = "skewed" if rng.random() < 0.5 else "uniform"
        if kind == "uniform" and K * r < N:
            kind = "skewed"
        p = generate_placement(N, K, r, kind, int(rng.integers(2 ** 31)))
        m_max = replication(p) - 2 * a - s
        m = int(rng.integers(1, m_max + 1))
        return p, make_scheme(p, s=s, a=a, mode=mode, m=m)


def worker_count():
    """Parallelism cap from GRADCODE_THREADS (default 1)."""
    try:
        return max(1, int(os.environ.get("GRADCODE_THREADS", "1")))
    except ValueError:
        return 1


# -- conditioning ----------------------------------------------------------


def vandermonde_condition(nodes, iters=500):
    """2-norm condition number of the Vandermonde matrix of ``nodes``.

    sigma_max from power iteration on V^T V, sigma_min from inverse iteration
    through an LU factorization of V.
    """
    x = np.asarray(nodes, dtype=float)
    if len(x) < 2:
        raise SingularMatrix("need at least 2 nodes")
    if len(np.unique(x)) != len(x):
        raise SingularMatrix("duplicate nodes make the Vandermonde matrix singular")
    V = np.vander(x, increasing=True)
    n = len(x)
    rng = np.random.default_rng(0)
    v = rng.normal(size=n)
    v /= np.linalg.norm(v)
    smax = 0.0
    for _ in range(iters):
        w = V.T @ (V @ v)
        new = np.linalg.norm(w)
        v = w / new
        if abs(new - smax) <= 1e-14 * new:
            smax = new
            break
        smax = new
    lu = scipy.linalg.lu_factor(V)
    u = rng.normal(size=n)
    u /= np.linalg.norm(u)
    inv = 0.0
    for _ in range(iters):
        # (V^T V)^{-1} u = V^{-1} V^{-T} u
        w = scipy.linalg.lu_solve(lu, scipy.linalg.lu_solve(lu, u, trans=1))
        new = np.linalg.norm(w)
        u = w / new
        if abs(new - inv) <= 1e-14 * new:
            inv = new
            break
        inv = new
    return float(np.sqrt(smax * inv))


def berrut_perturbation_check(interp, delta, seed=0, samples=2000):
    """Largest output change from perturbing node values by at most ``delta``.

    Returns (max change on a dense grid, Lebesgue estimate * delta).
    """
    from .approx_coding import BerrutInterpolant, berrut_eval, lebesgue_constant_estimate

    rng = np.random.default_rng(seed)
    noise = rng.uniform(-delta, delta, size=interp.values.shape)
    moved = BerrutInterpolant(interp.nodes, interp.values + noise)
    xs = np.linspace(interp.nodes.min(), interp.nodes.max(), samples)
    change = float(np.max(np.abs(berrut_eval(moved, xs) - berrut_eval(interp, xs))))
    return change, lebesgue_constant_estimate(interp.nodes) * delta
