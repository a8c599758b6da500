"""Universal-polynomial gradient coding with straggler and adversary tolerance.

Every worker ``n`` sends one evaluation ``f(alpha_n)`` of a vector-valued
polynomial ``f`` built from the partial gradients. ``f`` depends on a
worker's point only through the partitions that worker holds, and its values
at the ``beta`` points are the slices of the aggregate gradient. The master
interpolates ``f`` from the non-straggling responses (correcting up to ``a``
corrupted ones) and reads the aggregate off at the betas.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import numeric
from .errors import (
    DuplicateNode,
    FloatModeUnsupported,
    GridCollision,
    Infeasible,
    InsufficientShares,
    InvalidArgs,
    NonLocalAccess,
    TooManyErrors,
)
from .numeric import EXACT, FLOAT
from .placement import assignment_sets, replication

COLLISION_TOL = 1e-9


@dataclass(frozen=True)
class EvaluationGrid:
    alphas: tuple
    betas: tuple

    def __post_init__(self):
        values = list(self.alphas) + list(self.betas)
        for i in range(len(values)):
            for j in range(i + 1, len(values)):
                if _close(values[i], values[j]):
                    raise GridCollision(f"grid points {values[i]!r} and {values[j]!r} coincide")

    @property
    def mode(self):
        return EXACT if all(isinstance(v, numeric.Fraction) for v in self.alphas + self.betas) else FLOAT

    def to_dict(self):
        mode = self.mode
        return {
            "alphas": [numeric.scalar_to_json(v, mode) for v in self.alphas],
            "betas": [numeric.scalar_to_json(v, mode) for v in self.betas],
        }


def _close(x, y):
    if isinstance(x, numeric.Fraction) and isinstance(y, numeric.Fraction):
        return x == y
    return abs(float(x) - float(y)) <= COLLISION_TOL


def _resolve_collisions(alphas, betas):
    """Move any beta that sits on an alpha to the midpoint towards its nearest neighbour."""
    betas = list(betas)
    for i, b in enumerate(betas):
        hit = [a for a in alphas if _close(a, b)]
        if not hit:
            continue
        others = [v for v in list(alphas) + betas[:i] + betas[i + 1:] if not _close(v, hit[0])]
        nearest = min(others, key=lambda v: abs(v - hit[0])) if others else hit[0] - 1.0
        betas[i] = 0.5 * (hit[0] + nearest)
    return betas


def default_grid(N, m, mode=EXACT):
    """Integer grid in exact mode, Chebyshev nodes in float mode.

    Exact: ``alpha_n = n`` and ``beta_l = 1 - l``. Float: ``alpha_n =
    cos(n pi / N)`` and ``beta_l = cos((2l - 1) pi / (2m))``.
    """
    if N < 1 or m < 1:
        raise InvalidArgs("N and m must be positive")
    numeric.check_mode(mode)
    if mode == EXACT:
        alphas = [numeric.Fraction(n) for n in range(1, N + 1)]
        betas = [numeric.Fraction(1 - l) for l in range(1, m + 1)]
    else:
        alphas = [math.cos(n * math.pi / N) for n in range(1, N + 1)]
        betas = [math.cos((2 * l - 1) * math.pi / (2 * m)) for l in range(1, m + 1)]
        betas = _resolve_collisions(alphas, betas)
    return EvaluationGrid(tuple(alphas), tuple(betas))


@dataclass(frozen=True)
class SlicedGradients:
    parts: np.ndarray    # shape (K, m, L)
    original_d: int

    @property
    def m(self):
        return self.parts.shape[1]

    @property
    def length(self):
        return self.parts.shape[2]

    @property
    def mode(self):
        return numeric.infer_mode(self.parts)

    def local(self, gamma_n):
        """The slices of the partitions in ``gamma_n`` (1-based), keyed by partition."""
        return {k: self.parts[k - 1] for k in sorted(gamma_n)}


def slice_gradients(gradients, m, mode=None):
    """Zero-pad every gradient to ``m * ceil(d/m)`` and split it into ``m`` parts."""
    if m < 1:
        raise InvalidArgs("m must be positive")
    if mode is None:
        mode = _guess_mode(gradients)
    g = numeric.asarray(gradients, mode)
    if g.ndim != 2:
        raise InvalidArgs("gradients must be a K x d array")
    K, d = g.shape
    L = math.ceil(d / m)
    padded = numeric.zeros((K, m * L), mode)
    padded[:, :d] = g
    return SlicedGradients(padded.reshape(K, m, L), d)


def unslice(sliced):
    K = sliced.parts.shape[0]
    return sliced.parts.reshape(K, -1)[:, :sliced.original_d]


def _guess_mode(values):
    arr = np.asarray(values, dtype=object)
    flat = arr.ravel()
    if flat.size and all(isinstance(v, (numeric.Fraction, int, np.integer, str)) for v in flat):
        return EXACT
    return FLOAT


@dataclass(frozen=True)
class CodedShare:
    worker: int
    alpha: object
    payload: np.ndarray

    @property
    def mode(self):
        return numeric.infer_mode(self.payload)

    def to_dict(self):
        mode = self.mode
        d = {"worker": self.worker, "alpha": numeric.scalar_to_json(self.alpha, mode)}
        d["payload"] = [numeric.scalar_to_json(v, mode) for v in np.ravel(self.payload)]
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc, mode=None):
        if mode is None:
            mode = EXACT if isinstance(doc["alpha"], str) else FLOAT
        return cls(
            int(doc["worker"]),
            numeric.scalar_from_json(doc["alpha"], mode),
            numeric.asarray(doc["payload"], mode),
        )

    @classmethod
    def from_json(cls, text, mode=None):
        return cls.from_dict(json.loads(text), mode)


def _lagrange_beta(x, betas, l):
    """prod_{u != l} (x - beta_u) / (beta_l - beta_u)."""
    out = 1
    for u, bu in enumerate(betas):
        if u != l:
            out = out * (x - bu) / (betas[l] - bu)
    return out


def _placement_factor(x, alphas, beta, non_holders):
    """prod over workers j not holding the partition of (x - alpha_j) / (beta - alpha_j)."""
    out = 1
    for j in non_holders:
        out = out * (x - alphas[j - 1]) / (beta - alphas[j - 1])
    return out


def share_coefficients(n, p, grid):
    """Coefficient of slice ``l`` of partition ``i`` in worker ``n``'s share.

    Returns ``{i: [c_1, ..., c_m]}`` over the partitions ``i`` held by ``n``.
    """
    sets = assignment_sets(p)
    alphas, betas = grid.alphas, grid.betas
    x = alphas[n - 1]
    out = {}
    for i in sorted(p.gamma[n - 1]):
        non_holders = [j for j in range(1, p.n_workers + 1) if j not in sets[i - 1]]
        out[i] = [
            _placement_factor(x, alphas, betas[l], non_holders) * _lagrange_beta(x, betas, l)
            for l in range(len(betas))
        ]
    return out


def encode_share(n, p, grid, local):
    """Worker ``n``'s coded share, computed only from its local slices.

    ``local`` maps partition index to an ``(m, L)`` array and must cover
    exactly the partitions in ``Gamma_n``.
    """
    if not 1 <= n <= p.n_workers:
        raise InvalidArgs(f"worker {n} out of range 1..{p.n_workers}")
    held = p.gamma[n - 1]
    extra = sorted(set(local) - held)
    if extra:
        raise NonLocalAccess(f"worker {n} was given gradients of non-local partitions {extra}")
    missing = sorted(held - set(local))
    if missing:
        raise InvalidArgs(f"worker {n} is missing local partitions {missing}")
    coeffs = share_coefficients(n, p, grid)
    payload = None
    for i, cs in coeffs.items():
        parts = local[i]
        if parts.shape[0] != len(grid.betas):
            raise InvalidArgs(f"partition {i} has {parts.shape[0]} slices, grid expects {len(grid.betas)}")
        for l, c in enumerate(cs):
            term = parts[l] * c
            payload = term if payload is None else payload + term
    return CodedShare(n, grid.alphas[n - 1], payload)


@dataclass(frozen=True)
class UniversalPolynomial:
    coeffs: np.ndarray   # shape (D + 1, L), ascending powers

    @property
    def degree(self):
        return len(numeric.trim(self.coeffs)) - 1

    @property
    def length(self):
        return self.coeffs.shape[1]

    def __call__(self, x):
        return numeric.horner(self.coeffs, x)

    def derivative(self):
        return UniversalPolynomial(numeric.poly_derivative(self.coeffs))

    def as_float(self):
        return UniversalPolynomial(np.asarray(self.coeffs, dtype=float))


def _linear_factor_poly(roots_and_denoms, one):
    """Coefficients of prod (x - root) / denom as a scalar list."""
    poly = [one]
    for root, denom in roots_and_denoms:
        poly = numeric.poly_mul(poly, [-root / denom, one / denom])
    return poly


def universal_poly(p, grid, sliced):
    """Build f(x) directly from all gradients (oracle side, full knowledge)."""
    sets = assignment_sets(p)
    alphas, betas = grid.alphas, grid.betas
    m, L = sliced.m, sliced.length
    mode = sliced.mode
    one = numeric.to_scalar(1, mode)
    N, r = p.n_workers, replication(p)
    coeffs = numeric.zeros((N - r + m, L), mode)
    for l in range(m):
        beta_factor = _linear_factor_poly(
            [(bu, betas[l] - bu) for u, bu in enumerate(betas) if u != l], one
        )
        for i in range(1, p.n_partitions + 1):
            non_holders = [j for j in range(1, N + 1) if j not in sets[i - 1]]
            place = _linear_factor_poly(
                [(alphas[j - 1], betas[l] - alphas[j - 1]) for j in non_holders], one
            )
            scalar_poly = numeric.poly_mul(place, beta_factor)
            for t, c in enumerate(scalar_poly):
                coeffs[t] = coeffs[t] + sliced.parts[i - 1, l] * c
    return UniversalPolynomial(coeffs)


def _check_nodes(points):
    seen = set()
    for alpha, _ in points:
        key = alpha if isinstance(alpha, numeric.Fraction) else float(alpha)
        if key in seen:
            raise DuplicateNode(f"node {alpha!r} appears more than once")
        seen.add(key)


def _stack(points):
    xs = np.array([a for a, _ in points], dtype=object if isinstance(points[0][0], numeric.Fraction) else float)
    ys = np.array([np.ravel(y) for _, y in points])
    if xs.dtype == object:
        ys = ys.astype(object)
    return xs, ys


def _as_points(shares):
    return [(s.alpha, s.payload) if isinstance(s, CodedShare) else (s[0], s[1]) for s in shares]


def interpolate_exact(shares, degree):
    """Interpolate ``f`` of the declared degree from the first ``degree + 1`` shares."""
    points = _as_points(shares)
    if len(points) < degree + 1:
        raise InsufficientShares(f"need {degree + 1} shares, got {len(points)}")
    _check_nodes(points)
    xs, ys = _stack(points[: degree + 1])
    return UniversalPolynomial(numeric.interpolate(xs, ys))


def _berlekamp_welch(xs, ys, degree, budget):
    """Scalar Berlekamp-Welch with the smallest consistent error-locator degree.

    Returns (coefficients of f, indices of disagreeing points).
    """
    n = len(xs)
    for e in range(0, budget + 1):
        if n < degree + 2 * e + 1:
            break
        n_q = degree + e + 1
        A, b = [], []
        for x, y in zip(xs, ys):
            powers = [x ** t for t in range(n_q)]
            A.append(powers + [-y * powers[t] for t in range(e)])
            b.append(y * x ** e)
        sol = numeric.solve_exact(A, b)
        if sol is None:
            continue
        Q = sol[:n_q]
        E = sol[n_q:] + [numeric.Fraction(1)]
        f, rem = numeric.poly_divmod(Q, E)
        if any(c != 0 for c in rem):
            continue
        f = (f + [numeric.Fraction(0)] * (degree + 1))[: degree + 1]
        bad = [i for i, (x, y) in enumerate(zip(xs, ys)) if numeric.horner(f, x) != y]
        if len(bad) <= e:
            return f, bad
    raise TooManyErrors(f"no degree-{degree} polynomial agrees with all but {budget} of {n} points")


@dataclass
class DecodeResult:
    poly: UniversalPolynomial
    flagged: set = field(default_factory=set)


def decode_with_errors(shares, a, degree):
    """Recover ``f`` from responses of which at most ``a`` are corrupted.

    A fit through ``degree + 1`` trusted points is validated on every vector
    component; the first inconsistent component is decoded with
    Berlekamp-Welch, the workers it exposes are dropped, and the loop repeats
    with the reduced error budget. Corruptions therefore share one locator per
    worker regardless of which components they touch.
    """
    shares = list(shares)
    need = degree + 2 * a + 1
    if len(shares) < need:
        raise InsufficientShares(f"need {need} shares for degree {degree} with a={a}, got {len(shares)}")
    points = _as_points(shares)
    _check_nodes(points)
    workers = [s.worker if isinstance(s, CodedShare) else i for i, s in enumerate(shares)]
    xs, ys = _stack(points)
    exact = xs.dtype == object
    if not exact:
        if a > 0:
            raise FloatModeUnsupported("adversary decoding requires exact rational arithmetic")
        return DecodeResult(UniversalPolynomial(numeric.interpolate(xs[: degree + 1], ys[: degree + 1])))

    keep = list(range(len(xs)))
    flagged = set()
    budget = a
    while True:
        fit = keep[: degree + 1]
        rest = keep[degree + 1:]
        coeffs = numeric.interpolate(xs[fit], ys[fit])
        bad_component = None
        for i in rest:
            diff = numeric.horner(coeffs, xs[i]) != ys[i]
            if np.any(diff):
                bad_component = int(np.flatnonzero(diff)[0])
                break
        if bad_component is None:
            return DecodeResult(UniversalPolynomial(coeffs), flagged)
        if budget == 0:
            raise TooManyErrors(f"responses disagree beyond the adversary budget a={a}")
        sub_x = [xs[i] for i in keep]
        sub_y = [ys[i, bad_component] for i in keep]
        _, bad = _berlekamp_welch(sub_x, sub_y, degree, budget)
        dropped = [keep[i] for i in bad]
        flagged |= {workers[i] for i in dropped}
        budget -= len(dropped)
        keep = [i for i in keep if i not in dropped]


def recover_aggregate(f, grid, original_d):
    """Concatenate f(beta_1), ..., f(beta_m) and drop the zero padding."""
    pieces = [np.ravel(f(b)) for b in grid.betas]
    return np.concatenate(pieces)[:original_d]


def encoding_matrix(p, grid, length, mode=None):
    """The linear map from stacked slices to stacked shares.

    Columns are ordered (partition, slice, component) and rows (worker,
    component), so ``M @ sliced.parts.ravel()`` equals the concatenated
    payloads of workers 1..N.
    """
    mode = mode or grid.mode
    m = len(grid.betas)
    K, N, L = p.n_partitions, p.n_workers, length
    M = numeric.zeros((N * L, K * m * L), mode)
    eye = np.arange(L)
    for n in range(1, N + 1):
        for i, cs in share_coefficients(n, p, grid).items():
            for l, c in enumerate(cs):
                col0 = ((i - 1) * m + l) * L
                M[(n - 1) * L + eye, col0 + eye] = c
    return M


@dataclass(frozen=True)
class Scheme:
    """Parameters of one exact-coding instance."""

    placement: object
    s: int
    a: int
    m: int
    grid: EvaluationGrid
    mode: str = EXACT

    @property
    def degree(self):
        return self.placement.n_workers - replication(self.placement) + self.m - 1

    @property
    def min_responses(self):
        return self.degree + 2 * self.a + 1

    def slice(self, gradients):
        return slice_gradients(gradients, self.m, self.mode)

    def encode(self, n, local):
        return encode_share(n, self.placement, self.grid, local)

    def encode_all(self, sliced):
        return [self.encode(n, sliced.local(self.placement.gamma[n - 1]))
                for n in range(1, self.placement.n_workers + 1)]

    def decode(self, shares):
        return decode_with_errors(shares, self.a, self.degree)

    def aggregate(self, shares, original_d):
        result = self.decode(shares)
        return recover_aggregate(result.poly, self.grid, original_d), result.flagged


def make_scheme(p, s=0, a=0, mode=EXACT, m=None, grid=None, strict=True):
    """Scheme with ``m = r - 2a - s`` unless given; ``strict`` enforces feasibility."""
    numeric.check_mode(mode)
    r = replication(p)
    if m is None:
        m = r - 2 * a - s
        if m < 1:
            if strict:
                raise Infeasible(f"r={r} <= 2a+s={2 * a + s}")
            m = 1
    if m < 1:
        raise InvalidArgs("m must be positive")
    if strict and m > r - 2 * a - s:
        raise Infeasible(f"m={m} exceeds r-2a-s={r - 2 * a - s}")
    if mode == FLOAT and a > 0 and strict:
        raise FloatModeUnsupported("adversary tolerance requires exact mode")
    if grid is None:
        grid = default_grid(p.n_workers, m, mode)
    if len(grid.alphas) != p.n_workers or len(grid.betas) != m:
        raise InvalidArgs("grid size does not match the placement and m")
    return Scheme(p, s, a, m, grid, mode)
