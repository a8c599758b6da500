"""Approximate decoding with Berrut's rational interpolant, plus node analytics.

The exact scheme needs ``N - s`` responses and a well-conditioned polynomial
fit. Here the master instead fits Berrut's interpolant
``sum_i (-1)^i / (x - x_i) f_i / sum_j (-1)^j / (x - x_j)`` through whatever
responses arrived and evaluates it at the beta points.
"""

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgs, OutOfRegime, TooFewShares
from .exact_coding import CodedShare, EvaluationGrid, _resolve_collisions

GOLDEN = (math.sqrt(5) - 1) / 2


def chebyshev_second_kind(N):
    """The N + 1 points cos(k pi / N), k = 0..N, in descending order."""
    if N < 1:
        raise InvalidArgs("N must be >= 1")
    pts = np.cos(np.arange(N + 1) * np.pi / N)
    # pin the exact values that cos() misses by an ulp
    pts[0], pts[-1] = 1.0, -1.0
    if N % 2 == 0:
        pts[N // 2] = 0.0
    return pts


def approx_grid(N, m):
    """Chebyshev worker nodes and first-kind betas rescaled into the node hull."""
    alphas = [math.cos(n * math.pi / N) for n in range(1, N + 1)]
    lo, hi = min(alphas), max(alphas)
    t = [math.cos((2 * l - 1) * math.pi / (2 * m)) for l in range(1, m + 1)]
    betas = [lo + (ti + 1) / 2 * (hi - lo) for ti in t]
    betas = _resolve_collisions(alphas, betas)
    return EvaluationGrid(tuple(alphas), tuple(betas))


@dataclass(frozen=True)
class BerrutInterpolant:
    nodes: np.ndarray    # strictly descending
    values: np.ndarray   # (n + 1, L)

    @classmethod
    def fit(cls, nodes, values):
        """Sort the nodes descending; signs alternate in that positional order."""
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        order = np.argsort(-nodes, kind="stable")
        nodes, values = nodes[order], values[order]
        if np.any(np.diff(nodes) >= 0):
            raise InvalidArgs("Berrut nodes must be distinct")
        return cls(nodes, values)

    @property
    def signs(self):
        return np.where(np.arange(len(self.nodes)) % 2 == 0, 1.0, -1.0)

    def basis(self, x):
        """phi_i(x) for an array of off-node points, shape (len(x), n + 1)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        t = self.signs / (x[:, None] - self.nodes[None, :])
        return t / t.sum(axis=1, keepdims=True)

    def __call__(self, x):
        return berrut_eval(self, x)


def berrut_eval(interp, x):
    """Evaluate at a scalar (returns length-L vector) or an array of points."""
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((len(xs), interp.values.shape[1]))
    diff = xs[:, None] - interp.nodes[None, :]
    hit = diff == 0
    on_node = hit.any(axis=1)
    if on_node.any():
        out[on_node] = interp.values[np.argmax(hit[on_node], axis=1)]
    off = ~on_node
    if off.any():
        t = interp.signs / diff[off]
        out[off] = (t @ interp.values) / t.sum(axis=1, keepdims=True)
    return out[0] if scalar else out


def approx_decode(received, betas, original_d):
    """Approximate aggregate from any >= 2 shares of the float-mode scheme."""
    received = list(received)
    if len(received) < 2:
        raise TooFewShares(f"Berrut decoding needs at least 2 shares, got {len(received)}")
    pts = [(s.alpha, s.payload) if isinstance(s, CodedShare) else s for s in received]
    interp = BerrutInterpolant.fit([float(a) for a, _ in pts], [np.ravel(np.asarray(v, dtype=float)) for _, v in pts])
    pieces = [berrut_eval(interp, float(b)) for b in betas]
    return np.concatenate(pieces)[:original_d]


def _lebesgue_function(nodes, signs, x):
    t = signs / (x - nodes)
    return np.abs(t).sum() / abs(t.sum())


def golden_section_max(fn, lo, hi, iters=60):
    """Maximize a unimodal-ish scalar function on [lo, hi]; returns (x, fn(x))."""
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(d)
    x = (a + b) / 2
    return x, fn(x)


def lebesgue_constant_estimate(nodes, grid_points_per_interval=50):
    """Lower estimate of max_x sum_i |phi_i(x)| over the node hull.

    Dense interior samples of every inter-node interval, followed by a
    golden-section refinement inside the best interval.
    """
    nodes = np.sort(np.asarray(nodes, dtype=float))[::-1]
    if len(nodes) < 2:
        raise InvalidArgs("need at least 2 nodes")
    signs = np.where(np.arange(len(nodes)) % 2 == 0, 1.0, -1.0)
    best, best_k = 1.0, None
    frac = np.arange(1, grid_points_per_interval + 1) / (grid_points_per_interval + 1)
    for k in range(len(nodes) - 1):
        hi, lo = nodes[k], nodes[k + 1]
        xs = hi - frac * (hi - lo)
        t = signs[None, :] / (xs[:, None] - nodes[None, :])
        vals = np.abs(t).sum(axis=1) / np.abs(t.sum(axis=1))
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, best_k = float(vals[j]), k
    if best_k is not None:
        hi, lo = nodes[best_k], nodes[best_k + 1]
        eps = (hi - lo) * 1e-9
        _, refined = golden_section_max(lambda x: _lebesgue_function(nodes, signs, x), lo + eps, hi - eps)
        best = max(best, float(refined))
    return best


@dataclass(frozen=True)
class NodeQualityReport:
    rho: float
    nu: float
    lebesgue_estimate: float
    lebesgue_bound: float

    def to_json(self):
        return json.dumps(asdict(self))


def well_spaced_constants(nodes, grid_points_per_interval=50):
    """Smallest rho, nu >= 1 making the node set well spaced, by enumeration.

    With ascending nodes x_0 < ... < x_n, rho bounds
    (x_{k+1} - x_k) / (x_{k+1} - x_j) * (k + 1 - j) for j <= k and
    (x_{k+1} - x_k) / (x_j - x_k) * (j - k) for j > k, while nu bounds the
    ratio of adjacent gaps in both directions.
    """
    x = np.sort(np.asarray(nodes, dtype=float))
    n = len(x) - 1
    if n < 2:
        raise InvalidArgs("need at least 3 nodes")
    if np.any(np.diff(x) <= 0):
        raise InvalidArgs("nodes must be distinct")
    gaps = np.diff(x)
    rho = 1.0
    for k in range(n):
        j = np.arange(0, k + 1)
        rho = max(rho, float(np.max(gaps[k] / (x[k + 1] - x[j]) * (k + 1 - j))))
        j = np.arange(k + 1, n + 1)
        rho = max(rho, float(np.max(gaps[k] / (x[j] - x[k]) * (j - k))))
    ratios = gaps[1:] / gaps[:-1]
    nu = max(1.0, float(np.max(ratios)), float(np.max(1 / ratios)))
    est = lebesgue_constant_estimate(x, grid_points_per_interval)
    bound = (nu + 1) * (1 + 2 * rho * math.log(n))
    return NodeQualityReport(rho, nu, est, bound)


@dataclass(frozen=True)
class ErrorBoundReport:
    s1: int
    parity: str
    bound: float
    norms: tuple   # (||f'||, ||f''||)
    nu: float

    def to_json(self):
        return json.dumps(asdict(self))


def berrut_nu(s1):
    return (s1 + 1) * (s1 + 3) * math.pi ** 2 / 4


def berrut_error_bound(N, s1, norm_f1, norm_f2):
    """Sup-norm error bound for Berrut interpolation on Chebyshev subsets.

    The nodes are the N + 1 points cos(k pi / N) with ``s1`` of them removed.
    The bound is ``2 (1 + nu) sin((s1 + 1) pi / (2N))`` times ``||f''||`` when
    ``N - s1`` is odd and times ``||f''|| + ||f'||`` when it is even.
    """
    if s1 < 0:
        raise InvalidArgs("s1 must be non-negative")
    if s1 >= N - 2:
        raise OutOfRegime(f"s1={s1} must be below N-2={N - 2}")
    nu = berrut_nu(s1)
    scale = 2 * (1 + nu) * math.sin((s1 + 1) * math.pi / (2 * N))
    odd = (N - s1) % 2 == 1
    bound = scale * (norm_f2 if odd else norm_f2 + norm_f1)
    return ErrorBoundReport(s1, "odd" if odd else "even", bound, (norm_f1, norm_f2), nu)


def family_deletions(N, n_nodes):
    """How many of the N + 1 family points are absent when ``n_nodes`` workers answer.

    Worker nodes are cos(n pi / N) for n = 1..N, so the point 1 = cos(0) is
    never present: the count is ``N + 1 - n_nodes``.
    """
    return N + 1 - n_nodes


def max_norm_derivatives(poly, interval=(-1.0, 1.0), samples=1000):
    """(||f'||, ||f''||) in the max norm over the interval, max over components."""
    coeffs = np.asarray(getattr(poly, "coeffs", poly), dtype=float)
    if coeffs.ndim == 1:
        coeffs = coeffs[:, None]
    out = []
    for order in (1, 2):
        dcoeffs = coeffs
        for _ in range(order):
            dcoeffs = dcoeffs[1:] * np.arange(1, len(dcoeffs))[:, None] if len(dcoeffs) > 1 else dcoeffs[:1] * 0
        out.append(_max_abs_poly(dcoeffs, interval, samples))
    return tuple(out)


def _max_abs_poly(coeffs, interval, samples):
    lo, hi = interval
    xs = np.linspace(lo, hi, samples)
    vals = np.abs(_polyval_cols(coeffs, xs))          # (samples, L)
    best = float(vals.max()) if vals.size else 0.0
    step = xs[1] - xs[0]
    # golden-section refinement around every column's grid maximum at once
    j = np.argmax(vals, axis=0)
    a = np.maximum(lo, xs[j] - step)
    b = np.minimum(hi, xs[j] + step)
    cols = np.arange(coeffs.shape[1])

    def fn(x):
        return np.abs(_polyval_cols(coeffs, x)[cols, cols])

    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(c), fn(d)
    for _ in range(60):
        left = fc > fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = np.where(left, b - GOLDEN * (b - a), d)
        d_new = np.where(left, c, a + GOLDEN * (b - a))
        fc_new = np.where(left, fn(c_new), fd)
        fd_new = np.where(left, fc, fn(d_new))
        c, d, fc, fd = c_new, d_new, fc_new, fd_new
    return max(best, float(np.max(fn((a + b) / 2))))


def _polyval_cols(coeffs, xs):
    acc = np.zeros((len(xs), coeffs.shape[1])) + coeffs[-1]
    for c in coeffs[-2::-1]:
        acc = acc * xs[:, None] + c
    return acc
