"""Coded evaluation of a matrix polynomial h at the aggregated gradient matrix.

Worker ``n`` sends ``h(F(alpha_n))`` where ``F(x) = sum_i G_i prod_{j not
holding i} (x - alpha_j) / (beta - alpha_j)``, so the shares are samples of
the matrix polynomial ``h(F(x))`` of degree ``(N - r) deg h`` and
``h(sum_k G_k) = h(F(beta))``.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import numeric
from .errors import Infeasible, InvalidArgs, NonLocalAccess, NotSquare
from .exact_coding import CodedShare, EvaluationGrid, decode_with_errors
from .numeric import EXACT
from .placement import assignment_sets, replication


@dataclass(frozen=True)
class MatrixPoly:
    """h(X) = c_0 I + c_1 X + ... + c_D X^D."""

    coefficients: tuple

    def __post_init__(self):
        if len(self.coefficients) < 2:
            raise InvalidArgs("matrix polynomial needs degree >= 1")
        if self.coefficients[-1] == 0:
            raise InvalidArgs("leading coefficient must be nonzero")

    @property
    def degree(self):
        return len(self.coefficients) - 1


def eval_matrix_poly(h, X):
    """Horner evaluation of ``h`` at the square matrix ``X``."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {X.shape}")
    d = X.shape[0]
    mode = numeric.infer_mode(X)
    eye = numeric.zeros((d, d), mode)
    for i in range(d):
        eye[i, i] = numeric.to_scalar(1, mode)
    acc = eye * h.coefficients[-1]
    for c in h.coefficients[-2::-1]:
        acc = acc @ X + eye * c
    return acc


def matrix_feasible(N, s, a, deg_h, placement=None):
    """Minimal replication ``N - floor((N - 2a - s - 1) / deg_h)``.

    Returns ``(r_min, ok)`` where ``ok`` says whether ``placement`` meets it
    (``None`` when no placement is given).
    """
    if deg_h < 1:
        raise InvalidArgs("deg_h must be >= 1")
    slack = N - 2 * a - s - 1
    if slack < 0:
        raise Infeasible(f"N - 2a - s - 1 = {slack} < 0")
    r_min = N - slack // deg_h
    ok = None if placement is None else replication(placement) >= r_min
    return r_min, ok


@dataclass(frozen=True)
class MatrixShare:
    worker: int
    alpha: object
    payload: np.ndarray   # d x d

    def __post_init__(self):
        shape = np.shape(self.payload)
        if len(shape) != 2 or shape[0] != shape[1]:
            raise NotSquare(f"matrix share must be square, got {shape}")

    @property
    def d(self):
        return self.payload.shape[0]

    def to_dict(self):
        mode = numeric.infer_mode(self.payload)
        return {
            "worker": self.worker,
            "alpha": numeric.scalar_to_json(self.alpha, mode),
            "d": self.d,
            "payload": [numeric.scalar_to_json(v, mode) for v in self.payload.ravel()],
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc, mode=None):
        if mode is None:
            mode = EXACT if isinstance(doc["alpha"], str) else numeric.FLOAT
        d = int(doc["d"])
        payload = numeric.asarray(doc["payload"], mode).reshape(d, d)
        return cls(int(doc["worker"]), numeric.scalar_from_json(doc["alpha"], mode), payload)


def _coded_argument(n, p, alphas, beta, local):
    sets = assignment_sets(p)
    x = alphas[n - 1]
    acc = None
    for i in sorted(local):
        factor = 1
        for j in range(1, p.n_workers + 1):
            if j not in sets[i - 1]:
                factor = factor * (x - alphas[j - 1]) / (beta - alphas[j - 1])
        term = np.asarray(local[i]) * factor
        acc = term if acc is None else acc + term
    return acc


def matrix_encode_share(n, p, alphas, beta, local, h):
    """Worker ``n``'s share ``h(sum_{i in Gamma_n} G_i * placement factor)``."""
    held = p.gamma[n - 1]
    extra = sorted(set(local) - held)
    if extra:
        raise NonLocalAccess(f"worker {n} was given matrices of non-local partitions {extra}")
    missing = sorted(held - set(local))
    if missing:
        raise InvalidArgs(f"worker {n} is missing local partitions {missing}")
    return MatrixShare(n, alphas[n - 1], eval_matrix_poly(h, _coded_argument(n, p, alphas, beta, local)))


@dataclass
class MatrixDecodeResult:
    coeffs: np.ndarray     # (D + 1, d, d)
    flagged: set

    @property
    def degree(self):
        return len(numeric.trim(self.coeffs.reshape(len(self.coeffs), -1))) - 1


def matrix_decode(shares, a, degree):
    """Interpolate h(F(x)) entry-wise, tolerating ``a`` corrupted matrices.

    Entries are decoded as one vector so the error locator is shared by all
    entries of a worker's matrix.
    """
    shares = list(shares)
    if not shares:
        raise InvalidArgs("no shares")
    d = shares[0].d
    flat = [CodedShare(s.worker, s.alpha, s.payload.ravel()) for s in shares]
    result = decode_with_errors(flat, a, degree)
    coeffs = result.poly.coeffs.reshape(len(result.poly.coeffs), d, d)
    return MatrixDecodeResult(coeffs, result.flagged)


def matrix_recover(hf, beta):
    """Evaluate the decoded matrix polynomial at ``beta``."""
    coeffs = hf.coeffs if isinstance(hf, MatrixDecodeResult) else np.asarray(hf)
    return numeric.horner(coeffs, beta)


@dataclass(frozen=True)
class MatrixScheme:
    placement: object
    s: int
    a: int
    h: MatrixPoly
    alphas: tuple
    beta: object
    mode: str = EXACT

    @property
    def degree(self):
        return (self.placement.n_workers - replication(self.placement)) * self.h.degree

    @property
    def min_responses(self):
        return self.degree + 2 * self.a + 1

    def encode(self, n, local):
        return matrix_encode_share(n, self.placement, self.alphas, self.beta, local, self.h)

    def encode_all(self, matrices):
        return [self.encode(n, {k: matrices[k - 1] for k in sorted(self.placement.gamma[n - 1])})
                for n in range(1, self.placement.n_workers + 1)]

    def decode(self, shares):
        return matrix_decode(shares, self.a, self.degree)

    def evaluate(self, shares):
        result = self.decode(shares)
        return matrix_recover(result, self.beta), result.flagged


def make_matrix_scheme(p, h, s=0, a=0, mode=EXACT, alphas=None, beta=None, strict=True):
    numeric.check_mode(mode)
    if strict:
        r_min, ok = matrix_feasible(p.n_workers, s, a, h.degree, p)
        if not ok:
            raise Infeasible(f"replication {replication(p)} is below the required {r_min}")
    coeffs = tuple(numeric.to_scalar(c, mode) for c in h.coefficients)
    h = MatrixPoly(coeffs)
    if alphas is None:
        alphas = tuple(numeric.to_scalar(n, mode) for n in range(1, p.n_workers + 1))
    if beta is None:
        beta = numeric.to_scalar(0, mode)
    EvaluationGrid(tuple(alphas), (beta,))   # distinctness check
    return MatrixScheme(p, s, a, h, tuple(alphas), beta, mode)
