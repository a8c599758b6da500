"""Logical-time master/worker simulation and a least-squares training loop."""

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import numeric
from .approx_coding import (
    approx_decode,
    berrut_error_bound,
    family_deletions,
    max_norm_derivatives,
)
from .errors import ConfigMismatch, DecodeFailure, DimensionMismatch, GradCodeError, InvalidArgs
from .exact_coding import Scheme, universal_poly
from .matrix_coding import MatrixScheme
from .numeric import EXACT

# -- latency and corruption models ----------------------------------------


@dataclass(frozen=True)
class Deterministic:
    t: float


@dataclass(frozen=True)
class ShiftedExponential:
    shift: float
    rate: float

    def __post_init__(self):
        if self.shift < 0 or self.rate <= 0:
            raise InvalidArgs("shifted exponential needs shift >= 0 and rate > 0")


@dataclass(frozen=True)
class WorkerProfile:
    latency_model: object = Deterministic(1.0)
    adversarial: bool = False


def straggler_sample(model, seed, worker, round_index=0):
    """Latency of ``worker`` in one round; a pure function of its arguments."""
    if isinstance(model, Deterministic):
        return float(model.t)
    if isinstance(model, ShiftedExponential):
        u = np.random.default_rng([seed, round_index, worker]).random()
        return model.shift - math.log1p(-u) / model.rate
    raise InvalidArgs(f"unknown latency model {model!r}")


@dataclass(frozen=True)
class GaussianNoise:
    sigma: float


@dataclass(frozen=True)
class SignFlipScale:
    c: float


@dataclass(frozen=True)
class Replace:
    vector: tuple


def _noise(shape, sigma, rng, exact):
    eps = rng.normal(0.0, sigma, size=shape)
    if exact:
        return np.vectorize(lambda v: Fraction(str(round(float(v), 6))), otypes=[object])(eps)
    return eps


def corrupt_share(share, strategy, seed=0):
    """Return ``share`` with payload ``v + eps`` for a nonzero ``eps``."""
    payload = share.payload
    exact = payload.dtype == object
    mode = EXACT if exact else numeric.FLOAT
    rng = np.random.default_rng([seed, share.worker, 0xA11])
    if isinstance(strategy, GaussianNoise):
        new = payload + _noise(payload.shape, strategy.sigma, rng, exact)
    elif isinstance(strategy, SignFlipScale):
        new = payload * numeric.to_scalar(strategy.c, mode)
    elif isinstance(strategy, Replace):
        new = numeric.asarray(strategy.vector, mode).reshape(payload.shape)
    else:
        raise InvalidArgs(f"unknown corruption strategy {strategy!r}")
    # eps = 0 is not a corruption; redraw until the payload actually changes
    while not np.any(new != payload):
        new = payload + _noise(payload.shape, 1.0, rng, exact)
    return type(share)(share.worker, share.alpha, new)


# -- rounds --------------------------------------------------------------


@dataclass(frozen=True)
class Count:
    k: int


@dataclass(frozen=True)
class Deadline:
    t: float


@dataclass(frozen=True)
class All:
    pass


@dataclass
class RoundOutcome:
    responded: list           # workers in arrival order
    shares: list              # delivered shares, same order
    cutoff: object
    latencies: dict           # worker -> latency
    corrupted: set = field(default_factory=set)


def _apply_cutoff(order, latencies, cutoff):
    if isinstance(cutoff, Count):
        return order[: cutoff.k]
    if isinstance(cutoff, Deadline):
        return [n for n in order if latencies[n] <= cutoff.t]
    if isinstance(cutoff, All):
        return list(order)
    raise InvalidArgs(f"unknown cutoff {cutoff!r}")


def _round_seed(seed, round_index):
    return int(np.random.SeedSequence([seed, round_index]).generate_state(1)[0])


def simulate_round(p, scheme, gradients, profiles, cutoff, seed, round_index=0,
                   corruption=SignFlipScale(-2)):
    """One synchronous round: encode, sample arrivals, cut off, corrupt.

    ``gradients`` is a K x d array for vector schemes or a list of K square
    matrices for the matrix scheme.
    """
    if scheme.placement != p:
        raise ConfigMismatch("scheme was built for a different placement")
    if len(profiles) != p.n_workers:
        raise ConfigMismatch(f"{len(profiles)} profiles for {p.n_workers} workers")
    n_adv = sum(1 for prof in profiles if prof.adversarial)
    if n_adv > scheme.a:
        raise ConfigMismatch(f"{n_adv} adversarial profiles exceed the scheme budget a={scheme.a}")
    if isinstance(scheme, MatrixScheme):
        shares = scheme.encode_all(gradients)
    else:
        shares = scheme.encode_all(scheme.slice(gradients))
    latencies = {n: straggler_sample(prof.latency_model, seed, n, round_index)
                 for n, prof in enumerate(profiles, start=1)}
    order = sorted(latencies, key=lambda n: (latencies[n], n))
    responded = _apply_cutoff(order, latencies, cutoff)
    delivered, corrupted = [], set()
    for n in responded:
        share = shares[n - 1]
        if profiles[n - 1].adversarial:
            share = corrupt_share(share, corruption, seed=_round_seed(seed, round_index))
            corrupted.add(n)
        delivered.append(share)
    return RoundOutcome(responded, delivered, cutoff, latencies, corrupted)


# -- training --------------------------------------------------------------


def partial_gradient(X, y, w, total):
    """Gradient of sum_{(x, y) in partition} (w.x - y)^2 / total."""
    X = np.asarray(X)
    y = np.asarray(y)
    w = np.asarray(w)
    if X.ndim != 2 or X.shape[1] != w.shape[0] or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape}, y {y.shape}, w {w.shape} are inconsistent")
    residual = X @ w - y
    return (X.T @ residual) * 2 / total


def loss(X, y, w):
    r = np.asarray(X) @ np.asarray(w) - np.asarray(y)
    return (r @ r) / len(r)


@dataclass(frozen=True)
class TrainConfig:
    X: np.ndarray
    y: np.ndarray
    K: int
    eta: object
    iterations: int
    mode: str = "exact"       # "exact" | "approx"

    def __post_init__(self):
        if len(self.X) % self.K:
            raise InvalidArgs(f"{len(self.X)} samples do not split into {self.K} equal partitions")
        if self.eta <= 0:
            raise InvalidArgs("learning rate must be positive")
        if self.mode not in ("exact", "approx"):
            raise InvalidArgs(f"unknown training mode {self.mode!r}")

    def partitions(self):
        size = len(self.X) // self.K
        return [(self.X[k * size:(k + 1) * size], self.y[k * size:(k + 1) * size]) for k in range(self.K)]


def make_regression(M, d_feat, seed, noise=0.1, exact=False):
    """Synthetic linear-regression data; exact mode uses small integers."""
    rng = np.random.default_rng(seed)
    if exact:
        X = rng.integers(-3, 4, size=(M, d_feat))
        w_true = rng.integers(-2, 3, size=d_feat)
        y = X @ w_true + rng.integers(-1, 2, size=M)
        return numeric.asarray(X.tolist(), EXACT), numeric.asarray(y.tolist(), EXACT)
    X = rng.normal(size=(M, d_feat))
    w_true = rng.normal(size=d_feat)
    y = X @ w_true + noise * rng.normal(size=M)
    return X, y


@dataclass
class TrainResult:
    losses: list
    weights: list
    log: list          # dict rows: iter, loss, responders, decoder, bound


def centralized_gd(cfg, w0=None):
    """Plain full-batch gradient descent, the reference trajectory."""
    X, y = cfg.X, cfg.y
    w = numeric.zeros(X.shape[1], numeric.infer_mode(X)) if w0 is None else w0
    weights, losses = [w], [loss(X, y, w)]
    for _ in range(cfg.iterations):
        w = w - partial_gradient(X, y, w, len(X)) * cfg.eta
        weights.append(w)
        losses.append(loss(X, y, w))
    return TrainResult(losses, weights, [])


def train_gd(cfg, p, scheme, profiles, seed, cutoff=None, corruption=SignFlipScale(-2)):
    """Gradient descent whose aggregate gradient is decoded from coded shares each round."""
    if not isinstance(scheme, Scheme):
        raise ConfigMismatch("training needs a vector gradient-coding scheme")
    if cfg.K != p.n_partitions:
        raise ConfigMismatch(f"config has K={cfg.K} partitions, placement has {p.n_partitions}")
    N = p.n_workers
    if cutoff is None:
        cutoff = Count(N - scheme.s)
    X, y = cfg.X, cfg.y
    mode = numeric.infer_mode(X)
    if mode != scheme.mode:
        raise ConfigMismatch(f"data are {mode} but the scheme is {scheme.mode}")
    parts = cfg.partitions()
    w = numeric.zeros(X.shape[1], mode)
    weights, losses, log = [w], [loss(X, y, w)], []
    decoder = "berrut" if cfg.mode == "approx" else "exact"
    for t in range(cfg.iterations):
        grads = np.array([partial_gradient(Xk, yk, w, len(X)) for Xk, yk in parts])
        outcome = simulate_round(p, scheme, grads, profiles, cutoff, seed, round_index=t,
                                 corruption=corruption)
        bound = ""
        if cfg.mode == "approx":
            g_hat = approx_decode(outcome.shares, scheme.grid.betas, X.shape[1])
            bound = _approx_bound(p, scheme, grads, len(outcome.shares))
        else:
            try:
                g_hat, _ = scheme.aggregate(outcome.shares, X.shape[1])
            except GradCodeError as exc:
                raise DecodeFailure(f"decoding failed at iteration {t}: {exc}", iteration=t, cause=exc) from exc
        w = w - g_hat * cfg.eta
        weights.append(w)
        losses.append(loss(X, y, w))
        log.append({"iter": t, "loss": losses[-1], "responders": len(outcome.responded),
                    "decoder": decoder, "bound": bound})
    return TrainResult(losses, weights, log)


def _approx_bound(p, scheme, grads, n_received):
    """Error bound for this round using the oracle polynomial, or '' out of regime."""
    N = p.n_workers
    s1 = family_deletions(N, n_received)
    if s1 >= N - 2:
        return ""
    f = universal_poly(p, scheme.grid, scheme.slice(grads))
    f1, f2 = max_norm_derivatives(f)
    return berrut_error_bound(N, s1, f1, f2).bound
