import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gradcode.approx_coding import (
    BerrutInterpolant,
    approx_decode,
    approx_grid,
    berrut_error_bound,
    berrut_eval,
    berrut_nu,
    chebyshev_second_kind,
    family_deletions,
    lebesgue_constant_estimate,
    max_norm_derivatives,
    well_spaced_constants,
)
from gradcode.errors import OutOfRegime, TooFewShares
from gradcode.exact_coding import make_scheme, universal_poly
from gradcode.placement import Placement, generate_placement


def chebyshev_subset(N, s1, rng):
    fam = chebyshev_second_kind(N)
    keep = np.sort(rng.choice(N + 1, N + 1 - s1, replace=False))
    return fam[keep]


def dense_lebesgue(nodes, samples=200001):
    nodes = np.sort(nodes)[::-1]
    xs = np.linspace(nodes[-1], nodes[0], samples)
    xs = xs[~np.isin(xs, nodes)]
    signs = np.where(np.arange(len(nodes)) % 2 == 0, 1.0, -1.0)
    t = signs / (xs[:, None] - nodes[None, :])
    return float(np.max(np.abs(t).sum(1) / np.abs(t.sum(1))))


# -- Chebyshev points ---------------------------------------------------------


def test_chebyshev_small():
    assert chebyshev_second_kind(2).tolist() == [1.0, 0.0, -1.0]
    pts = chebyshev_second_kind(4)
    assert pts == pytest.approx([1, math.sqrt(2) / 2, 0, -math.sqrt(2) / 2, -1], abs=1e-15)


@pytest.mark.parametrize("N", [1, 2, 3, 7, 16, 33])
def test_chebyshev_symmetric_descending(N):
    pts = chebyshev_second_kind(N)
    assert len(pts) == N + 1 and np.all(np.diff(pts) < 0)
    assert np.allclose(pts, -pts[::-1], atol=1e-15)


# -- interpolant ----------------------------------------------------------------


def test_node_hits_return_values_exactly():
    nodes = chebyshev_second_kind(8)
    vals = np.random.default_rng(0).normal(size=(9, 3))
    interp = BerrutInterpolant.fit(nodes, vals)
    for i in range(9):
        assert np.array_equal(berrut_eval(interp, nodes[i]), vals[i])


def test_constant_reproduced():
    interp = BerrutInterpolant.fit(chebyshev_second_kind(7), np.full((8, 1), 2.5))
    assert np.allclose(berrut_eval(interp, np.linspace(-1, 1, 101)), 2.5, atol=1e-13)


def test_square_at_point_three_within_bound():
    nodes = chebyshev_second_kind(8)
    interp = BerrutInterpolant.fit(nodes, nodes ** 2)
    err = abs(berrut_eval(interp, 0.3)[0] - 0.09)
    assert err <= berrut_error_bound(8, 0, 2.0, 2.0).bound


def test_fit_sorts_descending_and_signs_are_positional():
    interp = BerrutInterpolant.fit([-0.5, 0.9, 0.1], [1.0, 2.0, 3.0])
    assert interp.nodes.tolist() == [0.9, 0.1, -0.5]
    assert interp.values[:, 0].tolist() == [2.0, 3.0, 1.0]
    assert interp.signs.tolist() == [1.0, -1.0, 1.0]


@settings(max_examples=50, deadline=None)
@given(st.integers(3, 40), st.integers(0, 10 ** 6))
def test_partition_of_unity_and_no_poles(N, seed):
    rng = np.random.default_rng(seed)
    s1 = int(rng.integers(0, max(1, N - 2)))
    nodes = chebyshev_subset(N, s1, rng)
    interp = BerrutInterpolant.fit(nodes, np.zeros((len(nodes), 1)))
    xs = np.linspace(-1, 1, 5001)
    xs = xs[~np.isin(xs, interp.nodes)]
    phi = interp.basis(xs)
    assert np.allclose(phi.sum(axis=1), 1.0, atol=1e-12)
    denom = (interp.signs / (xs[:, None] - interp.nodes[None, :])).sum(axis=1)
    assert np.all(np.isfinite(denom)) and np.all(denom != 0)


# -- approximate decoding ---------------------------------------------------------


def test_full_replication_constant_is_exact():
    N = 9
    p = Placement.from_sets([{1, 2, 3}] * N)
    scheme = make_scheme(p, s=0, mode="float", m=1, grid=approx_grid(N, 1), strict=False)
    grads = np.random.default_rng(1).normal(size=(3, 5))
    shares = scheme.encode_all(scheme.slice(grads))
    assert np.allclose(approx_decode(shares, scheme.grid.betas, 5), grads.sum(0), atol=1e-12)


def test_too_few_shares():
    with pytest.raises(TooFewShares):
        approx_decode([(0.5, np.array([1.0]))], [0.0], 1)


def test_error_trend_with_more_responses():
    N = 15
    errs = np.zeros(9)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        p = generate_placement(N, 15, 13, "uniform", seed)
        scheme = make_scheme(p, s=1, mode="float", m=1, grid=approx_grid(N, 1), strict=False)
        grads = rng.normal(size=(15, 4))
        shares = scheme.encode_all(scheme.slice(grads))
        order = rng.permutation(N)
        for i, k in enumerate(range(N - 8, N + 1)):
            live = [shares[j] for j in order[:k]]
            errs[i] += np.max(np.abs(approx_decode(live, scheme.grid.betas, 4) - grads.sum(0))) / 20
    # the average error trend is non-increasing: a least-squares slope <= 0
    slope = np.polyfit(np.arange(9), errs, 1)[0]
    assert slope <= 0
    assert errs[-1] <= errs[0]


def test_approx_grid_betas_inside_hull():
    g = approx_grid(15, 3)
    lo, hi = min(g.alphas), max(g.alphas)
    assert all(lo < b < hi for b in g.betas)


# -- Lebesgue constants and spacing ----------------------------------------------


def test_two_nodes_lebesgue_is_one():
    assert lebesgue_constant_estimate([1.0, -1.0]) == pytest.approx(1.0, abs=1e-12)
    assert dense_lebesgue(np.array([1.0, -1.0])) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("N", [5, 8, 13])
def test_estimate_matches_dense_scan(N):
    nodes = chebyshev_second_kind(N)
    est = lebesgue_constant_estimate(nodes)
    dense = dense_lebesgue(nodes)
    assert est == pytest.approx(dense, rel=1e-3)


def test_lebesgue_grows_logarithmically():
    est = [lebesgue_constant_estimate(chebyshev_second_kind(n)) for n in (8, 16, 32)]
    assert est[0] < est[1] < est[2]
    assert est[2] / est[1] < 2 and est[1] / est[0] < 2
    # additive increments of a log-type growth stay bounded
    assert est[2] - est[1] <= 2 * (est[1] - est[0]) + 0.5


def test_equidistant_nu_is_one():
    q = well_spaced_constants(np.linspace(-1, 1, 9))
    assert q.nu == pytest.approx(1.0)


def test_geometric_gaps_nu_is_two():
    x = np.cumsum([0, 1, 2, 4, 8, 16], dtype=float)
    assert well_spaced_constants(x).nu == pytest.approx(2.0)


def brute_rho(x):
    x = np.sort(x)
    n = len(x) - 1
    rho = 1.0
    for k in range(n):
        for j in range(0, k + 1):
            rho = max(rho, (x[k + 1] - x[k]) / (x[k + 1] - x[j]) * (k + 1 - j))
        for j in range(k + 1, n + 1):
            rho = max(rho, (x[k + 1] - x[k]) / (x[j] - x[k]) * (j - k))
    return rho


@pytest.mark.parametrize("seed", range(5))
def test_well_spaced_after_deletions(seed):
    rng = np.random.default_rng(seed)
    nodes = chebyshev_subset(32, 3, rng)
    q = well_spaced_constants(nodes)
    assert math.isfinite(q.rho) and math.isfinite(q.nu)
    assert q.rho == pytest.approx(brute_rho(nodes))
    assert json.loads(q.to_json())["rho"] == q.rho


@pytest.mark.parametrize("n", [8, 16, 32, 64])
def test_lebesgue_bound_holds(n):
    rng = np.random.default_rng(n)
    for s1 in range(0, 4):
        q = well_spaced_constants(chebyshev_subset(n, s1, rng))
        assert q.lebesgue_estimate <= q.lebesgue_bound


# -- error bound --------------------------------------------------------------


def test_nu_formula():
    assert berrut_nu(1) == pytest.approx(2 * math.pi ** 2)
    assert berrut_nu(0) == pytest.approx(3 * math.pi ** 2 / 4)


def test_bound_parity_branches():
    odd = berrut_error_bound(11, 0, 5.0, 2.0)
    even = berrut_error_bound(12, 0, 5.0, 2.0)
    assert odd.parity == "odd" and even.parity == "even"
    scale = 2 * (1 + berrut_nu(0)) * math.sin(math.pi / 22)
    assert odd.bound == pytest.approx(scale * 2.0)
    scale = 2 * (1 + berrut_nu(0)) * math.sin(math.pi / 24)
    assert even.bound == pytest.approx(scale * 7.0)


def test_bound_zero_derivatives():
    assert berrut_error_bound(10, 2, 0.0, 0.0).bound == 0.0


def test_bound_decreases_in_n_with_asymptote():
    vals = [berrut_error_bound(N, 0, 0.0, 1.0).bound for N in range(5, 400, 2)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    N = 10001
    assert berrut_error_bound(N, 0, 0.0, 1.0).bound * N / math.pi == pytest.approx(2 * (1 + 3 * math.pi ** 2 / 4) / 2, rel=1e-3)


def test_out_of_regime():
    with pytest.raises(OutOfRegime):
        berrut_error_bound(5, 3, 1.0, 1.0)


def test_family_deletions():
    assert family_deletions(10, 10) == 1
    assert family_deletions(10, 7) == 4


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 40), st.integers(0, 10 ** 6))
def test_bound_soundness_random_polys(N, seed):
    rng = np.random.default_rng(seed)
    s1 = int(rng.integers(0, N - 2))
    nodes = chebyshev_subset(N, s1, rng)
    coeffs = rng.normal(size=(int(rng.integers(1, 6)), 1))
    f1, f2 = max_norm_derivatives(coeffs)
    interp = BerrutInterpolant.fit(nodes, np.polynomial.polynomial.polyval(nodes, coeffs[:, 0])[:, None])
    xs = np.linspace(-1, 1, 2000)
    err = np.max(np.abs(berrut_eval(interp, xs)[:, 0] - np.polynomial.polynomial.polyval(xs, coeffs[:, 0])))
    assert err <= berrut_error_bound(N, s1, f1, f2).bound + 1e-12


def test_bound_on_scheme_shares():
    # realized stragglers map to family deletions on the worker grid
    N = 13
    rng = np.random.default_rng(3)
    p = generate_placement(N, 6, 11, "uniform", 2)
    scheme = make_scheme(p, s=1, mode="float", m=1, grid=approx_grid(N, 1), strict=False)
    sliced = scheme.slice(rng.normal(size=(6, 3)))
    f = universal_poly(p, scheme.grid, sliced)
    f1, f2 = max_norm_derivatives(f)
    shares = scheme.encode_all(sliced)
    xs = np.linspace(-1, 1, 2000)
    truth = np.array([f(x) for x in xs], dtype=float)
    for stragglers in range(0, 6):
        live = [shares[i] for i in np.sort(rng.choice(N, N - stragglers, replace=False))]
        interp = BerrutInterpolant.fit([sh.alpha for sh in live], [sh.payload for sh in live])
        err = np.max(np.abs(berrut_eval(interp, xs) - truth))
        assert err <= berrut_error_bound(N, family_deletions(N, len(live)), f1, f2).bound


# -- derivative norms ------------------------------------------------------------


def test_norms_of_square_and_constant():
    assert max_norm_derivatives(np.array([0.0, 0.0, 1.0])) == pytest.approx((2.0, 2.0))
    assert max_norm_derivatives(np.array([3.0])) == (0.0, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_norms_match_dense_scan(seed):
    c = np.random.default_rng(seed).normal(size=4)
    xs = np.linspace(-1, 1, 10 ** 6)
    P = np.polynomial.polynomial
    d1 = np.max(np.abs(P.polyval(xs, P.polyder(c))))
    d2 = np.max(np.abs(P.polyval(xs, P.polyder(c, 2))))
    got = max_norm_derivatives(c)
    assert got[0] == pytest.approx(d1, abs=1e-6) and got[1] == pytest.approx(d2, abs=1e-6)
