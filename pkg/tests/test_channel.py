from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import binom

from noisyauth.channel import (DMC, binary_entropy, blahut_arimoto, capacity, choose_anchor, cond_typical_mask,
                               empirical_type, entropy, gamma, hull_distance, imitation_map, is_cond_typical,
                               is_nonredundant, is_typical, sample, statistical_distance, theta, typical_mask)
from noisyauth.errors import DomainError, InfeasibleError

from oracles import bsc_row, grid_hull_distance_two_rows, h2


# -- DMC ----------------------------------------------------------------------------

def test_dmc_rejects_bad_rows():
    with pytest.raises(DomainError):
        DMC([[0.5, 0.4]])
    with pytest.raises(DomainError):
        DMC([[1.2, -0.2]])
    with pytest.raises(DomainError):
        DMC([0.5, 0.5])


def test_dmc_is_read_only():
    W = DMC.bsc(0.1)
    with pytest.raises(ValueError):
        W.matrix[0, 0] = 0.3


def test_channel_file_roundtrip(tmp_path):
    W = DMC([[0.7, 0.2, 0.1], [0.1, 0.1, 0.8]])
    path = tmp_path / "w.json"
    W.save(path)
    data = json.loads(path.read_text())
    assert data["input_size"] == 2 and data["output_size"] == 3
    assert DMC.load(path) == W


def test_channel_file_validates_rows(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"input_size": 1, "output_size": 2, "rows": [[0.5, 0.49]]}))
    with pytest.raises(DomainError):
        DMC.load(path)
    path.write_text(json.dumps({"input_size": 2, "output_size": 2, "rows": [[0.5, 0.5]]}))
    with pytest.raises(DomainError):
        DMC.load(path)


# -- empirical types and distances ----------------------------------------------------

@pytest.mark.parametrize("z,size,freq", [
    ((0, 1, 1, 0), 2, (0.5, 0.5)),
    ((0, 0, 0), 2, (1.0, 0.0)),
    ((2, 0, 2, 2), 3, (0.25, 0.0, 0.75)),
])
def test_empirical_type_examples(z, size, freq):
    t = empirical_type(z, size)
    assert t.n == len(z) and sum(t.counts) == len(z)
    assert np.allclose(t.frequencies, freq)


def test_empirical_type_errors():
    with pytest.raises(DomainError):
        empirical_type([0, 2], 2)
    with pytest.raises(DomainError):
        empirical_type([], 2)


def test_statistical_distance_examples():
    assert statistical_distance([0.3, 0.7], [0.3, 0.7]) == 0
    assert statistical_distance([1, 0], [0, 1]) == 2
    assert statistical_distance([0.9, 0.1], [0.7, 0.3]) == pytest.approx(0.4)
    with pytest.raises(DomainError):
        statistical_distance([1, 0], [1, 0, 0])


dists = st.integers(2, 5).flatmap(
    lambda k: st.lists(st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k), min_size=3, max_size=3))


@given(dists)
@settings(max_examples=60, deadline=None)
def test_statistical_distance_is_metric(raw):
    P, Q, R = (np.asarray(r) / np.sum(r) for r in raw)
    d = statistical_distance
    assert d(P, Q) == pytest.approx(d(Q, P))
    assert d(P, R) <= d(P, Q) + d(Q, R) + 1e-12
    assert d(P, P) == 0
    assert (d(P, Q) == 0) == bool(np.all(P == Q))


# -- hull distance --------------------------------------------------------------------

def test_hull_distance_inside_hull_is_zero():
    rows = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6]])
    res = hull_distance(0.5 * rows[0] + 0.5 * rows[1], rows)
    assert res.distance == pytest.approx(0, abs=1e-7)
    assert np.allclose(res.weights @ rows, 0.5 * rows[0] + 0.5 * rows[1], atol=1e-7)


def test_hull_distance_bsc_example_matches_grid_oracle():
    rows = DMC.bsc(0.3).matrix
    res = hull_distance([0.9, 0.1], rows)
    oracle = grid_hull_distance_two_rows([0.9, 0.1], rows[0], rows[1])
    assert res.distance == pytest.approx(0.4, abs=1e-7)
    assert res.distance == pytest.approx(oracle, abs=1e-5)
    assert np.allclose(res.weights @ rows, [0.7, 0.3], atol=1e-7)


def test_hull_distance_single_row_is_statistical_distance():
    P, Q = [0.2, 0.5, 0.3], [0.6, 0.1, 0.3]
    assert hull_distance(P, [Q]).distance == pytest.approx(statistical_distance(P, Q))


@given(st.integers(2, 4).flatmap(lambda q: st.tuples(
    st.lists(st.floats(0.01, 1), min_size=q, max_size=q),
    st.lists(st.lists(st.floats(0.01, 1), min_size=q, max_size=q), min_size=1, max_size=4))))
@settings(max_examples=60, deadline=None)
def test_hull_distance_result_invariants(data):
    p_raw, rows_raw = data
    P = np.asarray(p_raw) / np.sum(p_raw)
    rows = np.asarray([np.asarray(r) / np.sum(r) for r in rows_raw])
    res = hull_distance(P, rows)
    assert np.all(res.weights >= 0) and res.weights.sum() == pytest.approx(1, abs=1e-9)
    assert res.distance == pytest.approx(np.abs(P - res.weights @ rows).sum(), abs=1e-7)
    assert res.distance <= min(statistical_distance(P, r) for r in rows) + 1e-7


# -- theta, anchors ----------------------------------------------------------------

@pytest.mark.parametrize("p", [0.1, 0.25, 0.05, 0.45])
def test_theta_bsc_matches_oracle(p):
    W = DMC.bsc(p)
    oracle = grid_hull_distance_two_rows(W.row(0), W.row(1), W.row(1))
    assert theta(W) == pytest.approx(oracle, abs=1e-5)
    assert theta(W) == pytest.approx(2 * abs(1 - 2 * p), abs=1e-7)


def test_theta_examples():
    assert theta(DMC.bsc(0.1)) == pytest.approx(1.6)
    assert theta(DMC.bsc(0.25)) == pytest.approx(1.0)
    assert theta(DMC([[0.3, 0.7], [0.3, 0.7]])) == pytest.approx(0, abs=1e-9)
    with pytest.raises(DomainError):
        theta(DMC([[0.3, 0.7]]))


def test_nonredundancy():
    assert is_nonredundant(DMC.bsc(0.1))
    assert is_nonredundant(DMC.identity(3))
    assert not is_nonredundant(DMC([[0.3, 0.7], [0.3, 0.7]]))
    # middle row is the average of the outer rows
    assert not is_nonredundant(DMC([[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]]))


def test_gamma_examples():
    assert gamma(DMC.bsc(0.1), 0, DMC.bsc(0.3)) == pytest.approx(
        grid_hull_distance_two_rows(bsc_row(0.1), bsc_row(0.3, 0), bsc_row(0.3, 1)), abs=1e-5)
    assert gamma(DMC.bsc(0.1), 0, DMC.bsc(0.3)) == pytest.approx(0.4)
    W1 = DMC([[0.6, 0.4], [0.1, 0.9]])
    assert gamma(W1, 0, DMC([[0.6, 0.4], [0.5, 0.5]])) == pytest.approx(0, abs=1e-9)
    assert gamma(DMC([[1.0, 0.0]]), 0, DMC([[0.0, 1.0]])) == pytest.approx(2)
    with pytest.raises(DomainError):
        gamma(DMC.bsc(0.1), 0, DMC.identity(3))


def test_choose_anchor_bsc_pair_uses_grid_oracle_value():
    a, g = choose_anchor(DMC.bsc(0.05), DMC.bsc(0.25))
    oracle = grid_hull_distance_two_rows(bsc_row(0.05), bsc_row(0.25, 0), bsc_row(0.25, 1))
    assert a in (0, 1)
    assert g == pytest.approx(oracle, abs=1e-5)
    assert g == pytest.approx(0.4, abs=1e-7)


def test_choose_anchor_infeasible_and_outside_row():
    with pytest.raises(InfeasibleError):
        choose_anchor(DMC.bsc(0.1), DMC.bsc(0.1))
    W2 = DMC.bsc(0.2)
    W1 = DMC([[0.5, 0.5], [0.02, 0.98]])  # row 0 inside Cov(W2), row 1 outside
    a, g = choose_anchor(W1, W2)
    assert a == 1
    assert g == pytest.approx(grid_hull_distance_two_rows(W1.row(1), W2.row(0), W2.row(1)), abs=1e-5)


def test_imitation_map_picks_closest_row():
    W1 = DMC([[0.9, 0.1], [0.1, 0.9]])
    W2 = DMC([[0.2, 0.8], [0.6, 0.4]])
    assert list(imitation_map(W1, W2)) == [1, 0]


# -- sampling ----------------------------------------------------------------------

def test_sample_noiseless_channels(rng):
    assert list(sample(DMC.identity(2), [0, 1, 0], rng)) == [0, 1, 0]
    x = rng.integers(2, size=50)
    assert np.array_equal(sample(DMC.bsc(0.0), x, rng), x)


def test_sample_rejects_bad_symbols(rng):
    with pytest.raises(DomainError):
        sample(DMC.bsc(0.1), [0, 2], rng)


def test_sample_flip_rate_binomial_oracle(rng):
    n = 10000
    flips = int(np.count_nonzero(sample(DMC.bsc(0.1), np.zeros(n, dtype=int), rng)))
    # the window 0.1 +- 0.02 has binomial mass above 0.999
    assert binom.cdf(1200, n, 0.1) - binom.cdf(799, n, 0.1) > 0.999
    assert 800 <= flips <= 1200


def test_sample_is_deterministic_and_batched():
    W = DMC([[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
    x = np.array([0, 1, 1, 0])
    a = sample(W, x, np.random.default_rng(3), size=5)
    b = sample(W, x, np.random.default_rng(3), size=5)
    assert a.shape == (5, 4) and np.array_equal(a, b)


def test_sample_row_frequencies(rng):
    W = DMC([[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
    y = sample(W, np.ones(200000, dtype=int), rng)
    assert np.allclose(np.bincount(y, minlength=3) / y.size, W.row(1), atol=0.005)


# -- typicality --------------------------------------------------------------------

def test_is_typical_examples():
    assert is_typical([0, 1, 0, 1], [0.5, 0.5], 0.1)
    assert not is_typical([0, 0, 0, 0], [0.5, 0.5], 0.1)
    assert not is_typical([0] * 99 + [1], [1.0, 0.0], 10.0)


def test_is_typical_boundary_uses_eps_over_alphabet():
    # deviation exactly eps/|Z| = 0.05 passes, anything larger fails
    z = [0] * 11 + [1] * 9
    assert is_typical(z, [0.5, 0.5], 0.1)
    assert not is_typical([0] * 12 + [1] * 8, [0.5, 0.5], 0.1)


def test_is_cond_typical_examples():
    x = np.array([0, 1, 1, 0, 1])
    assert is_cond_typical(x, x, DMC.identity(2), 1e-6)
    assert is_cond_typical([0, 1], [0, 0], DMC.bsc(0.5), 1e-6)
    assert not is_cond_typical(np.ones(100, int), np.zeros(100, int), DMC.bsc(0.1), 0.1)
    with pytest.raises(DomainError):
        is_cond_typical([0, 1], [0], DMC.bsc(0.1), 0.1)


def test_cond_typical_zero_clause():
    W = DMC([[1.0, 0.0], [0.5, 0.5]])
    assert not is_cond_typical([1, 0, 1, 0], [0, 1, 1, 1], W, 100.0)


def test_constant_conditioning_reduces_to_typicality(rng):
    # with x = a^k the joint check at eps*|X| equals the marginal check at eps
    W = DMC([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]])
    for _ in range(300):
        k = int(rng.integers(5, 40))
        z = rng.integers(3, size=k)
        eps = float(rng.uniform(0.01, 0.6))
        assert is_typical(z, W.row(1), eps) == is_cond_typical(z, np.ones(k, int), W, eps * W.input_size)


def test_batch_masks_match_scalar(rng):
    W = DMC([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]])
    x = rng.integers(2, size=30)
    Y = sample(W, x, rng, size=200)
    m = cond_typical_mask(Y, x, W, 0.5)
    assert [is_cond_typical(y, x, W, 0.5) for y in Y] == list(m)
    t = typical_mask(Y, W.row(0), 0.5)
    assert [is_typical(y, W.row(0), 0.5) for y in Y] == list(t)


def test_typicality_hoeffding_surrogate():
    from noisyauth.bounds import typicality_failure_bound
    P = np.array([0.6, 0.3, 0.1])
    n, eps, trials = 400, 0.3, 20000
    rng = np.random.default_rng(99)
    Z = rng.choice(3, size=(trials, n), p=P)
    fail = 1 - typical_mask(Z, P, eps).mean()
    sigma = math.sqrt(fail * (1 - fail) / trials)
    assert fail <= typicality_failure_bound(n, eps, 3) + 3 * sigma


# -- entropy and capacity -------------------------------------------------------------

def test_entropy_examples():
    assert binary_entropy(0.5) == 1
    assert binary_entropy(0) == 0
    assert entropy([0.25] * 4) == 2
    with pytest.raises(DomainError):
        binary_entropy(1.5)


@pytest.mark.parametrize("p", [0.05, 0.1, 0.25, 0.45])
def test_capacity_bsc_closed_form(p):
    assert capacity(DMC.bsc(p)) == pytest.approx(1 - h2(p), abs=1e-6)


def test_capacity_exact_cases():
    assert capacity(DMC.identity(2)) == 1.0
    assert capacity(DMC.identity(4)) == 2.0
    assert capacity(DMC([[0.3, 0.7], [0.3, 0.7], [0.3, 0.7]])) == 0.0


def test_capacity_z_channel_against_closed_form():
    # Z-channel with crossover q: C = log2(1 + (1-q) q^{q/(1-q)})
    q = 0.3
    W = DMC([[1.0, 0.0], [q, 1 - q]])
    expected = math.log2(1 + (1 - q) * q ** (q / (1 - q)))
    c, r = blahut_arimoto(W, tol=1e-10)
    assert c == pytest.approx(expected, abs=1e-8)
    assert r.sum() == pytest.approx(1)
