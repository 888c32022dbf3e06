import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import brentq

from linecap.bounds import (
    BatchParams,
    canonical_ub,
    df_lower_bound,
    erasure_factor,
    erasure_min_cut,
    gallager_exponent,
    general_block,
    general_ub,
    is_loose,
    optimal_inner_blocklength,
    optimal_root,
    pec_ub,
    rep_ml_exponent,
    rep_ml_lower_bound,
    rep_rate,
)
from linecap.channels import Dmc, bsc, capacity, identity, make_erasure, make_q3x3
from linecap.errors import DomainError, InvalidParameterError

PACKET = BatchParams.for_packets(2, 2, 256, 1024)


def test_packet_params():
    assert PACKET.log_alphabet == 8192.0
    assert PACKET.log_out == pytest.approx(8192.0, abs=1e-9)
    # q^-T underflows here, the extra output symbol only shows for tiny packets
    assert PACKET.log_out >= PACKET.log_alphabet
    small = BatchParams.for_packets(1, 1, 2, 1)
    assert small.log_out == pytest.approx(math.log2(3), rel=1e-15)


def test_pec_ub_packet_example():
    assert pec_ub(PACKET, 1, 0.2) == pytest.approx(7864.32, rel=1e-13)


def test_pec_ub_vanishes_near_one():
    p = BatchParams(1, 1, 1.0, 1.0, 1.0)
    assert pec_ub(p, 1, 1 - 1e-12) < 1e-11


def test_pec_ub_long_line_exact():
    p = BatchParams.for_packets(3, 3, 256, 1024)
    exact = (1 - Fraction(8, 1000)) ** 1000 / 3 * Fraction(3 * 8192)
    assert pec_ub(p, 1000, 0.2) == pytest.approx(float(exact), rel=1e-12)


def test_canonical_ub_examples():
    assert canonical_ub(PACKET, 4, 1.0) == 0.0
    one = BatchParams(2, 3, 1.0, 1.0, 1e-300)
    # |Q_i| = 2^(1e-300) -> 1: same functional form as the erasure bound
    assert canonical_ub(one, 5, 0.3) == pytest.approx(pec_ub(one, 5, 0.3), rel=1e-12)
    p = BatchParams(1, 2, 1.0, 1.0, 1.0)
    assert canonical_ub(p, 3, 0.5) == pytest.approx(float((1 - Fraction(1, 16)) ** 3 / 2), rel=1e-14)


def test_general_ub_examples():
    p = BatchParams(1, 1, 1.0, 1.0, 1.0)
    assert general_block(p) == 1
    assert general_ub(p, 3, 0.5) == pytest.approx((1 - 0.5**5) ** 3)
    p3 = BatchParams(1, 1, 1.0, 1.0, math.log2(3))
    assert general_block(p3) == 2
    # exponent N(2|Q_i|^N + K) = 1 * (2*3 + 2) = 8, floor(8/2) = 4 blocks
    assert general_ub(p3, 8, 0.5) == pytest.approx(float((1 - Fraction(1, 256)) ** 4), rel=1e-14)


def test_general_ub_short_line_saturates():
    p = BatchParams(2, 3, 4.0, 2.0, 2.0)
    assert general_block(p) == 6
    assert general_ub(p, 5, 0.4) == p.cut() / p.N


def test_general_ub_huge_alphabet_saturates():
    assert general_ub(PACKET, 10**6, 0.2) == PACKET.cut() / PACKET.N
    assert canonical_ub(PACKET, 10**6, 0.2) == PACKET.cut() / PACKET.N


def test_rep_rate_examples():
    assert rep_rate(1, 1, 0.2, 1.0) == pytest.approx(0.8)
    assert rep_rate(5, 10, 0.2, 1.0) == pytest.approx(float((1 - Fraction(32, 100000)) ** 10 / 5), rel=1e-14)


def test_min_cut_constant():
    assert erasure_min_cut(0.2, 1024 * math.log2(256)) == 6553.6
    assert is_loose(pec_ub(PACKET, 1, 0.2), 6553.6)
    assert not is_loose(pec_ub(PACKET, 50, 0.2), 6553.6)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 30), st.integers(1, 2000), st.floats(0.01, 0.99), st.floats(0.1, 20.0), st.floats(0.0, 5.0))
def test_rep_rate_equals_pec_ub_m1(N, L, eps, la, extra):
    p = BatchParams(1, N, la, la + extra, 1.0)
    assert pec_ub(p, L, eps) == rep_rate(N, L, eps, la)


bound_params = st.builds(
    BatchParams,
    st.integers(1, 6),
    st.integers(1, 6),
    st.floats(0.5, 16),
    st.floats(0.5, 16),
    st.floats(0.1, 4),
)


@settings(max_examples=150, deadline=None)
@given(bound_params, st.integers(1, 300), st.floats(0.01, 0.99))
def test_bounds_nonnegative_and_monotone(p, L, eps):
    for f in (pec_ub, canonical_ub, general_ub):
        a, b = f(p, L, eps), f(p, L + 1, eps)
        assert a >= 0 and b >= 0
        assert b <= a
    assert rep_rate(p.N, L + 1, eps, p.log_alphabet) <= rep_rate(p.N, L, eps, p.log_alphabet)


@settings(max_examples=100, deadline=None)
@given(bound_params, st.integers(1, 300), st.floats(0.01, 0.99))
def test_general_ub_is_weaker_than_canonical(p, L, eps):
    assert general_ub(p, L, eps) >= canonical_ub(p, L, eps) - 1e-12


# --- optimal inner block-length ---------------------------------------------------


def test_optimal_root_l100():
    t = optimal_root(100)
    oracle = brentq(lambda t: math.expm1(t) - 100 * t, math.log(100), 2 * math.log(100), xtol=1e-14)
    assert t == pytest.approx(oracle, abs=1e-9)
    assert t == pytest.approx(6.4746, abs=1e-4)
    assert math.log(100) < t < 2 * math.log(100)


def test_optimal_root_million():
    t = optimal_root(10**6)
    assert 13.815 < t < 27.631


@pytest.mark.parametrize("L", [2, 10, 100, 1000, 10**5])
@pytest.mark.parametrize("eps", [0.05, 0.2, 0.5, 0.9])
def test_optimal_blocklength_local_and_global(L, eps):
    res = optimal_inner_blocklength(L, eps)
    F = lambda n: erasure_factor(n, L, eps)  # noqa: E731
    assert res.rate == F(res.n_star)
    assert res.rate >= F(res.n_star + 1)
    if res.n_star > 1:
        assert res.rate >= F(res.n_star - 1)
    assert all(res.rate >= F(n) for n in range(1, 4 * res.n_star + 1))


def test_optimal_blocklength_domain():
    with pytest.raises(InvalidParameterError):
        optimal_inner_blocklength(1, 0.2)
    with pytest.raises(InvalidParameterError):
        optimal_inner_blocklength(10, 1.0)


# --- random coding exponent ------------------------------------------------------------


def test_gallager_bsc_zero_rate():
    s = 0.5 * math.sqrt(0.9) + 0.5 * math.sqrt(0.1)
    expected = -math.log(2 * s**2)
    assert gallager_exponent(bsc(0.1), 0.0) == pytest.approx(expected, abs=1e-9)


def test_gallager_vanishes_at_capacity():
    c = capacity(bsc(0.1), 1e-12)
    assert gallager_exponent(bsc(0.1), c - 1e-4) < 1e-6
    with pytest.raises(DomainError):
        gallager_exponent(bsc(0.1), c + 1e-6)
    with pytest.raises(DomainError):
        gallager_exponent(bsc(0.5), 0.0)


def test_gallager_monotone():
    q = Dmc([0, 1, 2], [0, 1], [[0.9, 0.1], [0.3, 0.7], [0.5, 0.5]])
    c = capacity(q, 1e-12)
    rs = np.linspace(0, c * 0.98, 20)
    vals = [gallager_exponent(q, r) for r in rs]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))


def grid_exponent(w, r_bits, npts=801):
    """Er by exhaustive grids over rho and a binary input law."""
    rhos = np.linspace(0, 1, npts)
    ps = np.linspace(0, 1, npts)
    best = 0.0
    for rho in rhos:
        wr = w ** (1 / (1 + rho))
        alpha = ps[:, None] * wr[0] + (1 - ps[:, None]) * wr[1]
        e0 = -np.log(np.sum(alpha ** (1 + rho), axis=1))
        best = max(best, float(e0.max()) - rho * r_bits * math.log(2))
    return best


@pytest.mark.parametrize("r", [0.0, 0.1, 0.2])
def test_gallager_asymmetric_against_grid(r):
    w = np.array([[0.95, 0.05], [0.4, 0.6]])
    assert gallager_exponent(w, r) == pytest.approx(grid_exponent(w, r), abs=2e-5)


CORPUS = [bsc(0.1), bsc(0.3), make_erasure(2, 0.2), make_q3x3(), identity(3),
          Dmc([0, 1], [0, 1], [[1, 0], [0.4, 0.6]])]


@pytest.mark.parametrize("q", CORPUS)
def test_gallager_positive_below_capacity(q):
    c = capacity(q, 1e-12)
    for r in np.linspace(0, c - 0.01, 4):
        assert gallager_exponent(q, r) > 0


# --- achievable-rate bounds ----------------------------------------------------------------


def test_df_bound_infinite_exponent():
    p = BatchParams(3, 4, 2.0, 2.0, 2.0)
    res = df_lower_bound(p, 10, math.inf)
    assert res.applicable and res.value == pytest.approx(3 * 2.0 / 4 - 1 / 4)


def test_df_bound_clamped():
    p = BatchParams(1, 20, 1.0, 1.0, 1.0)
    res = df_lower_bound(p, 100, 0.5)
    s = (1 - math.exp(-10)) ** 100
    assert res.success == pytest.approx(s)
    assert s > 0.5  # validity condition holds
    assert res.applicable and res.clamped and res.value == 0.0
    assert s / 20 - 1 / 20 < 0


def test_df_bound_not_applicable():
    p = BatchParams(1, 1, 1.0, 1.0, 1.0)
    res = df_lower_bound(p, 1000, 0.5)
    assert not res.applicable and res.value is None
    with pytest.raises(DomainError):
        float(res)


def test_df_bound_positive_for_long_lines():
    q = bsc(0.05)
    c = capacity(q, 1e-12)
    r = 0.5 * c
    er = gallager_exponent(q, r)
    for L in (100, 1000, 10000):
        N = math.ceil(3 * math.log(L) / er)
        M = max(1, math.floor(N * r))
        p = BatchParams(M, N, 1.0, 1.0, 1.0)
        res = df_lower_bound(p, L, gallager_exponent(q, M / N))
        assert res.applicable and res.value > 0


def test_rep_ml_exponent_bsc():
    expected = (0.8 * math.log(9)) ** 2 / (2 * math.log(0.1) ** 2)
    assert rep_ml_exponent(bsc(0.1)) == pytest.approx(expected, rel=1e-12)


def test_rep_ml_exponent_erasure():
    assert rep_ml_exponent(make_erasure(2, 0.2), [0, 1]) == pytest.approx(-math.log(0.2), rel=1e-12)


def test_rep_ml_exponent_disjoint_rows():
    assert rep_ml_exponent(identity(2)) == math.inf


def test_rep_ml_exponent_invalid():
    q = Dmc([0, 1, 2], [0, 1], [[0.5, 0.5], [0.5, 0.5], [0.1, 0.9]])
    with pytest.raises(InvalidParameterError):
        rep_ml_exponent(q)
    with pytest.raises(InvalidParameterError):
        rep_ml_exponent(q, [2, 2])
    assert rep_ml_exponent(q, [0, 2]) > 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.integers(2, 4))
def test_rep_ml_exponent_positive(seed, m, n):
    w = np.random.default_rng(seed).random((m, n))
    w[w < 0.2] = 0
    assume(np.all(w.sum(axis=1) > 0))
    w /= w.sum(axis=1, keepdims=True)
    assume(len(np.unique(w, axis=0)) == m)
    assert rep_ml_exponent(Dmc(range(m), range(n), w)) > 0


def test_rep_ml_lower_bound_examples():
    assert rep_ml_lower_bound(4, 10, math.inf, 2) == pytest.approx(1 / 4)
    N = 3
    assert rep_ml_lower_bound(N, 1, math.log(2) / N, 2) == pytest.approx(0.0, abs=1e-15)
    L, E = 1000, 0.3
    N = math.ceil(2 * math.log(L) / E)
    v = rep_ml_lower_bound(N, L, E, 2)
    assert 0 < v <= 1 / N
    assert 0.1 < v * math.log(L) < 1.0
