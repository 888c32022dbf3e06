"""Rank-distribution Markov chain of random linear recoding over packet
erasure links, its closed-form eigendecomposition, and the BATS rate.

Rates are in bits per channel use: a packet carries ``T log2 q`` bits, of
which the fraction ``M/T`` is spent on the coefficient vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from linecap.errors import DomainError, InvalidParameterError
from linecap.gf import GaloisField, field, gf_rank  # noqa: F401  (re-exported)

RENORM_TOL = 1e-12


def zeta(r: int, m: int, q: int) -> float:
    """Probability that r uniform vectors in F_q^m are linearly independent.

    Equals 1 for r = 0 and prod_{k<r} (1 - q^(k - m)) otherwise.
    """
    if r < 0 or m < 0:
        raise DomainError("zeta needs non-negative arguments")
    if r > m:
        raise DomainError(f"zeta_r^m undefined for r={r} > m={m}")
    out = 1.0
    for k in range(r):
        out *= 1.0 - float(q) ** (k - m)
    return out


def zeta_rank(j: int, i: int, k: int, q: int) -> float:
    """Probability that a uniform i x k matrix over F_q has rank j."""
    if j < 0 or j > min(i, k):
        return 0.0
    return zeta(j, i, q) * zeta(j, k, q) / zeta(j, j, q) * float(q) ** (-(i - j) * (k - j))


def binomial_pmf(N: int, p_success: float) -> np.ndarray:
    """f(k; N, p) for k = 0..N, via log-gamma once N exceeds 60."""
    k = np.arange(N + 1)
    if N <= 60 or p_success in (0.0, 1.0):
        if p_success in (0.0, 1.0):
            out = np.zeros(N + 1)
            out[N if p_success == 1.0 else 0] = 1.0
            return out
        return np.array(
            [math.comb(N, kk) * p_success**kk * (1 - p_success) ** (N - kk) for kk in k]
        )
    logc = np.array([math.lgamma(N + 1) - math.lgamma(kk + 1) - math.lgamma(N - kk + 1) for kk in k])
    return np.exp(logc + k * math.log(p_success) + (N - k) * math.log1p(-p_success))


@dataclass(frozen=True, eq=False)
class RankChain:
    M: int
    N: int
    epsilon: float
    q: int
    P: np.ndarray
    lambdas: np.ndarray
    V: np.ndarray
    Vinv: np.ndarray

    @property
    def lambda1(self) -> float:
        return float(self.lambdas[1]) if self.M >= 1 else 0.0


def transition_matrix(M: int, N: int, epsilon: float, q: int) -> RankChain:
    """Rank transition matrix P and its eigendecomposition P = V diag(lambda) V^-1."""
    if M < 1 or N < 1:
        raise InvalidParameterError("M and N must be >= 1")
    if not 0 <= epsilon <= 1:
        raise InvalidParameterError("epsilon must be a probability")
    f = binomial_pmf(N, 1.0 - epsilon)
    P = np.zeros((M + 1, M + 1))
    for i in range(M + 1):
        for j in range(i + 1):
            P[i, j] = sum(f[k] * zeta_rank(j, i, k, q) for k in range(j, N + 1))
    lambdas = np.array(
        [sum(f[k] * zeta(j, k, q) for k in range(j, N + 1)) for j in range(M + 1)]
    )
    V = np.zeros((M + 1, M + 1))
    for i in range(M + 1):
        for j in range(i + 1):
            V[i, j] = zeta(j, i, q)
    Vinv = solve_triangular(V, np.eye(M + 1), lower=True)
    for a in (P, lambdas, V, Vinv):
        a.setflags(write=False)
    return RankChain(M, N, epsilon, q, P, lambdas, V, Vinv)


def source_pmf(M: int) -> np.ndarray:
    pi = np.zeros(M + 1)
    pi[M] = 1.0
    return pi


def _step(pi: np.ndarray, P: np.ndarray) -> np.ndarray:
    pi = pi @ P
    s = pi.sum()
    if abs(s - 1.0) < RENORM_TOL:
        pi = pi / s
    return pi


def rank_pmf_at(chain: RankChain, L: int) -> np.ndarray:
    """pi_L = pi_0 P^L by L successive vector-matrix products."""
    if L < 0:
        raise InvalidParameterError("L must be >= 0")
    pi = source_pmf(chain.M)
    for _ in range(L):
        pi = _step(pi, chain.P)
    return pi


def rank_pmf_eigen(chain: RankChain, L: int) -> np.ndarray:
    """pi_0 V Lambda^L V^-1, independent of the iterated product."""
    return (chain.V[chain.M] * chain.lambdas**L) @ chain.Vinv


def expected_rank(pmf) -> float:
    pmf = np.asarray(pmf, dtype=np.float64)
    return float(np.arange(len(pmf)) @ pmf)


def expected_rank_curve(chain: RankChain, L_max: int) -> np.ndarray:
    """E[pi_L] for L = 0..L_max."""
    ranks = np.arange(chain.M + 1)
    out = np.empty(L_max + 1)
    pi = source_pmf(chain.M)
    out[0] = chain.M
    for L in range(1, L_max + 1):
        pi = _step(pi, chain.P)
        out[L] = ranks @ pi
    return out


def lambda1_closed_form(N: int, epsilon: float, q: int) -> float:
    return 1.0 - (epsilon + (1.0 - epsilon) / q) ** N


def _check_packet(M: int, T: int):
    if M >= T:
        raise InvalidParameterError(f"batch size M={M} must be smaller than packet length T={T}")


def _rate_factor(M: int, N: int, q: int, T: int) -> float:
    return (1.0 - M / T) * T * math.log2(q) / N


def bats_rate(M: int, N: int, L: int, epsilon: float, q: int, T: int) -> float:
    """(1 - M/T) E[pi_L] / N * T log2 q, in bits per use."""
    _check_packet(M, T)
    chain = transition_matrix(M, N, epsilon, q)
    return _rate_factor(M, N, q, T) * expected_rank(rank_pmf_at(chain, L))


def bats_rate_curve(M: int, N: int, L_max: int, epsilon: float, q: int, T: int) -> np.ndarray:
    """BATS rate for every L = 0..L_max."""
    _check_packet(M, T)
    chain = transition_matrix(M, N, epsilon, q)
    return _rate_factor(M, N, q, T) * expected_rank_curve(chain, L_max)


def n_scan_cap(L: int, epsilon: float, q: int) -> int:
    base = epsilon + (1.0 - epsilon) / q
    return math.ceil(8 * math.log(L) / math.log(1.0 / base)) + 8 if L > 1 else 8


def optimal_n_for_bats(M: int, L: int, epsilon: float, q: int, T: int):
    """``(N*, rate)`` maximising the BATS rate over N in [1, N_cap(L)].

    Ties go to the smaller N.
    """
    _check_packet(M, T)
    best_n, best_rate = 1, -1.0
    for n in range(1, n_scan_cap(L, epsilon, q) + 1):
        r = bats_rate(M, n, L, epsilon, q, T)
        if r > best_rate:
            best_n, best_rate = n, r
    return best_n, best_rate


def optimal_n_curve(M: int, L_max: int, epsilon: float, q: int, T: int):
    """N*_L and BATS_L(M, N*_L) for L = 1..L_max, sharing one scan per N."""
    _check_packet(M, T)
    caps = np.array([n_scan_cap(L, epsilon, q) for L in range(1, L_max + 1)])
    n_max = int(caps.max())
    rates = np.full((n_max, L_max), -np.inf)
    for n in range(1, n_max + 1):
        curve = bats_rate_curve(M, n, L_max, epsilon, q, T)[1:]
        rates[n - 1] = np.where(caps >= n, curve, -np.inf)
    idx = np.argmax(rates, axis=0)
    return idx + 1, rates[idx, np.arange(L_max)]
