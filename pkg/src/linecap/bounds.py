"""Upper bounds on the batched-code capacity of line networks, achievable
rates, error exponents and the optimal inner block-length.

All rates are in bits per channel use.  The factor ``(1 - eps^N)^L`` is the
probability that no link erases an entire batch; every bound shares the
helper ``survival`` so that bounds with the same functional form agree to
the last bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from linecap.channels import Dmc, capacity
from linecap.errors import DomainError, InvalidParameterError

LN2 = math.log(2.0)


@dataclass(frozen=True)
class BatchParams:
    """Batch size, inner block-length and alphabet sizes (as log2 values)."""

    M: int
    N: int
    log_alphabet: float
    log_out: float
    log_in_card: float

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise InvalidParameterError("M and N must be >= 1")
        for name in ("log_alphabet", "log_out", "log_in_card"):
            if not getattr(self, name) > 0:
                raise InvalidParameterError(f"{name} must be positive")

    @classmethod
    def for_packets(cls, M: int, N: int, q: int, T: int) -> "BatchParams":
        """Packets of T symbols over F_q, channel alphabet F_q^T plus an erasure."""
        bits = T * math.log2(q)
        extra = math.log1p(float(q) ** (-T)) / LN2
        return cls(M, N, bits, bits + extra, bits + extra)

    def cut(self) -> float:
        return min(self.M * self.log_alphabet, self.N * self.log_out)


def survival(eps: float, n: float, L: int) -> float:
    """(1 - eps^n)^L."""
    if eps <= 0.0:
        return 1.0
    if eps >= 1.0:
        return 0.0 if L > 0 else 1.0
    return math.exp(L * math.log1p(-(eps**n)))


def _survival_log_exponent(eps: float, log_n: float, L: int) -> float:
    """(1 - eps^n)^L with n = exp(log_n), saturating to 1 once eps^n underflows."""
    if eps >= 1.0:
        return 0.0
    log_term = -math.inf if log_n > 700 else math.exp(log_n) * math.log(eps)
    if log_term < -745:
        return 1.0
    return math.exp(L * math.log1p(-math.exp(log_term)))


def _check_prob(eps, closed_right=False):
    ok = 0 < eps <= 1 if closed_right else 0 < eps < 1
    if not ok:
        raise InvalidParameterError(f"probability out of range: {eps}")


def pec_ub(params: BatchParams, L: int, epsilon: float) -> float:
    _check_prob(epsilon)
    if L < 1:
        raise InvalidParameterError("L must be >= 1")
    return survival(epsilon, params.N, L) / params.N * params.cut()


def canonical_ub(params: BatchParams, L: int, varepsilon: float) -> float:
    """Bound for eps-canonical links: the bottleneck exponent is |Q_i| N."""
    _check_prob(varepsilon, closed_right=True)
    if L < 1:
        raise InvalidParameterError("L must be >= 1")
    log_n = params.log_in_card * LN2 + math.log(params.N)
    return _survival_log_exponent(varepsilon, log_n, L) / params.N * params.cut()


def general_block(params: BatchParams) -> int:
    """K = ceil(N log2 |Q_i|), the number of links needed to collapse all inputs."""
    return math.ceil(params.N * params.log_in_card - 1e-12)


def general_ub(params: BatchParams, L: int, varepsilon: float) -> float:
    """Bound for links with eps_Q >= varepsilon, K consecutive links per bottleneck."""
    _check_prob(varepsilon, closed_right=True)
    if L < 1:
        raise InvalidParameterError("L must be >= 1")
    N = params.N
    K = general_block(params)
    blocks = L // K
    if blocks == 0:
        return params.cut() / N
    # exponent N(2|Q_i|^N + K) in log-space, |Q_i|^N never formed
    log_card_n = N * params.log_in_card * LN2
    log_n = math.log(N) + log_card_n + math.log(2.0 + K * math.exp(-log_card_n))
    return _survival_log_exponent(varepsilon, log_n, blocks) / N * params.cut()


def rep_rate(N: int, L: int, epsilon: float, log_alphabet: float) -> float:
    """Rate of repetition recoding on identical erasure links."""
    return survival(epsilon, N, L) / N * log_alphabet


def erasure_min_cut(epsilon: float, log_alphabet: float) -> float:
    """Capacity of one packet erasure link, the min-cut of a homogeneous line."""
    return (1.0 - epsilon) * log_alphabet


def is_loose(bound: float, min_cut: float) -> bool:
    """True when a bound is weaker than the trivial min-cut bound (small L)."""
    return bound > min_cut


# --------------------------------------------------------------------------
# optimal inner block-length for the repetition/erasure factor


@dataclass(frozen=True)
class OptimalN:
    n_star: int
    t_star: float
    rate: float


def _g(t: float, L: int) -> float:
    return math.expm1(t) - L * t


def optimal_root(L: int, tol: float = 1e-10) -> float:
    """Root of e^t - 1 - L t on [ln L, 2 ln L] by bisection."""
    if L <= 1:
        raise InvalidParameterError("L must exceed 1")
    lo, hi = math.log(L), 2.0 * math.log(L)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _g(mid, L) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def erasure_factor(N: int, L: int, epsilon: float) -> float:
    """F(N) = (1 - eps^N)^L / N."""
    return survival(epsilon, N, L) / N


def optimal_inner_blocklength(L: int, epsilon: float) -> OptimalN:
    _check_prob(epsilon)
    t = optimal_root(L)
    x = t / math.log(1.0 / epsilon)
    cands = {max(1, math.floor(x)), max(1, math.ceil(x))}
    n = max(sorted(cands), key=lambda k: erasure_factor(k, L, epsilon))
    return OptimalN(n, t, erasure_factor(n, L, epsilon))


# --------------------------------------------------------------------------
# random coding exponent


def _e0_opt(w: np.ndarray, rho: float, tol: float = 1e-12, max_iter: int = 20000):
    """max_p E0(rho, p) by a damped multiplicative update.

    Minimises F(p) = sum_y alpha_y^(1+rho), which is convex in p; the duality
    gap (1+rho)(F - min_x beta_x) bounds the distance to the optimum.
    """
    m = w.shape[0]
    p = np.full(m, 1.0 / m)
    if rho <= 0:
        return 0.0, p
    wr = w ** (1.0 / (1.0 + rho))
    for _ in range(max_iter):
        alpha = p @ wr
        F = float(np.sum(alpha ** (1.0 + rho)))
        beta = wr @ alpha**rho
        gap = (1.0 + rho) * (F - beta.min())
        if gap <= tol * F:
            break
        step = 1.0
        while True:
            cand = p * (F / beta) ** (step / rho)
            cand /= cand.sum()
            Fc = float(np.sum((cand @ wr) ** (1.0 + rho)))
            if Fc <= F or step < 1e-6:
                break
            step *= 0.5
        if Fc > F:
            break
        p = cand
        if F - Fc <= 1e-15 * F:
            # rounding floor: the gap cannot shrink further
            break
    alpha = p @ wr
    return -math.log(float(np.sum(alpha ** (1.0 + rho)))), p


def gallager_exponent(q, r: float, grid: int = 64, tol: float = 1e-8) -> float:
    """Er(r) in nats per use, for a rate ``r`` in bits per use.

    Maximises E0(rho, p) - rho r ln 2 over rho in [0, 1] and input laws p.
    """
    w = q.probs if isinstance(q, Dmc) else np.asarray(q, dtype=np.float64)
    if r < 0:
        raise InvalidParameterError("rate must be non-negative")
    cap = capacity(w, 1e-10)
    if r >= cap:
        raise DomainError(f"rate {r} is not below capacity {cap}")
    r_nats = r * LN2

    def obj(rho):
        return _e0_opt(w, rho)[0] - rho * r_nats

    rhos = np.linspace(0.0, 1.0, grid)
    vals = [obj(x) for x in rhos]
    k = int(np.argmax(vals))
    lo = rhos[max(k - 1, 0)]
    hi = rhos[min(k + 1, grid - 1)]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo + (1 - g) * (hi - lo), lo + g * (hi - lo)
    fa, fb = obj(a), obj(b)
    while hi - lo > tol:
        if fa < fb:
            lo, a, fa = a, b, fb
            b = lo + g * (hi - lo)
            fb = obj(b)
        else:
            hi, b, fb = b, a, fa
            a = lo + (1 - g) * (hi - lo)
            fa = obj(a)
    best = max(vals[k], fa, fb)
    return max(best, 0.0)


# --------------------------------------------------------------------------
# decode-and-forward and repetition lower bounds


@dataclass(frozen=True)
class LowerBound:
    """A lower bound that only holds under a validity condition.

    ``value`` is None whenever ``applicable`` is False.
    """

    value: float | None
    applicable: bool
    success: float
    clamped: bool = False

    def __float__(self):
        if not self.applicable:
            raise DomainError("bound not applicable")
        return float(self.value)


def df_lower_bound(params: BatchParams, L: int, er_star: float) -> LowerBound:
    """Decode-and-forward rate with exponent ``er_star`` (nats) per hop."""
    if not er_star > 0:
        raise InvalidParameterError("er_star must be positive")
    N = params.N
    s = 1.0 if math.isinf(er_star) else math.exp(L * math.log1p(-math.exp(-N * er_star)))
    bits = params.M * params.log_alphabet
    # condition s > |A|^-M, compared in log2
    if not (s > 0 and math.log2(s) > -bits):
        return LowerBound(None, False, s)
    raw = bits / N * s - 1.0 / N
    return LowerBound(max(raw, 0.0), True, s, clamped=raw < 0)


def _h2(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def rep_ml_exponent(q: Dmc, embedding=None) -> float:
    """Per-hop exponent of ML decoding after N repetitions (nats).

    ``embedding`` lists the channel inputs used for the batch symbols; by
    default every input is used.
    """
    labels = list(q.inputs) if embedding is None else list(embedding)
    if len(set(labels)) != len(labels):
        raise InvalidParameterError("embedding must be injective")
    rows = np.array([q.row(x) for x in labels])
    pos = q.probs[q.probs > 0]
    floor = float(pos.min())
    best = math.inf
    for i in range(len(labels)):
        for j in range(len(labels)):
            if i == j:
                continue
            a, b = rows[i], rows[j]
            if np.array_equal(a, b):
                raise InvalidParameterError(f"embedded inputs {labels[i]!r} and {labels[j]!r} have identical rows")
            only_a = (a > 0) & (b == 0)
            if only_a.any():
                rest = float(a[~only_a].sum())
                e = math.inf if rest <= 0 else -math.log(rest)
            else:
                m = a > 0
                d = float(np.sum(a[m] * np.log(a[m] / b[m])))
                e = d * d / (2.0 * math.log(floor) ** 2)
            best = min(best, e)
    return best


def rep_ml_lower_bound(N: int, L: int, e_star: float, alphabet_size: int) -> float:
    if alphabet_size < 2:
        raise InvalidParameterError("alphabet needs at least 2 symbols")
    s = 1.0 if math.isinf(e_star) else math.exp(L * math.log1p(-math.exp(-N * e_star)))
    val = math.log2(alphabet_size) - (1 - s) * math.log2(alphabet_size - 1) - _h2(s)
    return max(val / N, 0.0)
