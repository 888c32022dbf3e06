"""Channel reductions.

A reduction of a channel Q is a pair of stochastic matrices (R, S) with
R Q S = U_s(rho).  Chaining reductions along a line network turns it into a
cascade of uniform-noise channels whose capacity is known in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import qr

from linecap.channels import (
    Dmc,
    capacity,
    epsilon_q,
    kron_power,
    non_adjacent_pair,
    uniform_noise_matrix,
)
from linecap.errors import (
    DegenerateChannelError,
    InvalidParameterError,
    NotApplicableError,
    NotReducibleError,
    RankError,
)

RANK_TOL = 1e-9
CAPACITY_FLOOR = 1e-6
RHO_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Reduction:
    """R (s x m) before the channel, S (n x s) after it."""

    R: np.ndarray
    S: np.ndarray
    s: int
    rho: float
    rows: tuple = ()
    rho_best: float = float("nan")

    def reduced(self, q) -> np.ndarray:
        w = q.probs if isinstance(q, Dmc) else np.asarray(q)
        return self.R @ w @ self.S

    def residual(self, q) -> float:
        return float(np.max(np.abs(self.reduced(q) - uniform_noise_matrix(self.s, self.rho))))


def _selector(rows, m: int) -> np.ndarray:
    R = np.zeros((len(rows), m))
    R[np.arange(len(rows)), rows] = 1.0
    return R


def pair_overlap(a, b) -> float:
    """rho_1 = sum_k a_k^2 / (a_k + b_k) over columns where a_k + b_k > 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    tot = a + b
    m = tot > 0
    return float(np.sum(a[m] ** 2 / tot[m]))


def _pair_post(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """n x 2 matrix with (j, 0) = a_j / (a_j + b_j); a column unused by both goes to 0."""
    tot = a + b
    W = np.zeros((len(a), 2))
    m = tot > 0
    W[m, 0] = a[m] / tot[m]
    W[~m, 0] = 1.0
    W[:, 1] = 1.0 - W[:, 0]
    return W


def best_pair(q: Dmc):
    """Row pair maximising rho_1; returns ``(i, j, rho_1)``."""
    w = q.probs
    best = (0, 0, -1.0)
    for i in range(w.shape[0]):
        for j in range(i + 1, w.shape[0]):
            r = pair_overlap(w[i], w[j])
            if r > best[2]:
                best = (i, j, r)
    return best


def hard_pair(q: Dmc):
    """Best row pair under hard decisions, when [a; b] W is symmetric.

    Returns ``(i, j, rho, W)`` or None.  On channels such as U_2 itself this
    reaches beyond rho_1.
    """
    w = q.probs
    best = None
    for i in range(w.shape[0]):
        for j in range(i + 1, w.shape[0]):
            a, b = w[i], w[j]
            pick = a >= b
            p_a, p_b = float(a[pick].sum()), float(b[~pick].sum())
            if abs(p_a - p_b) > 1e-12:
                continue
            r = min(p_a, p_b)
            if best is None or r > best[2]:
                W = np.zeros((len(a), 2))
                W[pick, 0] = 1.0
                W[~pick, 1] = 1.0
                best = (i, j, r, W)
    return best


def u2_contraction(rho1: float, rho: float) -> float:
    """sigma with U_2(rho1) U_2(sigma) = U_2(rho)."""
    return (rho1 + rho - 1.0) / (2.0 * rho1 - 1.0)


def reduce_to_u2(q: Dmc, rho: float | None = None) -> Reduction:
    """Reduce ``q`` to U_2(rho); ``rho`` defaults to the largest reachable value."""
    if capacity(q, 1e-9) <= CAPACITY_FLOOR:
        raise DegenerateChannelError("channel has (numerically) zero capacity")
    i, j, rho1 = best_pair(q)
    W = _pair_post(q.probs[i], q.probs[j])
    if rho is None:
        rho = rho1
    if not 0.5 < rho:
        raise NotReducibleError(f"rho={rho} must exceed 1/2", rho1)
    if rho > rho1 + RHO_SLACK:
        hard = hard_pair(q)
        if hard is None or rho > hard[2] + RHO_SLACK:
            reach = rho1 if hard is None else max(rho1, hard[2])
            raise NotReducibleError(f"rho={rho} outside (1/2, {reach}]", reach)
        i, j, rho1, W = hard
    rho = min(rho, rho1)
    S = W @ uniform_noise_matrix(2, min(u2_contraction(rho1, rho), 1.0))
    return Reduction(_selector((i, j), len(q.inputs)), S, 2, float(rho), (i, j), rho1)


def reduce_to_identity(q: Dmc) -> Reduction:
    """R Q S = I_2 from two inputs whose outputs never coincide."""
    pair = non_adjacent_pair(q)
    if pair is None:
        raise NotApplicableError("every pair of inputs can be confused")
    i, j = pair
    W = _pair_post(q.probs[i], q.probs[j])
    return Reduction(_selector(pair, len(q.inputs)), W, 2, 1.0, pair, 1.0)


def numerical_rank(w: np.ndarray, tol: float = RANK_TOL) -> int:
    sv = np.linalg.svd(w, compute_uv=False)
    return int(np.sum(sv > tol))


def _posts(RQ: np.ndarray):
    """Candidate post-processors W (n x s), each row stochastic."""
    s, n = RQ.shape
    col = RQ.sum(axis=0)
    live = col > 0
    W = np.zeros((n, s))
    W[live] = (RQ[:, live] / col[live]).T
    W[~live, 0] = 1.0
    yield W
    # hard decision: each output to the selected input most likely to cause it
    lab = np.argmax(RQ, axis=0)
    if len(set(lab[live].tolist())) == s:
        G = np.zeros((n, s))
        G[np.arange(n), lab] = 1.0
        yield G


def _rho_hat(kappa: float, s: int) -> float:
    k = min(kappa, 0.0)
    return (k - 1.0) / (s * k - 1.0)


def reduce_to_us(q: Dmc, s: int, rho: float | None = None) -> Reduction:
    """Reduce ``q`` to U_s(rho) via s linearly independent rows."""
    w = q.probs
    if s < 2:
        raise InvalidParameterError("s must be >= 2")
    if rho is not None and not 1.0 / s < rho <= 1.0:
        raise InvalidParameterError(f"rho must lie in (1/{s}, 1]")
    if numerical_rank(w) < s:
        raise RankError(f"channel rank is below s={s}")
    _, _, piv = qr(w.T, pivoting=True, mode="economic")
    rows = tuple(sorted(int(r) for r in piv[:s]))
    R = _selector(rows, w.shape[0])
    RQ = R @ w
    if numerical_rank(RQ) < s:
        raise RankError("selected rows are numerically dependent")
    best = None
    for W in _posts(RQ):
        try:
            B = np.linalg.inv(RQ @ W)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(B)):
            continue
        r_hat = _rho_hat(float(B.min()), s)
        if best is None or r_hat > best[0]:
            best = (r_hat, W, B)
    if best is None:
        raise RankError("no invertible post-processor found")
    r_hat, W, B = best
    if rho is None:
        rho = r_hat
    if rho > r_hat + RHO_SLACK:
        raise NotReducibleError(f"rho={rho} exceeds reachable {r_hat}", r_hat)
    K = B @ uniform_noise_matrix(s, rho)
    if K.min() < -1e-10 or np.max(np.abs(K.sum(axis=1) - 1.0)) > 1e-10:
        cond = float(np.linalg.cond(RQ @ W))
        raise NotReducibleError(f"intermediate matrix is not stochastic (condition number {cond:.3g})", r_hat)
    K = np.clip(K, 0.0, None)
    K /= K.sum(axis=1, keepdims=True)
    return Reduction(R, W @ K, s, float(rho), rows, r_hat)


# --------------------------------------------------------------------------
# canonicalisation of channel chains


@dataclass(frozen=True)
class CanonicalizationTrace:
    """Input sets A_i and output sets B_i of each collapsing stage.

    ``log_prob`` is the exact natural log of the probability of the status
    event that funnels every input of A_1 into ``y_star``; ``log_bound`` is
    the eps_Q based lower bound on it.
    """

    K: int
    A: list
    B: list
    y_star: object
    log_prob: float
    log_bound: float
    pairs: list = field(default_factory=list)


def _as_map(recoder, outputs, inputs):
    if recoder is None:
        return {y: y for y in outputs}
    if callable(recoder):
        return {y: recoder(y) for y in outputs}
    if isinstance(recoder, Dmc):
        if not recoder.is_deterministic():
            raise InvalidParameterError("recoders must be deterministic")
        return {y: recoder.outputs[int(np.argmax(recoder.row(y)))] for y in outputs}
    return dict(recoder)


def canonicalize_chain(channels, recoders=None, n: int = 1) -> CanonicalizationTrace:
    """Collapse the input set of Q_1^(xn) to one output along the chain.

    ``recoders[i]`` maps outputs of link i to inputs of link i+1 (a dict, a
    callable, a deterministic Dmc, or None for the identity map).
    """
    if not channels:
        raise InvalidParameterError("empty chain")
    first = channels[0]
    K = math.ceil(n * math.log2(len(first.inputs)) - 1e-12) if len(first.inputs) > 1 else 1
    if len(channels) < K:
        raise InvalidParameterError(f"chain of {len(channels)} links is shorter than K={K}")
    if recoders is None:
        recoders = [None] * (len(channels) - 1)
    A_sets, B_sets, pair_log = [], [], []
    log_prob = 0.0
    log_bound = 0.0
    current = list(kron_power(first, n).inputs)
    for stage in range(K):
        eps = epsilon_q(channels[stage])
        if eps <= 0:
            raise NotApplicableError(f"link {stage} has eps_Q = 0")
        qn = kron_power(channels[stage], n)
        w = qn.probs
        A_sets.append(tuple(current))
        idx = [qn.input_index(x) for x in current]
        chosen = []
        pairs = []
        for t in range(0, len(idx), 2):
            x = idx[t]
            xp = idx[t + 1] if t + 1 < len(idx) else x
            j = int(np.argmax(np.minimum(w[x], w[xp])))
            pairs.append((qn.inputs[x], qn.inputs[xp], qn.outputs[j]))
            log_prob += math.log(w[x, j]) + (math.log(w[xp, j]) if xp != x else 0.0)
            if qn.outputs[j] not in chosen:
                chosen.append(qn.outputs[j])
        log_bound += len(idx) * n * math.log(eps)
        pair_log.append(pairs)
        B_sets.append(tuple(chosen))
        if stage + 1 < K:
            nxt = kron_power(channels[stage + 1], n)
            mp = _as_map(recoders[stage], chosen, nxt.inputs)
            current = []
            for y in chosen:
                x = mp[y]
                if x not in current:
                    current.append(x)
            order = {x: i for i, x in enumerate(nxt.inputs)}
            current.sort(key=order.__getitem__)
    if len(B_sets[-1]) != 1:
        raise AssertionError(f"|B_K| = {len(B_sets[-1])} after K={K} stages")
    return CanonicalizationTrace(K, A_sets, B_sets, B_sets[-1][0], log_prob, log_bound, pair_log)


# --------------------------------------------------------------------------
# whole-line plans


class LinkNotReducibleError(NotReducibleError):
    def __init__(self, message, index, best=None):
        super().__init__(message, best)
        self.index = index


@dataclass(frozen=True, eq=False)
class LineReductionPlan:
    """Recoders F, Phi_1, ..., Phi_L turning the line into U_2(rho)^L0.

    ``recoders[0]`` is applied at the source, ``recoders[l]`` at node l.
    """

    recoders: list
    rho: float
    L0: int
    kinds: list
    reductions: list = field(default_factory=list)
    residual: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "L0": self.L0,
            "kinds": list(self.kinds),
            "recoders": [np.asarray(m).tolist() for m in self.recoders],
            "residual": self.residual,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "LineReductionPlan":
        try:
            mats = [np.asarray(m, dtype=np.float64) for m in data["recoders"]]
            return cls(mats, float(data["rho"]), int(data["L0"]), list(data["kinds"]),
                       residual=float(data.get("residual", "nan")))
        except KeyError as exc:
            raise InvalidParameterError(f"plan is missing field {exc}") from None

    def target(self) -> np.ndarray:
        return np.linalg.matrix_power(uniform_noise_matrix(2, self.rho), self.L0)


def reduce_line(channels) -> LineReductionPlan:
    """Identity reduction where C_0 > 0, otherwise U_2 at a common rho."""
    channels = list(channels)
    if not channels:
        raise InvalidParameterError("empty line")
    kinds = []
    rho1s = {}
    for idx, q in enumerate(channels):
        if non_adjacent_pair(q) is not None:
            kinds.append("identity")
            continue
        cap = capacity(q, 1e-9)
        if cap <= CAPACITY_FLOOR:
            raise LinkNotReducibleError(f"link {idx} has zero capacity and no zero-error pair", idx)
        kinds.append("u2")
        rho1s[idx] = best_pair(q)[2]
    rho = min(rho1s.values()) if rho1s else 1.0
    reds = []
    for idx, q in enumerate(channels):
        try:
            red = reduce_to_identity(q) if kinds[idx] == "identity" else reduce_to_u2(q, rho)
        except (NotReducibleError, NotApplicableError, DegenerateChannelError) as exc:
            raise LinkNotReducibleError(f"link {idx}: {exc}", idx) from exc
        reds.append(red)
    recoders = [reds[0].R]
    for a, b in zip(reds[:-1], reds[1:]):
        recoders.append(a.S @ b.R)
    recoders.append(reds[-1].S)
    L0 = kinds.count("u2")
    e2e = recoders[0]
    for q, phi in zip(channels, recoders[1:]):
        e2e = e2e @ q.probs @ phi
    target = np.linalg.matrix_power(uniform_noise_matrix(2, rho), L0)
    residual = float(np.max(np.abs(e2e - target)))
    return LineReductionPlan(recoders, float(rho), L0, kinds, reds, residual)


def u2_chain_capacity(rho: float, L: int, tol: float = 1e-12) -> float:
    """Capacity in bits of L cascaded U_2(rho) channels.

    U_2(rho)^L = U_2((1 + x)/2) with x = (2 rho - 1)^L; a series in x^2 avoids
    cancellation when x is small.
    """
    if not 0.5 < rho <= 1.0:
        raise InvalidParameterError("rho must lie in (1/2, 1]")
    if L < 0:
        raise InvalidParameterError("L must be >= 0")
    x = (2.0 * rho - 1.0) ** L
    if x >= 1.0:
        return 1.0
    if x < 0.1:
        x2 = x * x
        total, term, k = 0.0, x2, 1
        while True:
            add = term / (k * (2 * k - 1))
            total += add
            if add < tol * 1e-3 * max(total, 1e-300) or k > 200:
                break
            term *= x2
            k += 1
        return total / (2.0 * math.log(2.0))
    return ((1 + x) * math.log1p(x) + (1 - x) * math.log1p(-x)) / (2.0 * math.log(2.0))
