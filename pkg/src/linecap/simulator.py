"""Monte Carlo simulation of recoding on line networks, and an exact engine
for small instances (end-to-end matrices, brute-force optimal recoding,
erasure bottleneck decomposition).

Trials are split into fixed chunks of ``CHUNK`` trials.  Chunk ``c`` draws
from ``PCG64(SeedSequence(seed, spawn_key=(c,)))`` so results do not depend
on how many worker threads run the chunks.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from linecap.bats import bats_rate, rank_pmf_at, transition_matrix
from linecap.channels import (
    Dmc,
    erasure_symbol,
    kron_power,
    mutual_information,
    capacity_achieving,
)
from linecap.errors import (
    DimensionError,
    InvalidParameterError,
    NotApplicableError,
    ResourceLimitError,
)
from linecap.gf import field as gf_field
from linecap.reduction import LineReductionPlan

CHUNK = 10_000
MAX_EXACT_ROWS = 4096
BRUTE_FORCE_BUDGET = 10**7
THREADS_ENV = "LINECAP_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(n, 1)


def chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(chunk,))))


def _run_chunks(trials: int, seed: int, work, threads=None):
    """Apply ``work(rng, size)`` to every chunk; results in chunk order."""
    sizes = [min(CHUNK, trials - s) for s in range(0, trials, CHUNK)]
    jobs = [(chunk_rng(seed, c), n) for c, n in enumerate(sizes)]
    threads = default_threads() if threads is None else max(int(threads), 1)
    if threads == 1 or len(jobs) == 1:
        return [work(r, n) for r, n in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda j: work(*j), jobs))


def counter_bits(N: int) -> int:
    """B2 = ceil(log2(2N)) bits for the step counter."""
    return math.ceil(math.log2(2 * N))


# --------------------------------------------------------------------------
# schemes and reports


@dataclass(frozen=True)
class Repetition:
    """Each node repeats its decision N times; ``embeddings[l]`` maps batch
    symbols to inputs of link l (None picks the first non-erasure inputs)."""

    alphabet_size: int | None = None
    embeddings: tuple | None = None


@dataclass(frozen=True)
class RandomLinear:
    M: int
    q: int
    T: int

    def __post_init__(self):
        if self.M >= self.T:
            raise InvalidParameterError("random linear recoding needs M < T")
        gf_field(self.q)


@dataclass(frozen=True, eq=False)
class MatrixPlan:
    """Explicit stochastic recoders: F at the source, then one per node.

    With L links the plan holds L matrices (no destination map) or L + 1.
    """

    recoders: tuple

    def __post_init__(self):
        mats = tuple(np.asarray(m, dtype=np.float64) for m in self.recoders)
        if not mats:
            raise InvalidParameterError("a plan needs at least the source map")
        for k, m in enumerate(mats):
            if m.ndim != 2 or np.any(m < -1e-12) or np.max(np.abs(m.sum(axis=1) - 1.0)) > 1e-9:
                raise InvalidParameterError(f"recoder {k} is not a stochastic matrix")
            m.setflags(write=False)
        object.__setattr__(self, "recoders", mats)

    @classmethod
    def from_reduction(cls, plan: LineReductionPlan) -> "MatrixPlan":
        return cls(tuple(plan.recoders))

    def to_dict(self) -> dict:
        return {"recoders": [m.tolist() for m in self.recoders]}

    @classmethod
    def from_dict(cls, data: dict) -> "MatrixPlan":
        if "recoders" not in data:
            raise InvalidParameterError("plan is missing field 'recoders'")
        return cls(tuple(data["recoders"]))


@dataclass
class SimReport:
    scheme: str
    trials: int
    success_count: int
    empirical_rate: float
    B1: int
    B2: int
    seed: int
    histogram: np.ndarray | None = None
    analytic: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def success_fraction(self) -> float:
        return self.success_count / self.trials

    def to_text(self) -> str:
        lines = [
            f"scheme={self.scheme}",
            f"seed={self.seed}",
            f"trials={self.trials}",
        ]
        for k, v in self.params.items():
            lines.append(f"{k}={_fmt(v)}")
        lines += [
            f"success_count={self.success_count}",
            f"success_fraction={_fmt(self.success_fraction)}",
            f"empirical_rate={_fmt(self.empirical_rate)}",
            f"B1={self.B1}",
            f"B2={self.B2}",
        ]
        if self.histogram is not None:
            lines.append("rank,count,empirical,analytic")
            for r, c in enumerate(self.histogram):
                a = "" if self.analytic is None else _fmt(self.analytic[r])
                lines.append(f"{r},{int(c)},{_fmt(c / self.trials)},{a}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _check_trials(trials: int):
    if trials < 1:
        raise InvalidParameterError("trials must be >= 1")


# --------------------------------------------------------------------------
# repetition recoding


def _default_embedding(q: Dmc, k: int):
    e = erasure_symbol(q)
    usable = [x for x in q.inputs if x != e]
    if len(usable) < k:
        raise InvalidParameterError(f"link has only {len(usable)} usable inputs for {k} symbols")
    return tuple(usable[:k])


def _embeddings(network, scheme: Repetition):
    if scheme.embeddings is not None:
        embs = [tuple(e) for e in scheme.embeddings]
        if len(embs) != len(network):
            raise InvalidParameterError("one embedding per link is required")
        k = len(embs[0])
        if any(len(e) != k for e in embs):
            raise InvalidParameterError("embeddings must share the batch alphabet")
    else:
        k = scheme.alphabet_size
        if k is None:
            k = min(len([x for x in q.inputs if x != erasure_symbol(q)]) for q in network)
        embs = [_default_embedding(q, k) for q in network]
    if k < 2:
        raise InvalidParameterError("batch alphabet needs at least 2 symbols")
    for q, emb in zip(network, embs):
        if len(set(emb)) != len(emb):
            raise InvalidParameterError("embedding must be injective")
        rows = np.array([q.row(x) for x in emb])
        if len(np.unique(rows, axis=0)) != len(emb):
            raise InvalidParameterError("embedded inputs must have pairwise distinct rows")
    return k, embs


@dataclass(frozen=True, eq=False)
class _Hop:
    """Per-link data for repetition: candidate inputs and their log-rows.

    Candidate ``k`` (the last one, erasure links only) is the erasure state.
    """

    cdf: np.ndarray
    inputs: np.ndarray
    logrows: np.ndarray
    erasure: bool


def _hops(network, embs, k):
    hops = []
    for q, emb in zip(network, embs):
        e = erasure_symbol(q)
        cand = [q.input_index(x) for x in emb]
        if e is not None:
            cand.append(q.input_index(e))
        rows = q.probs[cand]
        with np.errstate(divide="ignore"):
            logrows = np.log(rows)
        cdf = np.cumsum(q.probs, axis=1)
        cdf[:, -1] = 1.0
        hops.append(_Hop(cdf, np.array(cand), logrows, e is not None))
    return hops


def _ml_decide(counts: np.ndarray, logrows: np.ndarray) -> np.ndarray:
    """argmax_a sum_y counts[y] log Q(y|a), ties to the lowest index."""
    with np.errstate(invalid="ignore"):
        ll = np.where(counts[:, None, :] > 0, counts[:, None, :] * logrows[None, :, :], 0.0)
    return np.argmax(ll.sum(axis=2), axis=1)


def _repetition_chunk(hops, k, N, rng, size):
    src = rng.integers(0, k, size=size)
    state = src.copy()
    for hop in hops:
        # an erased state can only be forwarded on erasure links; elsewhere
        # the node falls back to symbol 0
        st = state if hop.erasure else np.where(state == k, 0, state)
        idx = hop.inputs[st]
        u = rng.random((size, N))
        outs = (u[:, :, None] >= hop.cdf[idx][:, None, :]).sum(axis=2)
        outs = np.minimum(outs, hop.cdf.shape[1] - 1)
        counts = np.zeros((size, hop.cdf.shape[1]), dtype=np.int64)
        np.add.at(counts, (np.arange(size)[:, None], outs), 1)
        state = _ml_decide(counts, hop.logrows)
    return int(np.sum(state == src))


def simulate_repetition(network, n: int, trials: int, seed: int, scheme: Repetition | None = None,
                        threads=None) -> SimReport:
    """Success rate of repetition recoding with ML decisions at every node."""
    _check_trials(trials)
    if n < 1:
        raise InvalidParameterError("N must be >= 1")
    network = list(network)
    if not network:
        raise InvalidParameterError("network needs at least one link")
    scheme = scheme or Repetition()
    k, embs = _embeddings(network, scheme)
    hops = _hops(network, embs, k)
    wins = sum(_run_chunks(trials, seed, lambda r, s: _repetition_chunk(hops, k, n, r, s), threads))
    out_card = max(len(q.outputs) for q in network)
    return SimReport(
        "repetition",
        trials,
        wins,
        wins / trials * math.log2(k) / n,
        out_card * math.ceil(math.log2(n + 1)),
        counter_bits(n),
        seed,
        params={"L": len(network), "N": n, "alphabet_size": k},
    )


# --------------------------------------------------------------------------
# random linear recoding


def _rlnc_chunk(gf, eps, M, N, L, rng, size):
    if L == 0:
        return np.bincount(np.full(size, M), minlength=M + 1)
    coef = gf.random(rng, (size, N, M))
    for hop in range(L):
        keep = rng.random((size, N)) >= eps
        coef = np.where(keep[:, :, None], coef, 0)
        if hop < L - 1:
            mix = gf.random(rng, (size, N, N))
            coef = gf.matmul(mix, coef)
    ranks = gf.rank(coef)
    return np.bincount(ranks, minlength=M + 1)


def simulate_random_linear(epsilon: float, m: int, n: int, L: int, q: int, trials: int, seed: int,
                           T: int = 1024, threads=None) -> SimReport:
    """Rank histogram of a batch after L erasure links with random linear recoding."""
    _check_trials(trials)
    if not 0 <= epsilon <= 1:
        raise InvalidParameterError("epsilon must be a probability")
    if m < 1 or n < 1 or L < 0:
        raise InvalidParameterError("need M >= 1, N >= 1, L >= 0")
    scheme = RandomLinear(m, q, T)
    gf = gf_field(q)
    hist = sum(_run_chunks(trials, seed, lambda r, s: _rlnc_chunk(gf, epsilon, m, n, L, r, s), threads))
    chain = transition_matrix(m, n, epsilon, q)
    analytic = rank_pmf_at(chain, L)
    ranks = np.arange(m + 1)
    mean_rank = float(ranks @ hist) / trials
    rate = (1.0 - m / T) * mean_rank / n * T * math.log2(q)
    return SimReport(
        "rlnc",
        trials,
        int(hist[m]),
        rate,
        m * T * math.ceil(math.log2(q)),
        counter_bits(n),
        seed,
        histogram=np.asarray(hist, dtype=np.int64),
        analytic=analytic,
        params={"L": L, "M": m, "N": n, "q": q, "T": T, "epsilon": float(epsilon),
                "analytic_rate": bats_rate(m, n, L, epsilon, q, T) if L > 0 else rate},
    )


def total_variation(p, r) -> float:
    return 0.5 * float(np.abs(np.asarray(p, dtype=np.float64) - np.asarray(r, dtype=np.float64)).sum())


# --------------------------------------------------------------------------
# exact engine


def _check_plan(plan):
    if not isinstance(plan, MatrixPlan):
        raise InvalidParameterError("only explicit MatrixPlan recoders have an exact end-to-end matrix")


def exact_end_to_end(plan: MatrixPlan, network, n: int = 1) -> Dmc:
    """F Q_1^(xn) Phi_1 ... Q_L^(xn) (Phi_L)."""
    _check_plan(plan)
    network = list(network)
    L = len(network)
    mats = plan.recoders
    if len(mats) not in (L, L + 1):
        raise DimensionError(f"plan has {len(mats)} recoders for {L} links")
    acc = mats[0]
    if acc.shape[0] > MAX_EXACT_ROWS:
        raise ResourceLimitError("source alphabet too large", required=acc.shape[0], limit=MAX_EXACT_ROWS)
    for ell, q in enumerate(network):
        rows = len(q.inputs) ** n
        if rows > MAX_EXACT_ROWS or len(q.outputs) ** n > MAX_EXACT_ROWS:
            raise ResourceLimitError(f"link {ell} has too many {n}-use symbols",
                                     required=max(rows, len(q.outputs) ** n), limit=MAX_EXACT_ROWS)
        qn = kron_power(q, n).probs
        if acc.shape[1] != qn.shape[0]:
            raise DimensionError(f"recoder before link {ell} has {acc.shape[1]} columns, link expects {qn.shape[0]}")
        acc = acc @ qn
        if ell + 1 < len(mats):
            phi = mats[ell + 1]
            if acc.shape[1] != phi.shape[0]:
                raise DimensionError(f"recoder after link {ell} has {phi.shape[0]} rows, link emits {acc.shape[1]}")
            acc = acc @ phi
    acc = np.clip(acc, 0.0, None)
    acc /= acc.sum(axis=1, keepdims=True)
    return Dmc(range(acc.shape[0]), range(acc.shape[1]), acc)


def _one_hot(idx, cols) -> np.ndarray:
    m = np.zeros((len(idx), cols))
    m[np.arange(len(idx)), idx] = 1.0
    return m


def repetition_plan(network, n: int, alphabet_size: int | None = None, embeddings=None) -> MatrixPlan:
    """Repetition with ML decisions as a deterministic MatrixPlan (M = 1).

    The destination map outputs the decided symbol, with one extra column for
    the erasure decision when the last link is an erasure link.
    """
    network = list(network)
    k, embs = _embeddings(network, Repetition(alphabet_size, None if embeddings is None else tuple(embeddings)))
    hops = _hops(network, embs, k)
    powers = [kron_power(q, n) for q in network]
    mats = []
    first = powers[0]
    mats.append(_one_hot([first.input_index(tuple([x] * n) if n > 1 else x) for x in embs[0]],
                         len(first.inputs)))
    for ell, (q, qn, hop) in enumerate(zip(network, powers, hops)):
        outs = qn.outputs if n > 1 else [(y,) for y in qn.outputs]
        counts = np.zeros((len(outs), len(q.outputs)), dtype=np.int64)
        for r, tup in enumerate(outs):
            for y in tup:
                counts[r, q.output_index(y)] += 1
        dec = _ml_decide(counts, hop.logrows)
        if ell + 1 < len(network):
            nxt, nq = powers[ell + 1], network[ell + 1]
            e_next = erasure_symbol(nq)
            targets = []
            for d in dec:
                if d == k:
                    x = e_next if e_next is not None else embs[ell + 1][0]
                else:
                    x = embs[ell + 1][d]
                targets.append(nxt.input_index(tuple([x] * n) if n > 1 else x))
            mats.append(_one_hot(targets, len(nxt.inputs)))
        else:
            mats.append(_one_hot(dec, k + (1 if hop.erasure else 0)))
    return MatrixPlan(tuple(mats))


def _enumeration_size(network, m, n, a_card):
    src = a_card**m
    size = (len(network[0].inputs) ** n) ** src
    for ell in range(1, len(network)):
        size *= (len(network[ell].inputs) ** n) ** (len(network[ell - 1].outputs) ** n)
    return size


@dataclass(frozen=True, eq=False)
class BruteForceResult:
    rate: float
    plan: MatrixPlan
    evaluated: int


def brute_force_search(network, m: int, n: int, log_alphabet: float, tol: float = 1e-9,
                       budget: int = BRUTE_FORCE_BUDGET) -> BruteForceResult:
    """Maximise capacity over all deterministic f and phi_l (no destination map)."""
    network = list(network)
    if not network:
        raise InvalidParameterError("network needs at least one link")
    a_card = int(round(2.0**log_alphabet))
    if a_card < 1 or abs(math.log2(a_card) - log_alphabet) > 1e-9:
        raise InvalidParameterError("log_alphabet must be log2 of an integer alphabet size")
    size = _enumeration_size(network, m, n, a_card)
    if size > budget:
        raise ResourceLimitError(f"enumeration needs {size} recoding schemes (budget {budget})",
                                 required=size, limit=budget)
    qn = [kron_power(q, n).probs for q in network]
    src = a_card**m
    choices = [itertools.product(range(qn[0].shape[0]), repeat=src)]
    for ell in range(1, len(network)):
        choices.append(list(itertools.product(range(qn[ell].shape[0]), repeat=qn[ell - 1].shape[1])))
    choices[0] = list(choices[0])
    best_rate, best_maps = -1.0, None
    seen = {}
    count = 0
    for maps in itertools.product(*choices):
        acc = qn[0][list(maps[0])]
        for ell in range(1, len(network)):
            phi = np.asarray(maps[ell])
            # acc @ one_hot(phi) @ Q_l == acc @ Q_l[phi]
            acc = acc @ qn[ell][phi]
        key = acc.tobytes()
        count += 1
        if key in seen:
            c = seen[key]
        else:
            c = capacity_achieving(acc, tol)[0]
            seen[key] = c
        if c > best_rate:
            best_rate, best_maps = c, maps
    mats = [_one_hot(best_maps[0], qn[0].shape[0])]
    for ell in range(1, len(network)):
        mats.append(_one_hot(best_maps[ell], qn[ell].shape[0]))
    return BruteForceResult(best_rate / n, MatrixPlan(tuple(mats)), count)


def brute_force_capacity(network, m: int, n: int, log_alphabet: float, tol: float = 1e-9,
                         budget: int = BRUTE_FORCE_BUDGET) -> float:
    return brute_force_search(network, m, n, log_alphabet, tol, budget).rate


def plan_rate(plan: MatrixPlan, network, n: int = 1, tol: float = 1e-9) -> float:
    """Capacity of the end-to-end channel of ``plan`` per channel use."""
    return capacity_achieving(exact_end_to_end(plan, network, n).probs, tol)[0] / n


# --------------------------------------------------------------------------
# erasure bottleneck decomposition


@dataclass(frozen=True, eq=False)
class BottleneckDecomposition:
    """W = p0 W0 + p1 W1, where W0 is conditioned on some link erasing all N uses."""

    p0: float
    p1: float
    info_given_e0: float
    info_given_e1: float
    info: float
    W0: np.ndarray
    W1: np.ndarray
    W: np.ndarray


def _erasure_pattern_matrix(q: Dmc, n: int, mask) -> np.ndarray:
    """Deterministic n-use channel when the uses flagged in ``mask`` erase."""
    e = erasure_symbol(q)
    qn = kron_power(q, n)
    mat = np.zeros(qn.shape)
    for r, u in enumerate(qn.inputs):
        tup = u if n > 1 else (u,)
        out = tuple(e if mk else x for x, mk in zip(tup, mask))
        mat[r, qn.output_index(out if n > 1 else out[0])] = 1.0
    return mat


def erasure_bottleneck_decomposition(network, plan: MatrixPlan, m: int, n: int) -> BottleneckDecomposition:
    """Condition the end-to-end matrix on the bottleneck event by exhaustive enumeration."""
    _check_plan(plan)
    network = list(network)
    eps = []
    for ell, q in enumerate(network):
        e = erasure_symbol(q)
        if e is None:
            raise NotApplicableError(f"link {ell} is not a packet erasure channel")
        x0 = next(x for x in q.inputs if x != e)
        eps.append(q.prob(e, x0))
    if len(network) * n > 20:
        raise ResourceLimitError("too many erasure patterns", required=2 ** (len(network) * n), limit=2**20)
    mats = plan.recoders
    if len(mats) not in (len(network), len(network) + 1):
        raise DimensionError(f"plan has {len(mats)} recoders for {len(network)} links")
    patterns = [
        {mask: _erasure_pattern_matrix(q, n, mask) for mask in itertools.product((False, True), repeat=n)}
        for q in network
    ]
    rows = mats[0].shape[0]
    out_cols = None
    W0 = W1 = None
    p0 = p1 = 0.0
    for masks in itertools.product(*(list(itertools.product((False, True), repeat=n)) for _ in network)):
        prob = 1.0
        for e_l, mask in zip(eps, masks):
            k = sum(mask)
            prob *= e_l**k * (1.0 - e_l) ** (n - k)
        if prob == 0.0:
            continue
        acc = mats[0]
        for ell, mask in enumerate(masks):
            acc = acc @ patterns[ell][mask]
            if ell + 1 < len(mats):
                acc = acc @ mats[ell + 1]
        if out_cols is None:
            out_cols = acc.shape[1]
            W0 = np.zeros((rows, out_cols))
            W1 = np.zeros((rows, out_cols))
        bottleneck = any(all(mask) for mask in masks)
        if bottleneck:
            W0 += prob * acc
            p0 += prob
        else:
            W1 += prob * acc
            p1 += prob
    W = W0 + W1
    uniform = np.full(rows, 1.0 / rows)
    i0 = mutual_information(uniform, W0 / p0) if p0 > 0 else 0.0
    i1 = mutual_information(uniform, W1 / p1) if p1 > 0 else 0.0
    return BottleneckDecomposition(
        p0, p1, i0, i1, mutual_information(uniform, W),
        W0 / p0 if p0 > 0 else W0, W1 / p1 if p1 > 0 else W1, W,
    )


# --------------------------------------------------------------------------
# replaying explicit plans


def _sample_rows(cdf: np.ndarray, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(len(idx))
    out = (u[:, None] >= cdf[idx]).sum(axis=1)
    return np.minimum(out, cdf.shape[1] - 1)


def _cdf(mat: np.ndarray) -> np.ndarray:
    c = np.cumsum(mat, axis=1)
    c[:, -1] = 1.0
    return c


def simulate_plan(plan: MatrixPlan, network, n: int, trials: int, seed: int, threads=None) -> SimReport:
    """Monte Carlo replay of a MatrixPlan; success means the destination
    output index equals the source symbol index."""
    _check_trials(trials)
    _check_plan(plan)
    network = list(network)
    mats = plan.recoders
    if len(mats) not in (len(network), len(network) + 1):
        raise DimensionError(f"plan has {len(mats)} recoders for {len(network)} links")
    exact = exact_end_to_end(plan, network, n)
    steps = []
    steps.append(_cdf(mats[0]))
    for ell, q in enumerate(network):
        steps.append(_cdf(kron_power(q, n).probs))
        if ell + 1 < len(mats):
            steps.append(_cdf(mats[ell + 1]))
    src_card = mats[0].shape[0]

    def work(rng, size):
        src = rng.integers(0, src_card, size=size)
        state = src
        for cdf in steps:
            state = _sample_rows(cdf, state, rng)
        return int(np.sum(state == src))

    wins = sum(_run_chunks(trials, seed, work, threads))
    diag = float(sum(exact.probs[i, i] for i in range(min(exact.shape)))) / src_card
    return SimReport(
        "plan",
        trials,
        wins,
        wins / trials * math.log2(src_card) / n if src_card > 1 else 0.0,
        0,
        counter_bits(n),
        seed,
        params={"L": len(network), "N": n, "exact_success": diag},
    )
