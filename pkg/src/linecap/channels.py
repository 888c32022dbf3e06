"""Discrete memoryless channels: construction, algebra, information measures
and zero-error structure.

A :class:`Dmc` is an immutable row-stochastic matrix with labelled input and
output alphabets.  Labels are opaque hashables; tensor powers use tuples in
lexicographic order of the underlying alphabets.
"""

from __future__ import annotations

import itertools
import json
import math
import re
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from linecap.errors import (
    ConvergenceError,
    DimensionError,
    InvalidParameterError,
    ResourceLimitError,
)

ROW_TOL = 1e-12
ERASURE = "e"

# Largest number of matrix entries kron_power will materialise.
MAX_ENTRIES = 1 << 26


class Dmc:
    """Transition matrix ``probs[x, y] = Q(y|x)`` with named alphabets."""

    __slots__ = ("inputs", "outputs", "probs", "_in_index", "_out_index")

    def __init__(self, inputs: Sequence[Hashable], outputs: Sequence[Hashable], probs):
        inputs = tuple(inputs)
        outputs = tuple(outputs)
        if not inputs or not outputs:
            raise InvalidParameterError("alphabets must be non-empty")
        if len(set(inputs)) != len(inputs) or len(set(outputs)) != len(outputs):
            raise InvalidParameterError("alphabets must be duplicate-free")
        mat = np.array(probs, dtype=np.float64)
        if mat.shape != (len(inputs), len(outputs)):
            raise DimensionError(
                f"matrix shape {mat.shape} does not match alphabets "
                f"({len(inputs)}, {len(outputs)})"
            )
        if not np.all(np.isfinite(mat)) or np.any(mat < 0):
            raise InvalidParameterError("transition probabilities must be finite and >= 0")
        sums = mat.sum(axis=1)
        dev = np.max(np.abs(sums - 1.0))
        if dev > ROW_TOL:
            raise InvalidParameterError(f"rows must sum to 1 (max deviation {dev:.3g})")
        if dev > 0:
            mat = mat / sums[:, None]
        if np.any(mat > 1):
            raise InvalidParameterError("transition probabilities must be <= 1")
        mat.setflags(write=False)
        self.inputs = inputs
        self.outputs = outputs
        self.probs = mat
        self._in_index = {x: i for i, x in enumerate(inputs)}
        self._out_index = {y: j for j, y in enumerate(outputs)}

    def __setattr__(self, name, value):
        if hasattr(self, "_out_index"):
            raise AttributeError("Dmc is immutable")
        object.__setattr__(self, name, value)

    def __repr__(self):
        return f"Dmc({len(self.inputs)}x{len(self.outputs)})"

    def __eq__(self, other):
        if not isinstance(other, Dmc):
            return NotImplemented
        return (
            self.inputs == other.inputs
            and self.outputs == other.outputs
            and np.array_equal(self.probs, other.probs)
        )

    __hash__ = None

    @property
    def shape(self):
        return self.probs.shape

    def input_index(self, x) -> int:
        return self._in_index[x]

    def output_index(self, y) -> int:
        return self._out_index[y]

    def prob(self, y, x) -> float:
        """Q(y|x)."""
        return float(self.probs[self._in_index[x], self._out_index[y]])

    def row(self, x) -> np.ndarray:
        return self.probs[self._in_index[x]]

    def restrict_inputs(self, inputs: Iterable[Hashable]) -> "Dmc":
        inputs = tuple(inputs)
        rows = [self._in_index[x] for x in inputs]
        return Dmc(inputs, self.outputs, self.probs[rows])

    def relabel(self, inputs=None, outputs=None) -> "Dmc":
        return Dmc(
            self.inputs if inputs is None else inputs,
            self.outputs if outputs is None else outputs,
            self.probs,
        )

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0) | (self.probs == 1)))

    def to_dict(self) -> dict:
        return {
            "inputs": [_label_str(x) for x in self.inputs],
            "outputs": [_label_str(y) for y in self.outputs],
            "rows": self.probs.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Dmc":
        try:
            return cls(data["inputs"], data["outputs"], data["rows"])
        except KeyError as exc:
            raise InvalidParameterError(f"channel definition missing field {exc}") from None


def _label_str(x) -> str:
    if isinstance(x, tuple):
        return ",".join(_label_str(v) for v in x)
    return str(x)


@dataclass(frozen=True)
class InputDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_TOL:
            raise InvalidParameterError("input distribution must be a probability vector")
        object.__setattr__(self, "probs", p)

    @classmethod
    def uniform(cls, size: int) -> "InputDistribution":
        return cls(np.full(size, 1.0 / size))


@dataclass(frozen=True)
class ChannelStatusSample:
    """One output per input symbol; the channel acts as ``y = z[x]``."""

    inputs: tuple
    assignment: tuple

    def output(self, x):
        return self.assignment[self.inputs.index(x)]


# --------------------------------------------------------------------------
# constructors


def make_erasure(alphabet_size: int, epsilon: float) -> Dmc:
    """Packet erasure channel over ``{0, ..., k-1, 'e'}`` with Q(e|e) = 1."""
    if alphabet_size < 2:
        raise InvalidParameterError("erasure alphabet needs at least 2 symbols")
    if not 0 < epsilon < 1:
        raise InvalidParameterError("erasure probability must lie in (0, 1)")
    k = alphabet_size
    labels = tuple(range(k)) + (ERASURE,)
    mat = np.zeros((k + 1, k + 1))
    mat[np.arange(k), np.arange(k)] = 1.0 - epsilon
    mat[:k, k] = epsilon
    mat[k, k] = 1.0
    return Dmc(labels, labels, mat)


def bsc(p: float) -> Dmc:
    if not 0 <= p <= 1:
        raise InvalidParameterError("crossover probability must lie in [0, 1]")
    return Dmc((0, 1), (0, 1), [[1 - p, p], [p, 1 - p]])


def identity(k: int) -> Dmc:
    if k < 1:
        raise InvalidParameterError("identity channel needs k >= 1")
    labels = tuple(range(k))
    return Dmc(labels, labels, np.eye(k))


def make_q3x3() -> Dmc:
    """The non-canonical ternary channel whose rows are pairwise overlapping."""
    h = 0.5
    return Dmc((0, 1, 2), (0, 1, 2), [[h, h, 0], [h, 0, h], [0, h, h]])


def make_uniform_noise(s: int, rho: float) -> Dmc:
    """U_s(rho): diagonal rho, every off-diagonal entry (1 - rho)/(s - 1)."""
    if s < 2:
        raise InvalidParameterError("U_s needs s >= 2")
    if not 1.0 / s < rho <= 1.0:
        raise InvalidParameterError(f"rho must lie in (1/{s}, 1], got {rho}")
    return Dmc(range(s), range(s), uniform_noise_matrix(s, rho))


def uniform_noise_matrix(s: int, rho: float) -> np.ndarray:
    mat = np.full((s, s), (1.0 - rho) / (s - 1))
    np.fill_diagonal(mat, rho)
    return mat


def erasure_symbol(q: Dmc):
    """Return the erasure label if ``q`` has packet-erasure structure, else None."""
    if q.inputs != q.outputs:
        return None
    for e in q.inputs:
        j = q.output_index(e)
        if q.probs[j, j] != 1.0:
            continue
        ok = True
        eps = None
        for i, _ in enumerate(q.inputs):
            if i == j:
                continue
            row = q.probs[i]
            rest = row.copy()
            rest[i] = 0
            rest[j] = 0
            if np.any(rest != 0) or (eps is not None and row[j] != eps):
                ok = False
                break
            eps = row[j]
        if ok and eps is not None and eps > 0:
            return e
    return None


# --------------------------------------------------------------------------
# algebra


def kron_power(q: Dmc, n: int) -> Dmc:
    """Memoryless n-fold use of ``q``; alphabets become n-tuples."""
    if n < 1:
        raise InvalidParameterError("tensor power needs n >= 1")
    if n == 1:
        return q
    rows, cols = len(q.inputs) ** n, len(q.outputs) ** n
    if rows * cols > MAX_ENTRIES:
        raise ResourceLimitError(
            f"Q^(x){n} needs {rows}x{cols} entries", required=rows * cols, limit=MAX_ENTRIES
        )
    mat = q.probs
    for _ in range(n - 1):
        mat = np.kron(mat, q.probs)
    return Dmc(
        tuple(itertools.product(q.inputs, repeat=n)),
        tuple(itertools.product(q.outputs, repeat=n)),
        mat,
    )


def compose(*channels: Dmc) -> Dmc:
    """Cascade ``a -> b -> ...``; each output alphabet must equal the next input."""
    if not channels:
        raise InvalidParameterError("compose needs at least one channel")
    acc = channels[0]
    mat = acc.probs
    for nxt in channels[1:]:
        if acc.outputs != nxt.inputs:
            raise DimensionError(
                f"cannot compose: output alphabet of size {len(acc.outputs)} "
                f"does not match input alphabet of size {len(nxt.inputs)}"
            )
        mat = mat @ nxt.probs
        acc = nxt
    return Dmc(channels[0].inputs, channels[-1].outputs, _clean_rows(mat))


def _clean_rows(mat: np.ndarray) -> np.ndarray:
    mat = np.clip(mat, 0.0, None)
    return mat / mat.sum(axis=1, keepdims=True)


# --------------------------------------------------------------------------
# information measures


def _xlogx_ratio(w: np.ndarray, qy: np.ndarray) -> np.ndarray:
    """Row-wise sum of w log2(w/qy) with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, w * np.log2(np.where(w > 0, w, 1.0) / np.where(qy > 0, qy, 1.0)), 0.0)
    return terms.sum(axis=-1)


def mutual_information(p, q) -> float:
    """I(X;Y) in bits for input law ``p`` and channel ``q`` (Dmc or matrix)."""
    w = q.probs if isinstance(q, Dmc) else np.asarray(q, dtype=np.float64)
    p = p.probs if isinstance(p, InputDistribution) else np.asarray(p, dtype=np.float64)
    if p.shape != (w.shape[0],):
        raise DimensionError("input distribution does not match channel inputs")
    qy = p @ w
    return float(max(p @ _xlogx_ratio(w, qy[None, :]), 0.0))


def capacity_achieving(q, tol: float = 1e-9, inputs=None, max_iter: int = 100_000):
    """Blahut-Arimoto iteration; returns ``(C, p)`` with ``C <= C(Q) <= C + tol``.

    ``inputs`` restricts the optimisation to a subset of the input alphabet.
    """
    if tol <= 0:
        raise InvalidParameterError("tol must be positive")
    if isinstance(q, Dmc):
        if inputs is not None:
            q = q.restrict_inputs(inputs)
        w = q.probs
    else:
        w = np.asarray(q, dtype=np.float64)
    m = w.shape[0]
    p = np.full(m, 1.0 / m)
    if m == 2:
        # concave in one variable; Blahut-Arimoto crawls on nearly equal rows
        def neg(t):
            pt = np.array([t, 1.0 - t])
            return -float(pt @ _xlogx_ratio(w, (pt @ w)[None, :]))

        t = minimize_scalar(neg, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-12}).x
        p = np.array([t, 1.0 - t])
    for _ in range(max_iter):
        qy = p @ w
        d = _xlogx_ratio(w, qy[None, :])
        lower = float(p @ d)
        upper = float(d.max())
        if upper - lower <= tol:
            return max(lower, 0.0), p
        p = p * np.exp2(d - upper)
        p /= p.sum()
    raise ConvergenceError(f"capacity iteration did not reach tol={tol} in {max_iter} steps")


def capacity(q, tol: float = 1e-9, inputs=None) -> float:
    return capacity_achieving(q, tol, inputs)[0]


# --------------------------------------------------------------------------
# zero-error structure


def epsilon_q(q: Dmc) -> float:
    """Largest eps such that every input pair shares an output with mass >= eps."""
    w = q.probs
    shared = np.minimum(w[:, None, :], w[None, :, :]).max(axis=2)
    return float(shared.min())


def is_canonical(q: Dmc):
    """``(y*, eps)`` for the output reachable from every input, or None."""
    col_min = q.probs.min(axis=0)
    j = int(np.argmax(col_min))
    if col_min[j] <= 0:
        return None
    return q.outputs[j], float(col_min[j])


def adjacency(q: Dmc) -> np.ndarray:
    """Boolean matrix: inputs x1, x2 adjacent iff some y has Q(y|x1)Q(y|x2) > 0."""
    support = (q.probs > 0).astype(np.int64)
    return (support @ support.T) > 0


def non_adjacent_pair(q: Dmc):
    adj = adjacency(q)
    m = adj.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            if not adj[i, j]:
                return i, j
    return None


def zero_error_positive(q: Dmc) -> bool:
    """True iff two inputs can never be confused (C_0 > 0)."""
    return non_adjacent_pair(q) is not None


def sample_status(q: Dmc, rng: np.random.Generator) -> ChannelStatusSample:
    """Draw z_x ~ Q(.|x) independently for every input x."""
    cdf = np.cumsum(q.probs, axis=1)
    u = rng.random(len(q.inputs))
    idx = (u[:, None] >= cdf).sum(axis=1)
    idx = np.minimum(idx, len(q.outputs) - 1)
    return ChannelStatusSample(q.inputs, tuple(q.outputs[j] for j in idx))


def channel_function(x, z: ChannelStatusSample):
    """alpha(x, z) = z_x."""
    return z.output(x)


def enumerate_statuses(q: Dmc):
    """Yield ``(assignment, probability)`` over every status with positive mass.

    ``assignment[i]`` is the output index produced by input ``i``.
    """
    supports = [np.flatnonzero(row > 0) for row in q.probs]
    for combo in itertools.product(*supports):
        prob = 1.0
        for i, j in enumerate(combo):
            prob *= q.probs[i, j]
        yield combo, prob


# --------------------------------------------------------------------------
# definitions: JSON files and the built-in grammar


class ChannelSyntaxError(InvalidParameterError):
    def __init__(self, message, text, position):
        super().__init__(f"{message} at position {position}: {text!r}")
        self.text = text
        self.position = position


_BUILTIN = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(([^()]*)\))?\s*(?:x\s*(\d+))?\s*$")


def _split_top_level(text: str):
    depth = 0
    start = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth < 0:
                raise ChannelSyntaxError("unbalanced ')'", text, i)
        elif ch == "," and depth == 0:
            yield start, text[start:i]
            start = i + 1
    if depth != 0:
        raise ChannelSyntaxError("unbalanced '('", text, len(text))
    yield start, text[start:]


def _builtin(name: str, args: list[float], text: str, pos: int) -> Dmc:
    try:
        if name == "erasure":
            k, eps = args
            if k != int(k):
                raise ValueError
            return make_erasure(int(k), eps)
        if name == "bsc":
            (p,) = args
            return bsc(p)
        if name == "q3x3":
            if args:
                raise ValueError
            return make_q3x3()
        if name == "uniform":
            s, rho = args
            return make_uniform_noise(int(s), rho)
        if name == "identity":
            (k,) = args
            return identity(int(k))
    except (ValueError, TypeError) as exc:
        if isinstance(exc, InvalidParameterError):
            raise ChannelSyntaxError(str(exc), text, pos) from None
        raise ChannelSyntaxError(f"bad arguments for {name}", text, pos) from None
    raise ChannelSyntaxError(f"unknown channel {name!r}", text, pos)


def parse_channel(token: str, *, _text=None, _pos=0) -> list[Dmc]:
    """Parse one ``name(args)`` token with optional ``xK`` repetition."""
    text = token if _text is None else _text
    if token.strip().startswith("@"):
        return [load_channel(token.strip()[1:])]
    m = _BUILTIN.match(token)
    if m is None:
        raise ChannelSyntaxError("cannot parse channel", text, _pos)
    name, argstr, rep = m.groups()
    args = []
    if argstr is not None and argstr.strip():
        for a in argstr.split(","):
            try:
                args.append(float(a))
            except ValueError:
                raise ChannelSyntaxError(f"bad number {a.strip()!r}", text, _pos) from None
    q = _builtin(name, args, text, _pos)
    count = int(rep) if rep is not None else 1
    if count < 1:
        raise ChannelSyntaxError("repetition count must be >= 1", text, _pos)
    return [q] * count


def parse_links(text: str) -> list[Dmc]:
    """Parse a comma-separated link list such as ``"bsc(0.1),erasure(2,0.2)x3"``.

    ``@path.json`` loads a channel definition file.
    """
    links = []
    for pos, tok in _split_top_level(text):
        if not tok.strip():
            raise ChannelSyntaxError("empty channel", text, pos)
        links.extend(parse_channel(tok, _text=text, _pos=pos))
    return links


def load_channel(path) -> Dmc:
    with open(path) as fh:
        raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ChannelSyntaxError(f"invalid JSON ({exc.msg}, line {exc.lineno})", str(path), exc.pos) from None
    return Dmc.from_dict(data)


def dump_channel(q: Dmc, path) -> None:
    with open(path, "w") as fh:
        json.dump(q.to_dict(), fh, indent=1)
