"""Vectorised arithmetic over prime fields and GF(256).

GF(256) uses the AES reducing polynomial x^8 + x^4 + x^3 + x + 1 (0x11B)
with generator 0x03 for the log/antilog tables.  Every operation accepts
integer numpy arrays and broadcasts.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from linecap.errors import InvalidParameterError

AES_POLY = 0x11B
GF256_GENERATOR = 0x03


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    f = 2
    while f * f <= n:
        if n % f == 0:
            return False
        f += 1
    return True


def gf256_tables():
    """Return ``(exp, log)``; ``exp`` has length 510 so exp[log a + log b] needs no mod."""
    exp = np.zeros(510, dtype=np.int64)
    log = np.zeros(256, dtype=np.int64)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        # multiply by 3 = x * 2 + x, reducing by the AES polynomial
        x2 = x << 1
        if x2 & 0x100:
            x2 ^= AES_POLY
        x = x2 ^ x
    exp[255:510] = exp[:255]
    return exp, log


def _gf256_mul_scalar(a: int, b: int) -> int:
    """Shift-and-add multiplication; used to cross-check the tables."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        if a & 0x100:
            a ^= AES_POLY
        b >>= 1
    return r


class GaloisField:
    """F_q for prime q, or q = 256."""

    def __init__(self, q: int):
        if q != 256 and not _is_prime(q):
            raise InvalidParameterError(f"unsupported field order {q}; use a prime or 256")
        self.q = q
        self.char2 = q == 2 or q == 256
        if q == 256:
            exp, log = gf256_tables()
            table = exp[(log[:, None] + log[None, :])]
            table[0, :] = 0
            table[:, 0] = 0
            inv = np.zeros(256, dtype=np.int64)
            inv[1:] = exp[(255 - log[1:]) % 255]
            self.exp, self.log = exp, log
        else:
            a = np.arange(q)
            table = (a[:, None] * a[None, :]) % q
            inv = np.zeros(q, dtype=np.int64)
            inv[1:] = [pow(int(v), q - 2, q) for v in range(1, q)]
        table.setflags(write=False)
        inv.setflags(write=False)
        self.mul_table = table
        self.inv_table = inv

    def __repr__(self):
        return f"GaloisField({self.q})"

    def add(self, a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        if self.q == 256:
            return a ^ b
        return (a + b) % self.q

    def sub(self, a, b):
        a = np.asarray(a)
        b = np.asarray(b)
        if self.q == 256:
            return a ^ b
        return (a - b) % self.q

    def neg(self, a):
        a = np.asarray(a)
        return a if self.q == 256 else (-a) % self.q

    def mul(self, a, b):
        return self.mul_table[np.asarray(a), np.asarray(b)]

    def inv(self, a):
        a = np.asarray(a)
        if np.any(a == 0):
            raise ZeroDivisionError("zero has no multiplicative inverse")
        return self.inv_table[a]

    def random(self, rng: np.random.Generator, shape):
        return rng.integers(0, self.q, size=shape, dtype=np.int64)

    def matmul(self, a, b):
        """Batched matrix product over the field; shapes (..., n, k) @ (..., k, m)."""
        a = np.asarray(a)
        b = np.asarray(b)
        if self.q == 256:
            prods = self.mul_table[a[..., :, :, None], b[..., None, :, :]]
            return np.bitwise_xor.reduce(prods, axis=-2)
        return np.matmul(a, b) % self.q

    def rank(self, mats) -> np.ndarray:
        """Rank of each matrix in a batch of shape (..., rows, cols) by elimination."""
        mats = np.array(mats, dtype=np.int64, copy=True)
        if mats.ndim == 2:
            return int(self.rank(mats[None])[0])
        lead = mats.shape[:-2]
        rows, cols = mats.shape[-2:]
        work = mats.reshape(-1, rows, cols)
        batch = work.shape[0]
        rank = np.zeros(batch, dtype=np.int64)
        row_ids = np.arange(rows)
        all_b = np.arange(batch)
        for j in range(cols):
            if rows == 0:
                break
            cand = (work[:, :, j] != 0) & (row_ids[None, :] >= rank[:, None])
            has = cand.any(axis=1)
            if not has.any():
                continue
            b = all_b[has]
            piv = np.argmax(cand[has], axis=1)
            tgt = rank[has]
            # swap pivot row into position `rank`
            prow = work[b, piv].copy()
            work[b, piv] = work[b, tgt]
            work[b, tgt] = prow
            scale = self.inv(prow[:, j])
            prow = self.mul(prow, scale[:, None])
            work[b, tgt] = prow
            factors = work[b, :, j].copy()
            factors[np.arange(len(b)), tgt] = 0
            work[b] = self.sub(work[b], self.mul(factors[:, :, None], prow[:, None, :]))
            rank[has] += 1
        return rank.reshape(lead)


@lru_cache(maxsize=None)
def field(q: int) -> GaloisField:
    return GaloisField(q)


def gf_rank(matrix, q: int = 2) -> int:
    """Rank of a single matrix over F_q."""
    m = np.asarray(matrix, dtype=np.int64)
    if m.size == 0:
        return 0
    return field(q).rank(m)
