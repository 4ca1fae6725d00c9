"""Bloom filter with double hashing, used as puncture bookkeeping.

Positions are 1-based, ``H_j(u) = (a(u) + j*b(u)) mod l + 1`` for ``j = 1..k``,
where ``a`` and ``b`` are the two 192-bit halves of ``SHA-384(seed || u)``.
Bit ``i`` lives in byte ``(i-1) // 8`` at bit ``(i-1) % 8`` (little-endian
bit order).
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass

from .errors import FormatError

MAGIC = b"BLMF"
VERSION = 1
_HEADER = struct.Struct("<4sHQdQIQQQ")


@dataclass(frozen=True)
class BloomParams:
    n: int
    pr: float
    ell: int
    k: int

    def false_positive_rate(self, load: int | None = None) -> float:
        """Expected FP probability ``(1 - e^{-k*load/l})^k`` (load defaults to n)."""
        load = self.n if load is None else load
        return (1.0 - math.exp(-self.k * load / self.ell)) ** self.k


def derive_params(n: int, pr: float) -> BloomParams:
    """Size a filter for ``n`` insertions at false-positive target ``pr``.

    ``l = ceil(-n ln(pr) / ln(2)^2)``. The hash count is ``ceil((l*/n) ln 2)``
    evaluated on the unrounded size ``l*``, which simplifies to
    ``ceil(log2(1/pr))``.
    """
    if not isinstance(n, int) or n < 1:
        raise ValueError("n must be a positive integer")
    if not 0.0 < pr < 1.0:
        raise ValueError("pr must lie strictly between 0 and 1")
    ell = math.ceil(-n * math.log(pr) / math.log(2) ** 2)
    # guard against float noise pushing an exact integer over the ceiling
    k = max(1, math.ceil(-math.log2(pr) - 1e-9))
    return BloomParams(n=n, pr=pr, ell=max(ell, k), k=k)


class BloomFilter:
    """An ``l``-bit array plus ``k`` seeded hash positions.

    Mutation (``update``) needs exclusive access; ``check`` and ``positions``
    are read-only.
    """

    __slots__ = ("params", "seed", "bits", "inserts", "_key")

    def __init__(self, params: BloomParams, seed: bytes, bits: bytearray | None = None,
                 inserts: int = 0):
        if len(seed) != 16:
            raise ValueError("seed must be 16 bytes")
        self.params = params
        self.seed = bytes(seed)
        nbytes = (params.ell + 7) // 8
        if bits is None:
            bits = bytearray(nbytes)
        elif len(bits) != nbytes:
            raise ValueError("bit array length does not match l")
        self.bits = bits
        self.inserts = inserts
        self._key = hashlib.sha384(self.seed)

    @classmethod
    def gen(cls, params: BloomParams, seed: bytes) -> "BloomFilter":
        return cls(params, seed)

    def positions(self, u: bytes) -> list[int]:
        """Distinct positions of ``u`` in [1, l], in first-hit order."""
        h = self._key.copy()
        h.update(u)
        d = h.digest()
        ell = self.params.ell
        # reducing a and b first keeps the arithmetic on small ints; same result mod l
        a = int.from_bytes(d[:24], "big") % ell
        b = int.from_bytes(d[24:], "big") % ell
        return list(dict.fromkeys([(a + j * b) % ell + 1 for j in range(1, self.params.k + 1)]))

    def is_set(self, i: int) -> bool:
        i -= 1
        return bool(self.bits[i >> 3] >> (i & 7) & 1)

    def _set(self, i: int) -> None:
        i -= 1
        self.bits[i >> 3] |= 1 << (i & 7)

    def update(self, u: bytes) -> list[int]:
        """Insert ``u``; returns its positions."""
        pos = self.positions(u)
        bits = self.bits
        for i in pos:
            i -= 1
            bits[i >> 3] |= 1 << (i & 7)
        self.inserts += 1
        return pos

    def check(self, u: bytes) -> bool:
        return all(self.is_set(i) for i in self.positions(u))

    __contains__ = check

    def popcount(self) -> int:
        return int.from_bytes(self.bits, "little").bit_count()

    @property
    def remaining_capacity(self) -> int:
        return max(0, self.params.n - self.inserts)

    def current_fp_rate(self) -> float:
        """FP probability implied by the current fill ratio, ``(set/l)^k``."""
        return (self.popcount() / self.params.ell) ** self.params.k

    def copy(self) -> "BloomFilter":
        return BloomFilter(self.params, self.seed, bytearray(self.bits), self.inserts)

    def __eq__(self, other):
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (self.params == other.params and self.seed == other.seed
                and self.bits == other.bits and self.inserts == other.inserts)

    def __repr__(self):
        p = self.params
        return f"BloomFilter(n={p.n}, pr={p.pr}, ell={p.ell}, k={p.k}, set={self.popcount()})"

    # serialization

    def header_bytes(self) -> bytes:
        p = self.params
        lo, hi = struct.unpack("<QQ", self.seed)
        return _HEADER.pack(MAGIC, VERSION, p.n, p.pr, p.ell, p.k, lo, hi, self.inserts)

    def to_bytes(self) -> bytes:
        return self.header_bytes() + bytes(self.bits)

    @classmethod
    def from_bytes(cls, data: bytes) -> "BloomFilter":
        bf, rest = cls.read(data)
        if rest:
            raise FormatError("trailing bytes after Bloom filter")
        return bf

    @classmethod
    def read(cls, data: bytes) -> tuple["BloomFilter", bytes]:
        """Parse a filter from the front of ``data``; returns it and the remainder."""
        params, seed, inserts, rest = read_description(data)
        nbytes = (params.ell + 7) // 8
        if len(rest) < nbytes:
            raise FormatError("truncated Bloom bit array")
        bits = bytearray(rest[:nbytes])
        if params.ell % 8 and bits[-1] >> (params.ell % 8):
            raise FormatError("padding bits set beyond l")
        return cls(params, seed, bits, inserts), rest[nbytes:]


def read_description(data: bytes) -> tuple[BloomParams, bytes, int, bytes]:
    """Parse a filter header: params, seed, insert count and the remaining bytes."""
    if len(data) < _HEADER.size:
        raise FormatError("truncated Bloom header")
    magic, version, n, pr, ell, k, lo, hi, inserts = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad Bloom magic")
    if version != VERSION:
        raise FormatError(f"unsupported Bloom version {version}")
    if n < 1 or not 0.0 < pr < 1.0 or k < 1 or ell < k:
        raise FormatError("invalid Bloom parameters")
    params = BloomParams(n=n, pr=pr, ell=ell, k=k)
    return params, struct.pack("<QQ", lo, hi), inserts, data[_HEADER.size:]


HEADER_SIZE = _HEADER.size
