"""Bilinear group contract over BLS12-381 plus the scheme's two hash functions.

Group elements are the native ``G1``/``G2``/``GT`` types. G1 and G2 are
written additively (``P + Q``, ``k * P``); GT is written multiplicatively
(``a * b``, ``a ** k``). Scalars are plain Python ints reduced mod ``ORDER``.

Encodings:

* G1: 48-byte compressed point (ZCash flag layout), subgroup-checked on decode.
* G2: 96-byte compressed point, subgroup-checked on decode.
* GT: 576-byte canonical Fp12 encoding, cyclotomic-subgroup-checked on decode.
* Scalar: 32-byte big-endian integer, must be canonical (< ORDER).
"""

from __future__ import annotations

import hashlib
import os
import random
import secrets
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

from ._native import G1, G2, GT, g1_batch_mul, group_order, multi_pairing
from ._native import pairing as _pairing

__all__ = [
    "G1", "G2", "GT", "ORDER", "CURVE_ID", "G1_BYTES", "G2_BYTES", "GT_BYTES",
    "SCALAR_BYTES", "GroupContext", "default_context", "pairing", "multi_pairing",
    "gt_exp", "h1", "h2", "random_scalar", "inverse", "batch_inverse",
    "scalar_to_bytes", "scalar_from_bytes", "g1_batch_mul", "default_rng",
]

ORDER: int = group_order()
CURVE_ID = "bls12-381"
CURVE_CODES = {CURVE_ID: 1}

G1_BYTES = 48
G2_BYTES = 96
GT_BYTES = 576
SCALAR_BYTES = 32

H1_TAG = b"\x01"
H2_TAG = b"\x02"


@dataclass(frozen=True)
class GroupContext:
    """Public parameters of the asymmetric pairing group."""

    order: int
    p1: G1
    p2: G2
    curve_id: str = CURVE_ID
    security_level: int = 128
    gt_generator: GT = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gt_generator", _pairing(self.p1, self.p2))

    @property
    def curve_code(self) -> int:
        return CURVE_CODES[self.curve_id]


@lru_cache(maxsize=None)
def default_context(curve_id: str | None = None) -> GroupContext:
    """Return the context for ``curve_id`` (default: ``$PSPOS_CURVE`` or BLS12-381)."""
    curve_id = curve_id or os.environ.get("PSPOS_CURVE", CURVE_ID)
    if curve_id not in CURVE_CODES:
        raise ValueError(f"unsupported curve {curve_id!r}; this build supports {CURVE_ID!r}")
    return GroupContext(order=ORDER, p1=G1.generator(), p2=G2.generator(), curve_id=curve_id)


def default_rng() -> random.Random:
    return secrets.SystemRandom()


def pairing(a: G1, b: G2) -> GT:
    return _pairing(a, b)


def gt_exp(g: GT, x: int) -> GT:
    return g ** (x % ORDER)


def random_scalar(rng: random.Random) -> int:
    """Uniform element of Z*_p drawn from ``rng``."""
    return rng.randrange(1, ORDER)


def inverse(x: int) -> int:
    x %= ORDER
    if x == 0:
        raise ZeroDivisionError("0 has no inverse mod p")
    return pow(x, -1, ORDER)


def batch_inverse(xs: Sequence[int]) -> list[int]:
    """Invert every element with a single modular inversion (Montgomery's trick)."""
    prefix = []
    acc = 1
    for x in xs:
        if x % ORDER == 0:
            raise ZeroDivisionError("0 has no inverse mod p")
        prefix.append(acc)
        acc = acc * x % ORDER
    inv = pow(acc, -1, ORDER)
    out = [0] * len(xs)
    for i in range(len(xs) - 1, -1, -1):
        out[i] = inv * prefix[i] % ORDER
        inv = inv * xs[i] % ORDER
    return out


def scalar_to_bytes(x: int) -> bytes:
    return (x % ORDER).to_bytes(SCALAR_BYTES, "big")


def scalar_from_bytes(data: bytes) -> int:
    if len(data) != SCALAR_BYTES:
        raise ValueError(f"scalar encoding must be {SCALAR_BYTES} bytes")
    x = int.from_bytes(data, "big")
    if x >= ORDER:
        raise ValueError("non-canonical scalar encoding")
    return x


def _hash_to_nonzero(tag: bytes, payload: bytes) -> int:
    # counter-mode rejection keeps the output in Z*_p
    ctr = 0
    while True:
        digest = hashlib.sha384(tag + ctr.to_bytes(4, "big") + payload).digest()
        v = int.from_bytes(digest, "big") % ORDER
        if v:
            return v
        ctr += 1


@lru_cache(maxsize=1 << 17)
def h1(index: int) -> int:
    """Hash a 1-based Bloom position to Z*_p."""
    if index < 1:
        raise ValueError("h1 is defined on positions >= 1")
    return _hash_to_nonzero(H1_TAG, index.to_bytes(8, "big"))


def h2(message: bytes, r: GT) -> int:
    """Hash a message and a GT element to Z*_p; consumes r's canonical bytes."""
    return _hash_to_nonzero(H2_TAG, r.to_bytes() + bytes(message))
