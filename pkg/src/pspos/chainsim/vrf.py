"""Keyed-hash stand-in for a verifiable random function.

Outputs are ``HMAC-SHA512(secret, "y" || input)`` truncated to the configured
bit length; the proof is a MAC over (input, y). Verification needs the
secret, which a :class:`VRFRegistry` holds on behalf of all parties, the way
an ideal VRF functionality would. This gives uniqueness and verifiability
inside a simulation and no cryptographic VRF security.
"""

from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache

MAX_BITS = 512


@dataclass(frozen=True)
class VRFKey:
    secret: bytes

    @property
    def public(self) -> bytes:
        return hashlib.sha256(b"vrf-public" + self.secret).digest()


def vrf_keygen(rng: random.Random) -> VRFKey:
    return VRFKey(rng.randbytes(32))


def vrf_eval(key: VRFKey, data: bytes, bits: int = 256) -> tuple[int, bytes]:
    if not 1 <= bits <= MAX_BITS:
        raise ValueError(f"VRF output length must be in [1, {MAX_BITS}]")
    raw = hmac.digest(key.secret, b"y" + data, "sha512")
    y = int.from_bytes(raw, "big") >> (MAX_BITS - bits)
    proof = hmac.digest(key.secret, b"pi" + data + y.to_bytes(MAX_BITS // 8, "big"), "sha256")
    return y, proof


class VRFRegistry:
    """Maps public handles to keys so anyone can check (y, proof) pairs."""

    def __init__(self):
        self._keys: dict[bytes, VRFKey] = {}

    def register(self, key: VRFKey) -> bytes:
        self._keys[key.public] = key
        return key.public

    def verify(self, public: bytes, data: bytes, y: int, proof: bytes, bits: int = 256) -> bool:
        key = self._keys.get(public)
        if key is None:
            return False
        want_y, want_proof = vrf_eval(key, data, bits)
        return want_y == y and hmac.compare_digest(want_proof, proof)


@lru_cache(maxsize=4096)
def threshold(alpha: Fraction, f: Fraction, bits: int) -> int:
    """``floor(2^bits * (1 - (1 - f)^alpha))`` evaluated at 150 significant digits."""
    alpha, f = Fraction(alpha), Fraction(f)
    if not 0 <= alpha <= 1:
        raise ValueError("relative stake must lie in [0, 1]")
    if alpha == 0:
        return 0
    with localcontext() as ctx:
        ctx.prec = 150
        base = Decimal(1) - Decimal(f.numerator) / Decimal(f.denominator)
        a = Decimal(alpha.numerator) / Decimal(alpha.denominator)
        phi = Decimal(1) - (base.ln() * a).exp()
        return int((phi * (Decimal(2) ** bits)).to_integral_value(rounding="ROUND_FLOOR"))


def eligible(y: int, alpha, f, bits: int = 256) -> bool:
    return y < threshold(Fraction(alpha), Fraction(f), bits)
