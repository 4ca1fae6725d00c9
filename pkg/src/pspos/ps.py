"""Bloom-filter puncturable signatures.

Every Bloom position ``i`` carries a key share ``sk_i = s/(s + h1(i)) * P1``.
A message ``m`` with prefix ``m'`` is signed with one live share among the
positions of ``m'``; puncturing ``m'`` sets those bits and deletes the shares,
so no message with that prefix can be signed afterwards.

File layout (all integers big-endian unless noted)::

    "PSIG" | version u16 | kind u8 | curve u8 | extractor | body

    kind 1 (secret key):  P_pub (96 B) | Bloom filter blob | live shares, 48 B each,
                          ascending index
    kind 2 (public key):  Bloom header | P_pub (96 B) | g (576 B)
    kind 3 (signature):   h (32 B) | S (48 B) | index u32

The Bloom filter blob is documented in :mod:`pspos.bloom` (little-endian
header fields).
"""

from __future__ import annotations

import base64
import random
import struct
import warnings
from dataclasses import dataclass

from . import algebra
from ._native import bloom_puncture
from .algebra import G1, G2, GT, ORDER, GroupContext, default_context, h1, h2
from .bloom import HEADER_SIZE, BloomFilter, BloomParams, derive_params, read_description
from .errors import CapacityWarning, FormatError, PrefixExtractionError, PrefixUnavailable

MAGIC = b"PSIG"
VERSION = 1
KIND_SECRET, KIND_PUBLIC, KIND_SIGNATURE = 1, 2, 3
_PREAMBLE = struct.Struct(">4sHBB")
_ZERO_SHARE = bytes(algebra.G1_BYTES)

SIGNATURE_BYTES = algebra.SCALAR_BYTES + algebra.G1_BYTES + 4
ENVELOPE_PREFIX = "psig1:"


# -- prefix extraction -----------------------------------------------------

@dataclass(frozen=True)
class PrefixExtractor:
    """Selects the part of a message that puncturing acts on.

    ``mode`` is ``"fixed"`` (first ``length`` bytes), ``"delimiter"`` (bytes
    before the first ``delimiter``) or ``"range"`` (``m[start:end]``).
    """

    mode: str = "fixed"
    length: int = 8
    delimiter: bytes = b""
    start: int = 0
    end: int = 0

    _CODES = {"fixed": 0, "delimiter": 1, "range": 2}

    @classmethod
    def fixed(cls, length: int) -> "PrefixExtractor":
        if length < 1:
            raise ValueError("prefix length must be positive")
        return cls(mode="fixed", length=length)

    @classmethod
    def until(cls, delimiter: bytes) -> "PrefixExtractor":
        if not delimiter:
            raise ValueError("delimiter must be non-empty")
        return cls(mode="delimiter", length=0, delimiter=bytes(delimiter))

    @classmethod
    def span(cls, start: int, end: int) -> "PrefixExtractor":
        if not 0 <= start < end:
            raise ValueError("need 0 <= start < end")
        return cls(mode="range", length=0, start=start, end=end)

    def __call__(self, m: bytes) -> bytes:
        m = bytes(m)
        if self.mode == "fixed":
            if len(m) < self.length:
                raise PrefixExtractionError(f"message shorter than prefix length {self.length}")
            return m[: self.length]
        if self.mode == "delimiter":
            cut = m.find(self.delimiter)
            if cut < 0:
                raise PrefixExtractionError("delimiter not found in message")
            return m[:cut]
        if len(m) < self.end:
            raise PrefixExtractionError(f"message shorter than range end {self.end}")
        return m[self.start : self.end]

    def to_bytes(self) -> bytes:
        code = self._CODES[self.mode]
        if self.mode == "fixed":
            return struct.pack(">BI", code, self.length)
        if self.mode == "delimiter":
            return struct.pack(">BH", code, len(self.delimiter)) + self.delimiter
        return struct.pack(">BII", code, self.start, self.end)

    @classmethod
    def read(cls, data: bytes) -> tuple["PrefixExtractor", bytes]:
        try:
            code = data[0]
            if code == 0:
                (length,) = struct.unpack_from(">I", data, 1)
                return cls.fixed(length), data[5:]
            if code == 1:
                (size,) = struct.unpack_from(">H", data, 1)
                delim = data[3 : 3 + size]
                if len(delim) != size:
                    raise FormatError("truncated extractor delimiter")
                return cls.until(delim), data[3 + size :]
            if code == 2:
                start, end = struct.unpack_from(">II", data, 1)
                return cls.span(start, end), data[9:]
        except (IndexError, struct.error, ValueError) as exc:
            raise FormatError(f"bad extractor encoding: {exc}") from exc
        raise FormatError(f"unknown extractor mode {code}")


# -- file framing -------------------------------------------------------------

def _preamble(kind: int, ctx: GroupContext, extractor: PrefixExtractor) -> bytes:
    return _PREAMBLE.pack(MAGIC, VERSION, kind, ctx.curve_code) + extractor.to_bytes()


def _read_preamble(data: bytes, kind: int) -> tuple[GroupContext, PrefixExtractor | None, bytes]:
    if len(data) < _PREAMBLE.size:
        raise FormatError("truncated header")
    magic, version, got_kind, curve = _PREAMBLE.unpack_from(data)
    if magic != MAGIC:
        raise FormatError("bad magic")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if got_kind != kind:
        raise FormatError(f"expected object kind {kind}, found {got_kind}")
    names = {v: k for k, v in algebra.CURVE_CODES.items()}
    if curve not in names:
        raise FormatError(f"unknown curve id {curve}")
    ctx = default_context(names[curve])
    rest = data[_PREAMBLE.size :]
    if kind == KIND_SIGNATURE:
        return ctx, None, rest
    extractor, rest = PrefixExtractor.read(rest)
    return ctx, extractor, rest


# -- keys and signatures ----------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    h: int
    S: G1
    index: int

    def to_bytes(self) -> bytes:
        return algebra.scalar_to_bytes(self.h) + self.S.to_bytes() + struct.pack(">I", self.index)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Signature":
        data = bytes(data)
        if len(data) != SIGNATURE_BYTES:
            raise FormatError(f"signature must be {SIGNATURE_BYTES} bytes, got {len(data)}")
        try:
            h = algebra.scalar_from_bytes(data[:32])
            S = G1.from_bytes(data[32:80])
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
        (index,) = struct.unpack(">I", data[80:])
        return cls(h, S, index)

    def to_file_bytes(self, ctx: GroupContext | None = None) -> bytes:
        ctx = ctx or default_context()
        return _PREAMBLE.pack(MAGIC, VERSION, KIND_SIGNATURE, ctx.curve_code) + self.to_bytes()

    @classmethod
    def from_file_bytes(cls, data: bytes) -> "Signature":
        _, _, body = _read_preamble(bytes(data), KIND_SIGNATURE)
        return cls.from_bytes(body)

    def to_envelope(self) -> str:
        return ENVELOPE_PREFIX + base64.b64encode(self.to_file_bytes()).decode("ascii")

    @classmethod
    def from_envelope(cls, text: str) -> "Signature":
        text = text.strip()
        if not text.startswith(ENVELOPE_PREFIX):
            raise FormatError("not a signature envelope")
        try:
            raw = base64.b64decode(text[len(ENVELOPE_PREFIX):], validate=True)
        except ValueError as exc:
            raise FormatError(f"bad base64: {exc}") from exc
        return cls.from_file_bytes(raw)


class PublicKey:
    """Verification key: ``P_pub = s*P2``, cached ``g = e(P1, P_pub)`` and the hash description."""

    def __init__(self, p_pub: G2, g: GT, params: BloomParams, seed: bytes,
                 extractor: PrefixExtractor, ctx: GroupContext | None = None):
        self.ctx = ctx or default_context()
        self.p_pub = p_pub
        self.g = g
        self.extractor = extractor
        # bits unused: the filter only supplies positions()
        self._hashes = BloomFilter(params, seed)

    @property
    def params(self) -> BloomParams:
        return self._hashes.params

    @property
    def seed(self) -> bytes:
        return self._hashes.seed

    def positions(self, prefix: bytes) -> list[int]:
        return self._hashes.positions(prefix)

    def to_bytes(self) -> bytes:
        return (_preamble(KIND_PUBLIC, self.ctx, self.extractor) + self._hashes.header_bytes()
                + self.p_pub.to_bytes() + self.g.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "PublicKey":
        ctx, extractor, rest = _read_preamble(bytes(data), KIND_PUBLIC)
        params, seed, _, rest = read_description(rest)
        if len(rest) != algebra.G2_BYTES + algebra.GT_BYTES:
            raise FormatError("public key body has wrong length")
        try:
            p_pub = G2.from_bytes(rest[: algebra.G2_BYTES])
            g = GT.from_bytes(rest[algebra.G2_BYTES :])
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
        if g != algebra.pairing(ctx.p1, p_pub):
            raise FormatError("cached g does not match e(P1, P_pub)")
        return cls(p_pub, g, params, seed, extractor, ctx)

    def serialized_size(self) -> int:
        return len(self.to_bytes())

    def __eq__(self, other):
        if not isinstance(other, PublicKey):
            return NotImplemented
        return self.to_bytes() == other.to_bytes()

    def __hash__(self):
        return hash(self.to_bytes())


class SecretKey:
    """Bloom array ``T`` plus one compressed G1 share per position.

    Shares are stored contiguously (48 bytes each, position ``i`` at offset
    ``48*(i-1)``); a deleted share is all-zero, which never encodes a valid
    point. ``T[i] = 1`` exactly when share ``i`` is deleted.
    """

    def __init__(self, bloom: BloomFilter, shares: bytearray, p_pub: G2,
                 extractor: PrefixExtractor, ctx: GroupContext | None = None, g: GT | None = None):
        if len(shares) != bloom.params.ell * algebra.G1_BYTES:
            raise ValueError("share buffer does not match l")
        self.ctx = ctx or default_context()
        self.bloom = bloom
        self.shares = shares
        self.p_pub = p_pub
        self.extractor = extractor
        self.g = g if g is not None else algebra.pairing(self.ctx.p1, p_pub)

    def public_key(self) -> PublicKey:
        return PublicKey(self.p_pub, self.g, self.params, self.bloom.seed, self.extractor, self.ctx)

    @property
    def params(self) -> BloomParams:
        return self.bloom.params

    @property
    def puncture_count(self) -> int:
        return self.bloom.inserts

    @property
    def remaining_capacity(self) -> int:
        return self.bloom.remaining_capacity

    def live_count(self) -> int:
        return self.params.ell - self.bloom.popcount()

    def has_share(self, i: int) -> bool:
        return 1 <= i <= self.params.ell and not self.bloom.is_set(i)

    def share(self, i: int) -> G1:
        if not self.has_share(i):
            raise KeyError(f"no key share at position {i}")
        off = (i - 1) * algebra.G1_BYTES
        return G1.from_bytes(bytes(self.shares[off : off + algebra.G1_BYTES]))

    def punctured(self, prefix: bytes) -> bool:
        return self.bloom.check(prefix)

    def puncture(self, prefix: bytes) -> "SecretKey":
        """Delete every share at the positions of ``prefix``. Idempotent; O(k)."""
        p = self.params
        bloom_puncture(self.bloom.bits, self.shares, self.bloom.seed, bytes(prefix),
                       p.ell, p.k, algebra.G1_BYTES)
        self.bloom.inserts += 1
        if self.bloom.inserts > self.params.n:
            warnings.warn(
                f"{self.bloom.inserts} punctures exceed capacity n={self.params.n}",
                CapacityWarning, stacklevel=2)
        return self

    def sign(self, m: bytes, rng: random.Random | None = None) -> Signature:
        rng = rng or algebra.default_rng()
        prefix = self.extractor(m)
        live = [i for i in self.bloom.positions(prefix) if not self.bloom.is_set(i)]
        if not live:
            raise PrefixUnavailable("prefix is punctured or hit a Bloom false positive")
        index = live[rng.randrange(len(live))]
        x = algebra.random_scalar(rng)
        r = self.g ** x
        h = h2(m, r)
        S = self.share(index) * ((x - h) % ORDER)
        return Signature(h, S, index)

    def check_invariants(self) -> None:
        """Assert ``T[i] = 1`` iff share ``i`` is deleted (used by tests)."""
        n = algebra.G1_BYTES
        for i in range(1, self.params.ell + 1):
            off = (i - 1) * n
            deleted = self.shares[off : off + n] == _ZERO_SHARE
            if deleted != self.bloom.is_set(i):
                raise AssertionError(f"share/bit mismatch at position {i}")

    def copy(self) -> "SecretKey":
        return SecretKey(self.bloom.copy(), bytearray(self.shares), self.p_pub,
                         self.extractor, self.ctx, self.g)

    def to_bytes(self) -> bytes:
        n = algebra.G1_BYTES
        live = b"".join(
            bytes(self.shares[(i - 1) * n : i * n])
            for i in range(1, self.params.ell + 1)
            if not self.bloom.is_set(i)
        )
        return (_preamble(KIND_SECRET, self.ctx, self.extractor) + self.p_pub.to_bytes()
                + self.bloom.to_bytes() + live)

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecretKey":
        ctx, extractor, rest = _read_preamble(bytes(data), KIND_SECRET)
        try:
            p_pub = G2.from_bytes(rest[: algebra.G2_BYTES])
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
        bloom, rest = BloomFilter.read(rest[algebra.G2_BYTES :])
        n = algebra.G1_BYTES
        ell = bloom.params.ell
        live = [i for i in range(1, ell + 1) if not bloom.is_set(i)]
        if len(rest) != n * len(live):
            raise FormatError("secret key share section has wrong length")
        shares = bytearray(ell * n)
        for j, i in enumerate(live):
            chunk = rest[j * n : (j + 1) * n]
            if chunk == _ZERO_SHARE:
                raise FormatError(f"live share {i} is empty")
            shares[(i - 1) * n : i * n] = chunk
        return cls(bloom, shares, p_pub, extractor, ctx)

    def serialized_size(self) -> int:
        return (_PREAMBLE.size + len(self.extractor.to_bytes()) + algebra.G2_BYTES
                + HEADER_SIZE + len(self.bloom.bits) + self.live_count() * algebra.G1_BYTES)

    def __eq__(self, other):
        if not isinstance(other, SecretKey):
            return NotImplemented
        return (self.bloom == other.bloom and self.shares == other.shares
                and self.extractor == other.extractor)


# -- algorithms -----------------------------------------------------------------

SignatureLike = Signature | bytes | bytearray | memoryview


def setup(n: int, pr: float, extractor: PrefixExtractor | None = None, *,
          rng: random.Random | None = None,
          ctx: GroupContext | None = None) -> tuple[SecretKey, PublicKey]:
    """Generate a key pair sized for ``n`` punctures at false-positive rate ``pr``.

    Costs ``l`` G1 multiplications (batched fixed-base) and one modular
    inversion. The master secret is dropped before returning.
    """
    ctx = ctx or default_context()
    rng = rng or algebra.default_rng()
    extractor = extractor or PrefixExtractor.fixed(8)
    params = derive_params(n, pr)
    seed = rng.getrandbits(128).to_bytes(16, "little")
    bloom = BloomFilter.gen(params, seed)
    hs = [h1(i) for i in range(1, params.ell + 1)]
    while True:
        s = algebra.random_scalar(rng)
        denoms = [(s + h) % ORDER for h in hs]
        if all(denoms):
            break
    coeffs = [s * inv % ORDER for inv in algebra.batch_inverse(denoms)]
    shares = bytearray(algebra.g1_batch_mul(ctx.p1, coeffs))
    p_pub = ctx.p2 * s
    del s, coeffs
    g = algebra.pairing(ctx.p1, p_pub)
    sk = SecretKey(bloom, shares, p_pub, extractor, ctx, g)
    return sk, sk.public_key()


def puncture(sk: SecretKey, prefix: bytes) -> SecretKey:
    return sk.puncture(prefix)


def sign(sk: SecretKey, m: bytes, rng: random.Random | None = None) -> Signature:
    """Sign ``m``; raises :class:`PrefixUnavailable` if its prefix has no live share.

    Signing does not puncture; call :func:`puncture` (or use
    :func:`sign_and_puncture`) to consume the prefix.
    """
    return sk.sign(m, rng)


def sign_and_puncture(sk: SecretKey, m: bytes, rng: random.Random | None = None) -> Signature:
    sig = sk.sign(m, rng)
    sk.puncture(sk.extractor(m))
    return sig


def verify(vk: PublicKey, m: bytes, sig: SignatureLike) -> bool:
    """Check ``index in S_{m'}`` and ``h == h2(m, e(S, h1(index)P2 + P_pub) * g^h)``.

    The pairing product is evaluated as ``e(h1(index)S, P2) * e(S + hP1, P_pub)``,
    which is the same value computed with G1-side scalar multiplications and a
    single final exponentiation. Untrusted input never raises.
    """
    try:
        if not isinstance(sig, Signature):
            sig = Signature.from_bytes(sig)
        prefix = vk.extractor(m)
    except (FormatError, PrefixExtractionError, TypeError):
        return False
    if not 0 < sig.h < ORDER:
        return False
    if not 1 <= sig.index <= vk.params.ell or sig.index not in vk.positions(prefix):
        return False
    p1, p2 = vk.ctx.p1, vk.ctx.p2
    r = algebra.multi_pairing([(sig.S * h1(sig.index), p2), (sig.S + p1 * sig.h, vk.p_pub)])
    return h2(m, r) == sig.h


def remaining_capacity(sk: SecretKey) -> int:
    return sk.remaining_capacity


def is_punctured(sk: SecretKey, prefix: bytes) -> bool:
    return sk.punctured(prefix)


def sizes(sk: SecretKey | None = None, vk: PublicKey | None = None) -> dict[str, int]:
    """Exact serialized lengths in bytes of the given keys and of a signature."""
    out = {"sig": SIGNATURE_BYTES}
    if sk is not None:
        out["sk"] = sk.serialized_size()
    if vk is not None:
        out["vk"] = vk.serialized_size()
    return out
