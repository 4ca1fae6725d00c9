"""Blocks, genesis, chains, block validation and longest-chain selection.

Block encoding (big-endian)::

    sl u64 | st (32 B) | len(d) u32 | d | creator u32 | y (64 B) | proof (32 B) | sigma (84 B)

Everything before ``sigma`` is the signed message, so the slot occupies the
first 8 bytes and the parent hash bytes 8..40. A block's hash is SHA-256 of
its full encoding.

Chain dump (``Chain.to_bytes``)::

    "PSCH" | version u16 | len(genesis) u32 | genesis | count u32 | (len u32 | block)*

Genesis encoding::

    "PSGN" | eta (32 B) | f as num u64, den u64 | vrf bits u16 | count u32 |
    (stake num u64, den u64 | vrf public (32 B) | len(vk) u32 | vk)*
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .. import ps
from ..errors import FormatError
from .vrf import VRFRegistry, threshold

HASH_BYTES = 32
Y_BYTES = 64
PROOF_BYTES = 32

BAD_LINK = "bad-link"
BAD_VRF = "bad-vrf"
NOT_ELIGIBLE = "not-eligible"
BAD_SIG = "bad-sig"
BAD_SLOT_ORDER = "bad-slot-order"
REASONS = (BAD_LINK, BAD_VRF, NOT_ELIGIBLE, BAD_SIG, BAD_SLOT_ORDER)


def slot_bytes(sl: int) -> bytes:
    return sl.to_bytes(8, "big")


def vrf_input(eta: bytes, sl: int) -> bytes:
    return eta + slot_bytes(sl)


@dataclass(frozen=True)
class Block:
    sl: int
    st: bytes
    d: bytes
    creator: int
    y: int
    proof: bytes
    sigma: bytes
    hash: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "hash", hashlib.sha256(self.to_bytes()).digest())

    @staticmethod
    def message(sl: int, st: bytes, d: bytes, creator: int, y: int, proof: bytes) -> bytes:
        """The byte string the creator signs."""
        if len(st) != HASH_BYTES or len(proof) != PROOF_BYTES:
            raise ValueError("bad parent hash or proof length")
        return (slot_bytes(sl) + st + struct.pack(">I", len(d)) + d
                + struct.pack(">I", creator) + y.to_bytes(Y_BYTES, "big") + proof)

    @property
    def signed_message(self) -> bytes:
        return Block.message(self.sl, self.st, self.d, self.creator, self.y, self.proof)

    def to_bytes(self) -> bytes:
        return self.signed_message + self.sigma

    @classmethod
    def from_bytes(cls, data: bytes) -> "Block":
        data = bytes(data)
        try:
            sl = int.from_bytes(data[:8], "big")
            st = data[8:40]
            (dlen,) = struct.unpack_from(">I", data, 40)
            off = 44 + dlen
            d = data[44:off]
            (creator,) = struct.unpack_from(">I", data, off)
        except struct.error as exc:
            raise FormatError(f"truncated block: {exc}") from exc
        off += 4
        y = int.from_bytes(data[off:off + Y_BYTES], "big")
        off += Y_BYTES
        proof = data[off:off + PROOF_BYTES]
        sigma = data[off + PROOF_BYTES:]
        if len(d) != dlen or len(proof) != PROOF_BYTES or len(sigma) != ps.SIGNATURE_BYTES:
            raise FormatError("truncated block")
        return cls(sl, st, d, creator, y, proof, sigma)


@dataclass(frozen=True)
class StakeEntry:
    stake: Fraction
    vrf_public: bytes
    vk: ps.PublicKey


@dataclass(frozen=True)
class Genesis:
    """Stake distribution, epoch randomness and the leader-election parameters."""

    entries: tuple[StakeEntry, ...]
    eta: bytes
    f: Fraction
    vrf_bits: int = 256
    hash: bytes = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if sum(e.stake for e in self.entries) != 1:
            raise ValueError("genesis stakes must sum to 1")
        if not 0 < self.f < 1:
            raise ValueError("active coefficient must lie in (0, 1)")
        object.__setattr__(self, "hash", hashlib.sha256(self.to_bytes()).digest())

    def threshold(self, creator: int) -> int:
        return threshold(self.entries[creator].stake, self.f, self.vrf_bits)

    def to_bytes(self) -> bytes:
        f = Fraction(self.f)
        out = [b"PSGN", self.eta, struct.pack(">QQHI", f.numerator, f.denominator,
                                              self.vrf_bits, len(self.entries))]
        for e in self.entries:
            vk = e.vk.to_bytes()
            out += [struct.pack(">QQ", e.stake.numerator, e.stake.denominator),
                    e.vrf_public, struct.pack(">I", len(vk)), vk]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Genesis":
        data = bytes(data)
        try:
            if data[:4] != b"PSGN":
                raise FormatError("bad genesis magic")
            eta = data[4:36]
            fn, fd, bits, count = struct.unpack_from(">QQHI", data, 36)
            off = 36 + 22
            entries = []
            for _ in range(count):
                sn, sd = struct.unpack_from(">QQ", data, off)
                vrf_public = data[off + 16:off + 48]
                (vlen,) = struct.unpack_from(">I", data, off + 48)
                vk = ps.PublicKey.from_bytes(data[off + 52:off + 52 + vlen])
                entries.append(StakeEntry(Fraction(sn, sd), vrf_public, vk))
                off += 52 + vlen
        except (struct.error, ZeroDivisionError) as exc:
            raise FormatError(f"malformed genesis: {exc}") from exc
        if off != len(data):
            raise FormatError("trailing bytes after genesis")
        try:
            return cls(tuple(entries), eta, Fraction(fn, fd), bits)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc


class Chain:
    """Genesis plus blocks with strictly increasing slots. Immutable."""

    __slots__ = ("genesis", "blocks", "hashes")

    def __init__(self, genesis: Genesis, blocks: Sequence[Block] = ()):
        self.genesis = genesis
        self.blocks = tuple(blocks)
        self.hashes = tuple(b.hash for b in self.blocks)

    def __len__(self) -> int:
        return len(self.blocks)

    @property
    def head(self) -> Block | None:
        return self.blocks[-1] if self.blocks else None

    @property
    def head_hash(self) -> bytes:
        return self.hashes[-1] if self.blocks else self.genesis.hash

    @property
    def head_slot(self) -> int:
        return self.blocks[-1].sl if self.blocks else 0

    def extend(self, block: Block) -> "Chain":
        c = Chain.__new__(Chain)
        c.genesis = self.genesis
        c.blocks = self.blocks + (block,)
        c.hashes = self.hashes + (block.hash,)
        return c

    def prunes_into(self, other: "Chain", k: int) -> bool:
        """True if this chain with its last ``k`` blocks dropped is a prefix of ``other``."""
        cut = len(self) - k
        if cut <= 0:
            return True
        return len(other) >= cut and other.hashes[cut - 1] == self.hashes[cut - 1]

    def to_bytes(self) -> bytes:
        g = self.genesis.to_bytes()
        out = [b"PSCH", struct.pack(">HI", 1, len(g)), g, struct.pack(">I", len(self.blocks))]
        for b in self.blocks:
            raw = b.to_bytes()
            out += [struct.pack(">I", len(raw)), raw]
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Chain":
        data = bytes(data)
        try:
            if data[:4] != b"PSCH":
                raise FormatError("bad chain magic")
            version, glen = struct.unpack_from(">HI", data, 4)
            if version != 1:
                raise FormatError(f"unsupported chain version {version}")
            genesis = Genesis.from_bytes(data[10:10 + glen])
            off = 10 + glen
            (count,) = struct.unpack_from(">I", data, off)
            off += 4
            blocks = []
            for _ in range(count):
                (blen,) = struct.unpack_from(">I", data, off)
                blocks.append(Block.from_bytes(data[off + 4:off + 4 + blen]))
                off += 4 + blen
        except struct.error as exc:
            raise FormatError(f"truncated chain: {exc}") from exc
        if off != len(data):
            raise FormatError("trailing bytes after chain")
        return cls(genesis, blocks)


def validate_block(block: Block, prev_hash: bytes, prev_slot: int, genesis: Genesis,
                   registry: VRFRegistry) -> str | None:
    """Return None if ``block`` may follow the given parent, else a rejection reason."""
    if block.sl <= prev_slot:
        return BAD_SLOT_ORDER
    if block.st != prev_hash:
        return BAD_LINK
    if not 0 <= block.creator < len(genesis.entries):
        return BAD_VRF
    entry = genesis.entries[block.creator]
    if not registry.verify(entry.vrf_public, vrf_input(genesis.eta, block.sl), block.y,
                           block.proof, genesis.vrf_bits):
        return BAD_VRF
    if block.y >= genesis.threshold(block.creator):
        return NOT_ELIGIBLE
    if not ps.verify(entry.vk, block.signed_message, block.sigma):
        return BAD_SIG
    return None


class Validator:
    """Validates chains against one genesis, remembering blocks already checked.

    A block's verdict depends only on its own bytes (which include the parent
    hash), so results are cached by block hash.
    """

    def __init__(self, genesis: Genesis, registry: VRFRegistry):
        self.genesis = genesis
        self.registry = registry
        self._verdicts: dict[bytes, str | None] = {}

    def check_block(self, block: Block, prev_hash: bytes, prev_slot: int) -> str | None:
        if block.st != prev_hash:
            return BAD_LINK if block.sl > prev_slot else BAD_SLOT_ORDER
        if block.sl <= prev_slot:
            return BAD_SLOT_ORDER
        if block.hash not in self._verdicts:
            self._verdicts[block.hash] = validate_block(block, prev_hash, prev_slot,
                                                        self.genesis, self.registry)
        return self._verdicts[block.hash]

    def check_chain(self, chain: Chain) -> str | None:
        if chain.genesis.hash != self.genesis.hash:
            return BAD_LINK
        prev_hash, prev_slot = self.genesis.hash, 0
        for b in chain.blocks:
            reason = self.check_block(b, prev_hash, prev_slot)
            if reason is not None:
                return reason
            prev_hash, prev_slot = b.hash, b.sl
        return None

    def is_valid(self, chain: Chain) -> bool:
        return self.check_chain(chain) is None


def select_chain(local: Chain, candidates: Iterable[Chain], validator: Validator | None = None) -> Chain:
    """Longest chain among ``local`` and the valid candidates.

    Ties keep ``local``; among equally long candidates the smallest head hash wins.
    """
    best = local
    for c in sorted(candidates, key=lambda c: (-len(c), c.head_hash)):
        if len(c) <= len(local):
            break
        if validator is None or validator.is_valid(c):
            best = c
            break
    return best
