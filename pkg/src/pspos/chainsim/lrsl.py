"""Long-range attack with a leaked, already-punctured signing key.

The adversary corrupts the leader of a past slot after that slot has passed
and receives its current key. It then tries to produce an alternative block
for the same slot, both through the signing API and by submitting crafted
blocks to an honest validator. A control branch hands the adversary a key
snapshot from before the slot and shows the same alternative block would
have been accepted.
"""

from __future__ import annotations

import json
import random
from collections import Counter
from dataclasses import asdict, dataclass, field

from .. import algebra, ps
from ..errors import PrefixUnavailable
from .chain import Block, validate_block
from .sim import SimConfig, Simulation

KINDS = ("random-bytes", "random-point", "replay-sigma", "replay-other-slot")


class ScenarioError(ValueError):
    pass


@dataclass
class AttackReport:
    target_slot: int
    corrupt_at_slot: int
    leader: int
    puncture_on: str
    sign_attempts: int
    sign_refusals: int
    block_attempts: int
    block_rejections: dict
    accepted_forgeries: int
    control_signed: bool
    control_valid: bool
    attempts: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return (self.accepted_forgeries == 0 and self.sign_refusals == self.sign_attempts
                and self.control_signed and self.control_valid)

    def to_dict(self, with_attempts: bool = True) -> dict:
        d = asdict(self)
        if not with_attempts:
            d.pop("attempts")
        d["ok"] = self.ok
        return d

    def to_json(self, with_attempts: bool = True) -> str:
        return json.dumps(self.to_dict(with_attempts), indent=2, sort_keys=True)


def _latest_block_slot(cfg: SimConfig, before: int) -> int:
    sim = Simulation(cfg)
    sim.run(before - 1)
    chain = sim.local[sim.honest[0]]
    slots = [b.sl for b in chain.blocks if b.sl < before]
    if not slots:
        raise ScenarioError(f"no block on the honest chain before slot {before}")
    return slots[-1]


def _junk_sigma(rng: random.Random, kind: str, vk: ps.PublicKey, prefix: bytes,
                original: bytes, other: bytes | None) -> bytes:
    if kind == "random-bytes":
        return rng.randbytes(ps.SIGNATURE_BYTES)
    if kind == "random-point":
        # well-formed encoding with an index the verifier would consider
        index = rng.choice(vk.positions(prefix))
        sig = ps.Signature(algebra.random_scalar(rng),
                           vk.ctx.p1 * algebra.random_scalar(rng), index)
        return sig.to_bytes()
    if kind == "replay-sigma":
        return original
    return other if other is not None else original


def lrsl_scenario(cfg: SimConfig, corrupt_at_slot: int, target_slot: int | None = None,
                  attempts: int = 1000, seed: int = 0) -> AttackReport:
    """Run the honest protocol, leak the target leader's key at ``corrupt_at_slot``
    and count how many forged blocks for ``target_slot`` get accepted."""
    if not 1 < corrupt_at_slot <= cfg.slots + 1:
        raise ScenarioError("corrupt_at_slot must lie in [2, slots + 1]")
    if target_slot is None:
        target_slot = _latest_block_slot(cfg, corrupt_at_slot)
    if not 1 <= target_slot < corrupt_at_slot:
        raise ScenarioError("target_slot must precede corrupt_at_slot")

    sim = Simulation(cfg)
    sim.run(target_slot - 1)
    snapshot = {s.id: s.sk.copy() for s in sim.stakeholders}
    sim.run(corrupt_at_slot - 1)

    chain = sim.local[sim.honest[0]]
    at = [j for j, b in enumerate(chain.blocks) if b.sl == target_slot]
    if not at:
        raise ScenarioError(f"the honest chain has no block at slot {target_slot}")
    j = at[0]
    block = chain.blocks[j]
    prev_hash = chain.hashes[j - 1] if j else sim.genesis.hash
    prev_slot = chain.blocks[j - 1].sl if j else 0
    leader = sim.stakeholders[block.creator]
    leaked = leader.sk.copy()
    vk = leader.vk
    other = next((b.sigma for b in chain.blocks if b.creator == block.creator
                  and b.sl != target_slot), None)

    rng = random.Random(seed)
    records = []
    forged = 0

    def alternative_message() -> bytes:
        d = rng.randbytes(max(len(block.d), 1))
        while d == block.d:
            d = rng.randbytes(len(d))
        return d

    refusals = 0
    for _ in range(attempts):
        d = alternative_message()
        msg = Block.message(target_slot, prev_hash, d, block.creator, block.y, block.proof)
        try:
            sig = ps.sign(leaked, msg, rng)
        except PrefixUnavailable:
            refusals += 1
            records.append({"kind": "sign", "outcome": "refused"})
            continue
        forgery = Block(target_slot, prev_hash, d, block.creator, block.y, block.proof, sig.to_bytes())
        reason = validate_block(forgery, prev_hash, prev_slot, sim.genesis, sim.registry)
        forged += reason is None
        records.append({"kind": "sign", "outcome": reason or "accepted"})

    rejections: Counter = Counter()
    prefix = vk.extractor(block.signed_message)
    for t in range(attempts):
        kind = KINDS[t % len(KINDS)]
        d = alternative_message()
        sigma = _junk_sigma(rng, kind, vk, prefix, block.sigma, other)
        forgery = Block(target_slot, prev_hash, d, block.creator, block.y, block.proof, sigma)
        reason = validate_block(forgery, prev_hash, prev_slot, sim.genesis, sim.registry)
        if reason is None:
            forged += 1
        else:
            rejections[reason] += 1
        records.append({"kind": kind, "outcome": reason or "accepted"})

    # counterfactual: the key as it was before the target slot
    control_key = snapshot[block.creator]
    msg = Block.message(target_slot, prev_hash, alternative_message(), block.creator,
                        block.y, block.proof)
    try:
        sig = ps.sign(control_key, msg, rng)
        control_signed = True
        alt = Block.from_bytes(msg + sig.to_bytes())
        control_valid = validate_block(alt, prev_hash, prev_slot, sim.genesis, sim.registry) is None
    except PrefixUnavailable:
        control_signed = control_valid = False

    return AttackReport(
        target_slot=target_slot, corrupt_at_slot=corrupt_at_slot, leader=block.creator,
        puncture_on=cfg.puncture_on, sign_attempts=attempts, sign_refusals=refusals,
        block_attempts=attempts, block_rejections=dict(sorted(rejections.items())),
        accepted_forgeries=forged, control_signed=control_signed, control_valid=control_valid,
        attempts=records)
