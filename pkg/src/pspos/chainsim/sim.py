"""Slot-by-slot simulation of a stake-weighted longest-chain protocol.

Each slot: deliver broadcast chains, let every online node adopt the longest
valid one, then every eligible stakeholder signs a block on its local chain,
punctures its key at the block's prefix and broadcasts the extended chain.
"""

from __future__ import annotations

import json
import math
import random
import warnings
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

from .. import ps
from ..errors import CapacityWarning, PrefixUnavailable
from .chain import Block, Chain, Genesis, StakeEntry, Validator, select_chain, vrf_input
from .vrf import VRFKey, VRFRegistry, eligible, vrf_eval, vrf_keygen

STRATEGIES = ("passive", "withhold")
PUNCTURE_MODES = ("slot", "prev_hash")


class ConfigError(ValueError):
    pass


@dataclass
class AdversaryScript:
    """Which stakeholders the adversary controls and how they behave.

    ``passive`` corrupted parties run the honest protocol (their blocks still
    count as adversarial). ``withhold`` parties pool their leaderships into
    one private chain and publish it only once it is strictly longer than
    every honest chain.
    """

    corrupt: list[int] = field(default_factory=list)
    strategy: str = "passive"


@dataclass
class SimConfig:
    stakes: list[float] = field(default_factory=lambda: [1.0] * 10)
    f: float = 0.1
    slots: int = 1000
    epoch_length: int | None = None
    vrf_bits: int = 256
    seed: int = 0
    k_cp: int = 20
    cq_window: int = 50
    cq_mu: float = 0.5
    cg_window: int = 1000
    cg_tau: float | None = None
    delay: int = 0
    online: list[bool] | None = None
    adversary: AdversaryScript = field(default_factory=AdversaryScript)
    puncture_on: str = "slot"
    ps_pr: float = 1e-3
    ps_headroom: float = 2.0
    payload_bytes: int = 32

    def __post_init__(self):
        if isinstance(self.adversary, dict):
            self.adversary = AdversaryScript(**self.adversary)
        self.validate()

    @property
    def epoch(self) -> int:
        return self.slots if self.epoch_length is None else self.epoch_length

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(0 < self.f < 1, "f must lie in (0, 1)")
        need(len(self.stakes) > 0, "stakes must be nonempty")
        need(all(s >= 0 for s in self.stakes) and sum(self.stakes) > 0,
             "stakes must be nonnegative with a positive total")
        need(isinstance(self.slots, int) and self.slots >= 0, "slots must be a nonnegative integer")
        need(self.epoch >= self.slots, "a run covers a single epoch: slots must not exceed epoch_length")
        need(1 <= self.vrf_bits <= 512, "vrf_bits must be in [1, 512]")
        need(self.k_cp >= 0 and self.cq_window >= 1 and self.cg_window >= 1,
             "window parameters must be positive")
        need(0 <= self.cq_mu <= 1, "cq_mu must lie in [0, 1]")
        need(self.cg_tau is None or self.cg_tau >= 0, "cg_tau must be nonnegative")
        need(self.delay >= 0, "delay must be nonnegative")
        need(self.online is None or len(self.online) == len(self.stakes),
             "online must have one flag per stakeholder")
        need(self.adversary.strategy in STRATEGIES, f"strategy must be one of {STRATEGIES}")
        need(all(0 <= i < len(self.stakes) for i in self.adversary.corrupt),
             "corrupt ids out of range")
        need(self.puncture_on in PUNCTURE_MODES, f"puncture_on must be one of {PUNCTURE_MODES}")
        need(0 < self.ps_pr < 1 and self.ps_headroom > 0, "bad signing-key sizing")
        need(self.payload_bytes >= 0, "payload_bytes must be nonnegative")

    def relative_stakes(self) -> list[Fraction]:
        """Stakes normalised to exact fractions summing to 1."""
        raw = [Fraction(s).limit_denominator(10**9) for s in self.stakes]
        total = sum(raw)
        return [s / total for s in raw]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | Path) -> "SimConfig":
        return cls.from_json(Path(path).read_text())


@dataclass
class Stakeholder:
    id: int
    alpha: Fraction
    sk: ps.SecretKey
    vk: ps.PublicKey
    vrf: VRFKey
    online: bool = True
    corrupted: bool = False
    rng: random.Random = field(default_factory=random.Random, repr=False)
    # transactions are opaque payload bytes, so no separate transaction key is issued
    dsig: object = None


def extractor_for(mode: str) -> ps.PrefixExtractor:
    return ps.PrefixExtractor.fixed(8) if mode == "slot" else ps.PrefixExtractor.span(8, 40)


def make_block(leader: Stakeholder, sl: int, st: bytes, d: bytes, eta: bytes,
               vrf_bits: int = 256) -> Block:
    """Sign a block for ``leader`` at slot ``sl`` and puncture its key at the block prefix.

    Raises PrefixUnavailable if the prefix was already punctured (or is a
    Bloom false positive); the key is unchanged in that case.
    """
    y, proof = vrf_eval(leader.vrf, vrf_input(eta, sl), vrf_bits)
    msg = Block.message(sl, st, d, leader.id, y, proof)
    sig = ps.sign_and_puncture(leader.sk, msg, leader.rng)
    return Block(sl, st, d, leader.id, y, proof, sig.to_bytes())


@dataclass
class SimReport:
    slots: int
    stakeholders: int
    honest_nodes: int
    leader_slots: int
    nonempty_slots: int
    leader_slot_fraction: float
    nonempty_slot_fraction: float
    expected_leader_fraction: float
    blocks_produced: int
    adversarial_blocks: int
    signing_failures: int
    final_chain_length: int
    chain_slot_fraction: float
    rejected_candidates: int
    common_prefix: dict
    chain_quality: dict
    chain_growth: dict
    final_chains_valid: bool

    @property
    def violations(self) -> int:
        return (self.common_prefix["violations"] + (not self.chain_quality["ok"])
                + (not self.chain_growth["ok"]) + (not self.final_chains_valid))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


class Simulation:
    """Holds the full state of one run; ``step`` advances a single slot."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.rng = random.Random(cfg.seed)
        self.registry = VRFRegistry()
        alphas = cfg.relative_stakes()
        online = cfg.online or [True] * len(alphas)
        corrupt = set(cfg.adversary.corrupt)
        extractor = extractor_for(cfg.puncture_on)
        self.stakeholders: list[Stakeholder] = []
        for i, alpha in enumerate(alphas):
            lead_rate = 1 - (1 - cfg.f) ** float(alpha)
            n = max(8, math.ceil(cfg.ps_headroom * cfg.slots * lead_rate))
            key_rng = random.Random(self.rng.getrandbits(64))
            sk, vk = ps.setup(n, cfg.ps_pr, extractor, rng=key_rng)
            vrf = vrf_keygen(self.rng)
            self.registry.register(vrf)
            self.stakeholders.append(Stakeholder(
                i, alpha, sk, vk, vrf, online=online[i], corrupted=i in corrupt,
                rng=random.Random(self.rng.getrandbits(64))))
        eta = self.rng.randbytes(32)
        entries = tuple(StakeEntry(s.alpha, s.vrf.public, s.vk) for s in self.stakeholders)
        self.genesis = Genesis(entries, eta, Fraction(cfg.f).limit_denominator(10**9), cfg.vrf_bits)
        self.validator = Validator(self.genesis, self.registry)

        genesis_chain = Chain(self.genesis)
        self.withholding = cfg.adversary.strategy == "withhold"
        # node ids: stakeholders that keep a local chain (all online parties,
        # except withholding adversaries who share `private`)
        self.local: dict[int, Chain] = {
            s.id: genesis_chain for s in self.stakeholders
            if s.online and not (s.corrupted and self.withholding)}
        self.private = genesis_chain
        self.honest = [s.id for s in self.stakeholders if s.online and not s.corrupted]
        self.inbox: dict[int, list[Chain]] = {}
        self.slot = 0

        self.leader_slots = 0
        self.nonempty_slots = 0
        self.blocks_produced = 0
        self.adversarial_blocks = 0
        self.signing_failures = 0
        self.rejected = 0
        # per honest node: chain length at the end of each slot, and held chains
        self.lengths: dict[int, list[int]] = {i: [0] for i in self.honest}
        self.held: dict[int, dict[bytes, list[int]]] = {
            i: {genesis_chain.head_hash: [0, 0]} for i in self.honest}
        self.chains: dict[bytes, Chain] = {genesis_chain.head_hash: genesis_chain}

    def _adopt(self, local: Chain, candidates: list[Chain]) -> Chain:
        new = select_chain(local, candidates, self.validator)
        self.rejected += sum(1 for c in candidates
                             if len(c) > len(new) and not self.validator.is_valid(c))
        return new

    def _broadcast(self, chain: Chain, sl: int) -> None:
        self.inbox.setdefault(sl + 1 + self.cfg.delay, []).append(chain)

    def _payload(self) -> bytes:
        return self.rng.randbytes(self.cfg.payload_bytes)

    def _try_block(self, s: Stakeholder, chain: Chain, sl: int) -> Chain | None:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CapacityWarning)
                b = make_block(s, sl, chain.head_hash, self._payload(), self.genesis.eta,
                               self.cfg.vrf_bits)
        except PrefixUnavailable:
            self.signing_failures += 1
            return None
        self.blocks_produced += 1
        self.adversarial_blocks += s.corrupted
        return chain.extend(b)

    def step(self) -> None:
        self.slot += 1
        sl = self.slot
        arrived = self.inbox.pop(sl, [])
        if arrived:
            for i in sorted(self.local):
                self.local[i] = self._adopt(self.local[i], arrived)
            if self.withholding:
                self.private = self._adopt(self.private, arrived)

        leaders = 0
        produced = 0
        private_extended = False
        data = vrf_input(self.genesis.eta, sl)
        for s in self.stakeholders:
            if not s.online:
                continue
            y, _ = vrf_eval(s.vrf, data, self.cfg.vrf_bits)
            if not eligible(y, s.alpha, self.genesis.f, self.cfg.vrf_bits):
                continue
            leaders += 1
            if s.corrupted and self.withholding:
                new = self._try_block(s, self.private, sl)
                if new is not None:
                    self.private = new
                    private_extended = True
                    produced += 1
                continue
            new = self._try_block(s, self.local[s.id], sl)
            if new is not None:
                self.local[s.id] = new
                self._broadcast(new, sl)
                produced += 1

        if private_extended:
            best_honest = max((len(c) for c in self.local.values()), default=0)
            if len(self.private) > best_honest:
                self._broadcast(self.private, sl)

        self.leader_slots += leaders > 0
        self.nonempty_slots += produced > 0
        for i in self.honest:
            c = self.local[i]
            self.lengths[i].append(len(c))
            h = c.head_hash
            span = self.held[i].get(h)
            if span is None:
                self.held[i][h] = [sl, sl]
                self.chains[h] = c
            else:
                span[1] = sl

    def run(self, until: int | None = None) -> None:
        until = self.cfg.slots if until is None else until
        while self.slot < until:
            self.step()

    # -- metrics -------------------------------------------------------------

    def common_prefix(self) -> dict:
        """Pairs of honest views (chain a at slot t1, chain b at t2 > t1) where
        a minus its last k blocks is not a prefix of b."""
        k = self.cfg.k_cp
        first: dict[bytes, int] = {}
        last: dict[bytes, int] = {}
        for i in self.honest:
            for h, (a, b) in self.held[i].items():
                first[h] = min(first.get(h, a), a)
                last[h] = max(last.get(h, b), b)
        heads = sorted(first)
        violations = 0
        pairs: dict[str, int] = {}
        for ha in heads:
            a = self.chains[ha]
            if len(a) <= k:
                continue
            for hb in heads:
                if last[hb] <= first[ha] or a.prunes_into(self.chains[hb], k):
                    continue
                violations += 1
                for i in self.honest:
                    if ha not in self.held[i]:
                        continue
                    for j in self.honest:
                        if hb in self.held[j] and self.held[j][hb][1] > self.held[i][ha][0]:
                            key = f"{i}-{j}"
                            pairs[key] = pairs.get(key, 0) + 1
        return {"k": k, "violations": violations, "pairs": dict(sorted(pairs.items())),
                "distinct_chains": len(heads)}

    def chain_quality(self) -> dict:
        l, mu = self.cfg.cq_window, self.cfg.cq_mu
        corrupt = {s.id for s in self.stakeholders if s.corrupted}
        worst = 1.0
        for i in self.honest:
            flags = [b.creator not in corrupt for b in self.local[i].blocks]
            if not flags:
                continue
            w = min(l, len(flags))
            run = sum(flags[:w])
            lowest = run
            for t in range(w, len(flags)):
                run += flags[t] - flags[t - w]
                lowest = min(lowest, run)
            worst = min(worst, lowest / w)
        return {"window": l, "mu": mu, "min_honest_fraction": worst, "ok": worst >= mu}

    def chain_growth(self) -> dict:
        s = self.cfg.cg_window
        tau = self.cfg.cg_tau
        if tau is None:
            honest_stake = sum(float(x.alpha) for x in self.stakeholders
                               if x.online and not x.corrupted)
            tau = 0.5 * (1 - (1 - self.cfg.f) ** honest_stake)
        T = self.slot
        if not self.honest or T < s:
            return {"window": s, "tau": tau, "min_growth": None, "ok": True}
        lows = [min(self.lengths[i][t] for i in self.honest) for t in range(T + 1)]
        highs = [max(self.lengths[i][t] for i in self.honest) for t in range(T + 1)]
        growth = min(lows[t + s] - highs[t] for t in range(T - s + 1))
        return {"window": s, "tau": tau, "min_growth": growth, "ok": growth >= tau * s}

    def report(self) -> SimReport:
        T = self.slot
        online_stake = sum(float(s.alpha) for s in self.stakeholders if s.online)
        fresh = Validator(self.genesis, self.registry)
        finals = [self.local[i] for i in self.honest]
        best = max(finals, key=len, default=Chain(self.genesis))
        return SimReport(
            slots=T,
            stakeholders=len(self.stakeholders),
            honest_nodes=len(self.honest),
            leader_slots=self.leader_slots,
            nonempty_slots=self.nonempty_slots,
            leader_slot_fraction=self.leader_slots / T if T else 0.0,
            nonempty_slot_fraction=self.nonempty_slots / T if T else 0.0,
            expected_leader_fraction=1 - (1 - self.cfg.f) ** online_stake if online_stake else 0.0,
            blocks_produced=self.blocks_produced,
            adversarial_blocks=self.adversarial_blocks,
            signing_failures=self.signing_failures,
            final_chain_length=len(best),
            chain_slot_fraction=len(best) / T if T else 0.0,
            rejected_candidates=self.rejected,
            common_prefix=self.common_prefix(),
            chain_quality=self.chain_quality(),
            chain_growth=self.chain_growth(),
            final_chains_valid=all(fresh.is_valid(c) for c in finals),
        )


def run_simulation(cfg: SimConfig) -> SimReport:
    sim = Simulation(cfg)
    sim.run()
    return sim.report()
