import math
import random
from decimal import Decimal, getcontext
from fractions import Fraction

import pytest

from pspos import ps
from pspos.chainsim import (BAD_LINK, BAD_SIG, BAD_SLOT_ORDER, BAD_VRF, NOT_ELIGIBLE, Block,
                            Chain, ConfigError, Genesis, ScenarioError, SimConfig, Simulation,
                            StakeEntry, Validator, VRFRegistry, eligible, lrsl_scenario,
                            make_block, run_simulation, select_chain, slot_bytes, threshold,
                            validate_block, vrf_eval, vrf_input, vrf_keygen)
from pspos.errors import FormatError, PrefixUnavailable


# -- VRF stand-in and eligibility ------------------------------------------------------

def test_vrf_deterministic_and_verifiable():
    key = vrf_keygen(random.Random(1))
    reg = VRFRegistry()
    pub = reg.register(key)
    y, proof = vrf_eval(key, b"input")
    assert (y, proof) == vrf_eval(key, b"input")
    assert 0 <= y < 2**256
    assert reg.verify(pub, b"input", y, proof)
    assert not reg.verify(pub, b"input", y ^ 1, proof)
    assert not reg.verify(pub, b"input", y, bytes(32))
    assert not reg.verify(pub, b"other", y, proof)
    assert not reg.verify(b"\x00" * 32, b"input", y, proof)


def test_vrf_output_uniform():
    key = vrf_keygen(random.Random(2))
    eta = b"\x01" * 32
    n = 10_000
    mean = sum(vrf_eval(key, vrf_input(eta, sl))[0] / 2**256 for sl in range(1, n + 1)) / n
    assert abs(mean - 0.5) <= 3 * math.sqrt(1 / 12 / n)


def test_vrf_bit_lengths():
    key = vrf_keygen(random.Random(3))
    for bits in (1, 8, 100, 512):
        y, _ = vrf_eval(key, b"x", bits)
        assert 0 <= y < 2**bits
    with pytest.raises(ValueError):
        vrf_eval(key, b"x", 513)


def test_threshold_closed_forms():
    f = Fraction(1, 10)
    assert threshold(Fraction(0), f, 256) == 0
    exact = 2**256 // 10
    assert abs(threshold(Fraction(1), f, 256) - exact) <= 1
    # alpha = 1/2 via a square root instead of exp/ln
    getcontext().prec = 160
    want = int((1 - Decimal("0.9").sqrt()) * Decimal(2) ** 256)
    assert abs(threshold(Fraction(1, 2), f, 256) - want) <= 1
    with pytest.raises(ValueError):
        threshold(Fraction(3, 2), f, 256)


def test_threshold_monotone_in_stake():
    f = Fraction(1, 5)
    ts = [threshold(Fraction(i, 20), f, 64) for i in range(21)]
    assert ts == sorted(ts) and ts[0] == 0


def test_eligibility_rate_full_stake():
    key = vrf_keygen(random.Random(4))
    eta = b"\x02" * 32
    n, f = 10_000, 0.1
    hits = sum(eligible(vrf_eval(key, vrf_input(eta, sl))[0], 1, f) for sl in range(1, n + 1))
    assert abs(hits / n - f) <= 3 * math.sqrt(f * (1 - f) / n)


def test_zero_stake_never_eligible():
    key = vrf_keygen(random.Random(5))
    assert not any(eligible(vrf_eval(key, slot_bytes(sl))[0], 0, 0.5) for sl in range(2000))


def test_leader_presence_aggregates_independently():
    rng = random.Random(6)
    keys = [vrf_keygen(rng) for _ in range(10)]
    eta = b"\x03" * 32
    n, f = 10_000, Fraction(1, 10)
    alpha = Fraction(1, 10)
    present = sum(
        any(eligible(vrf_eval(k, vrf_input(eta, sl))[0], alpha, f) for k in keys)
        for sl in range(1, n + 1))
    p = 1 - (1 - 0.1) ** 1.0
    assert abs(present / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


# -- blocks, validation and chain selection ----------------------------------------------

@pytest.fixture(scope="module")
def sim():
    s = Simulation(SimConfig(stakes=[1, 1, 1], f=0.5, slots=100, seed=3))
    return s


def fresh_sim(**kw):
    cfg = dict(stakes=[1, 1, 1], f=0.5, slots=100, seed=3)
    cfg.update(kw)
    return Simulation(SimConfig(**cfg))


def eligible_slot(s, who, start=1, want=True):
    g = s.genesis
    for sl in range(start, start + 10_000):
        y, _ = vrf_eval(s.stakeholders[who].vrf, vrf_input(g.eta, sl), g.vrf_bits)
        if (y < g.threshold(who)) == want:
            return sl
    raise AssertionError("no slot found")


def test_honest_block_validates():
    s = fresh_sim()
    sl = eligible_slot(s, 0)
    b = make_block(s.stakeholders[0], sl, s.genesis.hash, b"tx", s.genesis.eta)
    assert validate_block(b, s.genesis.hash, 0, s.genesis, s.registry) is None
    assert Block.from_bytes(b.to_bytes()) == b


def test_second_block_same_slot_refused():
    s = fresh_sim()
    leader = s.stakeholders[1]
    sl = eligible_slot(s, 1)
    make_block(leader, sl, s.genesis.hash, b"first", s.genesis.eta)
    rng = random.Random(7)
    for _ in range(50):
        with pytest.raises(PrefixUnavailable):
            make_block(leader, sl, rng.randbytes(32), rng.randbytes(16), s.genesis.eta)
    assert all(leader.sk.bloom.is_set(i) for i in leader.vk.positions(slot_bytes(sl)))


def test_alternative_payload_after_puncture_refused():
    s = fresh_sim()
    leader = s.stakeholders[2]
    sl = eligible_slot(s, 2)
    make_block(leader, sl, s.genesis.hash, b"d", s.genesis.eta)
    with pytest.raises(PrefixUnavailable):
        make_block(leader, sl, s.genesis.hash, b"d-prime", s.genesis.eta)


def test_rejection_reasons():
    s = fresh_sim()
    g, reg = s.genesis, s.registry
    sl = eligible_slot(s, 0, start=5)
    good = make_block(s.stakeholders[0], sl, g.hash, b"tx", g.eta)

    def variant(**kw):
        d = dict(sl=good.sl, st=good.st, d=good.d, creator=good.creator, y=good.y,
                 proof=good.proof, sigma=good.sigma)
        d.update(kw)
        return Block(**d)

    assert validate_block(variant(sigma=random.Random(1).randbytes(84)), g.hash, 0, g, reg) == BAD_SIG
    assert validate_block(variant(d=b"changed"), g.hash, 0, g, reg) == BAD_SIG
    assert validate_block(good, b"\x00" * 32, 0, g, reg) == BAD_LINK
    assert validate_block(good, g.hash, sl, g, reg) == BAD_SLOT_ORDER
    assert validate_block(variant(y=good.y ^ 1), g.hash, 0, g, reg) == BAD_VRF
    assert validate_block(variant(proof=bytes(32)), g.hash, 0, g, reg) == BAD_VRF
    assert validate_block(variant(creator=99), g.hash, 0, g, reg) == BAD_VRF
    assert validate_block(variant(creator=1), g.hash, 0, g, reg) == BAD_VRF


def test_not_eligible_block_rejected():
    # find a slot where stakeholder 0 is NOT a leader, then sign a block there anyway
    s = fresh_sim()
    g = s.genesis
    leader = s.stakeholders[0]
    sl = eligible_slot(s, 0, want=False)
    y, proof = vrf_eval(leader.vrf, vrf_input(g.eta, sl), g.vrf_bits)
    assert y >= g.threshold(0)
    msg = Block.message(sl, g.hash, b"tx", 0, y, proof)
    sig = ps.sign(leader.sk, msg, random.Random(1))
    b = Block(sl, g.hash, b"tx", 0, y, proof, sig.to_bytes())
    assert validate_block(b, g.hash, 0, g, s.registry) == NOT_ELIGIBLE


def _chain_of(s, who, slots, start):
    c = start
    for sl in slots:
        c = c.extend(make_block(s.stakeholders[who], sl, c.head_hash, b"", s.genesis.eta))
    return c


def test_select_chain_rules():
    s = fresh_sim()
    v = Validator(s.genesis, s.registry)
    g = Chain(s.genesis)
    a_slots = [eligible_slot(s, 0, start=1)]
    a_slots.append(eligible_slot(s, 0, start=a_slots[0] + 1))
    b_slot = eligible_slot(s, 1, start=1)
    a2 = _chain_of(s, 0, a_slots, g)
    a1 = Chain(s.genesis, a2.blocks[:1])
    b1 = _chain_of(s, 1, [b_slot], g)
    assert select_chain(g, [a1], v) is a1
    assert select_chain(a1, [b1], v) is a1
    assert select_chain(b1, [a1], v) is b1
    assert select_chain(g, [b1, a1], v) is min((a1, b1), key=lambda c: c.head_hash)
    assert select_chain(a1, [a2], v) is a2
    bad = a1.extend(Block(a_slots[1], a1.head_hash, b"", 0, 0, bytes(32), bytes(84)))
    bad = bad.extend(Block(a_slots[1] + 1, bad.head_hash, b"", 0, 0, bytes(32), bytes(84)))
    assert select_chain(a1, [bad], v) is a1
    assert select_chain(a1, [bad, a2], v) is a2


def test_chain_and_genesis_encoding():
    s = fresh_sim()
    g = Chain(s.genesis)
    c = _chain_of(s, 0, [eligible_slot(s, 0), eligible_slot(s, 0, start=eligible_slot(s, 0) + 1)], g)
    raw = c.to_bytes()
    back = Chain.from_bytes(raw)
    assert back.to_bytes() == raw
    assert back.hashes == c.hashes and back.genesis.hash == s.genesis.hash
    for cut in (3, 20, len(raw) - 1):
        with pytest.raises(FormatError):
            Chain.from_bytes(raw[:cut])
    with pytest.raises(FormatError):
        Chain.from_bytes(raw + b"\x00")
    with pytest.raises(FormatError):
        Block.from_bytes(c.blocks[0].to_bytes()[:-1])


def test_prunes_into():
    s = fresh_sim(f=0.9)
    g = Chain(s.genesis)
    slots = [eligible_slot(s, 0, start=1)]
    for _ in range(3):
        slots.append(eligible_slot(s, 0, start=slots[-1] + 1))
    c4 = _chain_of(s, 0, slots, g)
    c2 = Chain(s.genesis, c4.blocks[:2])
    fork = _chain_of(s, 1, [eligible_slot(s, 1, start=slots[1] + 1)], c2)
    assert c2.prunes_into(c4, 0)
    assert not c4.prunes_into(fork, 0)
    assert c4.prunes_into(fork, 2)
    assert not c4.prunes_into(fork, 1)


def test_genesis_stake_conservation():
    s = fresh_sim(stakes=[5, 3, 0.5])
    assert sum(e.stake for e in s.genesis.entries) == 1
    e = s.genesis.entries[0]
    with pytest.raises(ValueError):
        Genesis((StakeEntry(Fraction(1, 2), e.vrf_public, e.vk),), b"\x00" * 32, Fraction(1, 10))
    assert Genesis.from_bytes(s.genesis.to_bytes()).hash == s.genesis.hash


# -- whole runs ---------------------------------------------------------------------------

def test_all_honest_run():
    cfg = SimConfig(stakes=[1] * 10, f=0.1, slots=3000, seed=11)
    r = run_simulation(cfg)
    assert r.common_prefix["violations"] == 0
    assert r.final_chains_valid and r.rejected_candidates == 0
    assert r.adversarial_blocks == 0 and r.chain_quality["min_honest_fraction"] == 1.0
    sd = math.sqrt(0.1 * 0.9 / 3000)
    assert abs(r.leader_slot_fraction - 0.1) <= 3 * sd
    assert r.nonempty_slots <= r.leader_slots
    assert r.final_chain_length == r.nonempty_slots


def test_determinism():
    cfg = dict(stakes=[2, 1, 1], f=0.3, slots=400, seed=5, delay=1)
    a = run_simulation(SimConfig(**cfg)).to_json()
    b = run_simulation(SimConfig(**cfg)).to_json()
    c = run_simulation(SimConfig(**{**cfg, "seed": 6})).to_json()
    assert a == b and a != c


def test_leader_presence_with_offline_stake():
    online = [True] * 5 + [False] * 5
    cfg = SimConfig(stakes=[1] * 10, f=0.1, slots=5000, seed=12, online=online)
    r = run_simulation(cfg)
    p = 1 - 0.9 ** 0.5
    assert abs(r.expected_leader_fraction - p) < 1e-12
    assert abs(r.leader_slot_fraction - p) <= 3 * math.sqrt(p * (1 - p) / 5000)
    assert r.honest_nodes == 5


def test_no_one_online():
    r = run_simulation(SimConfig(stakes=[1, 1], slots=200, online=[False, False]))
    assert r.final_chain_length == 0 and r.blocks_produced == 0
    assert r.leader_slots == 0


def test_single_stakeholder_chain_growth():
    f, s, T = 0.1, 1000, 3000
    # Chernoff lower tail plus a union bound over all windows, failure prob 1e-6
    eps = math.sqrt(2 * math.log(T / 1e-6) / (f * s))
    tau = f * (1 - eps)
    r = run_simulation(SimConfig(stakes=[1], f=f, slots=T, seed=13, cg_window=s, cg_tau=tau))
    assert r.chain_growth["ok"]
    assert r.chain_growth["min_growth"] >= tau * s
    assert r.common_prefix["violations"] == 0


def test_validity_closure_during_run():
    s = Simulation(SimConfig(stakes=[1, 2, 3, 4], f=0.3, slots=600, seed=14, delay=2))
    checker = Validator(s.genesis, s.registry)
    for stop in range(100, 601, 100):
        s.run(stop)
        for i in s.honest:
            assert checker.is_valid(s.local[i])


def test_delay_creates_forks_but_keeps_prefix():
    r = run_simulation(SimConfig(stakes=[1] * 5, f=0.3, slots=1500, seed=15, delay=2))
    assert r.common_prefix["distinct_chains"] > r.final_chain_length + 1
    assert r.final_chain_length < r.nonempty_slots
    assert r.common_prefix["violations"] == 0
    assert r.final_chains_valid


def test_previous_hash_puncturing():
    r = run_simulation(SimConfig(stakes=[1] * 4, f=0.2, slots=800, seed=16,
                                 puncture_on="prev_hash"))
    assert r.final_chains_valid and r.common_prefix["violations"] == 0
    assert r.final_chain_length > 0


def test_withholding_adversary():
    cfg = SimConfig(stakes=[1] * 10, f=0.1, slots=2000, seed=17,
                    adversary={"corrupt": [0, 1, 2], "strategy": "withhold"})
    r = run_simulation(cfg)
    assert r.honest_nodes == 7
    assert r.adversarial_blocks > 0
    assert r.final_chains_valid
    assert 0.0 <= r.chain_quality["min_honest_fraction"] <= 1.0


def test_passive_adversary_counts_blocks():
    cfg = SimConfig(stakes=[1] * 4, f=0.2, slots=800, seed=18,
                    adversary={"corrupt": [3], "strategy": "passive"})
    r = run_simulation(cfg)
    assert r.adversarial_blocks > 0
    assert r.chain_quality["min_honest_fraction"] < 1.0


@pytest.mark.parametrize("bad", [
    {"f": 0}, {"f": 1}, {"stakes": []}, {"stakes": [0, 0]}, {"stakes": [-1, 2]},
    {"slots": -1}, {"epoch_length": 10, "slots": 20}, {"vrf_bits": 0},
    {"online": [True]}, {"adversary": {"strategy": "bribe"}},
    {"adversary": {"corrupt": [9]}}, {"puncture_on": "hash"}, {"delay": -1},
    {"bogus_field": 1},
])
def test_config_validation(bad):
    base = {"stakes": [1, 1], "slots": 10}
    with pytest.raises(ConfigError):
        SimConfig.from_dict({**base, **bad})


def test_config_json():
    with pytest.raises(ConfigError):
        SimConfig.from_json("{not json")
    with pytest.raises(ConfigError):
        SimConfig.from_json("[1, 2]")
    cfg = SimConfig.from_json('{"stakes": [1, 2], "f": 0.2, "adversary": {"corrupt": [1]}}')
    assert cfg.adversary.corrupt == [1]
    assert SimConfig.from_dict(cfg.to_dict()) == cfg


# -- long-range attack scenario ----------------------------------------------------------------

@pytest.mark.parametrize("mode", ["slot", "prev_hash"])
def test_lrsl_scenario(mode):
    cfg = SimConfig(stakes=[1] * 4, f=0.2, slots=120, seed=19, puncture_on=mode)
    rep = lrsl_scenario(cfg, corrupt_at_slot=100, attempts=200)
    assert rep.accepted_forgeries == 0
    assert rep.sign_refusals == rep.sign_attempts == 200
    assert sum(rep.block_rejections.values()) == rep.block_attempts == 200
    assert rep.control_signed and rep.control_valid
    assert rep.ok
    assert rep.target_slot < 100
    assert len(rep.attempts) == 400


def test_lrsl_misconfiguration():
    cfg = SimConfig(stakes=[1] * 4, f=0.2, slots=120, seed=19)
    with pytest.raises(ScenarioError):
        lrsl_scenario(cfg, corrupt_at_slot=50, target_slot=60)
    with pytest.raises(ScenarioError):
        lrsl_scenario(cfg, corrupt_at_slot=500)
    sim = Simulation(cfg)
    sim.run(60)
    used = {b.sl for b in sim.local[0].blocks}
    empty = next(sl for sl in range(1, 60) if sl not in used)
    with pytest.raises(ScenarioError):
        lrsl_scenario(cfg, corrupt_at_slot=60, target_slot=empty)
