"""Reference model of the ideal puncturable-signature functionality.

:class:`IdealPS` is pure bookkeeping: it registers one signer, records every
(message, signature, key, verdict) tuple and the set ``P`` of punctured
prefixes, and answers verification queries by the four fixed rules
(completeness, unforgeability, consistency, punctured prefix). The only
non-deterministic branch is delegated to an adversary callback.

:func:`run_trace` drives the same event sequence through the ideal model and
through the real scheme (one honest signer running sign-then-puncture) and
reports every event where the two disagree on a verdict the ideal model
fixes.
"""

from __future__ import annotations

import json
import random
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator, Sequence, Union

from . import algebra, ps
from .errors import FormatError, PrefixExtractionError, PrefixUnavailable

Adversary = Callable[[bytes, bytes, bytes], bool]


class IdealAbort(Exception):
    """The ideal functionality aborted the request."""


class IdealRefuse(IdealAbort):
    """PSign on a prefix already in ``P``."""


def _never(m: bytes, sigma: bytes, vk: bytes) -> bool:
    return False


class IdealPS:
    """Bookkeeping state of the ideal functionality for a single signer.

    Tokens (``vk`` and signatures) are opaque hashable values compared by
    equality; callers bind them to real byte strings.
    """

    def __init__(self, extractor: Callable[[bytes], bytes],
                 adversary: Adversary | None = None):
        self.extractor = extractor
        self.adversary = adversary or _never
        self.sid = None
        self.signer = None
        self.vk = None
        self.punctured: set[bytes] = set()
        self.records: dict[tuple[bytes, object, object], bool] = {}
        self._signed: set[tuple[bytes, object]] = set()
        self.corrupted = False

    def _prefix(self, m: bytes) -> bytes | None:
        try:
            return self.extractor(m)
        except PrefixExtractionError:
            return None

    def keygen(self, sid: tuple, signer: str, vk: object) -> object:
        if self.vk is not None:
            raise IdealAbort("a key is already registered")
        if not (isinstance(sid, tuple) and len(sid) == 2 and sid[0] == signer):
            raise IdealAbort(f"sid {sid!r} is not of the form ({signer!r}, sid')")
        self.sid, self.signer, self.vk = sid, signer, vk
        self.punctured = set()
        return vk

    def can_sign(self, m: bytes) -> bool:
        prefix = self._prefix(m)
        return self.vk is not None and prefix is not None and prefix not in self.punctured

    def psign(self, m: bytes, sigma: object) -> object:
        """Record an honest signature ``sigma`` on ``m`` and puncture its prefix."""
        if self.vk is None:
            raise IdealAbort("no registered key")
        prefix = self._prefix(m)
        if prefix is None or prefix in self.punctured:
            raise IdealRefuse("prefix already punctured")
        if self.records.get((m, sigma, self.vk)) is False:
            raise IdealAbort("signature was previously recorded as invalid")
        self.records[(m, sigma, self.vk)] = True
        self._signed.add((m, self.vk))
        self.punctured.add(prefix)
        return sigma

    def corrupt(self) -> None:
        self.corrupted = True

    def verify(self, m: bytes, sigma: object, vk: object) -> tuple[bool, str]:
        """Return the verdict and the rule that produced it.

        Rule labels: ``"1"`` completeness, ``"2"`` unforgeability, ``"3"``
        consistency, ``"4p"`` punctured prefix, ``"4a"`` adversary's choice.
        """
        registered = vk is not None and vk == self.vk
        if registered and self.records.get((m, sigma, vk)) is True:
            return True, "1"
        if registered and (m, vk) not in self._signed and not self.corrupted:
            self.records[(m, sigma, vk)] = False
            return False, "2"
        if (m, sigma, vk) in self.records:
            return self.records[(m, sigma, vk)], "3"
        prefix = self._prefix(m)
        if prefix is not None and prefix in self.punctured:
            self.records[(m, sigma, vk)] = False
            return False, "4p"
        bit = bool(self.adversary(m, sigma, vk))
        self.records[(m, sigma, vk)] = bit
        return bit, "4a"


# -- trace events -------------------------------------------------------------------

@dataclass(frozen=True)
class KeyGen:
    sid: tuple
    signer: str = "U_S"


@dataclass(frozen=True)
class PSign:
    m: bytes


@dataclass(frozen=True)
class Verify:
    """Verification query.

    ``source`` picks the signature: ``"ref"`` (output of event ``ref``),
    ``"mutate"`` (that output with ``field`` in {h, S, index} altered),
    ``"random"`` (fresh junk) or ``"forge"`` (signed with the leaked key after
    a corruption). ``vk`` is ``"self"`` or ``"other"`` (an unrelated key).
    """

    m: bytes
    source: str = "ref"
    ref: int | None = None
    field: str | None = None
    vk: str = "self"


@dataclass(frozen=True)
class Corrupt:
    pass


TraceEvent = Union[KeyGen, PSign, Verify, Corrupt]

_OPS = {KeyGen: "keygen", PSign: "psign", Verify: "verify", Corrupt: "corrupt"}


def event_to_json(ev: TraceEvent) -> str:
    d = {"op": _OPS[type(ev)]}
    for k, v in asdict(ev).items():
        if isinstance(v, bytes):
            v = v.hex()
        elif isinstance(v, tuple):
            v = list(v)
        d[k] = v
    return json.dumps(d, sort_keys=True)


def event_from_json(line: str) -> TraceEvent:
    try:
        d = json.loads(line)
        op = d.pop("op")
        if op == "keygen":
            return KeyGen(sid=tuple(d["sid"]), signer=d.get("signer", "U_S"))
        if op == "psign":
            return PSign(m=bytes.fromhex(d["m"]))
        if op == "verify":
            return Verify(m=bytes.fromhex(d["m"]), source=d.get("source", "ref"),
                          ref=d.get("ref"), field=d.get("field"), vk=d.get("vk", "self"))
        if op == "corrupt":
            return Corrupt()
    except (KeyError, ValueError, TypeError, AttributeError) as exc:
        raise FormatError(f"bad trace event {line!r}: {exc}") from exc
    raise FormatError(f"unknown trace op {op!r}")


def dump_traces(traces: Iterable[Sequence[TraceEvent]], path) -> None:
    """Write traces as JSON lines, separated by blank lines."""
    with open(path, "w") as fh:
        for trace in traces:
            for ev in trace:
                fh.write(event_to_json(ev) + "\n")
            fh.write("\n")


def load_traces(path) -> list[list[TraceEvent]]:
    traces, cur = [], []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                cur.append(event_from_json(line))
            elif cur:
                traces.append(cur)
                cur = []
    if cur:
        traces.append(cur)
    return traces


# -- random trace generation ----------------------------------------------------------

def random_trace(rng: random.Random, max_events: int = 200, max_psigns: int = 64,
                 prefix_len: int = 8, corrupt_prob: float = 0.3) -> list[TraceEvent]:
    """Draw a random interaction: keygen, then psign/verify mix, maybe one corruption."""
    length = rng.randint(2, max_events)
    will_corrupt = rng.random() < corrupt_prob
    events: list[TraceEvent] = [KeyGen(sid=("U_S", rng.randrange(10**6)))]
    signed: list[tuple[int, bytes]] = []
    prefixes: list[bytes] = []
    corrupted = False
    psigns = 0

    def fresh_msg(prefix: bytes | None = None) -> bytes:
        prefix = prefix if prefix is not None else rng.randbytes(prefix_len)
        return prefix + rng.randbytes(rng.randint(0, 24))

    while len(events) < length:
        u = rng.random()
        if will_corrupt and not corrupted and u < 0.02:
            events.append(Corrupt())
            corrupted = True
        elif u < 0.40 and psigns < max_psigns:
            if prefixes and rng.random() < 0.2:
                m = fresh_msg(rng.choice(prefixes))
            else:
                m = fresh_msg()
                prefixes.append(m[:prefix_len])
            psigns += 1
            events.append(PSign(m))
            signed.append((len(events) - 1, m))
        elif signed:
            idx, m = rng.choice(signed)
            v = rng.random()
            if v < 0.35:
                events.append(Verify(m, "ref", idx))
            elif v < 0.50:
                events.append(Verify(fresh_msg(m[:prefix_len]), "ref", idx))
            elif v < 0.70:
                events.append(Verify(m, "mutate", idx, rng.choice(["h", "S", "index"])))
            elif v < 0.78:
                events.append(Verify(m, "ref", idx, vk="other"))
            elif v < 0.88 and corrupted:
                target = m if rng.random() < 0.5 else fresh_msg()
                events.append(Verify(target, "forge"))
            else:
                events.append(Verify(fresh_msg(), "random"))
        else:
            events.append(Verify(fresh_msg(), "random"))
    return events


# -- real-vs-ideal harness ------------------------------------------------------------

@dataclass
class Divergence:
    event: int
    op: str
    rule: str
    ideal: object
    real: object

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class TraceReport:
    events: int = 0
    psigns: int = 0
    verifies: int = 0
    divergences: list[Divergence] = field(default_factory=list)
    fp_refusals: int = 0
    expected_fp: float = 0.0
    rule_counts: dict[str, int] = field(default_factory=dict)

    def merge(self, other: "TraceReport") -> None:
        self.events += other.events
        self.psigns += other.psigns
        self.verifies += other.verifies
        self.divergences.extend(other.divergences)
        self.fp_refusals += other.fp_refusals
        self.expected_fp += other.expected_fp
        for k, v in other.rule_counts.items():
            self.rule_counts[k] = self.rule_counts.get(k, 0) + v

    def as_dict(self) -> dict:
        d = asdict(self)
        d["non_fp_divergences"] = len(self.divergences)
        return d


def _mutate(sig: bytes, fld: str, vk: ps.PublicKey, m: bytes, rng: random.Random) -> bytes:
    b = bytearray(sig)
    if fld == "h":
        b[rng.randrange(32)] ^= 1 << rng.randrange(8)
    elif fld == "S":
        b[32 + rng.randrange(48)] ^= 1 << rng.randrange(8)
    else:
        try:
            allowed = set(vk.positions(vk.extractor(m)))
        except PrefixExtractionError:
            allowed = set()
        old = int.from_bytes(b[80:], "big")
        new = old
        while new == old or new in allowed:
            new = rng.randrange(1, vk.params.ell + 1)
        b[80:] = new.to_bytes(4, "big")
    return bytes(b)


def _junk_signature(vk: ps.PublicKey, m: bytes, rng: random.Random) -> bytes:
    # random h and a random valid point, index inside S_{m'} so verify reaches the pairing
    S = vk.ctx.p1 * algebra.random_scalar(rng)
    try:
        index = rng.choice(vk.positions(vk.extractor(m)))
    except PrefixExtractionError:
        index = 1
    return ps.Signature(algebra.random_scalar(rng), S, index).to_bytes()


def run_trace(events: Sequence[TraceEvent], rng: random.Random, n: int = 64, pr: float = 0.05,
              extractor: ps.PrefixExtractor | None = None,
              other_vk: ps.PublicKey | None = None) -> TraceReport:
    """Run one trace against the ideal model and the real scheme side by side.

    A real refusal to sign a prefix the ideal model would accept is a Bloom
    false positive and is counted in ``fp_refusals`` (with its probability
    added to ``expected_fp``) instead of as a divergence. The adversary branch
    of verification is answered by running the real verifier, as a simulator
    would.
    """
    extractor = extractor or ps.PrefixExtractor.fixed(8)
    report = TraceReport(events=len(events))
    sk = vk = None
    vk_bytes = None
    outputs: dict[int, bytes] = {}
    vk_objs: dict[bytes, ps.PublicKey] = {}

    def real_verify(m: bytes, sigma: bytes, vkb: bytes) -> bool:
        return ps.verify(vk_objs[vkb], m, sigma)

    ideal = IdealPS(extractor, adversary=real_verify)
    if other_vk is not None:
        vk_objs[other_vk.to_bytes()] = other_vk

    for idx, ev in enumerate(events):
        if isinstance(ev, KeyGen):
            try:
                if not (isinstance(ev.sid, tuple) and len(ev.sid) == 2 and ev.sid[0] == ev.signer):
                    raise IdealAbort("malformed sid")
                if sk is not None:
                    raise IdealAbort("already registered")
                real_ok = True
            except IdealAbort:
                real_ok = False
            try:
                if real_ok:
                    sk, vk = ps.setup(n, pr, extractor, rng=rng)
                    vk_bytes = vk.to_bytes()
                    vk_objs[vk_bytes] = vk
                ideal.keygen(ev.sid, ev.signer, vk_bytes)
                ideal_ok = True
            except IdealAbort:
                ideal_ok = False
            if ideal_ok != real_ok:
                report.divergences.append(Divergence(idx, "keygen", "keygen", ideal_ok, real_ok))

        elif isinstance(ev, PSign):
            report.psigns += 1
            ideal_ok = ideal.can_sign(ev.m)
            fp_prob = sk.bloom.current_fp_rate() if sk is not None else 0.0
            try:
                if sk is None:
                    raise PrefixUnavailable("no key")
                sig = ps.sign(sk, ev.m, rng)
                sk.puncture(extractor(ev.m))
                real_ok = True
            except (PrefixUnavailable, PrefixExtractionError):
                real_ok = False
            if ideal_ok:
                report.expected_fp += fp_prob
            if ideal_ok and real_ok:
                outputs[idx] = sig.to_bytes()
                ideal.psign(ev.m, outputs[idx])
            elif ideal_ok and not real_ok:
                report.fp_refusals += 1
            elif real_ok and not ideal_ok:
                report.divergences.append(Divergence(idx, "psign", "P", False, True))

        elif isinstance(ev, Corrupt):
            ideal.corrupt()

        elif isinstance(ev, Verify):
            report.verifies += 1
            if vk is None:
                continue
            target_vk = vk if ev.vk == "self" or other_vk is None else other_vk
            base = outputs.get(ev.ref) if ev.ref is not None else None
            if ev.source == "ref" and base is not None:
                sigma = base
            elif ev.source == "mutate" and base is not None:
                sigma = _mutate(base, ev.field or "h", vk, ev.m, rng)
            elif ev.source == "forge" and ideal.corrupted:
                try:
                    sigma = ps.sign(sk, ev.m, rng).to_bytes()
                except (PrefixUnavailable, PrefixExtractionError):
                    sigma = _junk_signature(vk, ev.m, rng)
            else:
                sigma = _junk_signature(vk, ev.m, rng)
            ideal_bit, rule = ideal.verify(ev.m, sigma, target_vk.to_bytes())
            real_bit = ps.verify(target_vk, ev.m, sigma)
            report.rule_counts[rule] = report.rule_counts.get(rule, 0) + 1
            if rule != "4a" and ideal_bit != real_bit:
                report.divergences.append(Divergence(idx, "verify", rule, ideal_bit, real_bit))
    return report


def run_trace_equivalence(traces: Iterable[Sequence[TraceEvent]], rng: random.Random,
                          n: int = 64, pr: float = 0.05) -> TraceReport:
    """Run many traces (fresh keys per trace) and aggregate their reports."""
    total = TraceReport()
    other_sk, other_vk = ps.setup(n, pr, rng=rng)
    del other_sk
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", category=ps.CapacityWarning)
        for trace in traces:
            total.merge(run_trace(trace, rng, n, pr, other_vk=other_vk))
    return total


def random_traces(rng: random.Random, count: int, **kwargs) -> Iterator[list[TraceEvent]]:
    for _ in range(count):
        yield random_trace(rng, **kwargs)
