"""Timing and size measurements for key generation, signing, verification and puncturing.

Each parameter point is measured at puncture counts 0, n/2 and n. All counts
and all three operations (sign, verify, puncture) are timed round-robin
within one loop so that slow drift in the machine affects them alike. The
first ``warmup`` iterations are discarded.

CSV columns (JSON records carry the same keys)::

    operation, n, pr, ell, k, puncture_count, iterations,
    mean_ms, median_ms, stdev_ms, sk_bytes, vk_bytes, sig_bytes, ratio

Ratio rows (``operation`` = ``<op>_ratio``) compare the mean at n/2 punctures
with the mean at 0; their timing columns are empty.
"""

from __future__ import annotations

import csv
import gc
import io
import json
import random
import statistics
import time
import warnings
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

from . import ps
from .errors import CapacityWarning

MIN_ITERATIONS = 30
WARMUP = 5
PUNCTURE_BATCH = 16


@dataclass
class BenchRecord:
    operation: str
    n: int
    pr: float
    ell: int
    k: int
    puncture_count: int
    iterations: int
    mean_ms: float | None = None
    median_ms: float | None = None
    stdev_ms: float | None = None
    sk_bytes: int | None = None
    vk_bytes: int | None = None
    sig_bytes: int | None = None
    ratio: float | None = None


COLUMNS = [f.name for f in fields(BenchRecord)]


def _summary(samples_ns: Sequence[int]) -> tuple[float, float, float]:
    ms = [s / 1e6 for s in samples_ns]
    return statistics.fmean(ms), statistics.median(ms), statistics.stdev(ms)


def _fresh_prefix(sk: ps.SecretKey, rng: random.Random, length: int) -> bytes:
    while True:
        p = rng.randbytes(length)
        if not sk.punctured(p):
            return p


def punctured_key(sk: ps.SecretKey, count: int, rng: random.Random, prefix_len: int = 8) -> ps.SecretKey:
    """A copy of ``sk`` punctured at ``count`` random distinct prefixes."""
    sk = sk.copy()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CapacityWarning)
        for _ in range(count):
            sk.puncture(rng.randbytes(prefix_len))
    return sk


def measure_points(sk: ps.SecretKey, vk: ps.PublicKey, counts: Sequence[int], iterations: int,
                   rng: random.Random, prefix_len: int = 8,
                   warmup: int = WARMUP) -> dict[int, dict[str, list[int] | int]]:
    """Sign / verify / puncture samples (ns) on copies of ``sk`` punctured ``counts`` times.

    Every iteration visits every count (rotating the starting count) and runs
    the three operations back to back, so all measurements share the same
    machine conditions. Garbage collection is paused while timing.

    A puncture sample is the mean over a batch of ``PUNCTURE_BATCH`` punctures,
    since a single microsecond-scale call is dominated by timer and cache
    effects. The first puncture after verification (caches just evicted by
    the pairing) is kept separately under ``puncture_cold``.
    """
    keys = {c: punctured_key(sk, c, rng, prefix_len) for c in counts}
    out: dict[int, dict] = {c: {"sign": [], "verify": [], "puncture": [], "puncture_cold": []}
                            for c in counts}
    clock = time.perf_counter_ns
    order = list(counts)
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        for it in range(warmup + iterations):
            shift = it % len(order)
            for c in order[shift:] + order[:shift]:
                key = keys[c]
                m = _fresh_prefix(key, rng, prefix_len) + rng.randbytes(24)
                scratch = key.copy()
                targets = [rng.randbytes(prefix_len) for _ in range(PUNCTURE_BATCH + 1)]
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", CapacityWarning)
                    t0 = clock()
                    sig = key.sign(m, rng)
                    t1 = clock()
                    ok = ps.verify(vk, m, sig)
                    t2 = clock()
                    scratch.puncture(targets[0])
                    t3 = clock()
                    for u in targets[1:]:
                        scratch.puncture(u)
                    t4 = clock()
                if not ok:
                    raise AssertionError("benchmark signature failed to verify")
                if it >= warmup:
                    out[c]["sign"].append(t1 - t0)
                    out[c]["verify"].append(t2 - t1)
                    out[c]["puncture_cold"].append(t3 - t2)
                    out[c]["puncture"].append((t4 - t3) / PUNCTURE_BATCH)
            if it % 16 == 15 and gc_was_enabled:
                gc.collect()
    finally:
        if gc_was_enabled:
            gc.enable()
    for c in counts:
        out[c]["sk_bytes"] = keys[c].serialized_size()
    return out


def bench_point(n: int, pr: float, iterations: int = 100, keygen_iterations: int = MIN_ITERATIONS,
                seed: int | None = None, prefix_len: int = 8) -> list[BenchRecord]:
    if iterations < MIN_ITERATIONS or keygen_iterations < MIN_ITERATIONS:
        raise ValueError(f"at least {MIN_ITERATIONS} iterations are required per point")
    rng = random.Random(seed)
    extractor = ps.PrefixExtractor.fixed(prefix_len)
    clock = time.perf_counter_ns
    samples = []
    sk = vk = None
    for it in range(WARMUP + keygen_iterations):
        t0 = clock()
        sk, vk = ps.setup(n, pr, extractor, rng=rng)
        t1 = clock()
        if it >= WARMUP:
            samples.append(t1 - t0)
    p = sk.params
    base = dict(n=n, pr=pr, ell=p.ell, k=p.k, vk_bytes=vk.serialized_size(),
                sig_bytes=ps.SIGNATURE_BYTES)
    records = [BenchRecord("keygen", puncture_count=0, iterations=keygen_iterations,
                           sk_bytes=sk.serialized_size(), **dict(zip(
                               ("mean_ms", "median_ms", "stdev_ms"), _summary(samples))), **base)]
    means: dict[tuple[str, int], float] = {}
    counts = sorted({0, n // 2, n})
    results = measure_points(sk, vk, counts, iterations, rng, prefix_len)
    for count in counts:
        res = results[count]
        for op in ("sign", "verify", "puncture"):
            mean, med, sd = _summary(res[op])
            means[op, count] = mean
            records.append(BenchRecord(op, puncture_count=count, iterations=iterations,
                                       mean_ms=mean, median_ms=med, stdev_ms=sd,
                                       sk_bytes=res["sk_bytes"], **base))
    for op in ("sign", "verify", "puncture"):
        records.append(BenchRecord(f"{op}_ratio", puncture_count=n // 2, iterations=iterations,
                                   ratio=means[op, n // 2] / means[op, 0], **base))
    return records


def run_bench(grid: Iterable[tuple[int, float]], iterations: int = 100,
              keygen_iterations: int = MIN_ITERATIONS, seed: int | None = None,
              prefix_len: int = 8) -> list[BenchRecord]:
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid is empty")
    out = []
    for i, (n, pr) in enumerate(grid):
        s = None if seed is None else seed + i
        out += bench_point(n, pr, iterations, keygen_iterations, s, prefix_len)
    return out


def to_csv(records: Iterable[BenchRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in records:
        w.writerow({k: ("" if v is None else v) for k, v in asdict(r).items()})
    return buf.getvalue()


def to_json(records: Iterable[BenchRecord]) -> str:
    return json.dumps([asdict(r) for r in records], indent=2)


def from_csv(text: str) -> list[BenchRecord]:
    ints = {"n", "ell", "k", "puncture_count", "iterations", "sk_bytes", "vk_bytes", "sig_bytes"}
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        vals = {}
        for k in COLUMNS:
            v = row[k]
            vals[k] = v if k == "operation" else None if v == "" else int(v) if k in ints else float(v)
        out.append(BenchRecord(**vals))
    return out
