"""Command-line interface: key lifecycle, benchmarks and chain simulations.

Exit codes: 0 ok, 2 parse error, 3 prefix unavailable, 4 reject, 5 config error.
The default curve can be set with the ``PSPOS_CURVE`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import tempfile
import warnings
from importlib import resources
from pathlib import Path

from . import bench, ps
from .errors import CapacityWarning, FormatError, PrefixExtractionError, PrefixUnavailable

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_PREFIX = 3
EXIT_REJECT = 4
EXIT_CONFIG = 5


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def write_atomic(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read(path: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CLIError(EXIT_PARSE, f"cannot read {path}: {exc.strerror}") from exc


def _message(args) -> bytes:
    if args.message_file:
        return _read(args.message_file)
    if args.message is None:
        raise CLIError(EXIT_PARSE, "give a message or --message-file")
    return args.message.encode()


def _rng(seed: int | None) -> random.Random:
    return random.Random(seed) if seed is not None else None


def _load_sk(path: str) -> ps.SecretKey:
    try:
        return ps.SecretKey.from_bytes(_read(path))
    except FormatError as exc:
        raise CLIError(EXIT_PARSE, f"{path}: {exc}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _config_text(source: str) -> str:
    """A config path, or ``example:<name>`` for a bundled config."""
    if source.startswith("example:"):
        name = source.split(":", 1)[1]
        try:
            return resources.files("pspos.data").joinpath(f"{name}.json").read_text()
        except (FileNotFoundError, OSError) as exc:
            raise CLIError(EXIT_CONFIG, f"no bundled example named {name!r}") from exc
    try:
        return Path(source).read_text()
    except OSError as exc:
        raise CLIError(EXIT_CONFIG, f"cannot read config {source}: {exc.strerror}") from exc


# -- commands ------------------------------------------------------------------

def cmd_keygen(args) -> int:
    if args.delimiter is not None:
        extractor = ps.PrefixExtractor.until(args.delimiter.encode())
    else:
        extractor = ps.PrefixExtractor.fixed(args.prefix_len)
    try:
        sk, vk = ps.setup(args.n, args.pr, extractor, rng=_rng(args.seed))
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "sk.bin", sk.to_bytes())
    write_atomic(out / "vk.bin", vk.to_bytes())
    p = sk.params
    print(f"wrote {out / 'sk.bin'} and {out / 'vk.bin'} (l={p.ell}, k={p.k})")
    return EXIT_OK


def cmd_sign(args) -> int:
    sk = _load_sk(args.sk)
    m = _message(args)
    try:
        sig = sk.sign(m, _rng(args.seed))
        if args.puncture:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CapacityWarning)
                sk.puncture(sk.extractor(m))
    except PrefixExtractionError as exc:
        raise CLIError(EXIT_PARSE, str(exc)) from exc
    except PrefixUnavailable as exc:
        raise CLIError(EXIT_PREFIX, f"prefix unavailable: {exc}") from exc
    write_atomic(args.out, sig.to_file_bytes())
    if args.puncture:
        write_atomic(args.sk, sk.to_bytes())
    print(sig.to_envelope())
    return EXIT_OK


def cmd_puncture(args) -> int:
    sk = _load_sk(args.sk)
    prefix = bytes.fromhex(args.prefix) if args.hex else args.prefix.encode()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CapacityWarning)
        sk.puncture(prefix)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_atomic(args.sk, sk.to_bytes())
    print(f"punctured; {sk.remaining_capacity} of {sk.params.n} punctures left")
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        vk = ps.PublicKey.from_bytes(_read(args.vk))
        if args.sig.startswith(ps.ENVELOPE_PREFIX):
            sig = ps.Signature.from_envelope(args.sig)
        else:
            sig = ps.Signature.from_file_bytes(_read(args.sig))
    except FormatError as exc:
        raise CLIError(EXIT_PARSE, str(exc)) from exc
    ok = ps.verify(vk, _message(args), sig)
    print("accept" if ok else "reject")
    return EXIT_OK if ok else EXIT_REJECT


def cmd_bench(args) -> int:
    if len(args.n) != len(args.pr) and len(args.pr) != 1:
        raise CLIError(EXIT_CONFIG, "give one --pr or one per --n")
    prs = args.pr * len(args.n) if len(args.pr) == 1 else args.pr
    try:
        records = bench.run_bench(zip(args.n, prs), args.iterations, args.keygen_iterations,
                                  args.seed, args.prefix_len)
    except ValueError as exc:
        raise CLIError(EXIT_CONFIG, str(exc)) from exc
    text = bench.to_csv(records) if args.format == "csv" else bench.to_json(records)
    _emit(text.rstrip("\n"), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .chainsim import ConfigError, SimConfig, run_simulation

    try:
        cfg = SimConfig.from_json(_config_text(args.config))
        if args.seed is not None:
            cfg.seed = args.seed
        report = run_simulation(cfg)
    except ConfigError as exc:
        raise CLIError(EXIT_CONFIG, f"bad config: {exc}") from exc
    if args.format == "csv":
        flat = {k: v for k, v in report.to_dict().items() if not isinstance(v, dict)}
        flat["common_prefix_violations"] = report.common_prefix["violations"]
        flat["chain_quality_ok"] = report.chain_quality["ok"]
        flat["chain_growth_ok"] = report.chain_growth["ok"]
        text = ",".join(flat) + "\n" + ",".join(str(v) for v in flat.values())
    else:
        text = report.to_json()
    _emit(text, args.out)
    return EXIT_OK


def cmd_lrsl(args) -> int:
    from .chainsim import ConfigError, ScenarioError, SimConfig, lrsl_scenario

    try:
        raw = json.loads(_config_text(args.config))
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        scenario = raw.pop("scenario", {})
        corrupt_at = args.corrupt_at or scenario.get("corrupt_at_slot")
        target = args.target or scenario.get("target_slot")
        attempts = args.attempts or scenario.get("attempts", 1000)
        if corrupt_at is None:
            raise ConfigError("corrupt_at_slot is required")
        cfg = SimConfig.from_dict(raw)
        if args.seed is not None:
            cfg.seed = args.seed
        report = lrsl_scenario(cfg, corrupt_at, target, attempts)
    except json.JSONDecodeError as exc:
        raise CLIError(EXIT_CONFIG, f"bad config: invalid JSON: {exc}") from exc
    except (ConfigError, ScenarioError) as exc:
        raise CLIError(EXIT_CONFIG, f"bad config: {exc}") from exc
    _emit(report.to_json(with_attempts=args.full), args.out)
    if not report.ok:
        print("attack succeeded or control failed", file=sys.stderr)
        return EXIT_REJECT
    return EXIT_OK


def cmd_trace(args) -> int:
    from . import ideal

    rng = random.Random(args.seed)
    if args.load:
        traces = ideal.load_traces(args.load)
    else:
        traces = list(ideal.random_traces(rng, args.count))
    if args.dump:
        ideal.dump_traces(traces, args.dump)
    report = ideal.run_trace_equivalence(traces, rng)
    _emit(json.dumps(report.as_dict(), indent=2, sort_keys=True), args.out)
    return EXIT_OK if report.as_dict()["non_fp_divergences"] == 0 else EXIT_REJECT


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pspos", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    k = sub.add_parser("keygen", help="generate a key pair")
    k.add_argument("--n", type=int, default=1000, help="number of punctures the key supports")
    k.add_argument("--pr", type=float, default=1e-3, help="false-positive target")
    k.add_argument("--prefix-len", type=int, default=8, help="bytes of the message that get punctured")
    k.add_argument("--delimiter", help="puncture everything before this delimiter instead")
    k.add_argument("--out", default=".", help="directory for sk.bin and vk.bin")
    k.add_argument("--seed", type=int, help="deterministic keys (testing only)")
    k.set_defaults(func=cmd_keygen)

    def message_args(q):
        q.add_argument("message", nargs="?", help="message text (UTF-8)")
        q.add_argument("--message-file", help="read the message bytes from a file")

    s = sub.add_parser("sign", help="sign a message")
    s.add_argument("sk")
    message_args(s)
    s.add_argument("--puncture", action="store_true",
                   help="puncture the key at the message prefix after signing")
    s.add_argument("--out", default="sig.bin", help="signature file to write")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_sign)

    u = sub.add_parser("puncture", help="puncture a secret key at a prefix")
    u.add_argument("sk")
    u.add_argument("prefix")
    u.add_argument("--hex", action="store_true", help="prefix is given in hex")
    u.set_defaults(func=cmd_puncture)

    v = sub.add_parser("verify", help="verify a signature")
    v.add_argument("vk")
    message_args(v)
    v.add_argument("--sig", required=True, help="signature file or psig1: envelope")
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="time operations at puncture counts 0, n/2, n")
    b.add_argument("--n", type=int, nargs="+", default=[1000])
    b.add_argument("--pr", type=float, nargs="+", default=[1e-3])
    b.add_argument("--prefix-len", type=int, default=8)
    b.add_argument("--iterations", type=int, default=100)
    b.add_argument("--keygen-iterations", type=int, default=bench.MIN_ITERATIONS)
    b.add_argument("--format", choices=("csv", "json"), default="csv")
    b.add_argument("--out")
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bench)

    m = sub.add_parser("simulate", help="run the chain simulator")
    m.add_argument("config", help="JSON config path or example:<name>")
    m.add_argument("--format", choices=("csv", "json"), default="json")
    m.add_argument("--out")
    m.add_argument("--seed", type=int)
    m.set_defaults(func=cmd_simulate)

    a = sub.add_parser("lrsl", help="long-range attack with a leaked punctured key")
    a.add_argument("config", help="JSON config path or example:<name>")
    a.add_argument("--corrupt-at", type=int)
    a.add_argument("--target", type=int)
    a.add_argument("--attempts", type=int)
    a.add_argument("--full", action="store_true", help="include every attempt in the report")
    a.add_argument("--out")
    a.add_argument("--seed", type=int)
    a.set_defaults(func=cmd_lrsl)

    t = sub.add_parser("trace", help="compare the scheme against the ideal model on random traces")
    t.add_argument("--count", type=int, default=100)
    t.add_argument("--seed", type=int)
    t.add_argument("--load", help="replay traces from a JSONL file")
    t.add_argument("--dump", help="write the traces to a JSONL file")
    t.add_argument("--out")
    t.set_defaults(func=cmd_trace)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        # unsupported curve and similar environment problems
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
