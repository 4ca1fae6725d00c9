import json
import subprocess
import sys

import pytest

from pspos import ps
from pspos.cli import main


@pytest.fixture
def keydir(tmp_path):
    assert main(["keygen", "--n", "30", "--pr", "0.05", "--out", str(tmp_path), "--seed", "1"]) == 0
    return tmp_path


def test_keygen_sign_verify(keydir, capsys):
    sig = keydir / "sig.bin"
    assert main(["sign", str(keydir / "sk.bin"), "slot0001 hello", "--out", str(sig)]) == 0
    envelope = capsys.readouterr().out.strip()
    assert envelope.startswith("psig1:")
    assert main(["verify", str(keydir / "vk.bin"), "slot0001 hello", "--sig", str(sig)]) == 0
    assert capsys.readouterr().out.strip() == "accept"
    assert main(["verify", str(keydir / "vk.bin"), "slot0001 hello", "--sig", envelope]) == 0
    assert main(["verify", str(keydir / "vk.bin"), "slot0001 bye", "--sig", str(sig)]) == 4
    assert "reject" in capsys.readouterr().out


def test_sign_with_puncture_twice(keydir, capsys):
    sk = str(keydir / "sk.bin")
    out = str(keydir / "s.bin")
    assert main(["sign", sk, "slot0002 a", "--puncture", "--out", out]) == 0
    assert main(["sign", sk, "slot0002 b", "--puncture", "--out", out]) == 3
    assert "prefix unavailable" in capsys.readouterr().err
    assert ps.SecretKey.from_bytes((keydir / "sk.bin").read_bytes()).puncture_count == 1


def test_puncture_command(keydir):
    sk = str(keydir / "sk.bin")
    assert main(["puncture", sk, "slot0003"]) == 0
    assert main(["sign", sk, "slot0003 x", "--out", str(keydir / "s.bin")]) == 3
    assert main(["puncture", sk, "736c6f7430303034", "--hex"]) == 0
    assert main(["sign", sk, "slot0004 x", "--out", str(keydir / "s.bin")]) == 3


def test_message_file(keydir, tmp_path):
    m = tmp_path / "m.bin"
    m.write_bytes(b"\x00\x01\x02\x03\x04\x05\x06\x07binary")
    sig = str(tmp_path / "sig.bin")
    assert main(["sign", str(keydir / "sk.bin"), "--message-file", str(m), "--out", sig]) == 0
    assert main(["verify", str(keydir / "vk.bin"), "--message-file", str(m), "--sig", sig]) == 0


def test_parse_errors(keydir, tmp_path, capsys):
    sig = tmp_path / "sig.bin"
    assert main(["sign", str(keydir / "sk.bin"), "slot0005 x", "--out", str(sig)]) == 0
    short = tmp_path / "short.bin"
    short.write_bytes(sig.read_bytes()[:40])
    assert main(["verify", str(keydir / "vk.bin"), "slot0005 x", "--sig", str(short)]) == 2
    assert main(["verify", str(keydir / "vk.bin"), "x", "--sig", str(tmp_path / "missing")]) == 2
    assert main(["sign", str(keydir / "vk.bin"), "slot0005 x"]) == 2
    assert main(["sign", str(keydir / "sk.bin"), "tiny", "--out", str(sig)]) == 2
    assert main(["verify", str(keydir / "vk.bin"), "x", "--sig", "psig1:@@@"]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["sign"])
    assert exc.value.code == 2


def test_key_files_round_trip_bit_exact(keydir):
    for name, cls in (("sk.bin", ps.SecretKey), ("vk.bin", ps.PublicKey)):
        raw = (keydir / name).read_bytes()
        assert cls.from_bytes(raw).to_bytes() == raw


def test_unsupported_curve(tmp_path, monkeypatch, capsys):
    from pspos import algebra
    monkeypatch.setenv("PSPOS_CURVE", "bn254")
    algebra.default_context.cache_clear()
    try:
        assert main(["keygen", "--n", "5", "--out", str(tmp_path)]) == 5
    finally:
        algebra.default_context.cache_clear()
    assert "unsupported curve" in capsys.readouterr().err


def test_bench_command(tmp_path):
    out = tmp_path / "b.json"
    assert main(["bench", "--n", "20", "--pr", "0.05", "--iterations", "30",
                 "--format", "json", "--out", str(out), "--seed", "2"]) == 0
    data = json.loads(out.read_text())
    assert {d["puncture_count"] for d in data} == {0, 10, 20}
    assert main(["bench", "--n", "20", "--iterations", "5"]) == 5


def test_simulate_bundled_example(capsys):
    assert main(["simulate", "example:all_honest"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["common_prefix"]["violations"] == 0
    assert report["chain_quality"]["ok"] and report["chain_growth"]["ok"]
    assert report["final_chains_valid"]


def test_simulate_csv(tmp_path):
    out = tmp_path / "r.csv"
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"stakes": [1, 1], "f": 0.2, "slots": 200}))
    assert main(["simulate", str(cfg), "--format", "csv", "--out", str(out)]) == 0
    header, row = out.read_text().splitlines()
    assert "nonempty_slot_fraction" in header.split(",")
    assert len(header.split(",")) == len(row.split(","))


def test_lrsl_bundled_example(capsys):
    assert main(["lrsl", "example:lrsl", "--attempts", "100"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["accepted_forgeries"] == 0 and report["ok"]


def test_malformed_configs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"f": 7}')
    assert main(["simulate", str(bad)]) == 5
    assert "f must lie" in capsys.readouterr().err
    bad.write_text("{oops")
    assert main(["simulate", str(bad)]) == 5
    assert main(["simulate", "example:nope"]) == 5
    assert main(["simulate", str(tmp_path / "absent.json")]) == 5
    bad.write_text('{"stakes": [1, 1], "slots": 50}')
    assert main(["lrsl", str(bad)]) == 5
    assert main(["lrsl", str(bad), "--corrupt-at", "40", "--target", "45"]) == 5


def test_trace_command(tmp_path, capsys):
    dump = tmp_path / "t.jsonl"
    assert main(["trace", "--count", "3", "--seed", "1", "--dump", str(dump)]) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["non_fp_divergences"] == 0
    assert main(["trace", "--load", str(dump), "--seed", "1"]) == 0
    assert json.loads(capsys.readouterr().out)["events"] == first["events"]


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pspos", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "keygen" in res.stdout
