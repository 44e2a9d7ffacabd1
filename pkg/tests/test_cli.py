"""End-to-end command-line flows driven through cli.main()."""

import json
from importlib import resources
from pathlib import Path

import pytest

from triauth import cli

SCENARIO_DIR = Path(str(resources.files("triauth"))) / "scenarios"
EPOCH_MS = 1_700_000_000_000


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def register(tmp_path, scheme, user="alice", password="hunter-glacier", seed=7):
    paths = {
        "card": tmp_path / ("%s.card" % user),
        "server": tmp_path / "server.state",
        "template": tmp_path / ("%s.template" % user),
    }
    code = run_cli(
        "register", "--scheme", scheme, "--seed", seed,
        "--id", user, "--password", password,
        "--card-out", paths["card"],
        "--server-state", paths["server"],
        "--template-out", paths["template"],
    )
    assert code == 0
    return paths


def login(tmp_path, scheme, paths, user="alice", password="hunter-glacier",
          seed=7, extra=()):
    return run_cli(
        "login-run", "--scheme", scheme, "--seed", seed,
        "--id", user, "--password", password,
        "--card", paths["card"], "--template", paths["template"],
        "--server-state", paths["server"], *extra,
    )


def write_words(tmp_path, password, position=17, filler=40):
    words = ["word%04d" % i for i in range(filler)]
    words.insert(position, password)
    path = tmp_path / "words.txt"
    path.write_text("\n".join(words) + "\n")
    return path, position + 1  # expected verifier evaluations on recovery


def test_register_writes_the_three_files(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    out = capsys.readouterr().out
    assert "registered alice under the baseline scheme" in out
    for p in paths.values():
        assert p.exists()


def test_register_rejects_a_duplicate_identity(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    code = run_cli(
        "register", "--scheme", "baseline", "--seed", "8",
        "--id", "alice", "--password", "other",
        "--card-out", tmp_path / "again.card",
        "--server-state", paths["server"],
    )
    assert code == 2
    assert "registration" in capsys.readouterr().err


def test_register_rejects_an_overlong_identity(tmp_path, capsys):
    code = run_cli(
        "register", "--scheme", "baseline",
        "--id", "x" * 17, "--password", "pw",
        "--card-out", tmp_path / "x.card",
        "--server-state", tmp_path / "server.state",
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


@pytest.mark.parametrize("scheme", ["baseline", "improved"])
def test_full_login_run_succeeds(tmp_path, capsys, scheme):
    paths = register(tmp_path, scheme)
    assert login(tmp_path, scheme, paths) == 0
    out = capsys.readouterr().out
    assert "keys match: yes" in out
    assert "session key (user)" in out


def test_second_user_shares_the_server_state(tmp_path, capsys):
    paths = register(tmp_path, "improved")
    bob = register(tmp_path, "improved", user="bob", password="other-pw", seed=9)
    assert bob["server"] == paths["server"]
    assert login(tmp_path, "improved", bob, user="bob",
                 password="other-pw", seed=9) == 0
    assert "keys match: yes" in capsys.readouterr().out


def test_wrong_password_exits_with_the_auth_code(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    code = login(tmp_path, "baseline", paths, password="not-it")
    assert code == 4
    out = capsys.readouterr().out
    assert "session rejected locally" in out
    assert "local-auth" in out
    assert "wire view: session terminated" in out


def test_excessive_latency_exits_with_the_freshness_code(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    code = login(tmp_path, "baseline", paths, extra=("--latency", "5000"))
    assert code == 3
    assert "freshness" in capsys.readouterr().out


def test_wrong_card_for_the_identity_is_rejected(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    code = login(tmp_path, "baseline", paths, user="mallory")
    assert code == 4
    assert "local-auth" in capsys.readouterr().out


def test_baseline_attack_recovers_from_a_full_leak(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    capture = tmp_path / "capture"
    assert login(tmp_path, "baseline", paths,
                 extra=("--out", str(capture), "--leak")) == 0
    honest = capsys.readouterr().out
    sk_line = next(l for l in honest.splitlines() if "(user)" in l)
    honest_sk = sk_line.split()[-1]

    words, expected_work = write_words(tmp_path, "hunter-glacier")
    report = tmp_path / "attack.json"
    code = run_cli(
        "attack", "--scheme", "baseline",
        "--card", paths["card"],
        "--transcript", capture / "transcript.bin",
        "--template", paths["template"],
        "--leak", capture / "leak.json",
        "--dict", words, "--out", report,
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "attack outcome: recovered" in out
    assert "password: hunter-glacier" in out
    assert "verifier evaluations: %d" % expected_work in out
    doc = json.loads(report.read_text())
    assert doc["status"] == "recovered"
    assert doc["session_key"] == honest_sk
    assert doc["identity"] == b"alice".ljust(16, b"\x00").hex()


def test_improved_attack_is_blocked_in_model(tmp_path, capsys):
    paths = register(tmp_path, "improved")
    capture = tmp_path / "capture"
    assert login(tmp_path, "improved", paths,
                 extra=("--out", str(capture), "--leak")) == 0
    words, _ = write_words(tmp_path, "hunter-glacier")
    capsys.readouterr()
    code = run_cli(
        "attack", "--scheme", "improved",
        "--card", paths["card"],
        "--transcript", capture / "transcript.bin",
        "--template", paths["template"],
        "--leak", capture / "leak.json",
        "--dict", words,
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "attack outcome: insufficient_knowledge" in out
    assert "verifier evaluations: 0" in out
    assert "equation C_i blocked" in out


def test_improved_attack_flips_with_granted_timestamps(tmp_path, capsys):
    paths = register(tmp_path, "improved")
    capture = tmp_path / "capture"
    assert login(tmp_path, "improved", paths,
                 extra=("--out", str(capture), "--leak")) == 0
    honest = capsys.readouterr().out
    sk_line = next(l for l in honest.splitlines() if "(user)" in l)
    honest_sk = sk_line.split()[-1]

    words, _ = write_words(tmp_path, "hunter-glacier")
    # registration instants for the default simulated clock and latency
    grant = "%d,%d" % (EPOCH_MS, EPOCH_MS + 10)
    code = run_cli(
        "attack", "--scheme", "improved",
        "--card", paths["card"],
        "--transcript", capture / "transcript.bin",
        "--template", paths["template"],
        "--leak", capture / "leak.json",
        "--dict", words, "--grant-timestamps", grant,
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "attack outcome: recovered" in out
    assert "out-of-model timestamps granted" in out
    assert "forged session key: %s" % honest_sk in out


def test_grant_timestamps_is_refused_for_the_baseline_scheme(tmp_path, capsys):
    paths = register(tmp_path, "baseline")
    capture = tmp_path / "capture"
    assert login(tmp_path, "baseline", paths,
                 extra=("--out", str(capture), "--leak")) == 0
    words, _ = write_words(tmp_path, "hunter-glacier")
    code = run_cli(
        "attack", "--scheme", "baseline",
        "--card", paths["card"],
        "--transcript", capture / "transcript.bin",
        "--dict", words, "--grant-timestamps", "1,2",
    )
    assert code == 2
    assert "improved scheme" in capsys.readouterr().err


@pytest.mark.parametrize("scheme", ["baseline", "improved"])
def test_cost_report_prints_the_comparison_table(tmp_path, capsys, scheme):
    report = tmp_path / "costs.json"
    assert run_cli("cost-report", "--scheme", scheme, "--out", report) == 0
    out = capsys.readouterr().out
    assert "DISCREPANCY" in out  # measured hash totals differ from nominal
    assert "match" in out
    doc = json.loads(report.read_text())
    assert doc["scheme"] == scheme
    assert doc["session_healthy"] is True
    assert doc["wire"]["matches_nominal"] is True
    assert doc["storage"]["matches_nominal"] is True


def test_replay_records_then_verifies_then_detects_drift(tmp_path, capsys):
    scenario = SCENARIO_DIR / "baseline-attack.scenario"
    out = tmp_path / "recording"

    assert run_cli("replay", "--scenario", scenario, "--out", out) == 0
    assert "recorded scenario baseline-attack" in capsys.readouterr().out

    assert run_cli("replay", "--scenario", scenario, "--out", out) == 0
    assert "byte-identical" in capsys.readouterr().out

    with (out / "report.txt").open("a") as fh:
        fh.write("tampered\n")
    code = run_cli("replay", "--scenario", scenario, "--out", out)
    assert code == 5
    assert "replay drift: report.txt differs" in capsys.readouterr().out


def test_verify_card_describes_a_good_card(tmp_path, capsys):
    paths = register(tmp_path, "improved")
    assert run_cli("verify-card", "--card", paths["card"]) == 0
    out = capsys.readouterr().out
    assert "card OK: improved scheme" in out
    assert "helper bits: 512" in out
    assert "declared fields: 10" in out


def test_verify_card_rejects_a_non_card_file(tmp_path, capsys):
    bogus = tmp_path / "bogus.card"
    bogus.write_text("not a card at all\n")
    assert run_cli("verify-card", "--card", bogus) == 2
    assert "error:" in capsys.readouterr().err


def test_missing_input_file_is_a_precondition_failure(tmp_path, capsys):
    code = run_cli(
        "login-run", "--scheme", "baseline", "--id", "a", "--password", "p",
        "--card", tmp_path / "absent.card",
        "--template", tmp_path / "absent.template",
        "--server-state", tmp_path / "absent.state",
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_bad_config_file_is_a_precondition_failure(tmp_path, capsys):
    config = tmp_path / "bad.cfg"
    config.write_text("fast_mode = yes\n")
    code = run_cli(
        "cost-report", "--scheme", "baseline", "--config", config,
    )
    assert code == 2
    assert "error:" in capsys.readouterr().err
