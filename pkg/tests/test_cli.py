"""End-to-end command-line tests: exit codes, precedence, file outputs."""

import csv
import json

import pytest

from blackbandit.cli import main
from blackbandit.config import PRESETS, parse_scalar, resolve_config
from blackbandit.errors import ConfigError


def run(tmp_path, *argv):
    out = tmp_path / "out"
    return main([*argv, "--out", str(out)]), out


# --- config resolution --------------------------------------------------------


def test_defaults_resolve_cleanly():
    cfg = resolve_config()
    assert cfg["norm"] == "linf"
    assert cfg["suite_size"] == 100
    assert cfg["methods"] == ["whitebox", "nes", "bandits_t", "bandits_td"]


def test_preset_then_override_precedence():
    cfg = resolve_config("desk-linf", None, {"epsilon": 0.2})
    assert cfg["epsilon"] == 0.2
    assert cfg["nes_k"] == PRESETS["desk-linf"]["nes_k"]


def test_file_then_flag_precedence():
    cfg = resolve_config(None, {"epsilon": 0.3}, {"epsilon": 0.4})
    assert cfg["epsilon"] == 0.4


def test_unknown_keys_are_hard_errors():
    with pytest.raises(ConfigError, match="badkey"):
        resolve_config(None, {"badkey": 1}, None)
    with pytest.raises(ConfigError, match="unknown preset"):
        resolve_config("desk-l3", None, None)


def test_scalar_parsing():
    assert parse_scalar("epsilon", "0.25") == 0.25
    assert parse_scalar("tiles", "1,2,4") == [1, 2, 4]
    assert parse_scalar("methods", "nes,whitebox") == ["nes", "whitebox"]
    assert parse_scalar("nes_lr", "none") is None
    with pytest.raises(ConfigError):
        parse_scalar("epsilon", "abc")
    with pytest.raises(ConfigError):
        parse_scalar("nope", "1")


def test_remote_oracle_requires_endpoint():
    with pytest.raises(ConfigError, match="endpoint"):
        resolve_config(None, {"oracle_kind": "remote"}, None)


# --- exit codes ----------------------------------------------------------------


def test_unknown_override_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "attack", "badkey=1")
    assert code == 2
    assert "badkey" in capsys.readouterr().err


def test_zero_budget_exits_2(tmp_path, capsys):
    code, _ = run(tmp_path, "attack", "--max-queries", "0")
    assert code == 2
    assert "budget" in capsys.readouterr().err


def test_unknown_experiment_kind_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["experiment", "frobnicate", "--out", str(tmp_path)])
    assert err.value.code == 2


def test_unknown_flag_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["attack", "--frobnicate", "1", "--out", str(tmp_path)])
    assert err.value.code == 2


def test_malformed_config_file_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    code, _ = run(tmp_path, "attack", "--config", str(bad))
    assert code == 2
    assert "JSON" in capsys.readouterr().err


def test_completed_run_with_failed_attacks_exits_0(tmp_path):
    # Budget 2 cannot finish a NES step; runs fail but the command completes.
    code, out = run(
        tmp_path, "attack", "--suite-size", "2", "--methods", "nes", "--max-queries", "2"
    )
    assert code == 0
    rows = list(csv.DictReader((out / "attacks.csv").open()))
    assert all(r["success"] == "false" for r in rows)


# --- attack subcommand ----------------------------------------------------------


def test_attack_writes_attacks_and_trace(tmp_path):
    code, out = run(
        tmp_path, "attack", "--preset", "desk-linf", "--suite-size", "3",
        "--methods", "whitebox,nes",
    )
    assert code == 0
    assert (out / "attacks.csv").exists()
    assert (out / "trace.csv").exists()
    assert (out / "resolved.json").exists()
    rows = list(csv.DictReader((out / "attacks.csv").open()))
    assert len(rows) == 6
    assert {r["method"] for r in rows} == {"whitebox", "nes"}


def test_attack_outputs_are_deterministic(tmp_path):
    argv = ["attack", "--preset", "paper-linf", "--oracle", "mlp", "--seed", "7",
            "--suite-size", "2", "--max-queries", "300"]
    code_a, out_a = run(tmp_path / "a", *argv)
    code_b, out_b = run(tmp_path / "b", *argv)
    assert code_a == code_b == 0
    assert (out_a / "attacks.csv").read_bytes() == (out_b / "attacks.csv").read_bytes()
    assert (out_a / "trace.csv").read_bytes() == (out_b / "trace.csv").read_bytes()


def test_paper_preset_pads_dims(tmp_path, capsys):
    code, out = run(
        tmp_path, "attack", "--preset", "paper-linf", "--suite-size", "1",
        "--max-queries", "100",
    )
    assert code == 0
    assert "padding experiment dims to 18x18" in capsys.readouterr().err
    resolved = json.loads((out / "resolved.json").read_text(encoding="utf-8"))
    assert resolved["height"] == resolved["width"] == 18
    assert resolved["dimension"] == 324


def test_resolved_json_round_trip(tmp_path):
    code, out = run(
        tmp_path / "first", "attack", "--preset", "desk-l2", "--suite-size", "3",
        "--methods", "nes,bandits_t",
    )
    assert code == 0
    code2, out2 = run(
        tmp_path / "second", "attack", "--config", str(out / "resolved.json")
    )
    assert code2 == 0
    assert (out / "attacks.csv").read_bytes() == (out2 / "attacks.csv").read_bytes()
    assert (out / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()


def test_env_var_sets_default_out(tmp_path, monkeypatch):
    target = tmp_path / "from_env"
    monkeypatch.setenv("BLACKBANDIT_OUT", str(target))
    code = main(["experiment", "tiling", "--suite-size", "2", "--tiles", "1,2"])
    assert code == 0
    assert (target / "tiling.csv").exists()


# --- experiment subcommand -------------------------------------------------------


def test_tiling_row_count(tmp_path):
    code, out = run(
        tmp_path, "experiment", "tiling", "--suite-size", "3", "--tiles", "1,2,4,8"
    )
    assert code == 0
    lines = (out / "tiling.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 5


def test_tiling_pads_for_non_divisible_tiles(tmp_path, capsys):
    code, out = run(
        tmp_path, "experiment", "tiling", "--suite-size", "2", "--tiles", "3"
    )
    assert code == 0
    assert "padding" in capsys.readouterr().err
    resolved = json.loads((out / "resolved.json").read_text(encoding="utf-8"))
    assert resolved["height"] % 3 == 0


def test_signfrac_covers_both_selections(tmp_path):
    code, out = run(
        tmp_path, "experiment", "signfrac", "--suite-size", "4",
        "--fractions", "0,1",
    )
    assert code == 0
    rows = list(csv.DictReader((out / "signexp.csv").open()))
    assert {r["selection"] for r in rows} == {"top_k", "random_k"}
    assert len(rows) == 4


def test_cosine_emits_trajectory_and_baseline(tmp_path):
    code, out = run(
        tmp_path, "experiment", "cosine", "--suite-size", "3",
        "--step-sizes", "0.1", "--steps", "2", "--nes-k", "10",
    )
    assert code == 0
    rows = list(csv.DictReader((out / "cosine.csv").open()))
    assert len(rows) == 3
    assert rows[-1]["step_index"] == "-1"


def test_sparsity_output(tmp_path):
    code, out = run(
        tmp_path, "experiment", "sparsity", "--suite-size", "3",
        "--k-values", "1,128,256",
    )
    assert code == 0
    rows = list(csv.DictReader((out / "sparsity.csv").open()))
    assert [r["k"] for r in rows] == ["1", "128", "256"]


def test_bench_kind_matches_attack_outputs(tmp_path):
    argv = ["--suite-size", "2", "--methods", "whitebox,nes", "--max-queries", "200"]
    code_a, out_a = run(tmp_path / "a", "attack", *argv)
    code_b, out_b = run(tmp_path / "b", "experiment", "bench", *argv)
    assert code_a == code_b == 0
    assert (out_a / "attacks.csv").read_bytes() == (out_b / "attacks.csv").read_bytes()


def test_equivalence_gap_stays_under_bound(tmp_path):
    code, out = run(
        tmp_path, "experiment", "nes-lsq-equiv", "--k", "20", "--d", "200",
        "--trials", "50",
    )
    assert code == 0
    rows = list(csv.DictReader((out / "equiv.csv").open()))
    assert len(rows) == 1
    assert float(rows[0]["gap_q99"]) <= float(rows[0]["bound"])


def test_pair_overrides_after_flags(tmp_path):
    out = tmp_path / "out"
    code = main([
        "experiment", "nes-lsq-equiv", "--out", str(out),
        "trials=5", "--d", "200", "k=10",
    ])
    assert code == 0
    rows = list(csv.DictReader((out / "equiv.csv").open()))
    assert (rows[0]["trials"], rows[0]["k"], rows[0]["d"]) == ("5", "10", "200")


def test_stray_positional_after_flags_exits_2(tmp_path):
    assert main(["attack", "--out", str(tmp_path / "o"), "oops"]) == 2
    with pytest.raises(SystemExit) as excinfo:
        main([
            "attack", "--out", str(tmp_path / "o2"),
            "suite_size=2", "--seed", "1", "oops",
        ])
    assert excinfo.value.code == 2
