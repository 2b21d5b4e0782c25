import csv
import io
import json
import math

import pytest

from onebit_doa.cli import LOSS_HEADER, main, parse_list, parse_range, UsageError


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_parse_range_inclusive():
    assert len(parse_range("-20:10:0.5")) == 61
    assert parse_range("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    with pytest.raises(UsageError):
        parse_range("1:0:1")


def test_parse_list_forms():
    assert parse_list("1,2,5") == [1.0, 2.0, 5.0]
    assert parse_list("2..4") == [2.0, 3.0, 4.0]
    assert parse_list("-6:0:2") == [-6.0, -4.0, -2.0, 0.0]


def test_loss_snr_sweep(capsys):
    code, out, _ = run(capsys, "loss", "--var", "snr", "--range", "-20:10:0.5", "--k", "2", "--theta", "10")
    assert code == 0
    table = rows(out)
    assert tuple(table[0]) == LOSS_HEADER
    assert len(table) == 62
    assert float(table[1][3]) == -20.0 and float(table[-1][3]) == 10.0
    assert all(float(r[-1]) < 0 for r in table[1:])


def test_loss_json_and_list(capsys):
    code, out, _ = run(capsys, "loss", "--var", "k", "--list", "2..4", "--snr", "-3", "--format", "json")
    assert code == 0
    data = json.loads(out)
    assert [d["K"] for d in data] == [2, 3, 4]
    assert all(d["snr_db"] == -3.0 for d in data)


def test_loss_long_arrays_gated(capsys):
    code, _, err = run(capsys, "loss", "--var", "k", "--list", "9", "--snr", "0")
    assert code == 2 and "--allow-long" in err


def test_loss_invalid_inputs(capsys):
    assert run(capsys, "loss", "--var", "snr")[0] == 2
    assert run(capsys, "loss", "--var", "theta", "--list", "95")[0] == 2
    assert run(capsys, "loss", "--var", "snr", "--range", "a:b:c")[0] == 2
    assert run(capsys, "nonsense")[0] == 2


def test_loss_writes_file(tmp_path, capsys):
    out = tmp_path / "loss.csv"
    assert run(capsys, "loss", "--var", "theta", "--list", "0,10", "--out", str(out))[0] == 0
    assert len(rows(out.read_text())) == 3
    assert [p.name for p in tmp_path.iterdir()] == ["loss.csv"]


def test_bound_json(capsys):
    code, out, _ = run(capsys, "bound", "--k", "4", "--theta", "5", "--snr", "-3", "--n", "1000",
                       "--format", "json")
    assert code == 0
    d = json.loads(out)
    assert d["pcrlb_root_deg"] == pytest.approx(math.sqrt(d["pcrlb_deg2"]))
    assert d["fisher_lb"] <= d["fisher_y"]
    assert len(d["gls_weights"]) == 28


def test_bound_degenerate_is_runtime_failure(capsys):
    code, _, err = run(capsys, "bound", "--k", "1")
    assert code == 3 and "runtime failure" in err


def test_orthant_examples(capsys):
    code, out, _ = run(capsys, "orthant", "0", "0", "0", "0", "0", "0")
    assert code == 0
    d = json.loads(out)
    assert d["orthant4"] == pytest.approx(0.0625, abs=1e-15)
    assert d["orthant_sum"] == pytest.approx(1.0, abs=1e-12)
    code, out, _ = run(capsys, "orthant", "0.5", "0", "0", "0", "0", "0", "--mc", "200000")
    d = json.loads(out)
    assert d["orthant4"] == pytest.approx(1 / 12, abs=1e-12)
    assert d["mc"]["within_3sigma"]


def test_orthant_rejects_invalid_matrix(capsys):
    assert run(capsys, "orthant", "0.9", "-0.9", "0.9", "0.9", "-0.9", "0.9")[0] == 2


def test_simulate_and_replay(tmp_path, capsys):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["simulate", "--k", "2", "--theta", "5", "--snr-list", "-3,0", "--n", "200", "--runs", "6"]
    assert run(capsys, *args, "--out", str(first))[0] == 0
    summary = json.loads(first.with_suffix(".json").read_text())
    assert summary["config"]["runs"] == 6
    assert len(summary["points"]) == 2
    assert run(capsys, "simulate", "--replay", str(first.with_suffix(".json")), "--out", str(second))[0] == 0
    assert first.read_bytes() == second.read_bytes()
    assert rows(first.read_text())[0] == ["snr_db", "rmse_deg", "pcrlb_root_deg", "ratio", "failed_runs"]


def test_simulate_replay_missing_file(tmp_path, capsys):
    assert run(capsys, "simulate", "--replay", str(tmp_path / "none.json"))[0] == 2


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# sweep settings\nk = 3\ntheta = 20\nformat = json\n")
    code, out, _ = run(capsys, "bound", "--config", str(cfg))
    assert code == 0
    d = json.loads(out)
    assert (d["K"], d["theta_deg"]) == (3, 20.0)
    code, out, _ = run(capsys, "bound", "--config", str(cfg), "--k", "2")
    assert json.loads(out)["K"] == 2


def test_config_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert run(capsys, "bound", "--config", str(cfg))[0] == 2


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0
    assert out.count("PASS") == 3


def test_selftest_detects_corrupted_derivative(capsys):
    code, out, _ = run(capsys, "selftest", "--corrupt-arcsine")
    assert code > 3
    assert "FAIL sandwich" in out
