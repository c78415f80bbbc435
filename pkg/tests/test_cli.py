import json

import pytest

from sharpgmm.cli import main

SMALL = """n = 20
a_min = 1.5
a_max = 9
a_points = 2
b_min = 0.2
b_max = 2
b_points = 2
reps = 3
methods = spectral_lloyd, spectral
"""


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == 0 and "FAIL" not in out


def test_unknown_flag_is_usage_error(capsys):
    code, _, err = run(capsys, "selftest", "--bogus")
    assert code == 1
    assert "usage:" in err


def test_missing_subcommand_is_usage_error(capsys):
    assert run(capsys)[0] == 1


def test_generate_then_estimate_noiseless(tmp_path, capsys):
    d = tmp_path / "d.bin"
    assert run(capsys, "generate", "--n", "40", "--p", "10", "--sigma", "0", "--delta", "1", "--out", str(d))[0] == 0
    code, out, _ = run(capsys, "estimate", "--method", "spectral_lloyd", "--dataset", str(d), "--json")
    assert code == 0
    assert json.loads(out)["exact"] is True


@pytest.mark.parametrize("method", ["spectral", "random_lloyd", "oracle_supervised", "oracle_known_center"])
def test_estimate_every_method(tmp_path, capsys, method):
    d = tmp_path / "d.bin"
    run(capsys, "generate", "--n", "30", "--a", "9", "--b", "0.3", "--seed", "4", "--out", str(d))
    code, out, _ = run(capsys, "estimate", "--method", method, "--dataset", str(d), "--json")
    report = json.loads(out)
    assert code == 0 and report["method"] == method and report["n"] == 30


def test_generate_usage_errors(tmp_path, capsys):
    assert run(capsys, "generate", "--n", "10", "--out", str(tmp_path / "x"))[0] == 1
    assert run(capsys, "generate", "--n", "0", "--p", "3", "--delta", "1", "--out", str(tmp_path / "x"))[0] == 1


def test_runtime_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"nonsense")
    code, _, err = run(capsys, "estimate", "--dataset", str(bad))
    assert code == 2 and "MagicMismatchError" in err
    assert run(capsys, "estimate", "--dataset", str(tmp_path / "missing.bin"))[0] == 2


def test_bad_config_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(SMALL + "colour = red\n")
    code, _, err = run(capsys, "phase-grid", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 1 and ":10:" in err


def test_phase_grid_outputs_and_determinism(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(SMALL)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(capsys, "phase-grid", "--config", str(cfg), "--seed", "7", "--out", str(a))[0] == 0
    assert run(capsys, "phase-grid", "--config", str(cfg), "--seed", "7", "--out", str(b), "--workers", "2")[0] == 0
    assert (a / "grid.csv").read_bytes() == (b / "grid.csv").read_bytes()
    manifest = json.loads((a / "manifest.json").read_text())
    assert set(manifest["outputs"]) == {"grid.csv", "heatmap_spectral_lloyd.svg", "heatmap_spectral.svg"}
    assert manifest["master_seed"] == 7


def test_phase_grid_interrupt_and_resume(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(SMALL)
    ref, out = tmp_path / "ref", tmp_path / "out"
    run(capsys, "phase-grid", "--config", str(cfg), "--out", str(ref))
    code, text, _ = run(capsys, "phase-grid", "--config", str(cfg), "--out", str(out), "--cell-limit", "1", "--json")
    assert code == 0 and json.loads(text)["complete"] is False
    assert not (out / "grid.csv").exists()
    assert run(capsys, "phase-grid", "--config", str(cfg), "--out", str(out), "--resume")[0] == 0
    assert (out / "grid.csv").read_bytes() == (ref / "grid.csv").read_bytes()


def test_resume_with_other_spec_fails(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(SMALL)
    run(capsys, "phase-grid", "--config", str(cfg), "--out", str(tmp_path), "--cell-limit", "1")
    assert run(capsys, "phase-grid", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path), "--resume")[0] == 2


def test_compare(tmp_path, capsys):
    cfg = tmp_path / "g.cfg"
    cfg.write_text(SMALL)
    code, out, _ = run(capsys, "compare", "--config", str(cfg), "--method-a", "spectral_lloyd",
                       "--method-b", "random_lloyd", "--out", str(tmp_path), "--json")
    assert code == 0
    summary = json.loads(out)
    assert -1 <= summary["mean_difference"] <= 1
    assert (tmp_path / "diff.csv").read_text().startswith("a,b,method_a,method_b")
    code, _, _ = run(capsys, "compare", "--checkpoint", str(tmp_path / "checkpoint.jsonl"),
                     "--method-a", "spectral", "--method-b", "spectral", "--out", str(tmp_path / "c2"))
    assert code == 0


def test_curve(tmp_path, capsys):
    code, out, _ = run(capsys, "curve", "--n", "40", "--p", "50", "--r", "1,3", "--reps", "5",
                       "--out", str(tmp_path), "--json")
    assert code == 0
    assert len(json.loads(out)["points"]) == 4
    assert (tmp_path / "curve.csv").exists()
    assert run(capsys, "curve", "--n", "40", "--out", str(tmp_path))[0] == 1


@pytest.mark.slow
def test_desk_preset_twice_gives_identical_csv(tmp_path, capsys):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run(capsys, "phase-grid", "--preset", "desk", "--seed", "7", "--out", str(first))[0] == 0
    assert run(capsys, "phase-grid", "--preset", "desk", "--seed", "7", "--out", str(second))[0] == 0
    assert (first / "grid.csv").read_bytes() == (second / "grid.csv").read_bytes()
    assert len((first / "grid.csv").read_text().splitlines()) == 1 + 15 * 15 * 3
