import subprocess
import sys
from pathlib import Path

import pytest

from dsp48sim import scenario as sc
from dsp48sim.cli import main
from dsp48sim.trace import read_vcd

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(*argv):
    return main([str(a) for a in argv])


def test_ws_identity_scenario(tmp_path, capsys):
    assert run("run", SCENARIOS / "ws_identity.ini", "--out-dir", tmp_path) == 0
    out = (tmp_path / "ws_identity.out.txt").read_text().split()
    assert [int(x) for x in out] == [1, 2, 3, 4, 5, 6]
    assert "PASS expected" in capsys.readouterr().out


def test_corrupted_expected_file_fails(tmp_path, capsys):
    assert run("run", SCENARIOS / "ws_corrupt_expected.ini", "--out-dir", tmp_path) == 1
    text = capsys.readouterr().out
    assert "FAIL expected" in text and "(2, 1)" in text and "tick" in text


def test_b1024_random_cross_variant(tmp_path):
    assert run("run", SCENARIOS / "os_b1024_random.ini", "--out-dir", tmp_path) == 0


def test_report_verb_writes_csv_and_json(tmp_path, capsys):
    assert run("report", SCENARIOS / "os_b1024_breakdown.ini", "--out-dir", tmp_path) == 0
    assert (tmp_path / "os_b1024_breakdown.report.csv").exists()
    assert (tmp_path / "os_b1024_breakdown.report.json").exists()
    assert "addtree_ff=1216" in capsys.readouterr().out


def test_os_waveform_dump_has_period_four_clock_enables(tmp_path):
    assert run("vcd", SCENARIOS / "os_waveform.ini", "--out-dir", tmp_path) == 0
    waves = read_vcd(tmp_path / "os_waveform.vcd")
    names = [n for n in waves if n.endswith("CE_B1")]
    assert names
    for name in names:
        rises = [t for t, v in waves[name] if v == 1]
        assert len(rises) >= 2
        assert {b - a for a, b in zip(rises, rises[1:])} == {4}
        twin = [t for t, v in waves[name.replace("CE_B1", "CE_B2")] if v == 1]
        assert [b - a for a, b in zip(rises, twin)] == [2] * len(rises)


def value_at(changes, t):
    last = 0
    for tt, v in changes:
        if tt > t:
            break
        last = v
    return last


def test_ws_swap_dump_changes_stationary_registers_only_on_swap(tmp_path):
    assert run("vcd", SCENARIOS / "ws_prefetch_swap.ini", "--out-dir", tmp_path) == 0
    waves = read_vcd(tmp_path / "ws_prefetch_swap.vcd")
    stationary = [n for n in waves if n.startswith("ws/r") and n.endswith(("/A2", "/B2"))]
    assert stationary
    for name in stationary:
        scope, reg = name.rsplit("/", 1)
        ce = waves[f"{scope}/CE_{reg}"]
        for t, _ in waves[name][1:]:
            assert value_at(ce, t) == 1


def test_repeated_runs_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("run", SCENARIOS / "os_determinism.ini", "--out-dir", tmp_path / d) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert any(f.endswith(".vcd") for f in files) and any(f.endswith(".json") for f in files)
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_seed_override_changes_stimulus(tmp_path):
    run("run", SCENARIOS / "snn_small.ini", "--out-dir", tmp_path / "a")
    run("run", SCENARIOS / "snn_small.ini", "--out-dir", tmp_path / "b", "--seed", "99")
    a = (tmp_path / "a" / "snn_small.out.txt").read_text()
    b = (tmp_path / "b" / "snn_small.out.txt").read_text()
    assert a != b


def test_selftest_suites(capsys):
    assert run("selftest", "simd") == 0
    assert "PASS simd" in capsys.readouterr().out
    assert run("selftest") == 2
    assert run("selftest", "bogus") == 2


def test_parse_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nengine = gpu\n")
    assert run("run", bad) == 2
    bad.write_text("no section header\n")
    assert run("run", bad) == 2
    bad.write_text("[scenario]\nengine = ws\n[ws]\nrows = many\ncols = 2\n")
    assert run("run", bad) == 2
    bad.write_text("[scenario]\nengine = ws\nchecks = oracle, telepathy\n[ws]\nrows = 2\ncols = 2\n")
    assert run("run", bad) == 2


def test_io_errors_exit_3(tmp_path):
    assert run("run", tmp_path / "missing.ini") == 3
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("run", SCENARIOS / "ws_identity.ini", "--out-dir", blocker / "sub") == 3


def test_usage_error_exit_2():
    assert run("frobnicate") == 2
    assert run() == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dsp48sim", "selftest", "simd"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert "PASS simd" in res.stdout


def test_parse_matrix():
    assert sc.parse_matrix("1 2; 3 -4").tolist() == [[1, 2], [3, -4]]
    with pytest.raises(sc.ScenarioError):
        sc.parse_matrix("1 2; 3")
