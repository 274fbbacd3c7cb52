import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from ami_lte.cli import main
from ami_lte.lte_phy import data_path

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def csv_rows(text):
    lines = text.strip().splitlines()
    keys = lines[0].split(",")
    return [dict(zip(keys, line.split(","))) for line in lines[1:]]


@pytest.mark.parametrize(
    "text,cell",
    [
        ('k_sm_total = 1550\nbandwidth_mhz = 1.4\n', "98.868"),
        ('k_sm_total = 18000\nsms_per_dc = 40\nbandwidth_mhz = 20\n', "2.000"),
        ('k_sm_total = 4500\nsms_per_dc = 30\nbandwidth_mhz = 10\n', "0.333"),
    ],
)
def test_analyze_examples(tmp_path, capsys, text, cell):
    code, out, _ = run(capsys, "analyze", "--scenario", write(tmp_path, text), "--format", "table")
    assert code == 0
    assert cell in out.splitlines()[-1].split()


def test_analyze_csv_with_brr(tmp_path, capsys):
    s = write(tmp_path, 'architecture = ["flat", "grouped"]\nk_sm_total = 1550\nsms_per_dc = 4\n')
    code, out, _ = run(capsys, "analyze", "--scenario", s)
    assert code == 0
    rows = csv_rows(out)
    assert [r["architecture"] for r in rows] == ["flat", "grouped"]
    assert rows[1]["brr"] == "0.062500"


def test_analyze_eta_and_override_flags(tmp_path, capsys):
    s = write(tmp_path, 'k_sm_total = 1550\nbandwidth_mhz = 1.4\nmodulation = "64QAM"\nsms_per_dc = 20\n')
    _, base, _ = run(capsys, "analyze", "--scenario", s)
    _, printed, _ = run(capsys, "analyze", "--scenario", s, "--eta-mode", "as-printed")
    g0 = float(csv_rows(base)[0]["gamma_percent"])
    assert float(csv_rows(printed)[0]["gamma_percent"]) == pytest.approx(g0 * 1.25, rel=1e-5)
    code, _, err = run(capsys, "analyze", "--scenario", s, "--mcs-override", "64QAM=5")
    assert code == 2 and "64QAM" in err


def test_parse_error_exit_code(tmp_path, capsys):
    code, _, err = run(capsys, "analyze", "--scenario", write(tmp_path, "k_sm_total = = 1\n"))
    assert code == 2 and "line 1" in err
    code, _, err = run(capsys, "analyze", "--scenario", write(tmp_path, "k_sm_total = 1\nfoo = 2\n"))
    assert code == 2 and "foo" in err
    code, _, _ = run(capsys, "analyze", "--scenario", tmp_path / "missing.toml")
    assert code == 2
    code, _, _ = run(capsys, "analyze")
    assert code == 2


def test_infeasible_exit_code(tmp_path, capsys):
    s = write(tmp_path, 'k_sm_total = 10\nmessage_size = "100000 byte"\n')
    code, _, err = run(capsys, "analyze", "--scenario", s)
    assert code == 3 and "infeasible" in err


def test_simulate_abort_exit_code(tmp_path, capsys):
    s = write(tmp_path, "k_sm_total = 1550\nk_dc_total = 1\nbandwidth_mhz = 1.4\n")
    code, _, err = run(capsys, "simulate", "--scenario", s)
    assert code == 3 and "DC 0" in err


def test_simulate_reference_case(capsys):
    code, out, _ = run(capsys, "simulate", "--scenario", SCENARIOS / "grouped_1550.toml")
    assert code == 0
    metrics = {r["metric"]: r["value"] for r in csv_rows(out)}
    assert metrics["closed_form_gamma"] == "0.019773663"
    assert float(metrics["relative_error_gamma_equivalent"]) <= 0.10
    assert metrics["deadline_misses"] == "0"
    assert metrics["coverage_exact"] == "true"
    assert "relative_error_utilization" in metrics


def test_simulate_is_byte_deterministic(tmp_path, capsys):
    s = write(tmp_path, "k_sm_total = 600\nsms_per_dc = 10\nbandwidth_mhz = 1.4\n[simulation]\nbackground_occupancy = 0.7\n"
                        'background_mode = "random"\n')
    outs = [run(capsys, "simulate", "--scenario", s, "--seed", "11")[1] for _ in range(2)]
    assert outs[0] == outs[1]
    other = run(capsys, "simulate", "--scenario", s, "--seed", "12")[1]
    assert other != outs[0]


def test_simulate_flat_overload_diagnostic(capsys):
    code, out, err = run(capsys, "simulate", "--scenario", SCENARIOS / "flat_4500.toml")
    assert code == 0
    assert "overload (flat)" in err
    assert "flat,overload,true" in out


def test_simulate_duration_flag(tmp_path, capsys):
    s = write(tmp_path, "k_sm_total = 40\nsms_per_dc = 10\n")
    code, out, _ = run(capsys, "simulate", "--scenario", s, "--duration", "7200")
    assert code == 0 and "grouped,transmissions,32" in out
    code, _, _ = run(capsys, "simulate", "--scenario", s, "--duration", "10 min")
    assert code == 2


def test_sweep_order_independent_of_jobs(capsys, tmp_path):
    s = SCENARIOS / "both_sweep.toml"
    _, serial, _ = run(capsys, "sweep", "--scenario", s)
    out = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "sweep", "--scenario", s, "--jobs", "3", "--out", out)
    assert code == 0
    assert out.read_text() == serial
    assert len(serial.splitlines()) == 1 + 3 * 3 * 3 * 2 * 2


@pytest.mark.parametrize("target", ["table2", "table3"])
def test_reproduce_tables(capsys, target):
    code, out, err = run(capsys, "reproduce", target)
    assert code == 0
    assert "PASS" in err
    if target == "table2":
        assert out.count("EXEMPT") == 2 and "printed 0.010, computed 0.099" in out


def test_reproduce_lists_every_mismatch(capsys):
    code, out, _ = run(capsys, "reproduce", "table2", "--mcs-override", "64QAM=19")
    assert code == 1
    assert out.count("MISMATCH") > 0
    assert "FAIL" in out


def test_reproduce_half_up_rounding_fails(capsys):
    code, out, _ = run(capsys, "reproduce", "table2", "--rounding", "half-up")
    assert code == 1 and "MISMATCH" in out


def test_reproduce_table_csv(capsys):
    code, out, err = run(capsys, "reproduce", "table3", "--format", "csv")
    assert code == 0
    assert len(csv_rows(out)) == 72 and "cells match" in err


@pytest.mark.parametrize("target,header", [
    ("fig8", "k_sm_total,flat,grouped_10"),
    ("fig9", "k_sm_total,flat,grouped_10"),
    ("fig10", "sms_per_dc,n_rb_dc,brr"),
    ("fig11", "k_sm_total,brr_kdc_100"),
])
def test_reproduce_figures(capsys, target, header):
    code, out, err = run(capsys, "reproduce", target)
    assert code == 0
    assert out.startswith(header)
    assert "FAIL" not in err


def test_fig10_series(capsys):
    _, out, _ = run(capsys, "reproduce", "fig10")
    rows = {int(r["sms_per_dc"]): r for r in csv_rows(out)}
    assert rows[4]["brr"] == "0.062500"
    assert rows[40]["brr"] == "0.002500"


def test_validate_quick(capsys):
    code, out, _ = run(capsys, "validate", "--quick")
    assert code == 0
    assert all(line.startswith("PASS") for line in out.strip().splitlines())


def test_validate_names_corrupted_fixture(tmp_path, capsys):
    dst = tmp_path / "data"
    shutil.copytree(data_path("tbs_ul.csv").parent, dst, ignore=shutil.ignore_patterns("__pycache__", "*.py"))
    p = dst / "tbs_ul.csv"
    p.write_text(p.read_text().replace(",136,", ",135,", 1))
    code, out, _ = run(capsys, "validate", "--quick", "--data-dir", dst)
    assert code == 1
    assert "FAIL  data file checksums: tbs_ul.csv checksum mismatch" in out


def test_console_script_entry_point():
    res = subprocess.run(
        [sys.executable, "-m", "ami_lte.cli", "reproduce", "fig10"], capture_output=True, text=True, check=False
    )
    assert res.returncode == 0
    assert res.stdout.startswith("sms_per_dc")
