import csv
import os
import subprocess
import sys

import pytest

from bbrsim.harness import cli


def test_run_writes_csvs(tmp_path, capsys):
    code = cli.main(["run", "--scenario", "rtt_unfairness", "--case", "7", "--algo", "bbr",
                     "--duration", "5", "--out", str(tmp_path)])
    assert code == 0
    out = tmp_path / "rtt_unfairness_case7_bbr_seed1"
    for name in ("rates.csv", "owd.csv", "summary.csv", "config.ini"):
        assert (out / name).is_file()
    with open(out / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["flow_id"] for r in rows] == ["1", "2"]
    assert "jain=" in capsys.readouterr().out


def test_out_root_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["run", "--scenario", "utilization", "--case", "C2", "--algo", "reno",
                     "--loss", "0.01", "--duration", "3", "--seed", "4"]) == 0
    assert (tmp_path / "utilization_caseC2_reno_loss0.01_seed4" / "summary.csv").is_file()


def test_unknown_algo_exits_2(capsys):
    assert cli.main(["run", "--scenario", "intra_fairness", "--case", "1", "--algo", "vegas"]) == 2
    assert "unknown algorithm" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["run", "--scenario", "nowhere"],
    ["run", "--scenario", "intra_fairness", "--case", "99"],
    ["run", "--scenario", "intra_fairness", "--case", "1", "--seed", "abc"],
    ["sweep", "--scenario", "utilization"],
    ["report"],
    ["frobnicate"],
    [],
])
def test_bad_invocations_exit_2(argv, capsys):
    assert cli.main(argv) == 2
    assert capsys.readouterr().err


def test_print_config(capsys):
    assert cli.main(["run", "--scenario", "responsiveness", "--print-config"]) == 0
    text = capsys.readouterr().out
    assert "[capacity]" in text and "0:4000000, 50:1000000" in text


def test_config_file(tmp_path, capsys):
    assert cli.main(["run", "--scenario", "intra_fairness", "--case", "2", "--duration", "50",
                     "--print-config"]) == 0
    ini = tmp_path / "c.ini"
    ini.write_text(capsys.readouterr().out.replace("queue_bytes = 93750", "queue_bytes = 5000"))
    assert cli.main(["run", "--config", str(ini), "--print-config"]) == 0
    assert "queue_bytes = 5000" in capsys.readouterr().out


def test_sweep_grid_sizes():
    assert len(cli._sweep_points("utilization", ["bbr", "cubic"], [1])) == 2 * 5 * 4
    assert len(cli._sweep_points("rtt_unfairness", ["bbr"], [1, 2])) == 9 * 2
    assert len(cli._sweep_points("responsiveness", ["bbr", "bbr2"], [1])) == 2
    assert len(cli._sweep_points("intra_fairness", ["bbr"], [1], cases=["1", "3"])) == 2


def test_sweep_and_report(tmp_path, capsys):
    assert cli.main(["sweep", "--scenario", "inter_protocol", "--algos", "bbr,bbrplus",
                     "--cases", "1", "--duration", "3", "--out", str(tmp_path)]) == 0
    assert len(os.listdir(tmp_path)) == 2
    capsys.readouterr()
    assert cli.main(["report", "--dir", str(tmp_path)]) == 0
    text = capsys.readouterr().out.splitlines()
    assert text[0].split()[:3] == ["scenario", "case", "algo"]
    assert any("bbrplus+cubic" in line for line in text)
    assert cli.main(["report", "--dir", str(tmp_path), "--csv"]) == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == cli.REPORT_HEADER and len(rows) == 3


def test_sweep_rejects_unknown_algo_before_running(tmp_path):
    assert cli.main(["sweep", "--scenario", "utilization", "--algos", "bbr,nope",
                     "--out", str(tmp_path)]) == 2
    assert not os.listdir(tmp_path)


def test_report_missing_dir(tmp_path):
    assert cli.main(["report", "--dir", str(tmp_path / "none")]) == 2
    assert cli.main(["report", "--dir", str(tmp_path)]) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "bbrsim", "run", "--algo", "x"],
                         capture_output=True, text=True)
    assert res.returncode == 2


def test_config_with_shorter_duration(tmp_path, capsys):
    assert cli.main(["run", "--scenario", "intra_fairness", "--case", "1", "--print-config"]) == 0
    ini = tmp_path / "c.ini"
    ini.write_text(capsys.readouterr().out)
    assert cli.main(["run", "--config", str(ini), "--duration", "150", "--print-config"]) == 0
    text = capsys.readouterr().out
    assert "schedule = 0:150, 40:150, 80:150, 120:150" in text
    # a flow starting after the shortened run cannot be clipped
    assert cli.main(["run", "--config", str(ini), "--duration", "100", "--print-config"]) == 2
