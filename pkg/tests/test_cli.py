import json

import pytest

from kamcap.cli import EXIT_ERROR, EXIT_NOT_PROVED, EXIT_OK, main, read_config, UsageError
from kamcap.formats import Ledger, read_certificate


def test_noble(capsys):
    assert main(["noble", "43/74", "18/31"]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "0.580905"


def test_staged_pipeline_eps0(tmp_path, capsys):
    d = str(tmp_path)
    assert main(["model", "--eps", "0", "--R-I", "2", "--out-dir", d]) == EXIT_OK
    assert (tmp_path / "initial_Ham0.tfh").exists() and (tmp_path / "freq_intervals").exists()
    assert main(["normalize", "--tfh", f"{d}/initial_Ham0.tfh", "--freq", f"{d}/freq_intervals",
                 "--ledger", f"{d}/ledger.txt", "--step-log", f"{d}/steps.jsonl"]) == EXIT_OK
    assert len((tmp_path / "steps.jsonl").read_text().splitlines()) == 2
    Ledger.read(tmp_path / "ledger.txt")
    code = main(["estimate", "--ledger", f"{d}/ledger.txt", "--freq", f"{d}/freq_intervals",
                 "--R-II", "20", "--certificate", f"{d}/cert.txt"])
    assert code == EXIT_OK
    cert = read_certificate(tmp_path / "cert.txt")
    assert cert["verdict"] == "PROVED"


def test_missing_file(tmp_path, capsys):
    code = main(["normalize", "--tfh", str(tmp_path / "nope.tfh"), "--freq", str(tmp_path / "f")])
    assert code == EXIT_ERROR
    assert "missing input file" in capsys.readouterr().err


def test_malformed_ledger(tmp_path, capsys):
    (tmp_path / "l.txt").write_text("LEDGER v1\n4 3 2\nQ 1\n")
    (tmp_path / "f").write_text("0.58 0.59\n")
    code = main(["estimate", "--ledger", str(tmp_path / "l.txt"), "--freq", str(tmp_path / "f")])
    assert code == EXIT_ERROR
    assert "error" in capsys.readouterr().err


def test_resonant_frequency(tmp_path, capsys):
    code = main(["model", "--eps", "0", "--omega", "0.5", "--R-I", "2", "--out-dir", str(tmp_path)])
    assert code == EXIT_ERROR
    assert "resonance" in capsys.readouterr().err


def test_sample_normalize(tmp_path):
    code = main(["normalize", "--sample", "--R-I", "2", "--ledger", str(tmp_path / "l.txt")])
    assert code == EXIT_OK
    assert Ledger.read(tmp_path / "l.txt").R_I == 2


def test_read_config(tmp_path):
    p = tmp_path / "c.conf"
    p.write_text("# comment\neps = 0.001\nR-I = 3  # trailing\n")
    assert read_config(p) == {"eps": "0.001", "R_I": "3"}
    p.write_text("eps 0.001\n")
    with pytest.raises(UsageError):
        read_config(p)


def test_run_config_flags_win(tmp_path):
    conf = tmp_path / "c.conf"
    conf.write_text("eps = 0.01\nR_I = 2\nR_II = 20\n")
    wd = tmp_path / "w"
    code = main(["run", "--config", str(conf), "--eps", "0", "--workdir", str(wd)])
    assert code == EXIT_OK
    cfg = json.loads((wd / "run_config.json").read_text())
    assert cfg["eps"] == "0" and cfg["R_I"] == 2 and cfg["R_II"] == 20
    assert read_certificate(wd / "certificate.txt")["verdict"] == "PROVED"


def test_run_unknown_config_key(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("bogus = 1\n")
    assert main(["run", "--config", str(conf), "--workdir", str(tmp_path)]) == EXIT_ERROR
    assert "unknown config keys" in capsys.readouterr().err


def test_fam_command(tmp_path, capsys):
    csv = tmp_path / "f.csv"
    code = main(["fam", "--eps", "0", "--from", "0.35", "--to", "0.36", "--n", "25",
                 "--periods", "1025", "--csv", str(csv), "--gnuplot", str(tmp_path / "f.gp")])
    assert code == EXIT_OK
    assert "monotone branch of 25 samples" in capsys.readouterr().out
    assert len(csv.read_text().splitlines()) == 26
