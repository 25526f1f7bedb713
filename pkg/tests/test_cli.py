import subprocess
import sys

import pytest

from superconv.cli import main

EIG = """\
[problem]
kind = eig
V = trigdecay:r=2.5,K=512,vmin=1.0

[space]
basis = fourier

[sweep]
N = [4, 8, 16, 32]
ref = 256
regularity = 4.5
{extra}
"""


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


@pytest.fixture(autouse=True)
def quiet_log(monkeypatch):
    monkeypatch.setenv("SUPERCONV_LOG", "error")


def test_study_writes_deterministic_csv_and_plot(tmp_path, capsys):
    cfg = write(tmp_path, EIG.format(extra=""))
    assert main(["study", "--config", cfg, "--out", str(tmp_path / "a"), "--plot"]) == 0
    assert main(["study", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "3"]) == 0
    a, b = (tmp_path / "a" / "study.csv").read_bytes(), (tmp_path / "b" / "study.csv").read_bytes()
    assert a == b
    assert (tmp_path / "a" / "study.svg").read_text().startswith("<svg")
    assert (tmp_path / "a" / "manifest.json").exists()
    assert "PASS gain_l2" in capsys.readouterr().out


def test_verdict_failure_exit_3(tmp_path):
    cfg = write(tmp_path, EIG.format(extra="tolerance = 0.001"))
    assert main(["study", "--config", cfg, "--out", str(tmp_path)]) == 3


def test_reference_unconverged_exit_4(tmp_path):
    text = """\
[problem]
kind = src
V = poly:1.0,0.0,1.0
f = poly:1.0,1.0

[space]
basis = fem
degree = 1

[sweep]
N = [16, 32, 64, 128]
ref = 1024
"""
    assert main(["study", "--config", write(tmp_path, text), "--out", str(tmp_path)]) == 4
    assert (tmp_path / "study.csv").exists()


def test_nonconvergence_exit_2(tmp_path):
    text = EIG.format(extra="[solver]\nmax_iter = 1").replace("kind = eig", "kind = src\nf = cosine:1=400.0")
    cfg = write(tmp_path, text)
    assert main(["solve", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert main(["study", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_config_errors_exit_1(tmp_path, capsys):
    cfg = write(tmp_path, EIG.format(extra="").replace("basis =", "basys ="))
    assert main(["study", "--config", cfg]) == 1
    assert "line 6" in capsys.readouterr().err
    assert main(["study", "--config", str(tmp_path / "missing.cfg")]) == 1
    assert main(["study"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["study", "--config", write(tmp_path, EIG.format(extra="")), "--threads", "0"]) == 1


def test_bad_log_level(tmp_path, monkeypatch):
    monkeypatch.setenv("SUPERCONV_LOG", "chatty")
    assert main(["theory", "--basis", "fourier"]) == 1


def test_solve_writes_coefficients(tmp_path, capsys):
    cfg = write(tmp_path, EIG.format(extra=""))
    assert main(["solve", "--config", cfg, "--out", str(tmp_path), "--size", "8"]) == 0
    out = capsys.readouterr().out
    assert "lambda" in out
    coeffs = (tmp_path / "solution_fourier_8.txt").read_text().splitlines()
    assert len([l for l in coeffs if not l.startswith("#")]) == 17


def test_check_subcommand(tmp_path, capsys):
    text = EIG.format(extra="").replace("kind = eig", "kind = src\nf = trigdecay:r=1.5,K=512,vmin=1.0")
    assert main(["check", "--config", write(tmp_path, text)]) == 0
    out = capsys.readouterr().out
    assert "min coercivity" in out and out.strip().endswith("PASS")


def test_extend_subcommand(tmp_path, capsys):
    assert main(["extend", "--g", "sin", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "u(+0.50) = +1.013211836" in out
    diff = float(out.strip().splitlines()[-1].split()[-1])
    assert diff <= 1e-10
    samples = tmp_path / "g.txt"
    samples.write_text("1.0\n0.5\n1.0\n")
    assert main(["extend", "--samples", str(samples)]) == 1
    assert main(["extend"]) == 1


def test_theory_subcommand(tmp_path, capsys):
    assert main(["theory", "--basis", "fem", "--degree", "2", "--t", "1"]) == 0
    out = capsys.readouterr().out
    assert "gain_h1  0.5" in out and "gain_l2  2" in out
    assert main(["theory", "--basis", "fem", "--degree", "1"]) == 0
    assert "not asserted" in capsys.readouterr().out
    assert main(["theory", "--config", write(tmp_path, EIG.format(extra=""))]) == 0
    assert main(["theory", "--basis", "fem", "--degree", "5"]) == 1
    assert main(["theory"]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "superconv", "theory", "--basis", "fourier"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gain_l2  3" in proc.stdout
