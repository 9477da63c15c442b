from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pytest

from fracblowup.cli import main
from fracblowup.config import (build_boundary, build_problem, build_profile, build_space, load_config,
                               parse_config)
from fracblowup.errors import ConfigError
from fracblowup.fracops import mittag_leffler
from fracblowup.io import parse_record, read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def values(text):
    """``key = value`` lines printed on stdout."""
    return parse_record(text)


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


# --------------------------------------------------------------------------
# configuration


def test_unknown_key_names_the_key(tmp_path):
    path = write(tmp_path, "bad.ini", (CONFIGS / "case_i.ini").read_text().replace("alpha = 0.5", "alfa = 0.5"))
    with pytest.raises(ConfigError, match="fractional.alfa"):
        load_config(path)


def test_unknown_section_and_bad_number():
    with pytest.raises(ConfigError, match=r"\[output\]"):
        parse_config("[output]\ndir = x\n")
    cfg = parse_config("[fractional]\nalpha = half\n")
    with pytest.raises(ConfigError, match="fractional.alpha"):
        build_problem(cfg)


def test_robin_requires_sigma(tmp_path):
    text = (CONFIGS / "robin.ini").read_text().replace("sigma = 2.0", "")
    with pytest.raises(ConfigError, match="sigma"):
        build_problem(load_config(write(tmp_path, "r.ini", text)))
    text = (CONFIGS / "case_i.ini").read_text().replace("c = 10", "c = 10\nsigma = 1")
    with pytest.raises(ConfigError, match="sigma"):
        build_problem(load_config(write(tmp_path, "d.ini", text)))


def test_table_profile_and_two_dimensional_space(tmp_path):
    xs = np.linspace(0, 1, 11)
    write(tmp_path, "a.csv", "x,value\n" + "".join(f"{float(x)!r},{float(x * (1 - x))!r}\n" for x in xs))
    cfg = parse_config("[space]\nlength = 1\nnodes = 9\n[boundary]\nkind = dirichlet\n"
                       "[initial]\nprofile = table:a.csv\n", tmp_path / "run.ini")
    grid, bc = build_space(cfg), build_boundary(cfg)
    prof = build_profile(cfg, grid, bc)
    x = grid.coordinates(bc.kind)[0]
    assert np.allclose(prof.values, x * (1 - x), atol=3e-3)
    cfg2 = parse_config("[space]\nlength = 1, 2\nnodes = 5, 7\n")
    assert build_space(cfg2).resolution == (5, 7)
    with pytest.raises(ConfigError):
        build_space(parse_config("[space]\nlength = 1, 2\nnodes = 5\n"))


def test_presets_build():
    for name in ("case_i.ini", "case_ii.ini", "linear.ini", "robin.ini"):
        prob = build_problem(load_config(CONFIGS / name))
        assert prob.alpha == 0.5


# --------------------------------------------------------------------------
# commands


def test_eigen_command(tmp_path, capsys):
    cfg = write(tmp_path, "lap.ini", (CONFIGS / "case_ii.ini").read_text().replace("nodes = 255", "nodes = 511"))
    assert main(["eigen", "--config", str(cfg), "--out", str(tmp_path / "e")]) == 0
    out = values(capsys.readouterr().out)
    assert float(out["lambda1"]) == pytest.approx(math.pi**2, rel=1e-5)
    header, data = read_csv(tmp_path / "e" / "phi1.csv")
    assert header == ["x", "phi1"] and data.shape[0] == 511
    report = parse_record((tmp_path / "e" / "eigen_report.txt").read_text())
    assert float(report["lambda1"]) == float(out["lambda1"])


def test_eigen_reports_adjoint_sigma(tmp_path, capsys):
    assert main(["eigen", "--config", str(CONFIGS / "robin.ini"), "--out", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    assert "adjoint_sigma_x0 = [2.5, 2.5]" in text and "adjoint_sigma_x1 = [1.5, 1.5]" in text


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "bad.ini", "[space]\nlength = 1\nnodez = 5\n")
    assert main(["eigen", "--config", str(cfg)]) == 1
    assert "space.nodez" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 1


def test_missing_initial_section(tmp_path, capsys):
    text = (CONFIGS / "case_i.ini").read_text().split("[initial]")[0]
    assert main(["simulate", "--config", str(write(tmp_path, "x.ini", text)), "--out", str(tmp_path)]) == 1
    assert "[initial]" in capsys.readouterr().err


def test_simulate_case_i(tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["simulate", "--config", str(CONFIGS / "case_i.ini"), "--out", str(out_dir)]) == 0
    out = values(capsys.readouterr().out)
    assert out["status"] == "Blowup" and out["verdict"] == "PASS"
    assert float(out["t_num"]) <= 1.05 * 4 / math.pi
    assert float(out["jensen_min_deficit"]) >= -1e-8
    cert = parse_record((out_dir / "certificate.txt").read_text())
    assert cert["case_tag"] == "NonpositiveLambda" and float(cert["t_star"]) == pytest.approx(4 / math.pi)
    for name in ("eta.csv", "report.txt", "snapshots/index.csv"):
        assert (out_dir / name).is_file()


def test_simulate_linear_prints_oracle_error(tmp_path, capsys):
    assert main(["simulate", "--config", str(CONFIGS / "linear.ini"), "--out", str(tmp_path)]) == 0
    out = values(capsys.readouterr().out)
    assert out["status"] == "Completed" and out["verdict"] == "INFORMATIONAL"
    assert float(out["oracle_eta_max_error"]) <= 1e-2


def test_simulate_is_deterministic(tmp_path, capsys):
    base = (CONFIGS / "case_i.ini").read_text().replace("nodes = 255", "nodes = 63").replace("steps = 2000",
                                                                                          "steps = 500")
    cfg = write(tmp_path, "c.ini", base)
    for name in ("a", "b"):
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / name)]) == 0
    for rel in ("eta.csv", "report.txt", "certificate.txt", "snapshots/snapshot_0003.csv"):
        assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()


def test_sweep_command(tmp_path, capsys):
    base = (CONFIGS / "case_i.ini").read_text().replace("nodes = 255", "nodes = 63").replace("steps = 2000",
                                                                                          "steps = 500")
    cfg = write(tmp_path, "c.ini", base)
    code = main(["sweep", "--config", str(cfg), "--axis", "alpha", "--values", "0.3,0.5,0.7",
                 "--workers", "2", "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert len(lines) == 4 and all(",PASS," in line for line in lines[1:])
    assert main(["sweep", "--config", str(cfg), "--axis", "alpha", "--values", "", "--out",
                 str(tmp_path / "empty")]) == 0
    assert (tmp_path / "empty" / "sweep.csv").read_text().count("\n") == 1
    assert main(["sweep", "--config", str(cfg), "--axis", "beta", "--values", "1"]) == 1
    assert main(["sweep", "--config", str(cfg), "--axis", "alpha", "--values", "0.5,2.0",
                 "--out", str(tmp_path / "err")]) == 2
    assert "ERROR" in (tmp_path / "err" / "sweep.csv").read_text()


def test_ml_command(tmp_path, capsys):
    assert main(["ml", "--alpha", "0.5", "--points", "0,-1,1"]) == 0
    rows = [line.split(",") for line in capsys.readouterr().out.strip().splitlines()]
    got = [float(v) for _, v in rows]
    assert got[0] == 1.0 and got[1] == pytest.approx(0.427583576155807004, rel=1e-12)
    assert got[2] == pytest.approx(math.exp(1.0) * math.erfc(-1.0), rel=1e-12)
    assert main(["ml", "--alpha", "0.9", "--points", "1", "--out", str(tmp_path / "ml.csv")]) == 0
    header, data = read_csv(tmp_path / "ml.csv")
    assert header == ["z", "value"] and data[0, 1] == pytest.approx(mittag_leffler(0.9, 1.0, 1.0))
    assert main(["ml", "--alpha", "0", "--points", "1"]) == 1
    assert main(["ml", "--alpha", "0.5", "--points", "a,b"]) == 1


def test_validate_many_seeds(tmp_path, capsys):
    for seed in range(10):
        assert main(["validate", "--seed", str(seed), "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "counterexample.json").exists()


def test_validate_injected_fault(tmp_path, capsys):
    assert main(["validate", "--seed", "0", "--inject-fault", "--out", str(tmp_path)]) == 3
    data = json.loads((tmp_path / "counterexample.json").read_text())
    assert data["suite"] == "comparison"
    assert "counterexample" in capsys.readouterr().out
