import csv
import json
import subprocess
import sys

import pytest

from persuade.cli import main


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_run_se_binary(tmp_path):
    out = tmp_path / "se.csv"
    assert main(["run", "--algo", "se", "--binary", "0.25,0.60", "--alpha", "0.70", "--horizon", "10000",
                 "--seeds", "5", "--out", str(out)]) == 0
    r = rows(out)
    assert list(r[0]) == ["round", "mean_regret", "ci_lo", "ci_hi"]
    assert int(r[-1]["round"]) == 10000
    meta = json.loads((tmp_path / "se.meta.json").read_text())
    assert meta["algo"] == "se" and meta["seeds"] == 5
    assert (tmp_path / "se.scheme.json").exists()


def test_run_bs_binary(tmp_path):
    out = tmp_path / "bs.csv"
    assert main(["run", "--algo", "bs", "--binary", "0.25,0.60", "--alpha", "0.70", "--horizon", "5000",
                 "--seeds", "3", "--out", str(out)]) == 0
    assert float(rows(out)[-1]["mean_regret"]) > 0


def test_run_gse_fig2_file(tmp_path):
    inst = tmp_path / "fig2.json"
    assert main(["fixture", "fig2", "--out", str(inst)]) == 0
    out = tmp_path / "gse.csv"
    assert main(["run", "--algo", "gse", "--instance", str(inst), "--alpha", "0.85", "--horizon", "5000",
                 "--seeds", "2", "--out", str(out)]) == 0
    scheme = json.loads((tmp_path / "gse.scheme.json").read_text())
    assert abs(sum(a["weight"] for a in scheme["atoms"]) - 1) < 1e-9


def test_sweeps(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["sweep", "--algo", "se", "--binary", "0.25,0.60", "--alpha", "0.7", "--horizon", "3000",
                 "--seeds", "3", "--sweep", "alpha=0.5:1.0:0.1", "--out", str(out)]) == 0
    r = rows(out)
    assert len(r) == 6 and all(float(x["gap"]) >= -1e-9 for x in r)
    out = tmp_path / "h.csv"
    assert main(["sweep", "--algo", "se", "--binary", "0.25,0.60", "--alpha", "0.7", "--seeds", "2",
                 "--sweep", "horizon=1000:100000:x10", "--out", str(out)]) == 0
    assert [float(x["point"]) for x in rows(out)] == [1e3, 1e4, 1e5]
    out = tmp_path / "j.csv"
    assert main(["sweep", "--instance", "fig2", "--alpha", "0.85", "--sweep", "interval=0.1,0.05,0.025",
                 "--out", str(out)]) == 0
    gaps = [float(x["gap"]) for x in rows(out)]
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_inspect(capsys):
    assert main(["inspect", "--binary", "0.25,0.60"]) == 0
    assert "alpha_min = 0.466667" in capsys.readouterr().out
    assert main(["inspect", "--instance", "fig2", "--interval", "0.50,0.60", "--interval", "0.84,0.86"]) == 0
    text = capsys.readouterr().out
    low, high = text.split("J = [0.8400")
    assert "a1: infeasible" in low
    assert "a1: feasible" in high and "vertices" in high


def test_errors(capsys, tmp_path):
    assert main(["run", "--algo", "se", "--instance", "fig2", "--alpha", "0.8"]) == 2
    assert "needs --binary" in capsys.readouterr().err
    assert main(["run", "--binary", "0.7,0.6", "--alpha", "0.8"]) == 2
    assert main(["inspect", "--instance", str(tmp_path / "missing.json")]) == 2
    assert main(["sweep", "--binary", "0.25,0.6", "--alpha", "0.7", "--sweep", "foo=1:2:1"]) == 2
    with pytest.raises(SystemExit):
        main(["run"])


def test_module_entry_point():
    p = subprocess.run([sys.executable, "-m", "persuade", "inspect", "--binary", "0.25,0.60"],
                       capture_output=True, text=True, check=True)
    assert "delta_mu0" in p.stdout
