import json
import os
import subprocess
import sys

import numpy as np
import pytest

from expou.cli import main
from expou.model import ModelParams, save_params


@pytest.fixture
def pfile(tmp_path):
    path = tmp_path / "p.json"
    save_params(ModelParams.from_beta(0.1, 10, 0.01, -0.9), path)
    return str(path)


def read_csv(path):
    lines = open(path, encoding="utf-8").read().splitlines()
    meta = {ln[2:].split(": ", 1)[0]: json.loads(ln[2:].split(": ", 1)[1]) for ln in lines if ln.startswith("# ")}
    data = [ln for ln in lines if not ln.startswith("#")]
    return meta, data


def test_cumulants(pfile, tmp_path):
    out = tmp_path / "c.csv"
    assert main(["cumulants", "--params", pfile, "--t", "1", "--out", str(out)]) == 0
    meta, data = read_csv(out)
    assert meta["tool"] == "expou" and meta["command"] == "cumulants" and "wall_time_s" in meta
    row = dict(zip(data[0].split(","), data[1].split(",")))
    assert float(row["k1"]) == pytest.approx(-0.005)
    assert float(row["k2"]) == pytest.approx(0.01)


def test_simulate_then_stats(pfile, tmp_path):
    ens = tmp_path / "e.csv"
    args = ["simulate", "--params", pfile, "--t", "0.1", "--dt", "0.01", "--paths", "2000", "--seed", "3",
            "--checkpoints", "0.05,0.1", "--out", str(ens)]
    assert main(args) == 0
    meta, data = read_csv(ens)
    assert data[0] == "path_id,checkpoint_time,x"
    assert len(data) == 1 + 2 * 2000
    st = tmp_path / "s.csv"
    hist = tmp_path / "h.csv"
    assert main(["stats", "--input", str(ens), "--t", "0.1", "--ci-method", "delta", "--out", str(st),
                 "--histogram", str(hist)]) == 0
    _, data = read_csv(st)
    row = dict(zip(data[0].split(","), data[1].split(",")))
    assert int(row["n"]) == 2000 and row["ci_method"] == "delta"
    _, hdata = read_csv(hist)
    assert len(hdata) > 3


def test_simulate_deterministic_data_section(pfile, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"e{i}.csv"
        main(["simulate", "--params", pfile, "--t", "0.1", "--dt", "0.01", "--paths", "500", "--seed", "9",
              "--out", str(path)])
        outs.append(read_csv(path)[1])
    assert outs[0] == outs[1]


def test_edgeworth_and_cf(pfile, tmp_path):
    ew = tmp_path / "ew.csv"
    assert main(["edgeworth", "--params", pfile, "--t", "1", "--grid=-0.5:0.5:101", "--out", str(ew)]) == 0
    meta, data = read_csv(ew)
    assert "negative" in json.dumps(meta)
    assert len(data) == 102
    cf = tmp_path / "cf.csv"
    assert main(["cf", "--params", pfile, "--t", "1", "--phi-grid", "0:10:11", "--out", str(cf)]) == 0
    _, data = read_csv(cf)
    assert len(data) == 12


def test_density(pfile, tmp_path):
    out = tmp_path / "d.csv"
    assert main(["density", "--params", pfile, "--t", "1", "--n", "2^16", "--xrange=-0.5:0.4:91",
                 "--out", str(out)]) == 0
    _, data = read_csv(out)
    header = data[0].split(",")
    x = np.array([float(r.split(",")[header.index("x")]) for r in data[1:]])
    p = np.array([float(r.split(",")[header.index("p")]) for r in data[1:]])
    assert np.trapezoid(p, x) == pytest.approx(1.0, abs=1e-3)


def test_parameter_error_record(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"m": -0.1, "alpha": 10, "k": 1, "rho": 0}))
    assert main(["cumulants", "--params", str(bad), "--t", "1"]) == 1
    rec = json.loads(capsys.readouterr().err)["error"]
    assert rec["field"] == "m" and rec["module"] == "model_core" and rec["type"] == "ParameterError"


def test_missing_file_record(capsys):
    assert main(["cumulants", "--params", "/nonexistent.json", "--t", "1"]) == 1
    rec = json.loads(capsys.readouterr().err)["error"]
    assert "not found" in rec["message"]


def test_nyquist_error_record(pfile, capsys):
    assert main(["density", "--params", pfile, "--t", "1", "--n", "2^8", "--xrange=-10:10:11"]) == 1
    rec = json.loads(capsys.readouterr().err)["error"]
    assert "2*pi/dphi" in rec["message"]


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as err:
        main(["simulate"])
    assert err.value.code == 2


def test_calibrate_and_table3_inputs(tmp_path, capsys):
    assert main(["reproduce", "table3"]) == 1
    assert "--input" in json.loads(capsys.readouterr().err)["error"]["message"]
    (tmp_path / "short.csv").write_text("date,close\n2020-01-02,10\n2020-01-03,11\n")
    assert main(["calibrate", "--input", str(tmp_path / "short.csv")]) == 1
    assert "at least" in json.loads(capsys.readouterr().err)["error"]["message"]


def test_reproduce_table1_small(tmp_path):
    out = tmp_path / "t1.csv"
    assert main(["reproduce", "table1", "--paths", "2000", "--dt", "0.01", "--out", str(out)]) == 0
    _, data = read_csv(out)
    header = data[0].split(",")
    assert "th_skew" in header and "mc_skew" in header
    assert len(data) == 8


def test_console_script_and_version():
    exe = os.path.join(os.path.dirname(sys.executable), "expou")
    cmd = [exe] if os.path.exists(exe) else [sys.executable, "-m", "expou.cli"]
    res = subprocess.run(cmd + ["--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "expou" in res.stdout
