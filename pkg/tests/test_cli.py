import json
import math

import pytest

from randwave import __version__
from randwave.cli import main, read_config
from randwave.errors import ConfigError
from randwave.grid import Grid, read_field, sample_profile, write_field


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def snapshot(tmp_path):
    path = tmp_path / "phi.rwf"
    write_field(sample_profile(Grid(1, 256, 20.0), "gaussian", amplitude=0.05), path)
    return path


def test_exponents_json_and_csv(capsys):
    code, out, _ = run(capsys, "exponents", "--dim", "1", "--p", "3")
    data = json.loads(out)
    assert code == 0 and data["q"] == pytest.approx(30 / 7) and data["r"] == 5.0
    from randwave.exponents import derive_exponents, exponents_json
    assert data == json.loads(json.dumps(exponents_json(derive_exponents(1, 3.0))))
    code, out, _ = run(capsys, "exponents", "--dim", "3", "--p", "1.2", "--csv")
    header, row = out.strip().splitlines()
    assert header.startswith("d,p,p0,r,q") and row.endswith("True")


def test_usage_and_config_errors_exit_2(capsys, tmp_path):
    with pytest.raises(SystemExit) as err:
        main(["exponents", "--dim", "1"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["waveop", "--final-state", "x", "--p", "3", "--mu", "0"])
    assert err.value.code == 2
    assert run(capsys, "exponents", "--dim", "4", "--p", "1")[0] == 2
    assert run(capsys, "exponents", "--dim", "1", "--p", "5")[0] == 2
    code, _, err_text = run(capsys, "stnorm", "--in", str(tmp_path / "nope.rwf"), "--q", "5", "--r", "5")
    assert code == 2 and "does not exist" in err_text


def test_version(capsys):
    with pytest.raises(SystemExit) as err:
        main(["--version"])
    assert err.value.code == 0
    assert capsys.readouterr().out.strip() == __version__


def test_evolve_writes_snapshot_and_decay_fit(capsys, tmp_path):
    code, _, _ = run(capsys, "--out-dir", str(tmp_path), "evolve", "--profile", "gaussian", "--t", "10",
                     "--out", "u10.rwf", "--decay-r", "inf")
    assert code == 0
    u = read_field(tmp_path / "u10.rwf")
    assert abs(u.values).max() == pytest.approx(1601 ** -0.25, abs=1e-6)
    assert u.meta["provenance"]["code_version"] == __version__
    fit = json.loads((tmp_path / "decay.json").read_text())
    assert fit["slope"] == pytest.approx(-0.5, rel=0.02)
    assert (tmp_path / "decay.csv").read_text().startswith("t,norm")


def test_stnorm(capsys, tmp_path):
    path = tmp_path / "g.rwf"
    write_field(sample_profile(Grid(1, 1024, 40.0), "gaussian"), path)
    code, out, _ = run(capsys, "stnorm", "--in", str(path), "--q", str(30 / 7), "--r", "5")
    assert code == 0 and json.loads(out)["total"] > 0


def test_randomize_is_reproducible(capsys, tmp_path, snapshot):
    for name in ("a.rwf", "b.rwf"):
        assert run(capsys, "--out-dir", str(tmp_path), "--seed", "4", "randomize", "--in", str(snapshot),
                   "--out", name)[0] == 0
    a, b = read_field(tmp_path / "a.rwf"), read_field(tmp_path / "b.rwf")
    assert a.values.tobytes() == b.values.tobytes()
    assert a.meta["provenance"]["seed"] == 4
    run(capsys, "--out-dir", str(tmp_path), "--seed", "5", "randomize", "--in", str(snapshot), "--out", "c.rwf")
    assert read_field(tmp_path / "c.rwf").values.tobytes() != a.values.tobytes()


def test_waveop_report_and_exit_codes(capsys, tmp_path, snapshot):
    code, _, _ = run(capsys, "--out-dir", str(tmp_path), "waveop", "--final-state", str(snapshot), "--p", "3",
                     "--Tmax", "100", "--M", "32", "--crossval")
    rep = json.loads((tmp_path / "report.json").read_text())
    assert code == 0 and rep["converged"] and rep["crossval_discrepancy"] <= 1e-3
    assert len(rep["provenance"]["config_hash"]) == 64
    # too few iterations to reach the tolerance: numerical failure
    code, _, _ = run(capsys, "--out-dir", str(tmp_path), "waveop", "--final-state", str(snapshot), "--p", "3",
                     "--Tmax", "100", "--M", "32", "--max-iter", "4", "--delta-fix", "1e-30", "--report", "r2.json")
    assert code == 3


def test_montecarlo_is_byte_identical(capsys, tmp_path):
    conf = tmp_path / "mc.ini"
    conf.write_text("coefficients = 1,1,1,1\nalphas = 2,4\ntrials = 20000  # small\n")
    outs = []
    for threads in ("1", "3"):
        name = f"m{threads}.json"
        assert run(capsys, "--out-dir", str(tmp_path), "--threads", threads, "montecarlo", "moments",
                   "--config", str(conf), "--out", name)[0] == 0
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    data = json.loads(outs[0])
    assert data["ratios"]["2.0"] == pytest.approx(1 / math.sqrt(2), rel=0.02)


def test_montecarlo_scalar_tail_csv(capsys, tmp_path):
    conf = tmp_path / "s.ini"
    conf.write_text("[experiment]\ncoefficients = 0.5,0.5,0.5,0.5\neta_grid = 0,1,2\ntrials = 10000\n")
    assert run(capsys, "--out-dir", str(tmp_path), "montecarlo", "scalar-tail", "--config", str(conf),
               "--csv", "s.csv")[0] == 0
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "eta,T,trials,failures,p_hat,lo95,hi95" and len(lines) == 4


def test_config_reader(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("bogus = 1\n")
    with pytest.raises(ConfigError):
        read_config(bad)
    with pytest.raises(ConfigError):
        read_config(tmp_path / "none.ini")
    good = tmp_path / "good.ini"
    good.write_text("seed = 9\ntrials = 600\n")
    conf = read_config(good)
    assert conf["seed"] == "9" and conf["trials"] == "600" and conf["ensemble"] == "gaussian"


def test_reproduce_subset(capsys, tmp_path):
    code, out, _ = run(capsys, "--out-dir", str(tmp_path), "reproduce", "--only", "exponents,stnorm")
    assert code == 0
    assert out.splitlines()[:2] == ["PASS  exponents", "PASS  stnorm"]
    rep = json.loads((tmp_path / "acceptance.json").read_text())
    assert rep["passed"] and set(rep["criteria"]) == {"exponents", "stnorm"}
    assert run(capsys, "reproduce", "--only", "nonsense")[0] == 2
