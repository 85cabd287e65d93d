import csv
import io
import json

import pytest

from orbm import __version__
from orbm.cli import main
from orbm.params import Regime


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("ORBM_OUTPUT_DIR", str(tmp_path))
    return tmp_path


def test_params_example(out, capsys):
    assert main(["params", "--theta1", "1.178", "--theta2", "-0.393"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["params"]["alpha"] == pytest.approx(0.5, abs=1e-3)
    assert d["regime"] in {r.value for r in Regime}
    assert d["version"] == __version__
    assert d["config"]["theta1"] == 1.178
    assert (out / "params.json").exists()


def test_region_grid_shape(out):
    assert main(["region", "--res", "64"]) == 0
    lines = [ln for ln in (out / "region.csv").read_text().splitlines() if not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    assert len(rows) == 64 * 64
    header = (out / "region.csv").read_text().splitlines()[:2]
    assert header[0].startswith("# config=") and header[1] == f"# version={__version__}"


def test_unknown_flag_exit_one(out, capsys):
    assert main(["params", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err
    assert main(["nope"]) == 1


def test_validation_error_exit_one(out):
    assert main(["params", "--theta1", "0.5", "--theta2", "-0.5"]) == 1
    assert main(["reflect", "--dt", "-1"]) == 1


def test_reflect_and_couple_artifacts(out, capsys):
    assert main(["reflect", "--T", "0.1", "--dt", "1e-3"]) == 0
    assert (out / "path.csv").read_text().splitlines()[2] == "t,x,y,l_lower,l_upper"
    assert main(["couple", "--theta1", "1.1281", "--theta2", "-1.0781", "--cycles", "2"]) == 0
    d = json.loads((out / "coupling.json").read_text())
    assert d["pattern_break_rate"] == 0.0
    assert d["cycle_factor"] == pytest.approx(d["beta"] ** 2, rel=1e-8)
    assert d["gap_csv_path"].endswith("gap.csv")


def test_simulate_with_transport(out, capsys):
    assert main(["simulate", "--drift", "HTransform", "--T", "0.05", "--transport", "strip"]) == 0
    assert (out / "transported.csv").exists()
    text = (out / "trajectory.csv").read_text()
    assert text.splitlines()[-1].startswith("# stop_reason=")


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["couple", "--mode", "brownian", "--T", "1", "--dt", "1e-3", "--out-dir", str(d)]) == 0
    assert (a / "gap.csv").read_bytes().replace(b"/a", b"/b") == (b / "gap.csv").read_bytes()
    ja = json.loads((a / "coupling.json").read_text())
    jb = json.loads((b / "coupling.json").read_text())
    for j in (ja, jb):
        j["config"].pop("out_dir")
        j.pop("gap_csv_path")
    assert ja == jb


def test_verify_pass_and_fail(out, capsys):
    assert main(["verify", "--suite", "cycle-factor"]) == 0
    assert "PASS cycle_factor_beta" in capsys.readouterr().out
    assert main(["verify", "--suite", "cycle-factor", "--tol", "cycle_factor_beta=0"]) == 2
    err = capsys.readouterr().err
    assert "cycle_factor_beta" in err
    d = json.loads((out / "verify-cycle-factor.json").read_text())
    assert d["passed"] is False and d["failed"] == ["cycle_factor_beta"]


def test_verify_exit_law_example(out, capsys):
    code = main(["verify", "--suite", "exit-law", "--theta1", "1.0472", "--theta2", "-0.5236",
                 "--replicas", "100000", "--seed", "1"])
    d = json.loads((out / "verify-exit-law.json").read_text())
    check = d["suites"]["exit-law"][0]
    assert check["target"] == pytest.approx(3.4641, abs=1e-3)
    assert code == (0 if d["passed"] else 2)
    assert code == 0
