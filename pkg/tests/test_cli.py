import json

import pytest

from nmq import cli
from nmq.exceptions import ValidationError

SIN_MODEL = {"dim": 2, "dissipators": [{"rate": {"kind": "sine", "params": {}}, "operator": "sigma_z"}]}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def test_run_config_validation():
    with pytest.raises(ValidationError):
        cli.RunConfig(interval=(1.0, 0.0))
    with pytest.raises(ValidationError):
        cli.RunConfig(grid=8)
    with pytest.raises(ValidationError):
        cli.RunConfig(measures=["unknown"])
    assert cli.RunConfig().seed == 0


def test_measure_writes_hashed_reports(tmp_path):
    cfg = write(tmp_path, "c.json", {"model": SIN_MODEL, "grid": 64, "measures": ["rhp", "blp"]})
    assert cli.main(["measure", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    doc = json.loads((tmp_path / "o" / "measure_rhp.json").read_text())
    assert doc["config_hash"] == cli.load_config(cli.build_parser().parse_args(["measure", "--config", cfg])).digest
    assert doc["report"]["value"] == pytest.approx(4.0, rel=1e-5)
    csv = (tmp_path / "o" / "measure_rhp.csv").read_text()
    assert csv.startswith(f"# config_hash={doc['config_hash']}")


def test_exit_codes(tmp_path):
    bad = write(tmp_path, "bad.json", {"interval": [2, 1]})
    assert cli.main(["measure", "--config", bad]) == cli.EXIT_CONFIG
    assert cli.main(["measure", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_CONFIG
    tan = {"dim": 2, "dissipators": [{"rate": {"kind": "tangent", "params": {}}, "operator": "sigma_z"}]}
    cfg = write(tmp_path, "tan.json", {"model": tan, "grid": 64, "measures": ["rhp"]})
    assert cli.main(["measure", "--config", cfg]) == cli.EXIT_SINGULAR


def test_witness_summary(tmp_path):
    cfg = write(tmp_path, "w.json", {"model": SIN_MODEL, "grid": 64, "witnesses": ["trace_distance", "fidelity"]})
    assert cli.main(["witness", "--config", cfg, "--out", str(tmp_path / "o"), "--format", "json"]) == 0
    summary = json.loads((tmp_path / "o" / "witnesses_summary.json").read_text())
    assert summary["violation_counts"]["trace_distance"] > 0
    assert not list((tmp_path / "o").glob("*.csv"))


def test_evolve_and_classical(tmp_path):
    model = {"dim": 2, "hamiltonian": "sigma_z",
             "dissipators": [{"rate": {"kind": "constant", "params": {"value": 0.2}}, "operator": "sigma_minus"}]}
    cfg = write(tmp_path, "e.json", {"model": model, "grid": 16, "interval": [0, 1]})
    assert cli.main(["evolve", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    fam = json.loads((tmp_path / "o" / "family.json").read_text())["family"]
    assert len(fam["maps"]) == 17
    (tmp_path / "t.csv").write_text("t,0\n1,0\n0,1\nt,1\n0.6,0.4\n0.4,0.6\nt,2\n1,0\n0,1\n")
    cfg = write(tmp_path, "k.json", {"transitions_path": "t.csv"})
    assert cli.main(["classical", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "classical.json").read_text())
    assert rep["divisibility"]["divisible"] is False


@pytest.mark.parametrize("case", ["sin", "tan"])
def test_repro(case, capsys):
    assert cli.main(["repro", case]) == 0
    assert "[PASS] RHP degree" in capsys.readouterr().out
