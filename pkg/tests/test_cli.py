import json

import numpy as np
import pytest

from latticeforge import io
from latticeforge.cli import run_cli


def _emit(tmp_path, name):
    path = tmp_path / f"{name}.json"
    assert run_cli(["catalog", "emit", name, "-o", str(path)]) == 0
    return path


def test_catalog_list(capsys):
    assert run_cli(["catalog", "list"]) == 0
    assert "octet" in capsys.readouterr().out.split()


def test_catalog_emit(tmp_path):
    doc = io.read_lattice(_emit(tmp_path, "octet"))
    assert doc.cell.n_vertices == 14


def test_validate_perfect(tmp_path, capsys):
    path = _emit(tmp_path, "kelvin")
    assert run_cli(["validate", str(path), "--thresholds", "0.005,0.01,0.02,0.04"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0] == "threshold,intra,inter"
    assert len(out[1:]) == 4 and all(r.endswith("valid,valid") and "invalid" not in r for r in out[1:])


def test_usage_errors(capsys):
    assert run_cli(["frobnicate"]) == 1
    assert run_cli(["validate"]) == 1
    assert run_cli(["catalog", "list", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_data_error(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"name": "x"}))
    assert run_cli(["validate", str(bad), "--thresholds", "0.01"]) == 2
    assert run_cli(["validate", str(tmp_path / "missing.json"), "--thresholds", "0.01"]) == 2


def test_corrupt_refine_homogenize(tmp_path, capsys):
    src = _emit(tmp_path, "octet")
    noisy, fixed, trace = tmp_path / "n.json", tmp_path / "r.json", tmp_path / "t.json"
    assert run_cli(["corrupt", str(src), "--sigma", "0.01", "--seed", "4", "-o", str(noisy)]) == 0
    a = io.read_lattice(noisy).cell
    assert run_cli(["corrupt", str(src), "--sigma", "0.01", "--seed", "4", "-o", str(tmp_path / "n2.json")]) == 0
    assert np.array_equal(a.vertices, io.read_lattice(tmp_path / "n2.json").cell.vertices)
    assert run_cli(["refine", str(noisy), "-o", str(fixed), "--trace", str(trace)]) == 0
    assert json.loads(trace.read_text())["cycles"]
    capsys.readouterr()
    assert run_cli(["homogenize", str(src), "--radius", "0.02"]) == 0
    props = json.loads(capsys.readouterr().out)
    assert props["E_x"] == pytest.approx(props["E_z"], rel=1e-8)
    assert "rel_density" in props


def test_corrupt_requires_seed(tmp_path):
    src = _emit(tmp_path, "bcc")
    assert run_cli(["corrupt", str(src), "--sigma", "0.01", "-o", str(tmp_path / "x.json")]) == 1


def test_dataset_and_sweep(tmp_path):
    d = tmp_path / "data"
    assert run_cli(["make-dataset", "--out", str(d), "--n", "5", "--seed", "1"]) == 0
    csv = tmp_path / "s.csv"
    assert run_cli(["sweep", "--population", str(d), "--thresholds", "0.005,0.01,0.02,0.04", "--report", str(csv)]) == 0
    rows = csv.read_text().splitlines()
    assert rows[0] == "threshold,intra_pct,inter_pct,n"
    intra = [float(r.split(",")[1]) for r in rows[1:]]
    assert intra == sorted(intra)
    assert run_cli(["sweep", "--population", str(d), "--thresholds", "0.04,0.01", "--report", str(csv)]) == 2


def test_export_obj(tmp_path):
    src = _emit(tmp_path, "simple_cubic")
    out = tmp_path / "c.obj"
    assert run_cli(["export-obj", str(src), "-o", str(out), "--tile", "2"]) == 0
    assert sum(l.startswith("v ") for l in out.read_text().splitlines()) == 64


@pytest.mark.slow
def test_train_and_sample(tmp_path):
    d = tmp_path / "data"
    assert run_cli(["make-dataset", "--out", str(d), "--n", "1", "--seed", "0"]) == 0
    model = tmp_path / "m.lfm"
    assert run_cli(["train", "--data", str(d), "--epochs", "2", "--out", str(model), "--seed", "0"]) == 0
    src = _emit(tmp_path, "octet")
    props = tmp_path / "p.json"
    assert run_cli(["homogenize", str(src), "--radius", "0.03", "-o", str(props)]) == 0
    out = tmp_path / "s.json"
    assert run_cli(["sample", "--model", str(model), "--props", str(props), "--n-vertices", "14", "--seed", "3", "-o", str(out)]) == 0
    assert io.read_lattice(out).cell.n_vertices == 14
    model.write_bytes(model.read_bytes()[:-10])
    assert run_cli(["sample", "--model", str(model), "--props", str(props), "--n-vertices", "14", "--seed", "3", "-o", str(out)]) == 2
