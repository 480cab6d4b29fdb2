import csv
import json

import pytest

from twoloop.cli import main
from twoloop.system_model import OneForm, canonical_f, system_to_json


@pytest.fixture
def system_file(tmp_path):
    om = OneForm.from_terms([(0, 0, 1, 1.0), (0, 2, 1, -2.0)], [])
    path = tmp_path / "canonical.json"
    path.write_text(json.dumps(system_to_json(canonical_f(), om, (-2, 2, -2, 2))))
    return path


def _summary(d):
    return json.loads((d / "summary.json").read_text())


def test_bounds_command(tmp_path, system_file):
    out = tmp_path / "b"
    assert main(["bounds", "--system", str(system_file), "--nu", "1", "1", "1", "1", "--out", str(out)]) == 0
    assert _summary(out)["bounds"]["bound_two_saddle"] == 4


def test_bounds_with_comparison(tmp_path):
    out = tmp_path / "b"
    assert main(["--command", "bounds", "--nu", "1/2", "1", "1", "1", "--pq", "2", "2", "2", "2",
                 "--out", str(out)]) == 0
    s = _summary(out)["bounds"]
    assert s["bound_two_saddle"] == "7/2"
    assert s["comparison"]["bounds"] == {"dumortier_roussarie": 4, "example_form": 7, "roussarie": 3}


def test_degenerate_melnikov(tmp_path, capsys):
    out = tmp_path / "m"
    assert main(["melnikov", "--alpha", "0", "--out", str(out)]) == 0
    assert "degenerate perturbation" in capsys.readouterr().err
    rows = list(csv.reader((out / "melnikov.csv").open()))
    assert rows[0][0] == "s" and len(rows) == 17
    assert all(float(v) == 0.0 for r in rows[1:] for v in r[1:])
    assert "degenerate perturbation" in _summary(out)["warnings"]


def test_analyze_pipeline(tmp_path, system_file):
    out = tmp_path / "a"
    assert main(["analyze", "--system", str(system_file), "--eps", "1e-3", "--radius", "0.05",
                 "--out", str(out)]) == 0
    s = _summary(out)
    count = s["count"]
    assert {"winding_count", "real_cycle_count", "bound"} <= set(count)
    assert count["real_cycle_count"] <= count["winding_count"]
    assert s["bounds"]["characteristic_set"]["provenance"] == "fitted"
    for name in ("melnikov.csv", "zero_locus.csv", "contour.csv",
                 "melnikov.svg", "zero_locus.svg", "contour.svg"):
        assert (out / name).exists()
    svg = (out / "contour.svg").read_text()
    assert "<dc:date>" not in svg


def test_dulac_and_zero_locus_commands(tmp_path):
    out = tmp_path / "d"
    assert main(["dulac", "--eps", "1e-3", "--radius", "0.02", "--phis", "0", "1.5",
                 "--out", str(out)]) == 0
    assert len(_summary(out)["dulac"]["values"]) == 2
    head = (out / "trajectory_d1_1.csv").read_text().splitlines()[0]
    assert head == "param,re_x,im_x,re_y,im_y"
    out = tmp_path / "z"
    assert main(["zero-locus", "--eps", "1e-3", "--out", str(out)]) == 0
    assert len(_summary(out)["zero_locus"]["rows"]) == 8


def test_validation_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"f": [[1, 0, 1.0]]}))
    assert main(["analyze", "--system", str(bad), "--out", str(tmp_path / "o")]) == 2
    err = json.loads(capsys.readouterr().out)
    assert err["error"] == "ValidationError" and err["operation"] == "load_system"


def test_missing_eps(tmp_path):
    assert main(["count", "--out", str(tmp_path / "o")]) == 2


def test_regime_exit_code(tmp_path, capsys):
    assert main(["count", "--alpha", "1e-10", "--eps", "1e-3", "--out", str(tmp_path / "o")]) == 4
    assert json.loads(capsys.readouterr().out)["error"] == "SmallModulus"


def test_numeric_exit_code(tmp_path, monkeypatch, capsys):
    from twoloop import counting
    from twoloop.errors import NoConvergence

    def boom(*a, **k):
        raise NoConvergence("forced", "count_zeros")
    monkeypatch.setattr(counting, "count_zeros", boom)
    assert main(["count", "--eps", "1e-3", "--out", str(tmp_path / "o")]) == 3
    assert json.loads(capsys.readouterr().out)["operation"] == "count_zeros"
