import json
import math
from pathlib import Path

import pytest

from thinlayer import config as cfg
from thinlayer.cli import run
from thinlayer.errors import ConfigError
from thinlayer.reports import csv_text, dumps, emit_report, format_float

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


class _Report:
    csv_columns = ("eps", "value", "pass")

    def __init__(self, records):
        self.records = records

    def to_records(self):
        return self.records

    def to_dict(self):
        return {"records": self.records, "order": 2.0}


def test_float_format_round_trips():
    for x in (0.1, 1 / 3, 1e-300, -2.5e17, math.pi):
        assert float(format_float(x)) == x
    assert format_float(float("nan")) == "nan"


def test_empty_report_is_header_only(tmp_path):
    emit_report(_Report([]), "csv", tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_bytes() == b"eps,value,pass\n"


def test_reports_are_byte_identical(tmp_path):
    rep = _Report([{"eps": 0.1, "value": 1 / 3, "pass": True},
                   {"eps": 0.05, "value": float("nan"), "pass": False}])
    for i in range(2):
        emit_report(rep, "csv", tmp_path / f"r{i}.csv")
        emit_report(rep, "json", tmp_path / f"r{i}.json")
    assert (tmp_path / "r0.csv").read_bytes() == (tmp_path / "r1.csv").read_bytes()
    assert (tmp_path / "r0.json").read_bytes() == (tmp_path / "r1.json").read_bytes()
    assert b"\r" not in (tmp_path / "r0.csv").read_bytes()


def test_json_round_trip(tmp_path):
    rep = _Report([{"eps": 0.1, "value": 1 / 3, "pass": True}, {"eps": 0.05, "value": -7e-19, "pass": False}])
    emit_report(rep, "json", tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text(encoding="utf-8")) == rep.to_dict()


def test_non_finite_json_becomes_null():
    assert json.loads(dumps({"a": float("inf")})) == {"a": None}


def test_csv_quotes_commas():
    assert csv_text([{"a": "x,y"}], ["a"]) == 'a\n"x,y"\n'


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report(_Report([]), "xml", tmp_path / "r.xml")


# ---------------------------------------------------------------------------
# config

def _base():
    return {"schema_version": 1, "chart": {"name": "plane", "grid": [8, 8]}}


def test_every_shipped_config_validates():
    files = sorted(CONFIGS.glob("*.json"))
    assert len(files) >= 10
    for f in files:
        cfg.load_config(f)


def test_unknown_key_reports_path():
    data = _base()
    data["chart"]["gird"] = [8, 8]
    with pytest.raises(ConfigError) as exc:
        cfg.validate(data)
    assert exc.value.path == "chart"
    assert "gird" in exc.value.message


def test_bad_value_reports_nested_path():
    data = _base()
    data["sweep"] = {"eps": [0.2, 0.1, -0.05]}
    with pytest.raises(ConfigError) as exc:
        cfg.validate(data)
    assert exc.value.path == "sweep.eps[2]"


def test_eps_must_decrease():
    data = _base()
    data["sweep"] = {"eps": [0.2, 0.3, 0.1]}
    with pytest.raises(ConfigError) as exc:
        cfg.validate(data)
    assert exc.value.path == "sweep.eps[1]"


def test_schema_version_is_required():
    data = _base()
    data["schema_version"] = 2
    with pytest.raises(ConfigError) as exc:
        cfg.validate(data)
    assert exc.value.path == "schema_version"


def test_odd_transverse_resolution_rejected():
    data = _base()
    data["layer"] = {"eps": 0.1, "n_t": 5}
    with pytest.raises(ConfigError, match="layer.n_t"):
        cfg.validate(data)


# ---------------------------------------------------------------------------
# command line

def test_verify_identities_on_plane(tmp_path, capsys):
    code = run(["verify-identities", "--config", str(CONFIGS / "identities_plane.json"),
                "--out", str(tmp_path)])
    assert code == 0
    records = json.loads((tmp_path / "identities.json").read_text())["records"]
    assert all(r["pass"] for r in records)
    assert "PASS" in capsys.readouterr().out


def test_gamma_sweep_flux_slab(tmp_path):
    code = run(["gamma-sweep", "--config", str(CONFIGS / "gamma_slab_flux.json"),
                "--out", str(tmp_path), "--jobs", "1"])
    assert code == 0
    rows = (tmp_path / "gamma.csv").read_text().splitlines()
    assert rows[0] == "eps,l2_err,h1_err,scaled_energy,limit_energy,t_indep_ratio,pass"
    errs = [float(r.split(",")[1]) for r in rows[1:]]
    assert errs == sorted(errs, reverse=True)
    report = json.loads((tmp_path / "gamma.json").read_text())
    assert report["config"]["sweep"]["eps"] == [0.4, 0.2, 0.1, 0.05]
    assert report["pass"] is True


def test_missing_config_exits_2(tmp_path, capsys):
    code = run(["solve-surface", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 2
    assert "configuration error" in capsys.readouterr().err


def test_missing_section_exits_2(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(_base()))
    assert run(["gamma-sweep", "--config", str(path), "--out", str(tmp_path)]) == 2


def test_thick_layer_is_a_config_error(tmp_path, capsys):
    data = {"schema_version": 1,
            "chart": {"name": "sphere_cap", "params": {"kind": "gnomonic"}, "grid": [8, 8]},
            "layer": {"eps": 1.5}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    assert run(["solve-layer", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "layer.eps" in capsys.readouterr().err


def test_bad_chart_params_are_config_errors(tmp_path, capsys):
    data = {"schema_version": 1, "chart": {"name": "torus", "params": {"radius": 3}, "grid": [8, 8]},
            "identities": {}}
    path = tmp_path / "c.json"
    path.write_text(json.dumps(data))
    assert run(["verify-identities", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "chart" in capsys.readouterr().err


def test_failed_check_exits_1(tmp_path):
    # an absurd tolerance makes the surface check fail
    code = run(["solve-surface", "--config", str(CONFIGS / "surface_plane.json"),
                "--out", str(tmp_path), "--tol", "1e-12"])
    assert code == 1
    assert json.loads((tmp_path / "surface_summary.json").read_text())["pass"] is False


def test_runs_are_byte_reproducible(tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / str(i)
        assert run(["verify-identities", "--config", str(CONFIGS / "identities_sphere_cap.json"),
                    "--out", str(out), "--seed", "5"]) == 0
        outs.append((out / "identities.json").read_bytes())
    assert outs[0] == outs[1]


@pytest.mark.parametrize("name,command,files", [
    ("geometry_cylinder", "verify-geometry", ["geometry.csv", "geometry.json"]),
    ("surface_sphere_cap", "solve-surface", ["surface_solution.csv", "surface_summary.json"]),
    ("layer_slab", "solve-layer", ["layer_solution.csv", "layer_summary.json"]),
    ("lebesgue_counterexample", "lebesgue-check", ["lebesgue.csv", "lebesgue.json"]),
])
def test_commands_write_artifacts(tmp_path, name, command, files):
    assert run([command, "--config", str(CONFIGS / f"{name}.json"), "--out", str(tmp_path)]) == 0
    for f in files:
        assert (tmp_path / f).stat().st_size > 0


def test_debug_matrix_export(tmp_path):
    assert run(["solve-surface", "--config", str(CONFIGS / "surface_plane.json"),
                "--out", str(tmp_path), "--debug-matrix"]) == 0
    assert (tmp_path / "stiffness.mtx").read_text().startswith("%%MatrixMarket")
