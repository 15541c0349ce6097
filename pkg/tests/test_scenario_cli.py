import csv
import json

import numpy as np
import pytest

from swarmcbf import cli
from swarmcbf import scenario as scn
from swarmcbf.errors import SchemaError, ValidationError
from swarmcbf.output import metric_columns


def test_minimal_consensus_defaults():
    sc = scn.parse_dict({"task": "consensus", "N": 4, "seed": 1})
    assert sc.n_robots == 4 and sc.dt == 0.01
    assert sc.class_k == {"kind": "signed_power", "c": 1.0, "gamma": pytest.approx(1 / 3)}
    assert sc.graph["mode"] == "disk"


def test_seeded_sampling_is_reproducible():
    a = scn.parse_dict({"task": "consensus", "N": 5, "seed": 9})
    b = scn.parse_dict({"task": "consensus", "N": 5, "seed": 9})
    c = scn.parse_dict({"task": "consensus", "N": 5, "seed": 10})
    assert a.robots == b.robots and a.robots != c.robots


def test_asymmetric_distance_table():
    table = [[None, 1.0], [1.5, None]]
    with pytest.raises(ValidationError):
        scn.parse_dict({"task": "formation", "robots": [[0, 0], [1, 0]],
                        "graph": {"mode": "fixed", "distances": table}})


def test_schema_and_validation_errors():
    with pytest.raises(SchemaError):
        scn.parse_dict({"task": "flocking", "N": 2})
    with pytest.raises(ValidationError):
        scn.parse_dict({"task": "consensus", "N": 2, "dt": -0.1})
    with pytest.raises(ValidationError):
        scn.parse_dict({"task": "consensus", "N": 2, "class_k": {"kind": "signed_power", "gamma": 1.5}})
    with pytest.raises(ValidationError):
        scn.parse_dict({"task": "consensus", "N": 1,
                        "survivability": {"enabled": True, "stations": [[50, 50]]}})


def test_hexagon_preset_shape():
    sc = scn.preset("hexagon-formation")
    assert sc.n_robots == 6 and len(sc.graph["edges"]) == 9
    lengths = sorted({round(d, 9) for _, _, d in sc.graph["edges"]})
    assert lengths == pytest.approx([1.0, np.sqrt(3)])
    assert len(scn.hexagon_edges(1.0)) == 9


@pytest.mark.parametrize("name", list(scn.PRESETS))
def test_round_trip(name):
    sc = scn.preset(name)
    again = scn.parse_dict(json.loads(scn.serialize(sc)))
    assert again.to_dict() == sc.to_dict()


def test_presets_command(capsys):
    assert cli.main(["presets"]) == 0
    out = capsys.readouterr().out
    for name in ("hexagon-formation", "coverage-6", "persistence-6x2", "tvd-gaussian"):
        assert name in out
    assert cli.main(["presets", "--show", "coverage-6"]) == 0
    assert json.loads(capsys.readouterr().out)["task"] == "coverage"
    assert cli.main(["presets", "--show", "nope"]) == 2


def test_run_zero_horizon_header_only(tmp_path):
    assert cli.main(["run", "hexagon-formation", "--horizon", "0", "--out", str(tmp_path)]) == 0
    rows = list(csv.reader(open(tmp_path / "metrics.csv")))
    assert rows == [metric_columns(6, False)]
    head = json.loads((tmp_path / "header.json").read_text())
    assert head["scenario"]["name"] == "hexagon-formation"


def test_run_writes_csv_and_svg(tmp_path):
    code = cli.main(["run", "persistence-6x2", "--horizon", "0.2", "--out", str(tmp_path),
                     "--csv", "--svg", "--frames-stride", "10", "--verify"])
    assert code == 0
    rows = list(csv.reader(open(tmp_path / "metrics.csv")))
    assert rows[0] == metric_columns(6, True) and len(rows) == 21
    assert rows[0][-6:] == [f"E_{i}" for i in range(6)]
    traj = list(csv.reader(open(tmp_path / "trajectory.csv")))
    assert traj[0][:4] == ["t", "x_0", "y_0", "theta_0"]
    frames = sorted((tmp_path / "frames").glob("*.svg"))
    assert [f.name for f in frames] == ["frame_000000.svg", "frame_000010.svg"]
    svg = frames[0].read_text()
    assert svg.startswith("<?xml") and "<svg" in svg and 'stroke-dasharray="4,3"' in svg
    chart = (tmp_path / "energy.svg").read_text()
    assert "E_min" in chart and "E_chg" in chart and chart.count("<polyline") == 6


def test_coverage_frame_has_cells_and_centroids(tmp_path):
    assert cli.main(["run", "coverage-6", "--horizon", "0.01", "--svg", "--out", str(tmp_path)]) == 0
    svg = (tmp_path / "frames" / "frame_000000.svg").read_text()
    assert svg.count("<polygon") == 7 and svg.count('fill="#999999"') == 6
    assert not (tmp_path / "metrics.csv").exists()


def test_identical_runs_identical_csv(tmp_path):
    for sub in ("a", "b"):
        assert cli.main(["run", "hexagon-formation", "--horizon", "0.3", "--out", str(tmp_path / sub)]) == 0
    for f in ("metrics.csv", "trajectory.csv", "header.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_invalid_file_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"task": "consensus", "robots": 3}))
    assert cli.main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    bad.write_text("{not json")
    assert cli.main(["run", str(bad)]) == 2


def test_infeasible_exit_code(tmp_path):
    doc = {"task": "consensus", "robots": [[0, 0], [0.5, 0]], "horizon": 0.1,
           "domain": [[-2, -2], [2, -2], [2, 2], [-2, 2]],
           "survivability": {"enabled": True, "stations": [[-1.5, 0], [-1.5, 1]],
                             "alpha": {"kind": "linear", "c": 1e-6},
                             "obstacles": [{"waypoints": [[0.1, 0]], "d_o": 0.2},
                                           {"waypoints": [[-0.1, 0]], "d_o": 0.2}]}}
    path = tmp_path / "inf.json"
    path.write_text(json.dumps(doc))
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 3
    # partial outputs still land on disk
    assert (tmp_path / "o" / "metrics.csv").exists()


def test_file_scenario_runs(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"task": "consensus", "N": 3, "seed": 2, "horizon": 0.2,
                                "sensing_radius": 10.0}))
    assert cli.main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    head = json.loads((tmp_path / "o" / "header.json").read_text())
    assert head["scenario"]["dt"] == 0.01 and head["summary"]["steps"] == 20
