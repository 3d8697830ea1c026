import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from vtube import tube as tube_io
from vtube.cli import EXIT_INFEASIBLE, EXIT_INTEGRITY, EXIT_OK, EXIT_USAGE, main


@pytest.fixture(scope="module")
def artifact(tmp_path_factory):
    out = tmp_path_factory.mktemp("plan") / "desk.tube.json"
    assert main(["plan", "--scenario", "desk", "--out", str(out)]) == EXIT_OK
    return out


def read_batch(path):
    with open(path) as fh:
        return list(csv.reader(fh))


class TestPlan:
    def test_writes_artifact_and_summary(self, artifact):
        summary = artifact.with_name("desk.tube.summary.txt").read_text()
        assert "critical regions   : 5" in summary
        assert "V* range" in summary
        assert tube_io.load(artifact).n_leaves == 5

    def test_malformed_scenario(self, tmp_path, desk, capsys):
        doc = dict(desk.source)
        doc["planner"] = {**doc["planner"], "v_max": "fast"}
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(doc))
        assert main(["plan", "--scenario", str(path), "--out", str(tmp_path / "x.json")]) == EXIT_USAGE
        assert "planner.v_max" in capsys.readouterr().err

    def test_unparseable_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["plan", "--scenario", str(path)]) == EXIT_USAGE

    def test_infeasible_map(self, tmp_path, desk, capsys):
        doc = json.loads(json.dumps(desk.source))
        doc["map"]["obstacles"].append({"type": "box", "lo": [9, 0, 0], "hi": [12, 12, 6]})
        path = tmp_path / "blocked.json"
        path.write_text(json.dumps(doc))
        code = main(["plan", "--scenario", str(path), "--out", str(tmp_path / "b.json")])
        assert code == EXIT_INFEASIBLE
        err = capsys.readouterr().err
        assert "corridor" in err and str(path) in err

    def test_unknown_scenario_name(self):
        assert main(["plan", "--scenario", "no_such_world"]) == EXIT_USAGE


class TestGenerate:
    def test_seeded_batches_identical(self, artifact, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["generate", str(artifact), "--k", "20", "--seed", "7",
                         "--out", str(out)]) == EXIT_OK
        assert a.read_bytes() == b.read_bytes()
        rows = read_batch(a)
        assert len(rows) == 1 + 20 * 8

    def test_forced_vertex_is_boundary(self, artifact, tmp_path):
        out = tmp_path / "e1.csv"
        assert main(["generate", str(artifact), "--theta", "1,0,0", "--out", str(out)]) == EXIT_OK
        tube = tube_io.load(artifact)
        boundary = tube.trajectory([1.0, 0.0, 0.0])
        rows = read_batch(out)[1:]
        for m, row in enumerate(rows):
            assert float(row[6]) == boundary.durations[m]
            cps = np.array([float(v) for v in row[7:]]).reshape(-1, 3)
            assert np.array_equal(cps, boundary.control_points[m])

    def test_round_trip_matches_in_memory_plan(self, artifact, desk_tube, tmp_path, rng):
        thetas = rng.dirichlet(np.ones(3), size=10)
        loaded = tube_io.load(artifact)
        a = tube_io.generate(loaded, thetas)
        b = tube_io.generate(desk_tube, thetas)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_wrong_theta_length(self, artifact):
        assert main(["generate", str(artifact), "--theta", "1,0"]) == EXIT_USAGE

    def test_missing_artifact(self, tmp_path):
        assert main(["generate", str(tmp_path / "nope.json")]) == EXIT_USAGE

    def test_corrupt_artifact(self, artifact, tmp_path):
        doc = json.loads(artifact.read_text())
        doc["tube"]["v_max"] = [9.0]
        bad = tmp_path / "corrupt.json"
        bad.write_text(json.dumps(doc))
        assert main(["generate", str(bad)]) == EXIT_INTEGRITY


class TestSimulateAndInspect:
    def test_simulate_scenario(self, tmp_path, capsys):
        out = tmp_path / "sim"
        assert main(["simulate", "--scenario", "desk", "--allocation", "initial",
                     "--out", str(out)]) == EXIT_OK
        summary = json.loads((out / "summary.json").read_text())
        assert summary["min_inter_robot_distance"] >= 0.8
        assert (out / "log.csv").exists()

    def test_simulate_needs_input(self):
        assert main(["simulate"]) == EXIT_USAGE

    def test_replan_needs_scenario(self, artifact):
        assert main(["simulate", str(artifact), "--replan"]) == EXIT_USAGE

    def test_inspect(self, artifact, capsys):
        assert main(["inspect", str(artifact)]) == EXIT_OK
        meta = json.loads(capsys.readouterr().out)
        assert meta["n_leaves"] == 5 and meta["k_c"] == 3

    def test_module_entry_point(self, artifact):
        res = subprocess.run([sys.executable, "-m", "vtube", "inspect", str(artifact)],
                             capture_output=True, text=True)
        assert res.returncode == 0
        assert json.loads(res.stdout)["n_segments"] == 8


def test_bench_command(tmp_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", "--scenario", "desk", "--k", "5,10,20", "--epsilon", "1.8",
                 "--out", str(out)]) == EXIT_OK
    rows = read_batch(out)
    assert rows[0][:3] == ["eps", "n_leaves", "k"]
    assert len(rows) == 4
