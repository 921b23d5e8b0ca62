import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from parc import cli
from parc.bras import BrasResult, ErrorProfile, EtiError, TrajectoryPair
from parc.lp import LPError
from parc.models import TrackerGains, toy_unicycle_tracker
from parc.polytope import HPolytope, contains_point

ROOT = Path(__file__).resolve().parents[1]
SCENARIO = ROOT / "scenarios" / "turtlebot.json"
COMPUTE = ["compute", "--scenario", str(SCENARIO), "--model", "dubins", "--dt", "0.5", "--tighten", "--restrict-regions"]


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def computed(tmp_path_factory):
    out = tmp_path_factory.mktemp("bras") / "bras.json"
    assert run(*COMPUTE, "--out", out) == 0
    return out


def test_compute_turtlebot(computed, capsys):
    data = json.loads(computed.read_text())
    assert not data["empty"] and len(data["avoid"]) > 0
    assert len(data["reach_chain"]) == 9
    side = json.loads(Path(str(computed) + ".meta.json").read_text())
    assert side["wall_time_s"] > 0
    assert "wall_time_s" not in data["meta"]


def test_compute_summary_line(tmp_path, capsys):
    assert run(*COMPUTE, "--expert-k", "1.288,-0.3795", "--out", tmp_path / "r.json") == 0
    line = capsys.readouterr().out
    assert "avoid sets" in line and "filter hits" in line and "nonempty" in line


def test_compute_goal_swallowed_by_error(tmp_path):
    sc = json.loads(SCENARIO.read_text())
    prof = ErrorProfile([1.5, 1.5], np.zeros((8, 2)), HPolytope.from_dict(sc["W"]))
    (tmp_path / "p.json").write_text(json.dumps(prof.to_dict()))
    out = tmp_path / "r.json"
    assert run(*COMPUTE, "--error-profile", tmp_path / "p.json", "--out", out) == 0
    assert json.loads(out.read_text())["empty"] is True
    assert run("sample", "--result", out, "--n", 5, "--out", tmp_path / "s.json") == 0
    assert json.loads((tmp_path / "s.json").read_text())["status"] == "empty"


def test_malformed_scenario_exit_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("compute", "--scenario", bad, "--model", "dubins", "--dt", "0.5", "--out", tmp_path / "o.json") == 2
    bad.write_text(json.dumps({"goal": {}}))
    assert run("compute", "--scenario", bad, "--model", "dubins", "--dt", "0.5", "--out", tmp_path / "o.json") == 2


def test_bad_arguments_exit_2(tmp_path):
    assert run(*COMPUTE[:-2], "--dt", "0.3", "--out", tmp_path / "o.json") == 2
    assert run(*COMPUTE, "--grid", "1,2", "--out", tmp_path / "o.json") == 2
    assert run("compute", "--scenario", SCENARIO, "--model", "nope", "--dt", "0.5", "--out", tmp_path / "o.json") == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["compute"])
    assert exc.value.code == 2


def test_no_expert_exit_3(tmp_path):
    sc = json.loads(SCENARIO.read_text())
    sc["goal"] = HPolytope.box([2.5, 2.5], [3, 3]).to_dict()
    path = tmp_path / "far.json"
    path.write_text(json.dumps(sc))
    assert run("compute", "--scenario", path, "--model", "dubins", "--dt", "0.5", "--expert-budget", 64, "--out", tmp_path / "o.json") == 3


def test_eti_and_numerical_exit_codes(tmp_path, monkeypatch):
    def eti(*a, **k):
        raise EtiError("region 0 at timestep 0 violates ETI")

    monkeypatch.setattr(cli, "compute_bras", eti)
    assert run(*COMPUTE, "--out", tmp_path / "o.json") == 4

    def numerical(*a, **k):
        raise LPError("solver failed")

    monkeypatch.setattr(cli, "compute_bras", numerical)
    assert run(*COMPUTE, "--out", tmp_path / "o.json") == 5


def test_tol_lp_is_restored(tmp_path):
    from parc import lp

    before = lp.FEAS_TOL
    run(*COMPUTE, "--tol-lp", "1e-7", "--expert-k", "1.288,-0.3795", "--out", tmp_path / "o.json")
    assert lp.FEAS_TOL == before
    assert json.loads((tmp_path / "o.json").read_text())["meta"]["tol_lp"] == 1e-7


# sample / verify ----------------------------------------------------------------------


def test_sample_turtlebot_all_pass(computed, tmp_path):
    out = tmp_path / "plans.json"
    assert run("sample", "--result", computed, "--n", 100, "--seed", 0, "--out", out) == 0
    data = json.loads(out.read_text())
    assert len(data["plans"]) == 100 and all(p["passed"] for p in data["plans"])
    assert run("verify", "--result", computed, "--plans", out) == 0


def test_sample_zero(computed, tmp_path):
    out = tmp_path / "plans.json"
    assert run("sample", "--result", computed, "--n", 0, "--out", out) == 0
    assert json.loads(out.read_text())["plans"] == []


def test_tampered_result_fails_verification(computed, tmp_path):
    data = json.loads(computed.read_text())
    data["avoid"] = []
    bad = tmp_path / "tampered.json"
    bad.write_text(json.dumps(data))
    assert run("sample", "--result", bad, "--n", 300, "--seed", 1, "--out", tmp_path / "p.json") == 6


def test_verify_detects_colliding_plan(computed, tmp_path):
    theta = float(np.arctan2(-0.5, 2.0))
    plans = tmp_path / "plans.json"
    plans.write_text(json.dumps({"plans": [{"x0": [-4, 0, 1.0, 0.0, theta]}]}))
    assert run("verify", "--result", computed, "--plans", plans, "--out", tmp_path / "rep.json") == 6
    assert "obstacle" in json.loads((tmp_path / "rep.json").read_text())["plans"][0]["message"]


# determinism and round trips ----------------------------------------------------------------------


def test_threads_byte_identical(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(*COMPUTE, "--seed", 3, "--threads", 1, "--out", a) == 0
    assert run(*COMPUTE, "--seed", 3, "--threads", 4, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()


def test_result_json_round_trip(computed):
    data = json.loads(computed.read_text())
    assert BrasResult.from_dict(data).to_dict() == data


def test_subprocess_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "parc.cli", "plotdata", "--result", str(tmp_path / "missing.json"), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 2 and "cannot read" in proc.stderr


# fit / error ----------------------------------------------------------------------


def write_pairs(path, pairs):
    path.write_text(json.dumps({"pairs": [p.to_dict() for p in pairs]}))
    return path


def test_fit_exact(tmp_path, rng):
    t = np.arange(5) * 0.5
    C = rng.normal(size=(4, 2, 3))
    pairs = []
    for k in rng.uniform(-1, 1, (8, 2)):
        P = np.zeros((5, 2))
        for s in range(4):
            P[s + 1] = P[s] + C[s, :, :2] @ k + C[s, :, 2]
        pairs.append(TrajectoryPair(t, P, P, k))
    out = tmp_path / "fit.json"
    assert run("fit", "--trajectories", write_pairs(tmp_path / "tr.json", pairs), "--dt", 0.5, "--tf", 2.0, "--n-w", 1, "--out", out) == 0
    coef = np.array(json.loads(out.read_text())["coef"])
    assert np.max(np.abs(coef - C)) < 1e-8


def test_fit_rank_deficient_exit_7(tmp_path):
    t = np.arange(3) * 0.5
    pairs = [TrajectoryPair(t, np.zeros((3, 1)), np.zeros((3, 1)), [1.0]) for _ in range(4)]
    assert run("fit", "--trajectories", write_pairs(tmp_path / "tr.json", pairs), "--dt", 0.5, "--tf", 1.0, "--n-w", 1, "--out", tmp_path / "f.json") == 7


def test_fit_mismatched_grids_exit_2(tmp_path):
    a = TrajectoryPair(np.arange(3) * 0.5, np.zeros((3, 1)), np.zeros((3, 1)), [1.0])
    b = TrajectoryPair(np.linspace(0, 1, 5), np.zeros((5, 1)), np.zeros((5, 1)), [2.0])
    f = write_pairs(tmp_path / "tr.json", [a, b])
    assert run("fit", "--trajectories", f, "--dt", 0.5, "--tf", 1.0, "--n-w", 1, "--out", tmp_path / "f.json") == 2
    assert run("error", "--trajectories", f, "--dt", 0.5, "--tf", 1.0, "--valid-region", tmp_path / "nope.json", "--out", tmp_path / "e.json") == 2


def test_error_from_tracker_batch(tmp_path):
    plan = np.array([[0.5 * i, 0.0, 0.0] for i in range(9)])
    pairs = [toy_unicycle_tracker(plan, 0.5, [1.0, 0.0], [0, dy, 0, 1.0], TrackerGains()) for dy in (0.0, 0.05, -0.1)]
    region = tmp_path / "valid.json"
    region.write_text(json.dumps(HPolytope.box([-1] * 5, [1] * 5).to_dict()))
    out = tmp_path / "profile.json"
    assert run("error", "--trajectories", write_pairs(tmp_path / "tr.json", pairs), "--dt", 0.5, "--tf", 4.0, "--valid-region", region, "--out", out) == 0
    prof = ErrorProfile.from_dict(json.loads(out.read_text()))
    assert np.all(prof.e_int >= 0) and np.all(prof.e_tf >= 0)
    assert prof.e_int[0, 1] >= 0.1 and prof.n_samples == 3


# plotdata ----------------------------------------------------------------------


def read_ring(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float).reshape(-1, 2)


def test_plotdata_rings(computed, tmp_path):
    plans = tmp_path / "plans.json"
    run("sample", "--result", computed, "--n", 3, "--out", plans)
    out = tmp_path / "plot"
    assert run("plotdata", "--result", computed, "--dims", "0,1", "--plans", plans, "--out", out) == 0
    header, ring = read_ring(out / "reach.csv")
    assert header == ["x0", "x1"]
    assert len(ring) >= 4 and np.array_equal(ring[0], ring[-1])
    res = BrasResult.from_dict(json.loads(computed.read_text()))
    from parc.polytope import project_onto

    shadow = project_onto(res.reach, [0, 1])
    assert all(contains_point(shadow, v, 1e-7) for v in ring)
    assert len(list(out.glob("avoid_o0_t*.csv"))) == len(res.avoid)
    assert len(list(out.glob("trajectory_*.csv"))) == 3


def test_plotdata_empty_set_and_bad_dims(tmp_path):
    e = HPolytope.empty(2)
    res = BrasResult((0,), e, (e, e), (), {}, True)
    path = tmp_path / "r.json"
    path.write_text(json.dumps(res.to_dict()))
    assert run("plotdata", "--result", path, "--out", tmp_path / "p") == 0
    header, ring = read_ring(tmp_path / "p" / "reach.csv")
    assert header == ["x0", "x1"] and len(ring) == 0
    assert run("plotdata", "--result", path, "--dims", "0,0", "--out", tmp_path / "p") == 2
    assert run("plotdata", "--result", path, "--dims", "0,5", "--out", tmp_path / "p") == 2
