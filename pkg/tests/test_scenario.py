"""Scenario layer: JSON loading, parameter paths, runs, writers, sweeps, CLI.

Most checks ride on a one-joint slider written out as a JSON dict: unit mass,
symmetric force bound, straight unit path.  Its optimum is the bang-bang
double integrator with T = 2/sqrt(accel cap), which makes every end-to-end
assertion closed-form.
"""

import copy
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

from contact_topp.cli import main
from contact_topp.liegroup import Pose, Twist
from contact_topp.robot import (
    JointDef,
    JointLimits,
    Link,
    LinkInertia,
    RobotModel,
    robot_to_json,
)
from contact_topp.scenario import (
    InfeasibleScenarioError,
    RunSettings,
    ScenarioError,
    Scenario,
    assemble_scenario,
    load_scenario,
    profile_from_json_dict,
    run,
    scenario_from_dict,
    set_by_path,
    solve_scenario,
    sweep,
    sweep_parallelism,
)

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def slider_json(accel=1.0, torque=10.0, torque_min=None, velocity=None):
    model = RobotModel(
        name="slider",
        joints=(JointDef("prismatic", Twist.prismatic([1.0, 0.0, 0.0])),),
        links=(
            Link(
                home_pose=Pose.identity(),
                inertia=LinkInertia(1.0, np.zeros(3), np.eye(3) * 1e-6),
            ),
        ),
        x_ref=Pose.identity(),
        tool_offset=Pose.identity(),
        limits=JointLimits(
            torque_lower=[-torque if torque_min is None else torque_min],
            torque_upper=[torque],
            velocity_max=[np.inf if velocity is None else velocity],
            accel_lower=[-accel],
            accel_upper=[accel],
        ),
    )
    return robot_to_json(model)


def slider_scenario(grid_points=12, **kwargs):
    return {
        "format": "contact-topp/scenario-v1",
        "name": "slider_case",
        "gravity": [0.0, 0.0, -9.81],
        "grid_points": grid_points,
        "boundary_sdot": [0.0, 0.0],
        "path_boundary": "natural",
        "robots": [{"model": slider_json(**kwargs), "waypoints": [[0.0], [1.0]]}],
        "objects": [],
    }


# loader


def test_loads_minimal_scenario():
    sc = scenario_from_dict(slider_scenario())
    assert sc.name == "slider_case"
    assert sc.grid_points == 12
    assert sc.boundary_sdot == (0.0, 0.0)
    assert sc.contact_census() == (0, 0)


def test_missing_field_is_named():
    data = slider_scenario()
    del data["grid_points"]
    with pytest.raises(ScenarioError, match="missing field 'grid_points'"):
        scenario_from_dict(data)


def test_bad_format_rejected():
    data = slider_scenario()
    data["format"] = "contact-topp/scenario-v9"
    with pytest.raises(ScenarioError, match="format"):
        scenario_from_dict(data)


def test_robot_field_errors_carry_location():
    data = slider_scenario()
    del data["robots"][0]["model"]["joints"][0]["torque_max"]
    with pytest.raises(ScenarioError, match=r"robots\[0\]"):
        scenario_from_dict(data)


def test_boundary_sdot_null_is_free():
    data = slider_scenario()
    data["boundary_sdot"] = [0.0, None]
    sc = scenario_from_dict(data)
    assert sc.boundary_sdot == (0.0, None)


def test_boundary_sdot_wrong_length():
    data = slider_scenario()
    data["boundary_sdot"] = [0.0]
    with pytest.raises(ScenarioError, match="two entries"):
        scenario_from_dict(data)


def test_limit_scale_applied():
    data = slider_scenario()
    data["limit_scale"] = {"acceleration": 4.0}
    sc = scenario_from_dict(data)
    assert sc.scene.robots[0].model.limits.accel_upper[0] == pytest.approx(4.0)


def test_limit_scale_unknown_key():
    data = slider_scenario()
    data["limit_scale"] = {"speed": 2.0}
    with pytest.raises(ScenarioError, match="unknown keys"):
        scenario_from_dict(data)


def test_bad_parent_string():
    data = slider_scenario()
    data["objects"] = [
        {
            "name": "box",
            "mass": 1.0,
            "inertia": [1e-3] * 3 + [0.0] * 3,
            "parent": "gripper:0",
            "contacts": [],
        }
    ]
    with pytest.raises(ScenarioError, match="parent"):
        scenario_from_dict(data)


def test_load_scenario_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="does not exist"):
        load_scenario(str(tmp_path / "nope.json"))


def test_load_scenario_truncated_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text('{"format": "contact-topp/scenario-v1", ')
    with pytest.raises(ScenarioError, match="not valid JSON"):
        load_scenario(str(p))


def test_source_dict_is_isolated():
    data = slider_scenario()
    sc = scenario_from_dict(data)
    data["grid_points"] = 99
    assert sc.source["grid_points"] == 12


# parameter paths


def test_set_by_path_dict_key():
    data = slider_scenario()
    set_by_path(data, "grid_points", 40)
    assert data["grid_points"] == 40


def test_set_by_path_list_index():
    data = slider_scenario()
    set_by_path(data, "robots.0.model.joints.0.accel_max", 9.0)
    assert data["robots"][0]["model"]["joints"][0]["accel_max"] == 9.0


def test_set_by_path_named_entry():
    data = json.loads((SCENARIOS / "pickup.json").read_text())
    set_by_path(data, "objects.box.mass", 0.75)
    assert data["objects"][0]["mass"] == 0.75
    set_by_path(data, "objects.box.contacts.finger_left.friction.mu", 0.4)
    assert data["objects"][0]["contacts"][0]["friction"]["mu"] == 0.4


def test_set_by_path_unknown_name():
    data = json.loads((SCENARIOS / "pickup.json").read_text())
    with pytest.raises(ScenarioError, match="no entry named 'crate'"):
        set_by_path(data, "objects.crate.mass", 1.0)


def test_set_by_path_missing_leaf():
    data = slider_scenario()
    with pytest.raises(ScenarioError, match="no field"):
        set_by_path(data, "robots.0.paint", 1.0)


# waiter topology validation


def waiter_dict():
    return json.loads((SCENARIOS / "waiter" / "tilt_0.json").read_text())


def test_waiter_assembles():
    sc = scenario_from_dict(waiter_dict())
    prog = assemble_scenario(sc)
    assert sc.contact_census() == (3, 2)
    K, (u, v), n = sc.grid_points, sc.contact_census(), sc.scene.dof
    assert prog.free_scalar_count() == K * (4 + 3 * u + 4 * v + n) - 2


def test_waiter_needs_grasped_carrier():
    data = waiter_dict()
    # drop the grasp pads: nothing holds the tray
    data["objects"][0]["contacts"] = []
    with pytest.raises(ScenarioError, match="grasp contact"):
        assemble_scenario(scenario_from_dict(data))


def test_waiter_rider_needs_three_point_support():
    data = waiter_dict()
    data["objects"][1]["contacts"] = data["objects"][1]["contacts"][:2]
    with pytest.raises(ScenarioError, match="three point contacts"):
        assemble_scenario(scenario_from_dict(data))


def test_waiter_rider_must_sit_on_carrier():
    data = waiter_dict()
    data["objects"][1]["parent"] = "robot:0"
    with pytest.raises(ScenarioError, match="carrier"):
        assemble_scenario(scenario_from_dict(data))


# end-to-end runs


def test_run_double_integrator_closed_form():
    sc = scenario_from_dict(slider_scenario(grid_points=60, accel=4.0))
    out = run(sc, RunSettings(output_points=201))
    assert out.status == "Optimal"
    # bang-bang: T = 2 / sqrt(accel cap)
    assert out.total_time == pytest.approx(1.0, rel=1e-6)
    assert out.t[0] == 0.0
    assert np.all(np.diff(out.t) > 0.0)
    assert out.t[-1] == pytest.approx(out.total_time, rel=1e-9)
    assert out.s[0] == 0.0 and out.s[-1] == 1.0
    assert np.all(out.sdot >= -1e-12)
    # the path is the identity map, so q tracks s and qd tracks sdot
    assert np.allclose(out.q[:, 0], out.s, atol=1e-9)
    assert np.allclose(out.qd[:, 0], out.sdot, atol=1e-9)
    # piecewise-constant acceleration switches sign once at the midpoint
    assert abs(out.qdd[5, 0] - 4.0) < 1e-6
    assert abs(out.qdd[-5, 0] + 4.0) < 1e-6
    mid = np.searchsorted(out.s, 0.5)
    assert np.all(out.qdd[: mid - 2, 0] > 0.0)
    assert np.all(out.qdd[mid + 2 :, 0] < 0.0)


def test_run_derivative_consistency():
    data = slider_scenario(grid_points=40, accel=2.0, velocity=1.2)
    sc = scenario_from_dict(data)
    out = run(sc, RunSettings(output_points=801))
    dq = np.gradient(out.q[:, 0], out.t)
    # loose interior check: numerical differentiation vs reported velocity
    inner = slice(10, -10)
    assert np.max(np.abs(dq[inner] - out.qd[inner, 0])) < 2e-2
    # the cap binds at interval midpoints; node values may overshoot by O(h)
    assert np.max(out.qd[:, 0]) > 1.19
    assert np.max(out.qd[:, 0]) < 1.2 * (1.0 + 2.0 / 40.0)


def test_run_infeasible_raises_with_certificate():
    sc = scenario_from_dict(slider_scenario(grid_points=8, torque=10.0, torque_min=5.0))
    with pytest.raises(InfeasibleScenarioError, match="cannot be executed") as exc:
        run(sc)
    assert exc.value.report.certificate is not None


def test_trajectory_csv(tmp_path):
    sc = scenario_from_dict(slider_scenario(grid_points=16, accel=1.0))
    out = run(sc, RunSettings(output_points=101))
    path = tmp_path / "traj.csv"
    out.write_csv(str(path))
    header = path.read_text().splitlines()[0]
    assert header.split(",")[:5] == ["t", "s", "sdot", "q_1", "qd_1"]
    data = np.loadtxt(str(path), delimiter=",", skiprows=1)
    assert data.shape == (101, 7)  # t, s, sdot, q, qd, qdd, tau
    assert np.allclose(data[:, 0], out.t)


def test_trajectory_json_roundtrip(tmp_path):
    sc = scenario_from_dict(slider_scenario(grid_points=16, accel=1.0))
    out = run(sc, RunSettings(output_points=11))
    blob = json.loads(json.dumps(out.to_json_dict()))
    assert blob["format"] == "contact-topp/trajectory-v1"
    prof, K, boundary = profile_from_json_dict(blob)
    assert K == 16
    assert boundary == (0.0, 0.0)
    _, _, sol = solve_scenario(sc, RunSettings())
    assert np.allclose(prof.accel, sol.accel, atol=1e-12)
    assert np.allclose(prof.speed_sq, sol.speed_sq, atol=1e-12)


# sweeps


def test_sweep_serial_matches_threaded(monkeypatch):
    sc = scenario_from_dict(slider_scenario(grid_points=12))
    values = [0.25, 1.0, 4.0]
    serial = sweep(sc, "robots.0.model.joints.0.accel_max", values, threads=1)
    monkeypatch.setenv("TOPP_THREADS", "2")
    threaded = sweep(sc, "robots.0.model.joints.0.accel_max", values)
    for a, b, v in zip(serial, threaded, values):
        assert a.status == b.status == "Optimal"
        # accelerate at the swept cap, brake at the fixed one: T = sqrt(2(1+v)/v)
        assert a.total_time == pytest.approx(math.sqrt(2.0 * (1.0 + v) / v), rel=5e-3)
        assert b.total_time == pytest.approx(a.total_time, rel=1e-9)


def test_sweep_reports_infeasible_points():
    sc = scenario_from_dict(slider_scenario(grid_points=10, velocity=0.9))
    pts = sweep(sc, "robots.0.model.joints.0.velocity_max", [0.9, 1e-9], threads=1)
    assert pts[0].status == "Optimal"
    assert pts[1].total_time is None


def test_sweep_parallelism_env(monkeypatch):
    monkeypatch.delenv("TOPP_THREADS", raising=False)
    assert sweep_parallelism(None) == 1
    assert sweep_parallelism(3) == 3
    monkeypatch.setenv("TOPP_THREADS", "5")
    assert sweep_parallelism(None) == 5
    monkeypatch.setenv("TOPP_THREADS", "not-a-number")
    assert sweep_parallelism(None) == 1


# command line


def write_scenario(tmp_path, data, name="case.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def test_cli_solve_writes_outputs(tmp_path, capsys):
    path = write_scenario(tmp_path, slider_scenario(grid_points=12, accel=1.0))
    code = main(["solve", path, "--out", str(tmp_path), "--dump-program"])
    assert code == 0
    msg = capsys.readouterr().out
    assert "T = 2.000000" in msg
    assert (tmp_path / "slider_case.trajectory.csv").exists()
    assert (tmp_path / "slider_case.trajectory.json").exists()
    assert (tmp_path / "slider_case.program.json").exists()


def test_cli_solve_grid_override(tmp_path, capsys):
    path = write_scenario(tmp_path, slider_scenario(grid_points=12, accel=4.0))
    assert main(["solve", path, "--grid", "20", "--out", str(tmp_path)]) == 0
    blob = json.loads((tmp_path / "slider_case.trajectory.json").read_text())
    assert blob["grid_intervals"] == 20


def test_cli_solve_infeasible_exit(tmp_path, capsys):
    path = write_scenario(tmp_path, slider_scenario(grid_points=8, torque=10.0, torque_min=5.0))
    assert main(["solve", path, "--out", str(tmp_path)]) == 2
    assert "infeasible" in capsys.readouterr().err.lower()


def test_cli_missing_file_exit(tmp_path, capsys):
    assert main(["solve", str(tmp_path / "absent.json")]) == 4
    assert "input error" in capsys.readouterr().err


def test_cli_sweep_table(tmp_path, capsys):
    path = write_scenario(tmp_path, slider_scenario(grid_points=12))
    code = main(
        [
            "sweep",
            path,
            "--param",
            "robots.0.model.joints.0.accel_max",
            "--values",
            "1,4",
            "--threads",
            "1",
        ]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert out.count("Optimal") == 2
    assert "T [s]" in out


def test_cli_verify_roundtrip(tmp_path, capsys):
    path = write_scenario(tmp_path, slider_scenario(grid_points=12, accel=1.0))
    assert main(["solve", path, "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    code = main(["verify", path, str(tmp_path / "slider_case.trajectory.json")])
    assert code == 0
    ledger = json.loads(capsys.readouterr().out)
    assert ledger["passed"] is True
    assert ledger["audit"]["worst"] <= 1e-6
