"""Scenario files, the end-to-end timing pipeline, and parameter sweeps.

A scenario JSON file bundles everything one solve needs: robot models with
their joint waypoints, manipulated objects with their contact sets, gravity,
the grid resolution, and boundary path speeds.  `run` turns a loaded
scenario into a `TrajectoryOutput` with uniformly resampled trajectories
and per-contact force series; `sweep` fans out runs over a scalar
parameter (object mass, friction coefficient, ...) with one process per
value.
"""
from __future__ import annotations

import copy
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .contacts import ContactSpec, FrictionParams, cone_margin
from .dynamics import ObjectInstance, ObjectModel, RobotInstance, Scene
from .liegroup import Pose
from .paths import BOUNDARY_KINDS, JointPath
from .robot import _inertia_from_six, _pose_from_json, robot_from_json
from .solver import (
    DUAL_INFEASIBLE,
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    SolverSettings,
    solve_conic_program,
)
from .transcription import (
    ConicProgram,
    Grid,
    ScalingVariables,
    TranscriptionSettings,
    assemble,
    build_grid,
    recover_time,
)

SCENARIO_FORMAT = "contact-topp/scenario-v1"
TRAJECTORY_FORMAT = "contact-topp/trajectory-v1"

# pinned wrench components out of the solver are zero only to solver
# tolerance, so margin evaluation on emitted trajectories uses a looser
# pin check than the exact-arithmetic default
OUTPUT_PIN_TOL = 1e-6


class ScenarioError(ValueError):
    """Schema or invariant violation in a scenario file."""


class InfeasibleScenarioError(RuntimeError):
    """The task cannot be executed within actuator/contact limits."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class SolverFailureError(RuntimeError):
    """The solve ended without an optimum or a certificate."""

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class Scenario:
    """A loaded, validated scenario plus its raw dict (kept for sweeps)."""

    name: str
    scene: Scene
    grid_points: int
    boundary_sdot: tuple
    source: dict

    def contact_census(self) -> tuple[int, int]:
        """(number of point contacts u, number of soft-finger contacts v)."""
        u = v = 0
        for obj in self.scene.objects:
            for c in obj.model.contacts:
                if c.model == "pcwf":
                    u += 1
                else:
                    v += 1
        return u, v


def _need(mapping, key, where):
    if not isinstance(mapping, dict):
        raise ScenarioError(f"{where}: expected an object, got {type(mapping).__name__}")
    if key not in mapping:
        raise ScenarioError(f"{where}: missing field {key!r}")
    return mapping[key]


def _pose(entry, where) -> Pose:
    try:
        return _pose_from_json(entry)
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: bad pose ({exc})") from exc


def _contact_from_dict(entry, where) -> ContactSpec:
    name = _need(entry, "name", where)
    kind = _need(entry, "kind", where)
    model = _need(entry, "model", where)
    pose = _pose(_need(entry, "pose", where), f"{where}.pose")
    fr = _need(entry, "friction", where)
    try:
        params = FrictionParams(
            mu=float(_need(fr, "mu", f"{where}.friction")),
            ex=float(fr.get("ex", 1.0)),
            ey=float(fr.get("ey", 1.0)),
            ez=float(fr.get("ez", 1.0)),
        )
        fz_max = entry.get("fz_max")
        pose_in_other = entry.get("pose_in_other")
        return ContactSpec(
            name=name,
            kind=kind,
            model=model,
            pose=pose,
            params=params,
            fz_max=None if fz_max is None else float(fz_max),
            robot=int(entry.get("robot", 0)),
            against=entry.get("against"),
            pose_in_other=None if pose_in_other is None else _pose(pose_in_other, f"{where}.pose_in_other"),
            frame_mode=entry.get("frame_mode", "body_fixed"),
            world_axis=np.asarray(entry.get("world_axis", (0.0, 0.0, 1.0)), dtype=float),
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def _object_from_dict(entry, where) -> ObjectInstance:
    name = _need(entry, "name", where)
    parent = _need(entry, "parent", where)
    contacts = tuple(
        _contact_from_dict(c, f"{where}.contacts[{i}]")
        for i, c in enumerate(entry.get("contacts", []))
    )
    try:
        model = ObjectModel(
            name=name,
            mass=float(_need(entry, "mass", where)),
            inertia=_inertia_from_six(_need(entry, "inertia", where)),
            contacts=contacts,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from exc

    kind, _, ref = str(parent).partition(":")
    if kind == "robot" and ref.lstrip("-").isdigit():
        parent_robot, parent_object = int(ref), None
    elif kind == "object" and ref:
        parent_robot, parent_object = None, ref
    else:
        raise ScenarioError(f"{where}.parent: expected 'robot:<index>' or 'object:<name>', got {parent!r}")
    offset = entry.get("offset")
    ext = np.asarray(entry.get("external_wrench", np.zeros(6)), dtype=float)
    if ext.shape != (6,):
        raise ScenarioError(f"{where}.external_wrench: expected 6 entries")
    try:
        return ObjectInstance(
            model=model,
            parent_robot=parent_robot,
            parent_object=parent_object,
            offset=None if offset is None else _pose(offset, f"{where}.offset"),
            external_wrench=ext,
        )
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc


def scenario_from_dict(data: dict, where: str = "scenario") -> Scenario:
    """Validate a raw scenario dict and build the scene it describes."""
    fmt = _need(data, "format", where)
    if fmt != SCENARIO_FORMAT:
        raise ScenarioError(f"{where}.format: unsupported {fmt!r}, expected {SCENARIO_FORMAT!r}")
    name = str(_need(data, "name", where))
    grid_points = int(_need(data, "grid_points", where))
    if grid_points < 1:
        raise ScenarioError(f"{where}.grid_points: must be a positive interval count")

    raw_boundary = data.get("boundary_sdot", (0.0, 0.0))
    if len(raw_boundary) != 2:
        raise ScenarioError(f"{where}.boundary_sdot: expected two entries (null leaves an end free)")
    boundary = tuple(None if v is None else float(v) for v in raw_boundary)

    path_boundary = data.get("path_boundary", "clamped")
    if path_boundary not in BOUNDARY_KINDS:
        raise ScenarioError(f"{where}.path_boundary: unknown kind {path_boundary!r}")

    scale = data.get("limit_scale", {})
    unknown = set(scale) - {"torque", "velocity", "acceleration"}
    if unknown:
        raise ScenarioError(f"{where}.limit_scale: unknown keys {sorted(unknown)}")

    robots_raw = _need(data, "robots", where)
    if not robots_raw:
        raise ScenarioError(f"{where}.robots: need at least one robot")
    robots = []
    for i, entry in enumerate(robots_raw):
        rwhere = f"{where}.robots[{i}]"
        try:
            model = robot_from_json(_need(entry, "model", rwhere))
        except ValueError as exc:
            raise ScenarioError(f"{rwhere}.model: {exc}") from exc
        if scale:
            model = replace(
                model,
                limits=model.limits.scaled(
                    torque=float(scale.get("torque", 1.0)),
                    velocity=float(scale.get("velocity", 1.0)),
                    acceleration=float(scale.get("acceleration", 1.0)),
                ),
            )
        waypoints = np.asarray(_need(entry, "waypoints", rwhere), dtype=float)
        try:
            path = JointPath(waypoints, boundary=path_boundary)
            robots.append(RobotInstance(model=model, path=path))
        except ValueError as exc:
            raise ScenarioError(f"{rwhere}.waypoints: {exc}") from exc

    objects_raw = data.get("objects", [])
    if len(objects_raw) > 2:
        raise ScenarioError(f"{where}.objects: at most two objects are supported, got {len(objects_raw)}")
    objects = tuple(
        _object_from_dict(entry, f"{where}.objects[{i}]") for i, entry in enumerate(objects_raw)
    )

    gravity = np.asarray(data.get("gravity", (0.0, 0.0, -9.81)), dtype=float)
    if gravity.shape != (3,):
        raise ScenarioError(f"{where}.gravity: expected 3 entries")
    method = data.get("jacobian_derivative", "analytic")
    try:
        scene = Scene(robots=tuple(robots), objects=objects, gravity=gravity, jacobian_method=method)
    except ValueError as exc:
        raise ScenarioError(f"{where}: {exc}") from exc
    return Scenario(
        name=name,
        scene=scene,
        grid_points=grid_points,
        boundary_sdot=boundary,
        source=copy.deepcopy(data),
    )


def load_scenario(path) -> Scenario:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {path!r} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file {path!r} is not valid JSON: {exc}") from exc
    return scenario_from_dict(data)


# parameter paths for sweeps: dotted segments, each resolving a dict key, a
# list index, or the "name" field of a list entry ("objects.box.mass")


def set_by_path(data, path: str, value):
    parts = [p for p in str(path).split(".") if p]
    if not parts:
        raise ScenarioError("empty parameter path")
    here = data
    seen = []
    for part in parts[:-1]:
        here = _descend(here, part, seen)
        seen.append(part)
    last = parts[-1]
    if isinstance(here, dict):
        if last not in here:
            raise ScenarioError(f"parameter path {path!r}: no field {last!r} at {'.'.join(seen) or 'root'}")
        here[last] = value
    elif isinstance(here, list):
        idx = _list_index(here, last, path)
        here[idx] = value
    else:
        raise ScenarioError(f"parameter path {path!r}: cannot assign into {type(here).__name__}")


def _descend(node, part, seen):
    where = ".".join(seen) or "root"
    if isinstance(node, dict):
        if part not in node:
            raise ScenarioError(f"parameter path: no field {part!r} at {where}")
        return node[part]
    if isinstance(node, list):
        return node[_list_index(node, part, where)]
    raise ScenarioError(f"parameter path: cannot descend into {type(node).__name__} at {where}")


def _list_index(entries, part, where):
    if part.lstrip("-").isdigit():
        idx = int(part)
        if not -len(entries) <= idx < len(entries):
            raise ScenarioError(f"parameter path: index {idx} out of range at {where}")
        return idx
    for i, entry in enumerate(entries):
        if isinstance(entry, dict) and entry.get("name") == part:
            return i
    raise ScenarioError(f"parameter path: no entry named {part!r} at {where}")


# assembly dispatch


def assemble_scenario(scenario: Scenario, grid: Grid | None = None) -> ConicProgram:
    grid = grid if grid is not None else build_grid(scenario.grid_points)
    settings = TranscriptionSettings(boundary_sdot=scenario.boundary_sdot)
    if len(scenario.scene.objects) == 2:
        return assemble_waiter(scenario, grid, settings)
    return assemble(scenario.scene, grid, settings)


def assemble_waiter(
    scenario: Scenario, grid: Grid | None = None, settings: TranscriptionSettings | None = None
) -> ConicProgram:
    """Two-object stack: a grasped carrier and a free object riding on it.

    Validates the topology (carrier held through soft-finger contacts, the
    rider coupled to the carrier through point contacts carrying the
    action-reaction pair) before assembling both wrench balances.
    """
    scene = scenario.scene
    if len(scene.objects) != 2:
        raise ScenarioError(f"waiter assembly needs exactly two objects, got {len(scene.objects)}")
    carriers = [o for o in scene.objects if o.parent_robot is not None]
    riders = [o for o in scene.objects if o.parent_object is not None]
    if len(carriers) != 1 or len(riders) != 1:
        raise ScenarioError("waiter assembly needs one grasped carrier and one object riding on it")
    carrier, rider = carriers[0], riders[0]
    if rider.parent_object != carrier.model.name:
        raise ScenarioError(
            f"object {rider.model.name!r} must ride on {carrier.model.name!r}, "
            f"rides on {rider.parent_object!r}"
        )
    grasp = [c for c in carrier.model.contacts if c.kind == "manipulator" and c.model == "sfce"]
    if not grasp:
        raise ScenarioError(f"carrier {carrier.model.name!r} has no soft-finger grasp contact")
    coupling = [
        c for c in rider.model.contacts if c.kind == "object" and c.against == carrier.model.name
    ]
    if len(coupling) != 3 or any(c.model != "pcwf" for c in coupling):
        raise ScenarioError(
            f"object {rider.model.name!r} needs exactly three point contacts "
            f"against {carrier.model.name!r}, found {len(coupling)}"
        )
    grid = grid if grid is not None else build_grid(scenario.grid_points)
    settings = settings if settings is not None else TranscriptionSettings(boundary_sdot=scenario.boundary_sdot)
    return assemble(scene, grid, settings)


# end-to-end run


@dataclass(frozen=True)
class RunSettings:
    grid_override: int | None = None
    output_points: int = 801
    solver: SolverSettings = field(default_factory=SolverSettings)


@dataclass
class TrajectoryOutput:
    """Resampled trajectories and forces of one optimal solve."""

    scenario_name: str
    status: str
    grid_intervals: int
    boundary_sdot: tuple
    objective: float
    total_time: float
    t: np.ndarray
    s: np.ndarray
    sdot: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    wrench: dict
    margin: dict
    profile: ScalingVariables
    contact_order: tuple
    meta: dict

    def write_csv(self, path):
        n = self.q.shape[1]
        cols = ["t", "s", "sdot"]
        for stem in ("q", "qd", "qdd", "tau"):
            cols += [f"{stem}_{i + 1}" for i in range(n)]
        for cid in self.contact_order:
            cols += [f"{cid}_{part}" for part in ("fx", "fy", "fz", "tx", "ty", "tz", "margin")]
        table = [self.t, self.s, self.sdot, self.q.T, self.qd.T, self.qdd.T, self.tau.T]
        table += [arr for cid in self.contact_order for arr in (self.wrench[cid].T, self.margin[cid])]
        data = np.column_stack([np.atleast_2d(part).reshape(-1, self.t.size).T for part in table])
        header = ",".join(cols)
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.12g")

    def to_json_dict(self) -> dict:
        p = self.profile
        return {
            "format": TRAJECTORY_FORMAT,
            "scenario": self.scenario_name,
            "status": self.status,
            "grid_intervals": self.grid_intervals,
            "boundary_sdot": list(self.boundary_sdot),
            "objective": self.objective,
            "total_time": self.total_time,
            "solver": self.meta,
            "profile": {
                "accel": p.accel.tolist(),
                "speed_sq": p.speed_sq.tolist(),
                "speed_aux": p.speed_aux.tolist(),
                "inverse_avg": p.inverse_avg.tolist(),
                "torque": p.torque.tolist(),
                "wrenches": {cid: p.wrenches[cid].tolist() for cid in self.contact_order},
            },
            "series": {
                "t": self.t.tolist(),
                "s": self.s.tolist(),
                "sdot": self.sdot.tolist(),
                "q": self.q.tolist(),
                "qd": self.qd.tolist(),
                "qdd": self.qdd.tolist(),
                "tau": self.tau.tolist(),
                "wrench": {cid: self.wrench[cid].tolist() for cid in self.contact_order},
                "margin": {cid: self.margin[cid].tolist() for cid in self.contact_order},
            },
        }


def profile_from_json_dict(data: dict) -> tuple[ScalingVariables, int, tuple]:
    """Rebuild the raw solve profile from a trajectory JSON dump."""
    if data.get("format") != TRAJECTORY_FORMAT:
        raise ScenarioError(f"unsupported trajectory format {data.get('format')!r}")
    p = data["profile"]
    profile = ScalingVariables(
        accel=np.asarray(p["accel"], dtype=float),
        speed_sq=np.asarray(p["speed_sq"], dtype=float),
        speed_aux=np.asarray(p["speed_aux"], dtype=float),
        inverse_avg=np.asarray(p["inverse_avg"], dtype=float),
        torque=np.asarray(p["torque"], dtype=float),
        wrenches={cid: np.asarray(w, dtype=float) for cid, w in p["wrenches"].items()},
    )
    boundary = tuple(None if v is None else float(v) for v in data["boundary_sdot"])
    return profile, int(data["grid_intervals"]), boundary


def solve_scenario(scenario: Scenario, settings: RunSettings = RunSettings()):
    """Assemble and solve; returns (program, report, solution-or-None)."""
    grid = build_grid(settings.grid_override or scenario.grid_points)
    program = assemble_scenario(scenario, grid)
    report, solution = solve_conic_program(program, settings.solver)
    return program, report, solution


def run(scenario: Scenario, settings: RunSettings = RunSettings()) -> TrajectoryOutput:
    """Full pipeline: solve, recover the time map, resample, attach forces."""
    program, report, solution = solve_scenario(scenario, settings)
    if report.status in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE):
        raise InfeasibleScenarioError(
            f"scenario {scenario.name!r} cannot be executed within the given "
            f"actuator and contact force limits ({report.status})",
            report,
        )
    if report.status != OPTIMAL:
        raise SolverFailureError(
            f"solver ended with {report.status} on scenario {scenario.name!r}", report
        )
    grid = program.grid
    timing = recover_time(solution.speed_sq, grid)
    scene = scenario.scene

    m = max(2, int(settings.output_points))
    t = np.linspace(0.0, timing.total, m)
    s = np.array([timing.s_of(tj) for tj in t])
    s[0], s[-1] = 0.0, 1.0
    K = grid.intervals
    k_idx = np.clip(np.searchsorted(grid.points, s, side="right") - 1, 0, K - 1)
    frac = (s - grid.points[k_idx]) / grid.spacing
    b = solution.speed_sq[k_idx] * (1.0 - frac) + solution.speed_sq[k_idx + 1] * frac
    sdot = np.sqrt(np.maximum(b, 0.0))
    sddot = solution.accel[k_idx]

    q = np.hstack([r.path.position(s) for r in scene.robots])
    dq = np.hstack([r.path.derivative(s) for r in scene.robots])
    ddq = np.hstack([r.path.second_derivative(s) for r in scene.robots])
    qd = dq * sdot[:, None]
    qdd = ddq * b[:, None] + dq * sddot[:, None]
    tau = solution.torque[k_idx]

    descriptors = {
        f"{obj.model.name}/{c.name}": c.descriptor()
        for obj in scene.objects
        for c in obj.model.contacts
    }
    wrench = {cid: solution.wrenches[cid][k_idx] for cid in program.contact_order}
    margin = {
        cid: np.array(
            [cone_margin(descriptors[cid], w, pin_tol=OUTPUT_PIN_TOL) for w in wrench[cid]]
        )
        for cid in program.contact_order
    }

    return TrajectoryOutput(
        scenario_name=scenario.name,
        status=report.status,
        grid_intervals=K,
        boundary_sdot=scenario.boundary_sdot,
        objective=float(report.objective),
        total_time=float(timing.total),
        t=t,
        s=s,
        sdot=sdot,
        q=q,
        qd=qd,
        qdd=qdd,
        tau=tau,
        wrench=wrench,
        margin=margin,
        profile=solution,
        contact_order=program.contact_order,
        meta={
            "iterations": report.iterations,
            "wall_time": report.wall_time,
            "residuals": {k: float(v) for k, v in report.residuals.items()},
            "free_scalars": program.free_scalar_count(),
        },
    )


# parameter sweeps


@dataclass(frozen=True)
class SweepPoint:
    value: float
    status: str
    total_time: float | None
    objective: float | None


def _sweep_worker(payload):
    data, params, value, grid, solver = payload
    data = copy.deepcopy(data)
    for p in params:
        set_by_path(data, p, value)
    scenario = scenario_from_dict(data)
    settings = RunSettings(grid_override=grid, output_points=2, solver=solver)
    try:
        program, report, solution = solve_scenario(scenario, settings)
    except ValueError as exc:
        raise ScenarioError(f"sweep value {value}: {exc}") from exc
    if report.status == OPTIMAL:
        total = recover_time(solution.speed_sq, program.grid).total
        return SweepPoint(value, report.status, float(total), float(report.objective))
    return SweepPoint(value, report.status, None, None)


def sweep_parallelism(requested: int | None = None) -> int:
    """Worker count for sweeps, capped by the TOPP_THREADS environment knob."""
    cap = os.environ.get("TOPP_THREADS")
    if requested is not None and requested >= 1:
        limit = requested
    elif cap is not None and cap.isdigit() and int(cap) >= 1:
        limit = int(cap)
    else:
        limit = os.cpu_count() or 1
    return max(1, limit)


def sweep(
    scenario: Scenario,
    param,
    values,
    grid: int | None = None,
    solver: SolverSettings = SolverSettings(),
    threads: int | None = None,
) -> list[SweepPoint]:
    """Re-solve the scenario at each parameter value; one process per run.

    `param` is a dotted path into the scenario dict ("objects.box.mass") or a
    list of such paths all receiving the same value.
    """
    params = [param] if isinstance(param, str) else list(param)
    values = [float(v) for v in values]
    jobs = [(scenario.source, params, v, grid, solver) for v in values]
    workers = min(sweep_parallelism(threads), max(len(jobs), 1))
    if workers <= 1 or len(jobs) <= 1:
        return [_sweep_worker(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_worker, jobs))
