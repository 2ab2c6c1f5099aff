"""Rigid-body dynamics: recursive Newton-Euler, grasp maps, path-domain sampling.

The torque-side identity used throughout: along a geometric path q(s) with
speed sdot = ds/dt,

    tau = accel_coeff(s) * sddot + velsq_coeff(s) * sdot^2 + gravity_term(s)
          - sum_contacts J_c(s)^T F_c

and each rigidly-held body satisfies, in its own frame,

    sum_contacts sign * G_c F_c + f_ext = A(s) * sddot + B(s) * sdot^2.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contacts import ContactSpec, cone_descriptor_for
from .liegroup import (
    Pose,
    Twist,
    body_jacobian,
    forward_kinematics,
    jacobian_path_derivative,
    pose_exp,
    skew,
)
from .paths import JointPath
from .robot import RobotModel


def _ad(V: np.ndarray) -> np.ndarray:
    """Twist commutator matrix: ad(V) W = [V, W], [linear; angular] ordering."""
    v, w = V[:3], V[3:]
    out = np.zeros((6, 6))
    out[:3, :3] = skew(w)
    out[:3, 3:] = skew(v)
    out[3:, 3:] = skew(w)
    return out


def _chain_data(model: RobotModel):
    """Per-link screw in the link frame plus the home transform to the parent."""
    data = []
    prev_home = Pose.identity()
    for joint, link in zip(model.joints, model.links):
        inv_home = link.home_pose.inverse()
        A = inv_home.adjoint() @ joint.twist.as_array()
        data.append((A, inv_home.compose(prev_home), link.inertia.spatial_inertia()))
        prev_home = link.home_pose
    return data


def inverse_dynamics(model: RobotModel, q, qd, qdd, gravity) -> np.ndarray:
    """Joint torques for a free chain (no tip wrench) via Newton-Euler recursion."""
    q = np.asarray(q, dtype=float).reshape(-1)
    qd = np.asarray(qd, dtype=float).reshape(-1)
    qdd = np.asarray(qdd, dtype=float).reshape(-1)
    n = model.dof
    if not (q.shape[0] == qd.shape[0] == qdd.shape[0] == n):
        raise ValueError("q, qd, qdd must all have length dof")
    g = np.asarray(gravity, dtype=float).reshape(3)

    chain = _chain_data(model)
    V = np.zeros(6)
    Vd = np.concatenate([-g, np.zeros(3)])
    vel = []
    acc = []
    ads_down = []
    for i, (A, B, _) in enumerate(chain):
        T = pose_exp(Twist.from_array(A), -q[i]).compose(B)
        Ad = T.adjoint()
        V = Ad @ V + A * qd[i]
        Vd = Ad @ Vd + (_ad(V) @ A) * qd[i] + A * qdd[i]
        vel.append(V)
        acc.append(Vd)
        ads_down.append(Ad)

    tau = np.zeros(n)
    F = np.zeros(6)
    for i in range(n - 1, -1, -1):
        A, _, G = chain[i]
        if i + 1 < n:
            F = ads_down[i + 1].T @ F
        else:
            F = np.zeros(6)
        F = F + G @ acc[i] - _ad(vel[i]).T @ (G @ vel[i])
        tau[i] = A @ F
    return tau


def mass_matrix(model: RobotModel, q) -> np.ndarray:
    """Joint-space mass matrix assembled column by column from unit accelerations."""
    n = model.dof
    zeros = np.zeros(n)
    M = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        M[:, i] = inverse_dynamics(model, q, zeros, e, np.zeros(3))
    return M


def coriolis_vector(model: RobotModel, q, qd) -> np.ndarray:
    """C(q, qd) qd: velocity-product torques."""
    return inverse_dynamics(model, q, qd, np.zeros(model.dof), np.zeros(3))


def gravity_vector(model: RobotModel, q, gravity) -> np.ndarray:
    return inverse_dynamics(model, q, np.zeros(model.dof), np.zeros(model.dof), gravity)


def grasp_map(contact_pose: Pose) -> np.ndarray:
    """Wrench map from a contact frame into the body frame holding it."""
    return contact_pose.wrench_map()


@dataclass(frozen=True)
class ObjectModel:
    """Rigid body manipulated through contacts; frame at the center of mass."""

    name: str
    mass: float
    inertia: np.ndarray  # 3x3 rotational inertia about the com
    contacts: tuple[ContactSpec, ...] = ()

    def __post_init__(self):
        if self.mass <= 0.0:
            raise ValueError("object mass must be positive")
        I = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if np.linalg.norm(I - I.T) > 1e-9:
            raise ValueError("object inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(I) < -1e-12):
            raise ValueError("object inertia must be positive semidefinite")
        object.__setattr__(self, "inertia", I)
        names = [c.name for c in self.contacts]
        if len(set(names)) != len(names):
            raise ValueError("contact names must be unique per object")

    def spatial_mass(self) -> np.ndarray:
        M = np.zeros((6, 6))
        M[:3, :3] = self.mass * np.eye(3)
        M[3:, 3:] = self.inertia
        return M


def object_net_wrench_coefficients(
    obj: ObjectModel, j_dir: np.ndarray, j_dir_rate: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (A, B) of the body net wrench M_O Vdot + velocity products.

    The net wrench on the body is A * sddot + B * sdot^2 with the quadratic
    term carrying both the direction rate and the gyroscopic cross products.
    """
    M = obj.spatial_mass()
    v, w = j_dir[:3], j_dir[3:]
    gyro = np.concatenate([np.cross(w, obj.mass * v), np.cross(w, obj.inertia @ w)])
    return M @ j_dir, M @ j_dir_rate + gyro


@dataclass(frozen=True)
class RobotInstance:
    model: RobotModel
    path: JointPath

    def __post_init__(self):
        if self.path.dof != self.model.dof:
            raise ValueError("path and robot dof mismatch")


@dataclass(frozen=True)
class ObjectInstance:
    """An object placed in the scene, rigidly attached through the grasp chain.

    `parent_robot`/`parent_object` name the body this object rides on;
    `offset` is the pose of the object frame in the parent frame (None for a
    robot parent means the robot's tool offset).
    """

    model: ObjectModel
    parent_robot: int | None = None
    parent_object: str | None = None
    offset: Pose | None = None
    external_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))

    def __post_init__(self):
        object.__setattr__(
            self, "external_wrench", np.asarray(self.external_wrench, dtype=float).reshape(6)
        )
        if (self.parent_robot is None) == (self.parent_object is None):
            raise ValueError("object needs exactly one parent (robot or object)")


@dataclass(frozen=True)
class Scene:
    """Everything the transcription needs: robots, objects, gravity."""

    robots: tuple[RobotInstance, ...]
    objects: tuple[ObjectInstance, ...] = ()
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))
    jacobian_method: str = "analytic"

    def __post_init__(self):
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float).reshape(3))
        if not self.robots:
            raise ValueError("scene needs at least one robot")
        by_name = {}
        for obj in self.objects:
            if obj.model.name in by_name:
                raise ValueError(f"duplicate object name {obj.model.name!r}")
            by_name[obj.model.name] = obj
        for obj in self.objects:
            if obj.parent_robot is not None and not (0 <= obj.parent_robot < len(self.robots)):
                raise ValueError(f"object {obj.model.name!r} references missing robot")
            if obj.parent_object is not None and obj.parent_object not in by_name:
                raise ValueError(f"object {obj.model.name!r} references missing parent object")
        for obj in self.objects:
            self.offset_from_ee(obj.model.name)  # raises on attachment cycles
        for obj in self.objects:
            for c in obj.model.contacts:
                if c.kind == "manipulator" and not (0 <= c.robot < len(self.robots)):
                    raise ValueError(f"contact {c.name!r} references missing robot")
                if c.kind == "object":
                    if c.against not in by_name:
                        raise ValueError(f"contact {c.name!r} references missing object {c.against!r}")
                    if c.pose_in_other is None:
                        raise ValueError(f"object contact {c.name!r} needs pose_in_other")

    @property
    def dof(self) -> int:
        return sum(r.model.dof for r in self.robots)

    def robot_slices(self) -> list[slice]:
        out = []
        at = 0
        for r in self.robots:
            out.append(slice(at, at + r.model.dof))
            at += r.model.dof
        return out

    def object_by_name(self, name: str) -> ObjectInstance:
        for obj in self.objects:
            if obj.model.name == name:
                return obj
        raise KeyError(name)

    def offset_from_ee(self, name: str, _depth: int = 0) -> Pose:
        """Constant pose of an object frame relative to the grasping robot's ee."""
        if _depth > len(self.objects):
            raise ValueError("attachment cycle in object parents")
        obj = self.object_by_name(name)
        if obj.parent_robot is not None:
            own = obj.offset if obj.offset is not None else self.robots[obj.parent_robot].model.tool_offset
            return own
        if obj.offset is None:
            raise ValueError(f"object {name!r} with object parent needs an explicit offset")
        return self.offset_from_ee(obj.parent_object, _depth + 1).compose(obj.offset)

    def contact_ids(self) -> list[str]:
        return [f"{obj.model.name}/{c.name}" for obj in self.objects for c in obj.model.contacts]


@dataclass(frozen=True)
class ObjectSample:
    """One object's balance-row data at one path point."""

    name: str
    accel_coeff: np.ndarray  # 6, multiplies sddot
    velsq_coeff: np.ndarray  # 6, multiplies sdot^2
    external: np.ndarray  # 6, in the object frame
    contact_terms: tuple[tuple[str, float, np.ndarray], ...]  # (contact id, sign, 6x6 map)


@dataclass(frozen=True)
class PathDynamicsSample:
    """All path-dependent dynamics data at one value of s."""

    s: float
    q: np.ndarray
    dq: np.ndarray
    ddq: np.ndarray
    torque_accel_coeff: np.ndarray  # n, multiplies sddot
    torque_velsq_coeff: np.ndarray  # n, multiplies sdot^2
    torque_gravity: np.ndarray  # n
    contact_jacobians: dict  # contact id -> (6, n) body Jacobian at the contact frame
    objects: tuple[ObjectSample, ...]


def _world_normal_rotation(R_obj: np.ndarray, world_axis: np.ndarray, hint: np.ndarray) -> np.ndarray:
    """Contact orientation in the object frame with z pinned to a world axis."""
    z = R_obj.T @ (world_axis / np.linalg.norm(world_axis))
    x = hint - (hint @ z) * z
    nx = np.linalg.norm(x)
    if nx < 1e-9:
        raise ValueError("contact tangent hint parallel to the world normal")
    x = x / nx
    return np.column_stack([x, np.cross(z, x), z])


def contact_pose_at(scene: Scene, obj: ObjectInstance, contact: ContactSpec, R_obj_world: np.ndarray) -> Pose:
    """Pose of a contact frame in its owning object's frame at the current sample."""
    if contact.frame_mode == "body_fixed":
        return contact.pose
    R = _world_normal_rotation(R_obj_world, contact.world_axis, contact.pose.rotation[:, 0])
    return Pose(R, contact.pose.translation)


def sample_path_dynamics(scene: Scene, s: float) -> PathDynamicsSample:
    """Evaluate every path-dependent coefficient of the dynamics at one s."""
    n = scene.dof
    slices = scene.robot_slices()
    q = np.zeros(n)
    dq = np.zeros(n)
    ddq = np.zeros(n)
    acc = np.zeros(n)
    velsq = np.zeros(n)
    grav = np.zeros(n)
    for r, sl in zip(scene.robots, slices):
        qi = r.path.position(s)
        dqi = r.path.derivative(s)
        ddqi = r.path.second_derivative(s)
        q[sl], dq[sl], ddq[sl] = qi, dqi, ddqi
        zeros = np.zeros(r.model.dof)
        acc[sl] = inverse_dynamics(r.model, qi, zeros, dqi, np.zeros(3))
        velsq[sl] = inverse_dynamics(r.model, qi, dqi, ddqi, np.zeros(3))
        grav[sl] = inverse_dynamics(r.model, qi, zeros, zeros, scene.gravity)

    lead = scene.robots[0]
    q0 = q[slices[0]]
    contact_jacs: dict[str, np.ndarray] = {}
    object_samples = []
    for obj in scene.objects:
        cid_prefix = obj.model.name
        offset = scene.offset_from_ee(cid_prefix)
        ee_pose = forward_kinematics(lead.model, q0)
        R_obj_world = (ee_pose.compose(offset)).rotation

        J_dir, J_rate = _object_direction(scene, obj, s)
        A, B = object_net_wrench_coefficients(obj.model, J_dir, J_rate)
        weight = np.concatenate([R_obj_world.T @ (obj.model.mass * scene.gravity), np.zeros(3)])
        external = weight + obj.external_wrench

        terms = []
        for c in obj.model.contacts:
            cid = f"{cid_prefix}/{c.name}"
            pose_c = contact_pose_at(scene, obj, c, R_obj_world)
            terms.append((cid, 1.0, grasp_map(pose_c)))
            if c.kind == "manipulator":
                holder = scene.robots[c.robot]
                if c.robot == _grasping_robot(scene, obj):
                    off = offset.compose(pose_c)
                else:
                    off = holder.model.tool_offset.compose(pose_c)
                Jc = body_jacobian(holder.model, q[slices[c.robot]], off)
                full = np.zeros((6, n))
                full[:, slices[c.robot]] = Jc
                contact_jacs[cid] = full
        object_samples.append(
            ObjectSample(
                name=cid_prefix,
                accel_coeff=A,
                velsq_coeff=B,
                external=external,
                contact_terms=tuple(terms),
            )
        )

    # Reaction terms: an object contact also appears, negated, on the body it
    # presses against, through that body's own frame.
    extra = {name: [] for name in (o.model.name for o in scene.objects)}
    for obj in scene.objects:
        for c in obj.model.contacts:
            if c.kind == "object":
                cid = f"{obj.model.name}/{c.name}"
                extra[c.against].append((cid, -1.0, grasp_map(c.pose_in_other)))
    if any(extra.values()):
        object_samples = [
            ObjectSample(
                name=os.name,
                accel_coeff=os.accel_coeff,
                velsq_coeff=os.velsq_coeff,
                external=os.external,
                contact_terms=os.contact_terms + tuple(extra[os.name]),
            )
            for os in object_samples
        ]

    return PathDynamicsSample(
        s=s,
        q=q,
        dq=dq,
        ddq=ddq,
        torque_accel_coeff=acc,
        torque_velsq_coeff=velsq,
        torque_gravity=grav,
        contact_jacobians=contact_jacs,
        objects=tuple(object_samples),
    )


def _grasping_robot(scene: Scene, obj: ObjectInstance) -> int:
    while obj.parent_robot is None:
        obj = scene.object_by_name(obj.parent_object)
    return obj.parent_robot


def _object_direction(scene: Scene, obj: ObjectInstance, s: float):
    """Direction and direction-rate of the object frame, via the lead chain."""
    lead = scene.robots[0]
    offset = scene.offset_from_ee(obj.model.name)
    q = lead.path.position(s)
    dq = lead.path.derivative(s)
    ddq = lead.path.second_derivative(s)
    J = body_jacobian(lead.model, q, offset)
    dJ = jacobian_path_derivative(lead.model, lead.path, s, offset, scene.jacobian_method)
    return J @ dq, dJ @ dq + J @ ddq


def stack_dynamics_in_s(scene: Scene, s_values) -> list[PathDynamicsSample]:
    """Sample the path-domain dynamics at each s (typically interval midpoints)."""
    return [sample_path_dynamics(scene, float(s)) for s in np.asarray(s_values, dtype=float)]
