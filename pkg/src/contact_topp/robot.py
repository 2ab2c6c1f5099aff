"""Serial-chain robot model: joint screws, link inertias, actuation limits."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .liegroup import Pose, Twist, skew

JOINT_TYPES = ("revolute", "prismatic")


@dataclass(frozen=True)
class JointDef:
    kind: str
    twist: Twist

    def __post_init__(self):
        if self.kind not in JOINT_TYPES:
            raise ValueError(f"unknown joint type {self.kind!r}")


@dataclass(frozen=True)
class JointLimits:
    """Per-joint actuation envelope; arrays of length dof."""

    torque_lower: np.ndarray
    torque_upper: np.ndarray
    velocity_max: np.ndarray
    accel_lower: np.ndarray
    accel_upper: np.ndarray

    def __post_init__(self):
        for name in ("torque_lower", "torque_upper", "velocity_max", "accel_lower", "accel_upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        if np.any(self.torque_upper < self.torque_lower):
            raise ValueError("torque_upper < torque_lower")
        if np.any(self.velocity_max <= 0.0):
            raise ValueError("velocity_max must be positive")
        if np.any(self.accel_upper < self.accel_lower):
            raise ValueError("accel_upper < accel_lower")

    def scaled(self, torque: float = 1.0, velocity: float = 1.0, acceleration: float = 1.0) -> "JointLimits":
        return JointLimits(
            self.torque_lower * torque,
            self.torque_upper * torque,
            self.velocity_max * velocity,
            self.accel_lower * acceleration,
            self.accel_upper * acceleration,
        )


@dataclass(frozen=True)
class LinkInertia:
    """Mass properties of one link, expressed in that link's frame."""

    mass: float
    com: np.ndarray
    inertia: np.ndarray  # 3x3 about the com, link-frame axes

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float).reshape(3))
        I = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        if self.mass <= 0.0:
            raise ValueError("link mass must be positive")
        if np.linalg.norm(I - I.T) > 1e-9:
            raise ValueError("inertia tensor must be symmetric")
        if np.any(np.linalg.eigvalsh(I) < -1e-12):
            raise ValueError("inertia tensor must be positive semidefinite")
        object.__setattr__(self, "inertia", I)

    def spatial_inertia(self) -> np.ndarray:
        """6x6 spatial inertia at the link-frame origin, [linear; angular]."""
        m, c = self.mass, self.com
        Sc = skew(c)
        G = np.zeros((6, 6))
        G[:3, :3] = m * np.eye(3)
        G[:3, 3:] = -m * Sc
        G[3:, :3] = m * Sc
        G[3:, 3:] = self.inertia - m * (Sc @ Sc)
        return G


@dataclass(frozen=True)
class Link:
    home_pose: Pose  # link frame in the base frame at q = 0
    inertia: LinkInertia


@dataclass(frozen=True)
class RobotModel:
    name: str
    joints: tuple[JointDef, ...]
    links: tuple[Link, ...]
    x_ref: Pose
    tool_offset: Pose
    limits: JointLimits

    def __post_init__(self):
        n = len(self.joints)
        if len(self.links) != n:
            raise ValueError(f"expected {n} links for {n} joints, got {len(self.links)}")
        if self.limits.velocity_max.shape[0] != n:
            raise ValueError("limit arrays must match the joint count")

    @property
    def dof(self) -> int:
        return len(self.joints)


def _pose_from_json(entry) -> Pose:
    return Pose.from_quaternion(entry["quaternion_wxyz"], entry["translation"])


def _pose_to_json(pose: Pose) -> dict:
    R = pose.rotation
    # Shepperd's method, stable for all rotation matrices.
    t = np.trace(R)
    if t > 0:
        w = 0.5 * np.sqrt(1.0 + t)
        x = (R[2, 1] - R[1, 2]) / (4 * w)
        y = (R[0, 2] - R[2, 0]) / (4 * w)
        z = (R[1, 0] - R[0, 1]) / (4 * w)
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0))
        q = np.zeros(4)
        q[1 + i] = 0.5 * s
        q[0] = (R[k, j] - R[j, k]) / (2 * s)
        q[1 + j] = (R[j, i] + R[i, j]) / (2 * s)
        q[1 + k] = (R[k, i] + R[i, k]) / (2 * s)
        w, x, y, z = q
    return {
        "quaternion_wxyz": [float(w), float(x), float(y), float(z)],
        "translation": [float(v) for v in pose.translation],
    }


def _inertia_from_six(entries) -> np.ndarray:
    ixx, iyy, izz, ixy, ixz, iyz = [float(v) for v in entries]
    return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


def _inertia_to_six(I: np.ndarray) -> list[float]:
    return [float(I[0, 0]), float(I[1, 1]), float(I[2, 2]), float(I[0, 1]), float(I[0, 2]), float(I[1, 2])]


def _limit_entry(j, key, sign):
    """Limit value from JSON; null means unbounded on that side."""
    v = j[key]
    return sign * np.inf if v is None else float(v)


def robot_from_json(data: dict) -> RobotModel:
    try:
        joints = tuple(
            JointDef(j["type"], Twist.from_array(j["twist"])) for j in data["joints"]
        )
        links = tuple(
            Link(
                home_pose=_pose_from_json(l["home_pose"]),
                inertia=LinkInertia(float(l["mass"]), l["com"], _inertia_from_six(l["inertia"])),
            )
            for l in data["links"]
        )
        limits = JointLimits(
            torque_lower=[_limit_entry(j, "torque_min", -1.0) for j in data["joints"]],
            torque_upper=[_limit_entry(j, "torque_max", +1.0) for j in data["joints"]],
            velocity_max=[_limit_entry(j, "velocity_max", +1.0) for j in data["joints"]],
            accel_lower=[_limit_entry(j, "accel_min", -1.0) for j in data["joints"]],
            accel_upper=[_limit_entry(j, "accel_max", +1.0) for j in data["joints"]],
        )
        return RobotModel(
            name=data.get("name", "robot"),
            joints=joints,
            links=links,
            x_ref=_pose_from_json(data["x_ref"]),
            tool_offset=_pose_from_json(data["tool_offset"]),
            limits=limits,
        )
    except KeyError as exc:
        raise ValueError(f"robot model missing field {exc.args[0]!r}") from exc


def robot_to_json(model: RobotModel) -> dict:
    def lim(v):
        return float(v) if np.isfinite(v) else None

    return {
        "name": model.name,
        "joints": [
            {
                "type": j.kind,
                "twist": [float(v) for v in j.twist.as_array()],
                "torque_min": lim(model.limits.torque_lower[i]),
                "torque_max": lim(model.limits.torque_upper[i]),
                "velocity_max": lim(model.limits.velocity_max[i]),
                "accel_min": lim(model.limits.accel_lower[i]),
                "accel_max": lim(model.limits.accel_upper[i]),
            }
            for i, j in enumerate(model.joints)
        ],
        "links": [
            {
                "home_pose": _pose_to_json(l.home_pose),
                "mass": float(l.inertia.mass),
                "com": [float(v) for v in l.inertia.com],
                "inertia": _inertia_to_six(l.inertia.inertia),
            }
            for l in model.links
        ],
        "x_ref": _pose_to_json(model.x_ref),
        "tool_offset": _pose_to_json(model.tool_offset),
    }
