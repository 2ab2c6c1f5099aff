import numpy as np
import pytest
from scipy.integrate import solve_ivp

from contact_topp.contacts import ContactSpec, FrictionParams
from contact_topp.dynamics import (
    ObjectInstance,
    ObjectModel,
    RobotInstance,
    Scene,
    coriolis_vector,
    grasp_map,
    gravity_vector,
    inverse_dynamics,
    mass_matrix,
    object_net_wrench_coefficients,
    sample_path_dynamics,
    stack_dynamics_in_s,
)
from contact_topp.liegroup import Pose, Twist, body_jacobian, forward_kinematics, pose_exp
from contact_topp.paths import JointPath

from conftest import make_limits, planar_arm, spatial_arm

GRAV = np.array([0.0, 0.0, -9.81])


def link_frame_pose(model, q, i):
    T = Pose.identity()
    for joint, qj in zip(model.joints[: i + 1], q[: i + 1]):
        T = T.compose(pose_exp(joint.twist, qj))
    return T.compose(model.links[i].home_pose)


def total_energy(model, q, qd, gravity):
    M = mass_matrix(model, q)
    kinetic = 0.5 * qd @ M @ qd
    potential = 0.0
    for i, link in enumerate(model.links):
        com_world = link_frame_pose(model, q, i).transform_point(link.inertia.com)
        potential -= link.inertia.mass * (gravity @ com_world)
    return kinetic + potential


class TestInverseDynamics:
    def test_pendulum_gravity_closed_form(self):
        arm = planar_arm([0.8], [2.0])
        for q in (0.0, 0.4, -1.1):
            tau = gravity_vector(arm, [q], GRAV)
            # Rotation about +y swings the tip downward for positive q, so the
            # holding torque is negative at q = 0.
            assert np.isclose(tau[0], -2.0 * 9.81 * 0.4 * np.cos(q), atol=1e-10)

    def test_pendulum_inertia_closed_form(self):
        arm = planar_arm([0.8], [2.0])
        M = mass_matrix(arm, [0.3])
        expected = 2.0 * 0.8**2 / 12.0 + 2.0 * 0.4**2  # rod about its end
        assert np.isclose(M[0, 0], expected, atol=1e-12)

    def test_mass_matrix_symmetric_positive_definite(self):
        arm = spatial_arm()
        rng = np.random.default_rng(2)
        for _ in range(5):
            q = rng.normal(scale=0.8, size=4)
            M = mass_matrix(arm, q)
            assert np.allclose(M, M.T, atol=1e-10)
            assert np.min(np.linalg.eigvalsh(M)) > 0.0

    def test_decomposition_reassembles_rnea(self):
        arm = spatial_arm()
        rng = np.random.default_rng(7)
        for _ in range(5):
            q, qd, qdd = rng.normal(scale=0.7, size=(3, 4))
            tau = inverse_dynamics(arm, q, qd, qdd, GRAV)
            rebuilt = (
                mass_matrix(arm, q) @ qdd
                + coriolis_vector(arm, q, qd)
                + gravity_vector(arm, q, GRAV)
            )
            assert np.allclose(tau, rebuilt, atol=1e-9)

    def test_coriolis_scales_quadratically(self):
        arm = spatial_arm()
        rng = np.random.default_rng(9)
        q, qd = rng.normal(scale=0.6, size=(2, 4))
        c1 = coriolis_vector(arm, q, qd)
        c2 = coriolis_vector(arm, q, 2.0 * qd)
        assert np.allclose(c2, 4.0 * c1, atol=1e-10)

    def test_energy_conservation_free_swing(self):
        # Unforced swing under gravity conserves total energy.
        arm = planar_arm([0.6, 0.4], [1.5, 0.9])

        def rhs(_, y):
            q, qd = y[:2], y[2:]
            M = mass_matrix(arm, q)
            bias = coriolis_vector(arm, q, qd) + gravity_vector(arm, q, GRAV)
            return np.concatenate([qd, np.linalg.solve(M, -bias)])

        y0 = np.array([0.4, -0.2, 0.0, 0.0])
        sol = solve_ivp(rhs, (0.0, 1.2), y0, rtol=1e-10, atol=1e-12, dense_output=True)
        e0 = total_energy(arm, y0[:2], y0[2:], GRAV)
        for t in (0.3, 0.8, 1.2):
            y = sol.sol(t)
            assert np.isclose(total_energy(arm, y[:2], y[2:], GRAV), e0, atol=1e-6)

    def test_power_balance_with_actuation(self):
        arm = spatial_arm()
        tau_const = np.array([1.0, -2.0, 3.0, 0.5])

        def rhs(_, y):
            q, qd = y[:4], y[4:]
            M = mass_matrix(arm, q)
            bias = coriolis_vector(arm, q, qd) + gravity_vector(arm, q, GRAV)
            return np.concatenate([qd, np.linalg.solve(M, tau_const - bias)])

        y0 = np.concatenate([np.array([0.2, -0.3, 0.1, 0.6]), np.zeros(4)])
        sol = solve_ivp(rhs, (0.0, 0.8), y0, rtol=1e-10, atol=1e-12, dense_output=True)
        ts = np.linspace(0.0, 0.8, 400)
        qd_t = np.array([sol.sol(t)[4:] for t in ts])
        work = np.trapezoid(qd_t @ tau_const, ts)
        e0 = total_energy(arm, y0[:4], y0[4:], GRAV)
        e1 = total_energy(arm, sol.sol(0.8)[:4], sol.sol(0.8)[4:], GRAV)
        assert np.isclose(e1 - e0, work, atol=1e-5)


class TestGraspMap:
    def test_block_structure(self):
        pose = pose_exp(Twist(linear=[0.1, 0.2, -0.1], angular=[0.3, -0.2, 0.5]), 1.0)
        G = grasp_map(pose)
        R = pose.rotation
        assert np.allclose(G[:3, :3], R)
        assert np.allclose(G[3:, 3:], R)
        assert np.allclose(G[:3, 3:], 0.0)

    def test_round_trip_with_inverse(self):
        pose = pose_exp(Twist(linear=[0.1, 0.2, -0.1], angular=[0.3, -0.2, 0.5]), 0.7)
        G = grasp_map(pose)
        G_inv = grasp_map(pose.inverse())
        assert np.allclose(G @ G_inv, np.eye(6), atol=1e-12)

    def test_identity_pose(self):
        assert np.allclose(grasp_map(Pose.identity()), np.eye(6))

    def test_pure_force_moment_arm(self):
        pose = Pose(np.eye(3), [0.0, 0.2, 0.0])
        F = grasp_map(pose) @ np.array([0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        # force z at offset +y produces +x moment
        assert np.allclose(F, [0.0, 0.0, 1.0, 0.2, 0.0, 0.0], atol=1e-12)


def grasped_box_scene(mass=1.2, contacts=(), arm=None, waypoints=None, boundary="natural"):
    arm = arm if arm is not None else spatial_arm()
    rng = np.random.default_rng(21)
    W = waypoints if waypoints is not None else rng.normal(scale=0.5, size=(4, arm.dof))
    box = ObjectModel(
        name="box",
        mass=mass,
        inertia=np.diag([0.002, 0.003, 0.004]),
        contacts=tuple(contacts),
    )
    scene = Scene(
        robots=(RobotInstance(arm, JointPath(W, boundary=boundary)),),
        objects=(ObjectInstance(model=box, parent_robot=0),),
        gravity=GRAV,
    )
    return scene


class TestObjectCoefficients:
    def test_against_world_momentum_differentiation(self):
        # Independent oracle: differentiate world-frame linear and angular
        # momentum of the rigidly held object along s(t), map back to the body
        # frame, compare with A*sddot + B*sdot^2.
        scene = grasped_box_scene()
        arm = scene.robots[0].model
        path = scene.robots[0].path
        obj = scene.objects[0]
        offset = scene.offset_from_ee("box")

        def s_of_t(t):
            return 0.45 + 0.25 * np.sin(t)

        def sdot_of_t(t):
            return 0.25 * np.cos(t)

        def sddot_of_t(t):
            return -0.25 * np.sin(t)

        def world_momenta(t):
            s = s_of_t(t)
            q = path.position(s)
            X = forward_kinematics(arm, q).compose(offset)
            J = body_jacobian(arm, q, offset)
            V = J @ path.derivative(s) * sdot_of_t(t)
            v, w = V[:3], V[3:]
            P = obj.model.mass * (X.rotation @ v)
            L = X.rotation @ (obj.model.inertia @ w)
            return X.rotation, P, L

        t0, h = 0.7, 1e-6
        s0 = s_of_t(t0)
        sample = sample_path_dynamics(scene, s0)
        A = sample.objects[0].accel_coeff
        B = sample.objects[0].velsq_coeff
        predicted = A * sddot_of_t(t0) + B * sdot_of_t(t0) ** 2

        R0, _, _ = world_momenta(t0)
        _, Pp, Lp = world_momenta(t0 + h)
        _, Pm, Lm = world_momenta(t0 - h)
        force_body = R0.T @ (Pp - Pm) / (2 * h)
        moment_body = R0.T @ (Lp - Lm) / (2 * h)
        assert np.max(np.abs(predicted[:3] - force_body)) < 1e-4
        assert np.max(np.abs(predicted[3:] - moment_body)) < 1e-4

    def test_pure_rotation_gyroscopic_term(self):
        obj = ObjectModel("gyro", 2.0, np.diag([0.01, 0.02, 0.04]))
        j_dir = np.array([0.0, 0.0, 0.0, 0.3, -0.2, 0.5])
        A, B = object_net_wrench_coefficients(obj, j_dir, np.zeros(6))
        w = j_dir[3:]
        assert np.allclose(A[3:], obj.inertia @ w)
        assert np.allclose(B[3:], np.cross(w, obj.inertia @ w))
        assert np.allclose(B[:3], 0.0)


def two_finger_contacts(fz_max=40.0):
    mk = lambda name, y, R: ContactSpec(
        name=name,
        kind="manipulator",
        model="sfce",
        pose=Pose(R, [0.0, y, 0.0]),
        params=FrictionParams(mu=0.6, ex=1.0, ey=1.0, ez=0.25),
        fz_max=fz_max,
        robot=0,
    )
    R_left = np.column_stack([[0, 0, 1], [1, 0, 0], [0, 1, 0]])
    R_right = np.column_stack([[0, 0, 1], [-1, 0, 0], [0, -1, 0]])
    return (mk("finger_l", -0.04, R_left), mk("finger_r", 0.04, R_right))


class TestPathDynamicsSampling:
    def test_rnea_substitution_identity(self):
        # tau(s) rebuilt from the path coefficients must equal a direct
        # inverse-dynamics call at matching joint state.
        scene = grasped_box_scene(contacts=two_finger_contacts())
        arm = scene.robots[0].model
        path = scene.robots[0].path
        rng = np.random.default_rng(4)
        for _ in range(10):
            s = rng.uniform(0.05, 0.95)
            sdot = rng.uniform(0.0, 2.0)
            sddot = rng.normal(scale=3.0)
            sample = sample_path_dynamics(scene, s)
            lhs = (
                sample.torque_accel_coeff * sddot
                + sample.torque_velsq_coeff * sdot**2
                + sample.torque_gravity
            )
            q = path.position(s)
            qd = path.derivative(s) * sdot
            qdd = path.second_derivative(s) * sdot**2 + path.derivative(s) * sddot
            assert np.max(np.abs(lhs - inverse_dynamics(arm, q, qd, qdd, GRAV))) < 1e-9

    def test_contact_jacobian_consistency(self):
        # J at the contact frame equals the object-frame Jacobian pushed
        # through the rigid contact offset.
        scene = grasped_box_scene(contacts=two_finger_contacts())
        arm = scene.robots[0].model
        sample = sample_path_dynamics(scene, 0.37)
        q = scene.robots[0].path.position(0.37)
        offset = scene.offset_from_ee("box")
        J_obj = body_jacobian(arm, q, offset)
        for c in scene.objects[0].model.contacts:
            Jc = sample.contact_jacobians[f"box/{c.name}"]
            assert np.allclose(Jc, c.pose.inverse().adjoint() @ J_obj, atol=1e-10)

    def test_torque_coupling_collapses_to_object_frame(self):
        # For contacts on one rigid body held by one chain, sum J_c^T F_c
        # equals J_obj^T sum G_c F_c: internal squeeze costs no torque.
        scene = grasped_box_scene(contacts=two_finger_contacts())
        sample = sample_path_dynamics(scene, 0.52)
        q = scene.robots[0].path.position(0.52)
        J_obj = body_jacobian(scene.robots[0].model, q, scene.offset_from_ee("box"))
        rng = np.random.default_rng(8)
        F = {cid: rng.normal(size=6) for cid in sample.contact_jacobians}
        torque = sum(sample.contact_jacobians[cid].T @ F[cid] for cid in F)
        wrench = sum(
            sign * G @ F[cid]
            for cid, sign, G in sample.objects[0].contact_terms
        )
        assert np.allclose(torque, J_obj.T @ wrench, atol=1e-10)

    def test_static_external_wrench_is_weight(self):
        scene = grasped_box_scene()
        sample = sample_path_dynamics(scene, 0.4)
        ext = sample.objects[0].external
        assert np.isclose(np.linalg.norm(ext[:3]), scene.objects[0].model.mass * 9.81, atol=1e-10)
        assert np.allclose(ext[3:], 0.0, atol=1e-12)

    def test_stack_returns_one_sample_per_point(self):
        scene = grasped_box_scene()
        samples = stack_dynamics_in_s(scene, [0.1, 0.5, 0.9])
        assert [pytest.approx(x.s) for x in samples] == [0.1, 0.5, 0.9]


class TestSceneValidation:
    def test_missing_parent_rejected(self):
        box = ObjectModel("box", 1.0, np.eye(3) * 0.01)
        with pytest.raises(ValueError):
            Scene(
                robots=(RobotInstance(spatial_arm(), JointPath(np.zeros((2, 4)))),),
                objects=(ObjectInstance(model=box, parent_robot=3),),
            )

    def test_nonpositive_mass_rejected(self):
        with pytest.raises(ValueError):
            ObjectModel("bad", 0.0, np.eye(3) * 0.01)

    def test_object_contact_needs_other_pose(self):
        box = ObjectModel(
            "box",
            1.0,
            np.eye(3) * 0.01,
            contacts=(
                ContactSpec(
                    name="c",
                    kind="object",
                    model="pcwf",
                    pose=Pose.identity(),
                    params=FrictionParams(mu=0.3),
                    against="box",
                ),
            ),
        )
        with pytest.raises(ValueError, match="pose_in_other"):
            Scene(
                robots=(RobotInstance(spatial_arm(), JointPath(np.zeros((2, 4)))),),
                objects=(ObjectInstance(model=box, parent_robot=0),),
            )
