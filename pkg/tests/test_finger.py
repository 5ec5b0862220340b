import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from softfinger.errors import ConfigError
from softfinger.finger import (
    DEFAULT_GEOMETRY,
    FingerGeometry,
    JointConfiguration,
    WireState,
    actuation_torque,
    kinetic_energy,
    mass_matrix,
    mass_matrix_derivatives,
    nonlinear_term,
    wire_elongations,
    wire_jacobian,
)
from softfinger.viscoelastic import simulate_free_motion

GEOM = DEFAULT_GEOMETRY
angles = st.lists(st.floats(-2.5, 2.5), min_size=3, max_size=3).map(np.array)
# the hole-to-hole chord is the wire path only while the facing holes do not cross (|q| < pi - 2a)
routed_angles = st.lists(st.floats(-1.7, 1.7), min_size=3, max_size=3).map(np.array)
rates = st.lists(st.floats(-5, 5), min_size=3, max_size=3).map(np.array)


def _rot(phi):
    return np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])


def chord_elongations(q, d, l_joint):
    """Wire path across each joint from hole coordinates on the two facing link ends."""
    out = []
    for side in (1.0, -1.0):
        total = 0.0
        for qi in q:
            hole_prev = _rot(-qi / 2) @ np.array([-l_joint / 2, side * d])
            hole_next = _rot(qi / 2) @ np.array([l_joint / 2, side * d])
            total += l_joint - np.linalg.norm(hole_next - hole_prev)
        out.append(total)
    return np.array(out)


def kinetic_energy_from_links(q, q_dot, geom):
    theta = np.cumsum(q)
    omega = np.cumsum(q_dot)
    energy = 0.0
    for i in range(geom.n_links):
        # center of link i: full earlier links plus half of link i, as complex numbers
        v = sum(1j * omega[j] * geom.link_lengths[j] * np.exp(1j * theta[j]) for j in range(i))
        v += 1j * omega[i] * 0.5 * geom.link_lengths[i] * np.exp(1j * theta[i])
        energy += 0.5 * geom.link_masses[i] * abs(v) ** 2 + 0.5 * geom.link_inertias[i] * omega[i] ** 2
    return energy


class TestGeometry:
    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigError):
            FingerGeometry((0.03, 0.0, 0.02), (1, 1, 1), (1, 1, 1), 0.004, 0.01)
        with pytest.raises(ConfigError):
            FingerGeometry((0.03, 0.02, 0.02), (1, -1, 1), (1, 1, 1), 0.004, 0.01)

    def test_offset_must_be_below_joint_length(self):
        with pytest.raises(ConfigError):
            FingerGeometry((0.03, 0.02, 0.02), (1, 1, 1), (1, 1, 1), 0.01, 0.01)

    def test_mismatched_lengths(self):
        with pytest.raises(ConfigError):
            FingerGeometry((0.03, 0.02), (1, 1, 1), (1, 1, 1), 0.004, 0.01)

    def test_configuration_bounds(self):
        JointConfiguration((0.1, 0.2, 3.1), (0, 0, 0))
        with pytest.raises(ConfigError):
            JointConfiguration((0.1, np.pi, 0.0), (0, 0, 0))
        with pytest.raises(ConfigError):
            JointConfiguration((0.1, np.nan, 0.0), (0, 0, 0))

    def test_wire_state_tensions(self):
        WireState((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(ConfigError):
            WireState((0.0, 0.0), (-1.0, 0.0))


class TestWires:
    def test_straight_pose_is_zero(self):
        np.testing.assert_allclose(wire_elongations(np.zeros(3), GEOM), 0.0, atol=1e-15)

    def test_matches_hole_geometry(self):
        q = np.array([0.2, 0.2, 0.2])
        expected = chord_elongations(q, 0.004, 0.01)
        np.testing.assert_allclose(wire_elongations(q, GEOM), expected, rtol=1e-12, atol=1e-16)

    @given(routed_angles)
    def test_chord_oracle_everywhere(self, q):
        np.testing.assert_allclose(wire_elongations(q, GEOM), chord_elongations(q, 0.004, 0.01), atol=1e-14)

    @given(angles)
    def test_swap_under_reflection(self, q):
        l_pos, l_neg = wire_elongations(q, GEOM), wire_elongations(-q, GEOM)
        assert l_pos[0] == pytest.approx(l_neg[1], abs=1e-15)
        assert l_pos[1] == pytest.approx(l_neg[0], abs=1e-15)

    @given(angles)
    def test_jacobian_matches_finite_differences(self, q):
        h = 1e-6
        fd = np.empty((3, 2))
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd[i] = (wire_elongations(q + e, GEOM) - wire_elongations(q - e, GEOM)) / (2 * h)
        np.testing.assert_allclose(wire_jacobian(q, GEOM), fd, atol=1e-6)

    def test_columns_opposite_at_straight_pose(self):
        p = wire_jacobian(np.zeros(3), GEOM)
        np.testing.assert_allclose(p[:, 0], -p[:, 1], atol=1e-18)
        np.testing.assert_allclose(p[:, 0], GEOM.wire_offset_d, rtol=1e-12)

    def test_equal_angles_give_equal_entries(self):
        p = wire_jacobian(np.full(3, 0.1), GEOM)
        assert np.ptp(p[:, 0]) == 0.0


class TestActuation:
    def test_zero_tension(self):
        np.testing.assert_array_equal(actuation_torque(np.array([0.3, -0.2, 0.1]), [0.0, 0.0], GEOM), 0.0)

    @given(angles, st.floats(0, 20), st.floats(0, 20))
    def test_linear_in_tension(self, q, f1, f2):
        f = np.array([f1, f2])
        np.testing.assert_allclose(actuation_torque(q, 2 * f, GEOM), 2 * actuation_torque(q, f, GEOM), rtol=1e-14,
                                   atol=1e-300)

    def test_balanced_tensions_cancel_at_straight_pose(self):
        np.testing.assert_allclose(actuation_torque(np.zeros(3), [1.0, 1.0], GEOM), 0.0, atol=1e-18)

    def test_negative_tension_rejected(self):
        with pytest.raises(ConfigError):
            actuation_torque(np.zeros(3), [1.0, -0.1], GEOM)


class TestMassMatrix:
    @given(angles)
    def test_symmetric_positive_definite(self, q):
        m = mass_matrix(q, GEOM)
        np.testing.assert_array_equal(m, m.T)
        assert np.all(np.linalg.eigvalsh(m) > 0)

    @given(angles, rates)
    def test_kinetic_energy_oracle(self, q, q_dot):
        expected = kinetic_energy_from_links(q, q_dot, GEOM)
        assert kinetic_energy(q, q_dot, GEOM) == pytest.approx(expected, rel=1e-10, abs=1e-300)

    @given(angles, st.floats(-3, 3))
    def test_independent_of_base_angle(self, q, q1):
        moved = q.copy()
        moved[0] = q1
        np.testing.assert_allclose(mass_matrix(q, GEOM), mass_matrix(moved, GEOM), rtol=1e-12, atol=1e-20)

    @given(angles)
    def test_derivatives_match_finite_differences(self, q):
        h = 1e-6
        dm = mass_matrix_derivatives(q, GEOM)
        for p in range(3):
            e = np.zeros(3)
            e[p] = h
            fd = (mass_matrix(q + e, GEOM) - mass_matrix(q - e, GEOM)) / (2 * h)
            np.testing.assert_allclose(dm[p], fd, atol=1e-12)


class TestNonlinearTerm:
    def test_zero_velocity(self):
        np.testing.assert_array_equal(nonlinear_term(np.array([0.2, 0.4, -0.1]), np.zeros(3), GEOM), 0.0)

    @given(angles, rates)
    def test_even_in_velocity(self, q, q_dot):
        np.testing.assert_allclose(nonlinear_term(q, -q_dot, GEOM), nonlinear_term(q, q_dot, GEOM), atol=1e-20)

    @given(angles, rates)
    def test_lagrangian_finite_differences(self, q, q_dot):
        # h_p = d/dt(dT/dq_dot_p) - dT/dq_p at zero acceleration
        h = 1e-6
        dt_m = np.zeros((3, 3))
        grad_t = np.zeros(3)
        for p in range(3):
            e = np.zeros(3)
            e[p] = h
            dm = (mass_matrix(q + e, GEOM) - mass_matrix(q - e, GEOM)) / (2 * h)
            dt_m += dm * q_dot[p]
            grad_t[p] = 0.5 * q_dot @ dm @ q_dot
        expected = dt_m @ q_dot - grad_t
        np.testing.assert_allclose(nonlinear_term(q, q_dot, GEOM), expected, atol=1e-11)

    def test_free_motion_conserves_energy(self):
        q0, qd0 = np.array([0.3, -0.2, 0.5]), np.array([1.0, -2.0, 1.5])
        traj = simulate_free_motion(GEOM, q0, qd0, (0.0, 1.0), 1e-3)
        energy = np.array([kinetic_energy(q, qd, GEOM) for q, qd in zip(traj.angles, traj.q_dot)])
        assert np.max(np.abs(energy / energy[0] - 1)) < 1e-6
        # the motion is genuinely nonlinear: the joint rates change
        assert np.ptp(traj.q_dot[:, 2]) > 0.1
