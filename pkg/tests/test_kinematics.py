import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fgc.kinematics import (LegState, SingularConfigurationError, UnreachableTargetError, elastic_transform,
                            foot_position, forward_pose, forward_transform, jacobians, matrix_to_rpy,
                            position_jacobian, rigid_inverse_position, rpy_to_matrix, section_rotation,
                            wrap_angle)
from fgc.robot_model import LEG_IDS
from oracles import rigid_foot

angles = st.floats(-1.4, 1.4)


def test_zero_deflection_is_identity():
    np.testing.assert_array_equal(elastic_transform(np.zeros(2), 0.09), np.eye(4))


def test_section_rotation_is_three_halves_over_length():
    th = section_rotation([1e-3, 2e-3, 3e-3, 4e-3], [0.1, 0.2])
    np.testing.assert_allclose(th, [1.5e-2, 3e-2, 2.25e-2, 3e-2])


def test_rigid_matches_dh_oracle(model):
    rng = np.random.default_rng(0)
    for leg_id in LEG_IDS:
        leg = model.leg(leg_id)
        for _ in range(50):
            q = rng.uniform(-1.5, 1.5, 3)
            np.testing.assert_allclose(foot_position(leg, q), rigid_foot(leg, q), atol=1e-12)


def test_home_pose_reaches_nominal_ik(model):
    leg = model.leg("LF")
    q = rigid_inverse_position(leg, leg.nominal_foot)
    np.testing.assert_allclose(foot_position(leg, q), leg.nominal_foot, atol=1e-12)
    assert q[0] == pytest.approx(0.0, abs=1e-12)


def test_tip_deflection_moves_foot_by_deflection_plus_rotation_lever(model):
    # deflecting the distal link by w moves the foot by w (tip translation)
    leg = model.leg("LF")
    q = np.array([0.2, -0.3, -math.pi / 2])  # knee straight
    w = 1e-4
    p0 = foot_position(leg, q)
    p1 = foot_position(leg, q, [0.0, 0.0, w, 0.0])
    assert np.linalg.norm(p1 - p0) == pytest.approx(w, rel=1e-6)
    # deflecting link 1 also swings link 2 through 3w/(2L)
    p2 = foot_position(leg, q, [w, 0.0, 0.0, 0.0])
    L1, L2 = leg.links[0].L, leg.links[1].L
    assert np.linalg.norm(p2 - p0) == pytest.approx(w + 1.5 * w / L1 * L2, rel=1e-3)


@given(st.tuples(angles, angles, angles), st.lists(st.floats(-3e-3, 3e-3), min_size=4, max_size=4))
@settings(max_examples=60, deadline=None)
def test_analytic_jacobian_matches_central_differences(model, q, omega):
    leg = model.leg("RH")
    state = LegState(np.array(q), np.array(omega))
    _, J = position_jacobian(leg, state.q, state.omega)
    J_w, J_q, _ = jacobians(leg, state)
    np.testing.assert_allclose(J[:, :3], J_q[:3], atol=1e-7)
    np.testing.assert_allclose(J[:, 3:], J_w[:3], atol=1e-7)


def test_ankle_rotation_does_not_move_foot(model):
    leg = model.leg("LH")
    state = LegState([0.1, -0.2, 0.3], np.zeros(4), [0.1, 0.2, -0.1])
    _, _, J_qs = jacobians(leg, state)
    np.testing.assert_array_equal(J_qs[:3], 0.0)
    assert np.linalg.matrix_rank(J_qs[3:]) == 3


def test_pose_orientation_round_trip():
    rng = np.random.default_rng(1)
    for _ in range(100):
        rpy = rng.uniform([-3, -1.5, -3], [3, 1.5, 3])
        np.testing.assert_allclose(matrix_to_rpy(rpy_to_matrix(rpy)), rpy, atol=1e-12)


def test_forward_pose_layout(model):
    leg = model.leg("RF")
    state = LegState([0.1, 0.2, -0.3])
    pose = forward_pose(leg, state)
    T = forward_transform(leg, state.q)
    np.testing.assert_allclose(pose[:3], T[:3, 3])
    np.testing.assert_allclose(rpy_to_matrix(pose[3:]), T[:3, :3], atol=1e-12)


def test_wrap_angle_range():
    a = wrap_angle(np.array([math.pi, -math.pi, 3 * math.pi, 0.1]))
    assert np.all(a > -math.pi) and np.all(a <= math.pi)


def _wide_limits(leg):
    return replace(leg, joints=tuple(replace(j, lo=-math.pi, hi=math.pi) for j in leg.joints))


def test_ik_picks_branch_nearest_current(model):
    leg = _wide_limits(model.leg("LF"))
    q_a = np.array([0.1, -0.6, 0.8])
    q_b = np.array([0.1, 1.7, 2.3])  # near the mirrored knee branch
    p = foot_position(leg, q_a)
    np.testing.assert_allclose(rigid_inverse_position(leg, p, q_a), q_a, atol=1e-10)
    other = rigid_inverse_position(leg, p, q_b)
    np.testing.assert_allclose(foot_position(leg, other), p, atol=1e-12)
    assert other[2] == pytest.approx(wrap_angle(-q_a[2] - math.pi), abs=1e-10)


def test_ik_respects_joint_limits(model):
    # with the default limits the mirrored knee branch is never admissible
    leg = model.leg("LF")
    q = np.array([0.1, -0.6, 0.8])
    got = rigid_inverse_position(leg, foot_position(leg, q), np.array([0.1, 1.5, -1.5]))
    np.testing.assert_allclose(got, q, atol=1e-10)


def test_ik_out_of_reach(model):
    with pytest.raises(UnreachableTargetError):
        rigid_inverse_position(model.leg("LF"), [0.5, 0.0, 0.0])


def test_ik_singular_at_full_extension(model):
    leg = model.leg("LF")
    p = foot_position(leg, [0.0, 0.0, -math.pi / 2])
    with pytest.raises(SingularConfigurationError):
        rigid_inverse_position(leg, p)
