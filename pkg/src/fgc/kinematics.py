"""Leg kinematics with elastic link deflection.

Each leg is a modified-DH chain (shoulder yaw, shoulder lift, knee) whose two
links bend like end-loaded cantilevers. A link of length L that deflects by
``w`` perpendicular to its axis also turns its tip section by ``3 w / (2 L)``;
both the translation and the rotation are inserted at the distal end of the
link, before the next joint's DH transform.

Deflection ordering is ``(w1x, w1z, w2x, w2z)``. For a link running along its
local x axis the ``x`` component deflects along local y (in the bending plane of
the leg) and the ``z`` component along local z (the preceding joint axis).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .robot_model import LegChain

FD_STEP = 1e-7


def cross3(a, b) -> np.ndarray:
    """Cross product of two 3-vectors (much cheaper than np.cross for single vectors)."""
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]])


class KinematicsError(RuntimeError):
    pass


class UnreachableTargetError(KinematicsError):
    pass


class SingularConfigurationError(KinematicsError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2.0 * np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_to_matrix(rpy) -> np.ndarray:
    """R = Rz(yaw) Ry(pitch) Rx(roll)."""
    r, p, y = rpy
    return rot_z(y) @ rot_y(p) @ rot_x(r)


def matrix_to_rpy(R: np.ndarray) -> np.ndarray:
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    roll = math.atan2(R[2, 1], R[2, 2])
    yaw = math.atan2(R[1, 0], R[0, 0])
    return np.array([wrap_angle(roll), wrap_angle(pitch), wrap_angle(yaw)])


def dh_transform(alpha: float, a: float, d: float, theta: float) -> np.ndarray:
    """Modified (Craig) DH: Rot_x(alpha) Trans_x(a) Rot_z(theta) Trans_z(d)."""
    ca, sa = math.cos(alpha), math.sin(alpha)
    ct, st = math.cos(theta), math.sin(theta)
    return np.array([
        [ct, -st, 0.0, a],
        [st * ca, ct * ca, -sa, -sa * d],
        [st * sa, ct * sa, ca, ca * d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def section_rotation(omega, lengths) -> np.ndarray:
    """Tip section rotation of each deflection component, theta = 3 w / (2 L)."""
    omega = np.asarray(omega, dtype=float)
    L = np.repeat(np.asarray(lengths, dtype=float), 2)
    return 1.5 * omega / L


def _section_matrix(theta_x: float, theta_z: float) -> np.ndarray:
    # in-plane deflection (+y) turns the tip about +z, out-of-plane (+z) about -y
    return rot_z(theta_x) @ rot_y(-theta_z)


def elastic_transform(omega_pair, L: float) -> np.ndarray:
    wx, wz = float(omega_pair[0]), float(omega_pair[1])
    T = np.eye(4)
    T[:3, :3] = _section_matrix(1.5 * wx / L, 1.5 * wz / L)
    T[1, 3] = wx
    T[2, 3] = wz
    return T


def _trans_x(a: float) -> np.ndarray:
    T = np.eye(4)
    T[0, 3] = a
    return T


def _ankle_rotation(q_s) -> np.ndarray:
    return rpy_to_matrix(q_s)


@dataclass
class LegState:
    q: np.ndarray
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))
    q_s: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(3)
        self.omega = np.asarray(self.omega, dtype=float).reshape(4)
        self.q_s = np.asarray(self.q_s, dtype=float).reshape(3)

    def theta(self, leg: LegChain) -> np.ndarray:
        return section_rotation(self.omega, [l.L for l in leg.links])


def _chain(leg: LegChain, q, omega):
    """Walk the chain; returns (joint frames, link pre-deflection frames, foot frame)."""
    j1, j2, j3 = leg.joints
    l1, l2 = leg.links
    T = dh_transform(j1.alpha, j1.a, j1.d, q[0] + j1.theta_offset)
    joint_frames = [T]
    T = T @ dh_transform(j2.alpha, j2.a, j2.d, q[1] + j2.theta_offset)
    joint_frames.append(T)
    # knee row: Trans_x(a) * T_s(link 1) * Rot_x(alpha) Rot_z(theta) Trans_z(d)
    pre1 = T @ _trans_x(j3.a)
    T = pre1 @ elastic_transform(omega[0:2], l1.L) @ dh_transform(j3.alpha, 0.0, j3.d, q[2] + j3.theta_offset)
    joint_frames.append(T)
    pre2 = T @ _trans_x(l2.L)
    foot = pre2 @ elastic_transform(omega[2:4], l2.L)
    return joint_frames, (pre1, pre2), foot


def forward_transform(leg: LegChain, q, omega=None, q_s=None) -> np.ndarray:
    """Homogeneous foot transform in the shoulder frame."""
    omega = np.zeros(4) if omega is None else np.asarray(omega, dtype=float)
    _, _, T = _chain(leg, np.asarray(q, dtype=float), omega)
    if q_s is not None and np.any(np.asarray(q_s) != 0.0):
        T = T.copy()
        T[:3, :3] = T[:3, :3] @ _ankle_rotation(q_s)
    return T


def forward_pose(leg: LegChain, state: LegState) -> np.ndarray:
    """Foot pose (x, y, z, roll, pitch, yaw) in the shoulder frame."""
    T = forward_transform(leg, state.q, state.omega, state.q_s)
    return np.concatenate([T[:3, 3], matrix_to_rpy(T[:3, :3])])


def foot_position(leg: LegChain, q, omega=None) -> np.ndarray:
    return forward_transform(leg, q, omega)[:3, 3].copy()


def foot_in_body(leg: LegChain, q, omega=None) -> np.ndarray:
    """Foot position in the body frame (shoulder frames are parallel to the body)."""
    return leg.shoulder_offset + foot_position(leg, q, omega)


def position_jacobian(leg: LegChain, q, omega=None) -> tuple[np.ndarray, np.ndarray]:
    """Analytic foot position and its 3x7 Jacobian w.r.t. (q1..q3, w1x, w1z, w2x, w2z)."""
    q = np.asarray(q, dtype=float)
    omega = np.zeros(4) if omega is None else np.asarray(omega, dtype=float)
    frames, pres, foot = _chain(leg, q, omega)
    p = foot[:3, 3]
    J = np.empty((3, 7))
    for k, F in enumerate(frames):
        J[:, k] = cross3(F[:3, 2], p - F[:3, 3])
    for k, (pre, link) in enumerate(zip(pres, leg.links)):
        wx, wz = omega[2 * k], omega[2 * k + 1]
        c = 1.5 / link.L
        R = pre[:3, :3]
        o_s = pre[:3, 3] + R @ np.array([0.0, wx, wz])
        lever = p - o_s
        axis_z = R @ (rot_z(c * wx) @ np.array([0.0, -1.0, 0.0]))
        J[:, 3 + 2 * k] = R[:, 1] + c * cross3(R[:, 2], lever)
        J[:, 4 + 2 * k] = R[:, 2] + c * cross3(axis_z, lever)
    return p.copy(), J


def _pose_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a - b
    d[3:] = wrap_angle(d[3:])
    return d


def jacobians(leg: LegChain, state: LegState, h: float = FD_STEP):
    """Central-difference pose Jacobians (J_omega 6x4, J_q 6x3, J_qs 6x3)."""
    def column(which: str, k: int) -> np.ndarray:
        plus = LegState(state.q.copy(), state.omega.copy(), state.q_s.copy())
        minus = LegState(state.q.copy(), state.omega.copy(), state.q_s.copy())
        getattr(plus, which)[k] += h
        getattr(minus, which)[k] -= h
        return _pose_difference(forward_pose(leg, plus), forward_pose(leg, minus)) / (2.0 * h)

    J_w = np.column_stack([column("omega", k) for k in range(4)])
    J_q = np.column_stack([column("q", k) for k in range(3)])
    J_qs = np.column_stack([column("q_s", k) for k in range(3)])
    return J_w, J_q, J_qs


def _closed_form_applicable(leg: LegChain) -> bool:
    j1, j2, j3 = leg.joints
    return (j1.alpha == 0.0 and j1.a == 0.0 and math.isclose(abs(j2.alpha), math.pi / 2, abs_tol=1e-12)
            and j2.d == 0.0 and j3.alpha == 0.0 and j3.d == 0.0)


def _closed_form_candidates(leg: LegChain, p: np.ndarray) -> list[np.ndarray]:
    j1, j2, j3 = leg.joints
    L1, L2 = j3.a, leg.links[1].L
    r = math.hypot(p[0], p[1])
    Y = (p[2] - j1.d) / math.sin(j2.alpha)
    base = math.atan2(p[1], p[0])
    candidates = []
    unreachable = True
    for yaw, X in ((base, r - j2.a), (base + math.pi, -r - j2.a)):
        c3 = (X * X + Y * Y - L1 * L1 - L2 * L2) / (2.0 * L1 * L2)
        if abs(c3) > 1.0 + 1e-12:
            continue
        unreachable = False
        c3 = max(-1.0, min(1.0, c3))
        for phi3 in (math.acos(c3), -math.acos(c3)):
            phi2 = math.atan2(Y, X) - math.atan2(L2 * math.sin(phi3), L1 + L2 * math.cos(phi3))
            q = np.array([yaw - j1.theta_offset, phi2 - j2.theta_offset, phi3 - j3.theta_offset])
            candidates.append(wrap_angle(q))
    if unreachable:
        raise UnreachableTargetError(f"leg {leg.leg_id}: target {p} outside the rigid workspace")
    return candidates


def _newton_ik(leg: LegChain, p: np.ndarray, q0: np.ndarray) -> list[np.ndarray]:
    q = q0.copy()
    for _ in range(200):
        pos, J = position_jacobian(leg, q)
        err = p - pos
        if np.linalg.norm(err) < 1e-13:
            return [wrap_angle(q)]
        Jq = J[:, :3]
        lam = 1e-6
        q = q + np.linalg.solve(Jq.T @ Jq + lam * np.eye(3), Jq.T @ err)
    raise UnreachableTargetError(f"leg {leg.leg_id}: iterative IK did not converge for {p}")


def rigid_inverse_position(leg: LegChain, p_t, q_current=None) -> np.ndarray:
    """Joint angles placing the rigid foot at ``p_t`` (shoulder frame).

    Among valid branches returns the one nearest ``q_current``; ties go to the
    smaller knee angle.
    """
    p = np.asarray(p_t, dtype=float).reshape(3)
    q_ref = np.zeros(3) if q_current is None else np.asarray(q_current, dtype=float)
    if _closed_form_applicable(leg):
        candidates = _closed_form_candidates(leg, p)
    else:
        candidates = _newton_ik(leg, p, q_ref)

    lo, hi = leg.limits
    valid = [q for q in candidates if np.all(q >= lo - 1e-12) and np.all(q <= hi + 1e-12)]
    if not valid:
        raise UnreachableTargetError(f"leg {leg.leg_id}: target {p} requires angles outside joint limits")

    def key(q):
        return (round(float(np.linalg.norm(wrap_angle(q - q_ref))), 12), abs(float(q[2])))

    q = min(valid, key=key)
    _, J = position_jacobian(leg, q)
    s = np.linalg.svd(J[:, :3], compute_uv=False)
    if s[-1] < 1e-6 * max(s[0], 1e-12):
        raise SingularConfigurationError(f"leg {leg.leg_id}: IK solution at {q} is singular")
    return q
