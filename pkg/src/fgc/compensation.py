"""Feedforward gravity compensation of stance legs.

For a stance foot that must sit at ``p_t`` while the surface applies force
``f`` to it, the leg deflects by ``w = K_w^-1 J_w' f`` in its links and by
``dq = K_q^-1 J_q' f`` in its joints (Jacobians of the foot position, evaluated
at the deflected configuration). If ``q_loaded`` is the joint configuration at
which the bent leg reaches ``p_t``, commanding ``q_0 = q_loaded - dq`` puts the
loaded foot on the target.

``q_t`` is the gait's own target (rigid inverse kinematics of ``p_t``), so the
offset ``dq_st = q_0 - q_t`` added to gait commands covers both the joint and
the link compliance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .force_distribution import StanceSet, Weights, distribute_forces
from .gait import GaitParams, GaitSchedule, sample_gait
from .kinematics import LegState, foot_position, jacobians, rigid_inverse_position
from .robot_model import EnvConfig, LegChain, RobotModel, build_stiffness_matrices


class CompensationError(RuntimeError):
    pass


@dataclass
class LegCompensation:
    q_t: np.ndarray
    q_0: np.ndarray
    omega_t: np.ndarray
    f_d: np.ndarray
    q_loaded: np.ndarray | None = None
    q_s: np.ndarray = field(default_factory=lambda: np.zeros(3))
    iterations: int = 0

    @property
    def dq_st(self) -> np.ndarray:
        return self.q_0 - self.q_t

    def __post_init__(self):
        if self.q_loaded is None:
            self.q_loaded = self.q_t.copy()


def _position_jacobians(leg: LegChain, q, omega):
    J_w, J_q, J_qs = jacobians(leg, LegState(q, omega))
    return J_w[:3], J_q[:3], J_qs


def _place_foot(leg: LegChain, p_t, omega, q, tol=1e-12, max_iter=30) -> np.ndarray:
    """Damped Newton on q so that the deflected foot reaches p_t."""
    for _ in range(max_iter):
        err = p_t - foot_position(leg, q, omega)
        if np.linalg.norm(err) <= tol:
            return q
        _, J_q, _ = _position_jacobians(leg, q, omega)
        q = q + np.linalg.solve(J_q.T @ J_q + 1e-12 * np.eye(3), J_q.T @ err)
    err = np.linalg.norm(p_t - foot_position(leg, q, omega))
    if err > 1e-9:
        raise CompensationError(f"leg {leg.leg_id}: target {p_t} unreachable under load (residual {err:.3e} m)")
    return q


def solve_leg_compensation(leg: LegChain, p_t, foot_force, K_w, K_q, q_current=None,
                           K_qs=None, tol: float = 1e-12, max_iter: int = 50) -> LegCompensation:
    """Fixed-point solve of the loaded-leg compensation for one stance leg.

    ``foot_force`` is the force the surface applies to the foot, shoulder axes.
    """
    p_t = np.asarray(p_t, dtype=float)
    f = np.asarray(foot_force, dtype=float)
    q_rigid = rigid_inverse_position(leg, p_t, q_current)
    q_t = q_rigid.copy()
    omega = np.zeros(4)
    if not np.any(f):
        return LegCompensation(q_t=q_rigid, q_0=q_rigid.copy(), omega_t=omega, f_d=f.copy())

    Kw_inv = 1.0 / np.diag(K_w)
    history = []
    for it in range(1, max_iter + 1):
        J_w, J_q, _ = _position_jacobians(leg, q_t, omega)
        omega_new = Kw_inv * (J_w.T @ f)
        q_new = _place_foot(leg, p_t, omega_new, q_t)
        # foot is re-placed on p_t each pass, so measure the change in the angles themselves
        moved = max(np.max(np.abs(omega_new - omega)), np.max(np.abs(q_new - q_t)))
        history.append(moved)
        omega, q_t = omega_new, q_new
        if moved <= tol:
            break
    else:
        raise CompensationError(
            f"leg {leg.leg_id}: compensation did not converge in {max_iter} iterations "
            f"(last step {history[-1]:.3e} rad)")

    _, J_q, J_qs = _position_jacobians(leg, q_t, omega)
    q_0 = q_t - (J_q.T @ f) / np.diag(K_q)
    q_s = np.zeros(3)
    if K_qs is not None:
        # ankle ball joint at the foot point: a pure force loads it only through the orientation rows
        wrench = np.concatenate([f, np.zeros(3)])
        q_s = (J_qs.T @ wrench) / np.diag(K_qs)
    return LegCompensation(q_t=q_rigid, q_0=q_0, omega_t=omega, f_d=f.copy(), q_loaded=q_t,
                           q_s=q_s, iterations=it)


@dataclass
class CompensationEntry:
    t: float
    t_frac: float
    phase_index: int
    legs: dict[str, LegCompensation]


@dataclass
class CompensationTable:
    gait: str
    T_s: float
    entries: list[CompensationEntry]
    per_phase: int = 1

    def entry_at(self, t: float) -> CompensationEntry:
        """Most recent entry at or before ``t`` modulo the cycle (zero-order hold)."""
        if not self.entries:
            raise CompensationError("compensation table is empty")
        tau = t % self.T_s
        if self.T_s - tau <= 1e-9 * self.T_s:
            tau = 0.0
        chosen = self.entries[-1]
        for e in self.entries:
            if e.t <= tau + 1e-9 * self.T_s:
                chosen = e
            else:
                break
        return chosen

    def max_abs_offset(self) -> float:
        vals = [np.max(np.abs(c.dq_st)) for e in self.entries for c in e.legs.values()]
        return float(max(vals)) if vals else 0.0

    def to_dict(self) -> dict:
        return {
            "gait": self.gait,
            "T_s": self.T_s,
            "per_phase": self.per_phase,
            "samples": [
                {
                    "t_frac": e.t_frac,
                    "phase": e.phase_index,
                    "legs": [
                        {"id": leg, "q_t": c.q_t.tolist(), "q_0": c.q_0.tolist(),
                         "dq_st": c.dq_st.tolist(), "f_d": c.f_d.tolist(),
                         "omega_t": c.omega_t.tolist(), "q_loaded": c.q_loaded.tolist()}
                        for leg, c in e.legs.items()
                    ],
                }
                for e in self.entries
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "CompensationTable":
        T = float(doc["T_s"])
        entries = []
        for s in doc["samples"]:
            legs = {}
            for l in s["legs"]:
                legs[l["id"]] = LegCompensation(
                    q_t=np.array(l["q_t"], dtype=float), q_0=np.array(l["q_0"], dtype=float),
                    omega_t=np.array(l.get("omega_t", [0.0] * 4), dtype=float),
                    f_d=np.array(l["f_d"], dtype=float),
                    q_loaded=np.array(l["q_loaded"], dtype=float) if "q_loaded" in l else None,
                )
            entries.append(CompensationEntry(
                t=float(s["t_frac"]) * T, t_frac=float(s["t_frac"]),
                phase_index=int(s.get("phase", len(entries))), legs=legs))
        return cls(gait=doc["gait"], T_s=T, entries=entries, per_phase=int(doc.get("per_phase", 1)))

    @classmethod
    def from_json(cls, text: str) -> "CompensationTable":
        return cls.from_dict(json.loads(text))


def build_compensation_table(model: RobotModel, env: EnvConfig, schedule: GaitSchedule,
                             params: GaitParams, weights: Weights | None = None,
                             per_phase: int = 1) -> CompensationTable:
    weights = weights or Weights()
    stiffness = {leg.leg_id: build_stiffness_matrices(model, leg.leg_id) for leg in model.legs}
    entries = []
    for sample in sample_gait(schedule, model, params, per_phase):
        try:
            feet = {leg: model.leg(leg).shoulder_offset + p for leg, p in sample.targets.items()}
            sol = distribute_forces(model, env, StanceSet(feet), weights=weights)
            load = model.body_mass * env.gravity_mps2 * np.sqrt(weights.s_weight)
            if sol.bound_limited_residual > 1e-4 * load + 1e-9:
                raise CompensationError(
                    f"force bounds cannot balance the gravity load "
                    f"(residual {sol.equilibrium_residual:.4g} N, active bounds {sol.active_bounds})")
            legs = {}
            for leg_id, f in sol.forces().items():
                leg = model.leg(leg_id)
                K_w, K_q = stiffness[leg_id]
                K_qs = np.eye(3) * leg.k_qs if model.include_ankle_stiffness and leg.k_qs > 0 else None
                legs[leg_id] = solve_leg_compensation(
                    leg, sample.targets[leg_id], f, K_w, K_q, q_current=None, K_qs=K_qs)
        except Exception as exc:
            raise CompensationError(f"sample t={sample.t:.6g} s: {exc}") from exc
        entries.append(CompensationEntry(
            t=sample.t, t_frac=sample.t / schedule.cycle_T, phase_index=sample.phase_index, legs=legs))
    return CompensationTable(gait=schedule.kind, T_s=schedule.cycle_T, entries=entries, per_phase=per_phase)


def zero_table(schedule: GaitSchedule) -> CompensationTable:
    """Table with no offsets, equivalent to running without compensation."""
    entries = []
    for k, (start, _, stance) in enumerate(schedule.phases()):
        legs = {leg: LegCompensation(q_t=np.zeros(3), q_0=np.zeros(3), omega_t=np.zeros(4), f_d=np.zeros(3))
                for leg in stance}
        entries.append(CompensationEntry(t=start, t_frac=start / schedule.cycle_T, phase_index=k, legs=legs))
    return CompensationTable(gait=schedule.kind, T_s=schedule.cycle_T, entries=entries)


def apply_compensation(table: CompensationTable, t: float, q_gait: dict[str, np.ndarray],
                       stance: set[str] | tuple[str, ...]) -> dict[str, np.ndarray]:
    """Add the held stance offsets to the gait joint angles; swing legs are untouched."""
    entry = table.entry_at(t)
    out = {}
    for leg, q in q_gait.items():
        comp = entry.legs.get(leg)
        if leg in stance and comp is not None:
            out[leg] = q + comp.dq_st
        else:
            out[leg] = q
    return out


SWEEP_COLUMNS = ("D_m_m", "s_weight", "stiffness_scale", "leg_id", "fz_N", "dz_comp_m", "dq_norm_rad",
                 "equilibrium_residual")


def sweep_compensation(model: RobotModel, env: EnvConfig, d_values, s_values, stiffness_scales=(1.0,),
                       stance=("RF", "LH"), weights: Weights | None = None) -> list[dict]:
    """Normal-direction compensation of a static stance versus body offset and equilibrium weight.

    The stance feet sit at their nominal positions; the body is displaced by
    ``D_m`` along x from the midpoint of those feet. ``dz_comp_m`` is the
    normal component of (rigid foot under q_0) - p_t: how far the commanded
    rigid foot is pushed past the target to cancel the sag.
    """
    base = weights or Weights()
    rows = []
    for k in stiffness_scales:
        scaled = model.scaled_stiffness(k)
        stiffness = {leg: build_stiffness_matrices(scaled, leg) for leg in stance}
        for d in d_values:
            targets = {}
            for leg_id in stance:
                p = scaled.leg(leg_id).nominal_foot.copy()
                p[0] -= d
                targets[leg_id] = p
            feet = {leg: scaled.leg(leg).shoulder_offset + p for leg, p in targets.items()}
            for s in s_values:
                w = Weights(s_weight=s, torque_ratio=base.torque_ratio, alpha=base.alpha, w_diag=base.w_diag)
                sol = distribute_forces(scaled, env, StanceSet(feet), weights=w)
                for leg_id, f in sol.forces().items():
                    leg = scaled.leg(leg_id)
                    K_w, K_q = stiffness[leg_id]
                    comp = solve_leg_compensation(leg, targets[leg_id], f, K_w, K_q)
                    dz = foot_position(leg, comp.q_0)[2] - targets[leg_id][2]
                    rows.append({
                        "D_m_m": float(d), "s_weight": float(s), "stiffness_scale": float(k), "leg_id": leg_id,
                        "fz_N": float(f[2]), "dz_comp_m": float(dz),
                        "dq_norm_rad": float(np.linalg.norm(comp.dq_st)),
                        "equilibrium_residual": sol.equilibrium_residual,
                    })
    return rows
