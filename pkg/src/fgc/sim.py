"""Quasi-static plant: elastic equilibrium of the loaded robot and gait trials.

Given commanded joint angles and the world anchors of the stance feet, the
plant finds the body pose, the per-leg elastic deflections and the foot forces
that satisfy, simultaneously, the elastic statics of every stance leg, the
closure of every stance foot on its anchor and the force/moment balance of the
body. It uses the analytic foot-position Jacobian and never calls the
compensation solver, so compensated commands are validated against an
independent model.

World frame is the surface frame (plane z = 0, +z toward the surface). Forces
``f_i`` are applied by the surface to the feet.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .compensation import CompensationTable, apply_compensation, build_compensation_table
from .force_distribution import Weights, skew
from .gait import GaitParams, GaitSchedule, foot_targets_at, ideal_body_position, phase_schedule, world_foot_position
from .kinematics import (LegState, cross3, forward_transform, position_jacobian, rigid_inverse_position, rot_x, rot_y,
                         rot_z, rpy_to_matrix)
from .robot_model import EnvConfig, LegChain, RobotModel, build_stiffness_matrices

E_X, E_Y, E_Z = np.eye(3)
PLANE_NORMAL = E_Z
REFERENCE_FGC_PITCH_DEG = {"max": 2.11, "min": -1.14}

TOL_POSITION = 1e-9
TOL_WRENCH = 1e-8


class SimError(RuntimeError):
    pass


class EquilibriumError(SimError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class NoEquilibriumError(EquilibriumError):
    pass


class UnreachableAnchorError(SimError):
    pass


def rpy_derivatives(rpy) -> list[np.ndarray]:
    """dR/droll, dR/dpitch, dR/dyaw for R = Rz(yaw) Ry(pitch) Rx(roll)."""
    r, p, y = rpy
    Rx, Ry, Rz = rot_x(r), rot_y(p), rot_z(y)
    return [Rz @ Ry @ Rx @ skew(E_X), Rz @ Ry @ skew(E_Y) @ Rx, skew(E_Z) @ Rz @ Ry @ Rx]


def _stiffness_vector(model: RobotModel, leg_id: str) -> np.ndarray:
    K_w, K_q = build_stiffness_matrices(model, leg_id)
    return np.concatenate([np.diag(K_q), np.diag(K_w)])


@dataclass
class SimState:
    t: float
    body_position: np.ndarray
    body_rpy: np.ndarray
    legs: dict[str, LegState]
    q_cmd: dict[str, np.ndarray]
    anchors: dict[str, np.ndarray]
    forces_world: dict[str, np.ndarray]
    residuals: dict[str, float] = field(default_factory=dict)
    iterations: int = 0

    @property
    def attached(self) -> tuple[str, ...]:
        return tuple(self.anchors)

    @property
    def rotation(self) -> np.ndarray:
        return rpy_to_matrix(self.body_rpy)

    @property
    def forces_body(self) -> dict[str, np.ndarray]:
        R = self.rotation
        return {leg: R.T @ f for leg, f in self.forces_world.items()}


class _Plant:
    """Stacked residual and Jacobian of the body/leg equilibrium."""

    def __init__(self, model: RobotModel, env: EnvConfig, q_cmd, anchors):
        self.model = model
        self.weight = model.body_mass * env.gravity
        self.ids = list(anchors)
        self.legs = [model.leg(i) for i in self.ids]
        self.q_cmd = [np.asarray(q_cmd[i], dtype=float) for i in self.ids]
        self.anchors = [np.asarray(anchors[i], dtype=float) for i in self.ids]
        self.K = [_stiffness_vector(model, i) for i in self.ids]
        self.n = len(self.ids)
        self.size = 6 + 10 * self.n

    def split(self, z):
        c, rpy = z[0:3], z[3:6]
        per = [(z[6 + 10 * k:13 + 10 * k], z[13 + 10 * k:16 + 10 * k]) for k in range(self.n)]
        return c, rpy, per

    def evaluate(self, z, jacobian: bool = True, h: float = 1e-7):
        c, rpy, per = self.split(z)
        R = rpy_to_matrix(rpy)
        dR = rpy_derivatives(rpy)
        com = self.model.com_offset
        c_com = c + R @ com
        r = np.zeros(self.size)
        Jr = np.zeros((self.size, self.size)) if jacobian else None
        fsum = self.weight.copy()
        tau = np.zeros(3)
        for k, (leg, qc, a, K, (x, f)) in enumerate(zip(self.legs, self.q_cmd, self.anchors, self.K, per)):
            row = 10 * k
            col = 6 + 10 * k
            p, J = position_jacobian(leg, qc + x[:3], x[3:])
            F = R.T @ f
            load = J.T @ F
            r[row:row + 7] = x - load / K
            r[row + 7:row + 10] = c + R @ (leg.shoulder_offset + p) - a
            fsum += f
            tau += cross3(a - c_com, f)
            if jacobian:
                dload = np.empty((7, 7))
                for j in range(7):
                    xj = x.copy()
                    xj[j] += h
                    _, Jj = position_jacobian(leg, qc + xj[:3], xj[3:])
                    dload[:, j] = (Jj.T @ F - load) / h
                Jr[row:row + 7, col:col + 7] = np.eye(7) - dload / K[:, None]
                Jr[row:row + 7, col + 7:col + 10] = -(J.T @ R.T) / K[:, None]
                for m in range(3):
                    Jr[row:row + 7, 3 + m] = -(J.T @ (dR[m].T @ f)) / K
                    Jr[row + 7:row + 10, 3 + m] = dR[m] @ (leg.shoulder_offset + p)
                Jr[row + 7:row + 10, 0:3] = np.eye(3)
                Jr[row + 7:row + 10, col:col + 7] = R @ J
                Jr[10 * self.n:10 * self.n + 3, col + 7:col + 10] = np.eye(3)
                Jr[10 * self.n + 3:, col + 7:col + 10] = skew(a - c_com)
                Jr[10 * self.n + 3:, 0:3] += skew(f)
                for m in range(3):
                    Jr[10 * self.n + 3:, 3 + m] += skew(f) @ (dR[m] @ com)
        r[10 * self.n:10 * self.n + 3] = fsum
        r[10 * self.n + 3:] = tau
        return r, Jr

    def report(self, r) -> dict[str, float]:
        el = [np.max(np.abs(r[10 * k:10 * k + 7] * K)) for k, K in enumerate(self.K)]
        pos = [np.max(np.abs(r[10 * k + 7:10 * k + 10])) for k in range(self.n)]
        return {
            "elastic": float(max(el)),
            "position": float(max(pos)),
            "force": float(np.max(np.abs(r[10 * self.n:10 * self.n + 3]))),
            "torque": float(np.max(np.abs(r[10 * self.n + 3:]))),
        }

    def merit(self, r) -> float:
        w = np.ones(self.size)
        for k, K in enumerate(self.K):
            w[10 * k:10 * k + 7] = K
            w[10 * k + 7:10 * k + 10] = 1e3
        w[10 * self.n + 3:] = 10.0
        return float(np.linalg.norm(w * r))


def _converged(rep: dict[str, float], scale: float = 0.1) -> bool:
    return (rep["position"] <= scale * TOL_POSITION and rep["force"] <= scale * TOL_WRENCH
            and rep["torque"] <= scale * TOL_WRENCH and rep["elastic"] <= scale * TOL_WRENCH)


def _reach(leg: LegChain) -> float:
    return sum(abs(j.a) + abs(j.d) for j in leg.joints) + leg.links[1].L


def solve_equilibrium_pose(model: RobotModel, env: EnvConfig, q_cmd: dict, anchors: dict,
                           guess: SimState | None = None, t: float = 0.0, max_iter: int = 100) -> SimState:
    """Body pose, leg deflections and foot forces under commanded angles ``q_cmd``.

    ``anchors`` maps each stance leg to its world foot position. ``guess`` warm
    starts the Newton iteration (legs new to the stance start unloaded).
    """
    if len(anchors) < 2:
        raise NoEquilibriumError(f"at least 2 stance legs required, got {len(anchors)}")
    plant = _Plant(model, env, q_cmd, anchors)
    z = np.zeros(plant.size)
    share = -plant.weight / plant.n
    for k in range(plant.n):
        z[13 + 10 * k:16 + 10 * k] = share
    if guess is not None:
        z[0:3], z[3:6] = guess.body_position, guess.body_rpy
        for k, leg_id in enumerate(plant.ids):
            if leg_id in guess.anchors:
                prev = guess.legs[leg_id]
                z[6 + 10 * k:9 + 10 * k] = prev.q - guess.q_cmd[leg_id]
                z[9 + 10 * k:13 + 10 * k] = prev.omega
                z[13 + 10 * k:16 + 10 * k] = guess.forces_world[leg_id]
    else:
        z[0:3] = ideal_body_position(0.0, 0.0, model)

    R0 = rpy_to_matrix(z[3:6])
    for leg, a in zip(plant.legs, plant.anchors):
        d = np.linalg.norm(a - (z[0:3] + R0 @ leg.shoulder_offset))
        if d > 1.5 * _reach(leg):
            raise UnreachableAnchorError(f"leg {leg.leg_id}: anchor {a} is {d:.3f} m from its shoulder")

    history = []
    r, Jr = plant.evaluate(z)
    for it in range(1, max_iter + 1):
        rep = plant.report(r)
        m0 = plant.merit(r)
        history.append(m0)
        if _converged(rep):
            break
        try:
            step = np.linalg.solve(Jr, -r)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(Jr, -r, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            raise NoEquilibriumError(f"t={t:.6g} s: equilibrium system is singular", history)
        s = 1.0
        for _ in range(40):
            r_try, _ = plant.evaluate(z + s * step, jacobian=False)
            if plant.merit(r_try) < (1.0 - 1e-4 * s) * m0:
                break
            s *= 0.5
        else:
            if _converged(rep, scale=1.0):
                break
            raise EquilibriumError(
                f"t={t:.6g} s: line search failed (residual {m0:.3e})", history)
        z = z + s * step
        r, Jr = plant.evaluate(z)
    else:
        rep = plant.report(r)
        if not _converged(rep, scale=1.0):
            raise EquilibriumError(
                f"t={t:.6g} s: Newton did not converge in {max_iter} iterations (residual {history[-1]:.3e})",
                history)

    rep = plant.report(r)
    if np.linalg.cond(Jr) > 1e14:
        raise NoEquilibriumError(f"t={t:.6g} s: equilibrium is rank deficient", history)
    c, rpy, per = plant.split(z)
    legs, forces = {}, {}
    for leg_id, qc, (x, f) in zip(plant.ids, plant.q_cmd, per):
        legs[leg_id] = LegState(qc + x[:3], x[3:].copy())
        forces[leg_id] = f.copy()
    return SimState(
        t=t, body_position=c.copy(), body_rpy=rpy.copy(), legs=legs,
        q_cmd={i: q.copy() for i, q in zip(plant.ids, plant.q_cmd)},
        anchors={i: a.copy() for i, a in zip(plant.ids, plant.anchors)},
        forces_world=forces, residuals=rep, iterations=len(history),
    )


def leg_elastic_equilibrium(leg: LegChain, q_cmd, force, K_w, K_q, tol: float = 1e-14,
                            max_iter: int = 50) -> LegState:
    """Deflected state of one leg whose foot carries ``force`` (shoulder axes)."""
    K = np.concatenate([np.diag(K_q), np.diag(K_w)])
    q_cmd = np.asarray(q_cmd, dtype=float)
    F = np.asarray(force, dtype=float)
    x = np.zeros(7)
    for _ in range(max_iter):
        _, J = position_jacobian(leg, q_cmd + x[:3], x[3:])
        x_new = (J.T @ F) / K
        if np.max(np.abs(x_new - x)) <= tol:
            x = x_new
            break
        x = x_new
    else:
        raise EquilibriumError(f"leg {leg.leg_id}: elastic equilibrium did not converge")
    return LegState(q_cmd + x[:3], x[3:])


@dataclass
class TouchdownResult:
    t: float
    leg_id: str
    position_error_mm: float
    angle_error_deg: float
    success: bool
    actual: np.ndarray = field(default_factory=lambda: np.zeros(3))


def touchdown_check(state: SimState, model: RobotModel, leg_id: str, q_swing, target,
                    thresholds=(5.0, 5.0), q_ideal=None) -> TouchdownResult:
    """Footpad placement error of a swing leg at its touchdown instant.

    The pad center is the rigid foot of the swing leg carried by the actual
    body pose. The pad normal is the plane normal carried by the same rotation
    that maps the ideal foot orientation to the actual one.
    """
    leg = model.leg(leg_id)
    R = state.rotation
    T_act = forward_transform(leg, q_swing)
    T_ideal = forward_transform(leg, q_swing if q_ideal is None else q_ideal)
    actual = state.body_position + R @ (leg.shoulder_offset + T_act[:3, 3])
    pos_err = float(np.linalg.norm(actual - np.asarray(target, dtype=float))) * 1e3
    normal = R @ T_act[:3, :3] @ T_ideal[:3, :3].T @ PLANE_NORMAL
    ang_err = math.degrees(math.atan2(np.linalg.norm(np.cross(normal, PLANE_NORMAL)), float(normal @ PLANE_NORMAL)))
    ok = pos_err <= thresholds[0] and ang_err <= thresholds[1]
    return TouchdownResult(state.t, leg_id, pos_err, ang_err, bool(ok), actual)


@dataclass
class ChannelStats:
    peak_to_peak: float
    mean: float
    median: float
    max: float
    min: float


def compute_metrics(series: dict[str, np.ndarray]) -> dict[str, ChannelStats]:
    out = {}
    for name, values in series.items():
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise ValueError(f"empty series {name!r}")
        out[name] = ChannelStats(float(v.max() - v.min()), float(v.mean()), float(np.median(v)),
                                 float(v.max()), float(v.min()))
    return out


CHANNELS = ("roll_deg", "pitch_deg", "yaw_deg", "x_mm", "y_mm", "z_mm")
CSV_COLUMNS = ("t_s", "roll_deg", "pitch_deg", "yaw_deg", "x_mm", "y_mm", "z_mm", "leg", "fx_N", "fy_N", "fz_N",
               "touchdown_pos_err_mm", "touchdown_ang_err_deg", "success")


@dataclass
class TrialMetrics:
    """Sampled attitude and displacement of one trial.

    Displacements are the body-center deviation from the ideal body path, mm.
    """

    gait: str
    fgc: bool
    thresholds: tuple[float, float]
    t: np.ndarray
    channels: dict[str, np.ndarray]
    forces: list[dict[str, np.ndarray]]
    touchdowns: list[TouchdownResult]
    success: bool
    error: str | None = None
    states: list[SimState] = field(default_factory=list, repr=False)

    @property
    def stats(self) -> dict[str, ChannelStats]:
        return compute_metrics(self.channels)

    def peak_to_peak(self, channel: str) -> float:
        return self.stats[channel].peak_to_peak

    @property
    def touchdown_failures(self) -> int:
        return sum(not td.success for td in self.touchdowns)

    def summary(self) -> dict:
        stats = self.stats if len(self.t) else {}
        return {
            "gait": self.gait,
            "fgc": self.fgc,
            "thresholds": {"position_mm": self.thresholds[0], "angle_deg": self.thresholds[1]},
            "samples": int(len(self.t)),
            "success": self.success,
            "error": self.error,
            "touchdown_failures": self.touchdown_failures,
            "touchdowns": [
                {"t_s": td.t, "leg": td.leg_id, "position_error_mm": td.position_error_mm,
                 "angle_error_deg": td.angle_error_deg, "success": td.success}
                for td in self.touchdowns
            ],
            "channels": {k: vars(v) for k, v in stats.items()},
            "reference_fgc_pitch_deg": REFERENCE_FGC_PITCH_DEG,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for k, t in enumerate(self.t):
            att = [repr(float(self.channels[c][k])) for c in CHANNELS]
            for leg, f in self.forces[k].items():
                w.writerow([repr(float(t)), *att, leg, *(repr(float(v)) for v in f), "", "", ""])
        for td in self.touchdowns:
            w.writerow([repr(float(td.t)), "", "", "", "", "", "", td.leg_id, "", "", "",
                        repr(td.position_error_mm), repr(td.angle_error_deg), int(td.success)])
        return buf.getvalue()


def read_trial_csv(text: str) -> tuple[dict[str, np.ndarray], list[dict]]:
    """Parse a trial CSV back into per-sample channels and touchdown rows."""
    rows = list(csv.DictReader(io.StringIO(text)))
    samples: dict[float, dict] = {}
    touchdowns = []
    for row in rows:
        if row["touchdown_pos_err_mm"]:
            touchdowns.append({"t_s": float(row["t_s"]), "leg": row["leg"],
                               "position_error_mm": float(row["touchdown_pos_err_mm"]),
                               "angle_error_deg": float(row["touchdown_ang_err_deg"]),
                               "success": bool(int(row["success"]))})
            continue
        entry = samples.setdefault(float(row["t_s"]), {c: float(row[c]) for c in CHANNELS})
        entry.setdefault("forces", {})[row["leg"]] = np.array([float(row[c]) for c in ("fx_N", "fy_N", "fz_N")])
    t = np.array(list(samples))
    channels = {c: np.array([samples[k][c] for k in samples]) for c in CHANNELS}
    channels["t_s"] = t
    return channels, touchdowns


def run_trial(model: RobotModel, env: EnvConfig, params: GaitParams | None = None, fgc: bool = True,
              cycles: int = 2, thresholds=(5.0, 5.0), samples_per_phase: int = 20,
              table: CompensationTable | None = None, weights: Weights | None = None,
              keep_states: bool = False) -> TrialMetrics:
    """Step the plant through ``cycles`` gait cycles and record attitude and touchdowns."""
    params = params or GaitParams()
    if cycles < 1:
        raise ValueError("cycles must be at least 1")
    if samples_per_phase < 1:
        raise ValueError("samples_per_phase must be at least 1")
    schedule = phase_schedule(params.kind, params.cycle_s, params.order)
    if fgc and table is None:
        table = build_compensation_table(model, env, schedule, params, weights)

    T = schedule.cycle_T
    speed = params.speed
    q_prev: dict[str, np.ndarray] = {}

    def gait_angles(t):
        targets = foot_targets_at(schedule, model, t, params.stride_m, params.step_height_m)
        out = {}
        for leg_id, tgt in targets.items():
            out[leg_id] = rigid_inverse_position(model.leg(leg_id), tgt.position, q_prev.get(leg_id))
        q_prev.update(out)
        return out

    def commands(t, stance, hold_t):
        q = gait_angles(t)
        if fgc:
            q = apply_compensation(table, hold_t, q, stance)
        return q

    times, forces, states, touchdowns = [], [], [], []
    ch = {c: [] for c in CHANNELS}

    def record(state):
        ideal = ideal_body_position(state.t, speed, model)
        times.append(state.t)
        roll, pitch, yaw = np.degrees(state.body_rpy)
        d = (state.body_position - ideal) * 1e3
        for name, v in zip(CHANNELS, (roll, pitch, yaw, d[0], d[1], d[2])):
            ch[name].append(float(v))
        forces.append(state.forces_body)
        if keep_states:
            states.append(state)

    def planned(leg_id, t):
        return world_foot_position(schedule, model, leg_id, t, params.stride_m, params.step_height_m)[0]

    phases = schedule.phases()
    anchors = {leg: planned(leg, 0.0) for leg in phases[0][2]}
    state = None
    error = None
    try:
        for cyc in range(cycles):
            for start, end, stance in phases:
                t0, t1 = cyc * T + start, cyc * T + end
                anchors = {leg: anchors[leg] for leg in stance}
                for j in range(samples_per_phase):
                    t = t0 + (t1 - t0) * j / samples_per_phase
                    q = commands(t, stance, t)
                    state = solve_equilibrium_pose(model, env, {l: q[l] for l in stance}, anchors, state, t)
                    record(state)
                t_hold = t0 + (t1 - t0) * (samples_per_phase - 1) / samples_per_phase
                next_stance = schedule.stance_legs(t1)
                landing = [l for l in next_stance if l not in stance]
                if not landing:
                    continue
                q = commands(t1, stance, t_hold)
                state = solve_equilibrium_pose(model, env, {l: q[l] for l in stance}, anchors, state, t1)
                for leg in landing:
                    td = touchdown_check(state, model, leg, q[leg], planned(leg, t1), thresholds)
                    touchdowns.append(td)
                    anchors[leg] = td.actual
        stance = schedule.stance_legs(cycles * T)
        q = commands(cycles * T, stance, cycles * T)
        state = solve_equilibrium_pose(model, env, {l: q[l] for l in stance},
                                       {l: anchors[l] for l in stance}, state, cycles * T)
        record(state)
    except (SimError, np.linalg.LinAlgError) as exc:
        error = str(exc)
    except Exception as exc:  # kinematic failures along the commanded path
        error = f"{type(exc).__name__}: {exc}"

    success = error is None and all(td.success for td in touchdowns)
    return TrialMetrics(
        gait=params.kind, fgc=fgc, thresholds=tuple(thresholds), t=np.array(times),
        channels={k: np.array(v) for k, v in ch.items()}, forces=forces, touchdowns=touchdowns,
        success=success, error=error, states=states,
    )


def run_paired(model: RobotModel, env: EnvConfig, params: GaitParams | None = None, **kwargs):
    """(fgc on, fgc off) trials on identical inputs."""
    return run_trial(model, env, params, fgc=True, **kwargs), run_trial(model, env, params, fgc=False, **kwargs)


def summary_json(metrics: list[TrialMetrics], config: dict | None = None) -> str:
    return json.dumps({"config": config, "trials": [m.summary() for m in metrics]}, indent=2)
