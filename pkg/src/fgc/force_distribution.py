"""Stance-foot force distribution.

Foot forces are the forces the surface applies to each stance foot, in body
axes. With the body z axis pointing toward the climbing plane, a positive
normal component is adhesion (the pad pulls the foot toward the surface) and a
negative one is compression.

Equilibrium in stacked form is ``A f = -F_c`` with ``A = [I ... I; [p_1x] ...
[p_mx]]``, ``p_i`` the vector from foot i to the CoM and ``F_c = (F_CoM, 0)``.
The forces minimize ``(Af + F_c)' S (Af + F_c) + alpha f'Wf`` inside the box
bounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import rpy_to_matrix
from .qp import box_least_squares
from .robot_model import EnvConfig, RobotModel


class InsufficientStanceError(ValueError):
    pass


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


@dataclass(frozen=True)
class Weights:
    s_weight: float = 100.0
    torque_ratio: float = 10.0
    alpha: float = 1e-6
    w_diag: tuple[float, ...] | None = None

    @classmethod
    def from_dict(cls, raw: dict | None) -> "Weights":
        raw = raw or {}
        return cls(
            s_weight=float(raw.get("s_weight", cls.s_weight)),
            torque_ratio=float(raw.get("torque_ratio", cls.torque_ratio)),
            alpha=float(raw.get("alpha", cls.alpha)),
        )

    def S(self) -> np.ndarray:
        r = self.torque_ratio
        return self.s_weight * np.diag([1.0, 1.0, 1.0, r, r, r])

    def W(self, n: int) -> np.ndarray:
        if self.w_diag is None:
            return np.eye(n)
        return np.diag(np.resize(np.asarray(self.w_diag, dtype=float), n))


@dataclass
class StanceSet:
    """Stance legs and their foot positions in the body frame."""

    feet: dict[str, np.ndarray]

    def __post_init__(self):
        self.feet = {k: np.asarray(v, dtype=float).reshape(3) for k, v in self.feet.items()}
        if not all(np.all(np.isfinite(v)) for v in self.feet.values()):
            raise ValueError("stance foot positions must be finite")

    @property
    def leg_ids(self) -> list[str]:
        return list(self.feet)

    @property
    def m(self) -> int:
        return len(self.feet)


@dataclass
class ForceDistributionProblem:
    A: np.ndarray
    F_c: np.ndarray
    S: np.ndarray
    W: np.ndarray
    alpha: float
    lower: np.ndarray
    upper: np.ndarray
    leg_ids: list[str] = field(default_factory=list)

    @property
    def H(self) -> np.ndarray:
        return 2.0 * (self.A.T @ self.S @ self.A + self.alpha * self.W)

    @property
    def g(self) -> np.ndarray:
        return 2.0 * self.A.T @ self.S @ self.F_c

    def objective(self, f) -> float:
        r = self.A @ f + self.F_c
        return float(r @ self.S @ r + self.alpha * f @ self.W @ f)

    def least_squares_form(self) -> tuple[np.ndarray, np.ndarray]:
        """(M, d) with ||M f - d||^2 equal to the objective."""
        Ls = np.linalg.cholesky(self.S)
        n = self.A.shape[1]
        blocks = [Ls.T @ self.A]
        rhs = [-Ls.T @ self.F_c]
        if self.alpha > 0.0:
            Lw = np.linalg.cholesky(self.W)
            blocks.append(np.sqrt(self.alpha) * Lw.T)
            rhs.append(np.zeros(n))
        return np.vstack(blocks), np.concatenate(rhs)


@dataclass
class ForceSolution:
    f: np.ndarray
    leg_ids: list[str]
    equilibrium_residual: float
    active_bounds: list[int]
    objective_value: float
    kkt_ok: bool = True
    weighted_residual: float = 0.0
    residual_floor: float = 0.0

    @property
    def bound_limited_residual(self) -> float:
        """S-weighted equilibrium residual in excess of what the stance geometry allows without bounds."""
        if not self.active_bounds:
            return 0.0
        return max(self.weighted_residual - self.residual_floor, 0.0)

    def forces(self) -> dict[str, np.ndarray]:
        return {leg: self.f[3 * k:3 * k + 3].copy() for k, leg in enumerate(self.leg_ids)}


def gravity_load(model: RobotModel, env: EnvConfig, body_rpy=(0.0, 0.0, 0.0)) -> np.ndarray:
    """Weight of the robot expressed in body axes."""
    R = rpy_to_matrix(body_rpy)
    return model.body_mass * (R.T @ env.gravity)


def equilibrium_matrix(lever_arms: list[np.ndarray]) -> np.ndarray:
    m = len(lever_arms)
    A = np.zeros((6, 3 * m))
    for k, p in enumerate(lever_arms):
        A[0:3, 3 * k:3 * k + 3] = np.eye(3)
        A[3:6, 3 * k:3 * k + 3] = skew(p)
    return A


def assemble_equilibrium(model: RobotModel, env: EnvConfig, stance: StanceSet,
                         body_rpy=(0.0, 0.0, 0.0), weights: Weights | None = None,
                         lower=None, upper=None) -> ForceDistributionProblem:
    if stance.m < 2:
        raise InsufficientStanceError(f"at least 2 stance legs required, got {stance.m}")
    weights = weights or Weights()
    levers = [model.com_offset - foot for foot in stance.feet.values()]
    A = equilibrium_matrix(levers)
    F_c = np.concatenate([gravity_load(model, env, body_rpy), np.zeros(3)])
    lower = np.tile(model.force_lower if lower is None else lower, stance.m)
    upper = np.tile(model.force_upper if upper is None else upper, stance.m)
    return ForceDistributionProblem(
        A=A, F_c=F_c, S=weights.S(), W=weights.W(3 * stance.m), alpha=weights.alpha,
        lower=lower, upper=upper, leg_ids=stance.leg_ids,
    )


def _weighted_norm(problem: ForceDistributionProblem, r) -> float:
    return float(np.sqrt(max(r @ problem.S @ r, 0.0)))


def geometric_residual_floor(problem: ForceDistributionProblem) -> float:
    """Smallest S-weighted equilibrium residual reachable with unbounded forces."""
    Ls = np.linalg.cholesky(problem.S)
    f = np.linalg.lstsq(Ls.T @ problem.A, -Ls.T @ problem.F_c, rcond=None)[0]
    return _weighted_norm(problem, problem.A @ f + problem.F_c)


def solve_box_qp(problem: ForceDistributionProblem) -> ForceSolution:
    M, d = problem.least_squares_form()
    res = box_least_squares(M, d, problem.lower, problem.upper)
    f = res.x
    return ForceSolution(
        f=f, leg_ids=list(problem.leg_ids),
        equilibrium_residual=float(np.linalg.norm(problem.A @ f + problem.F_c)),
        active_bounds=sorted(res.at_lower + res.at_upper),
        objective_value=problem.objective(f),
        kkt_ok=res.kkt_ok,
        weighted_residual=_weighted_norm(problem, problem.A @ f + problem.F_c),
        residual_floor=geometric_residual_floor(problem),
    )


def distribute_forces(model: RobotModel, env: EnvConfig, stance: StanceSet,
                      body_rpy=(0.0, 0.0, 0.0), weights: Weights | None = None,
                      lower=None, upper=None) -> ForceSolution:
    problem = assemble_equilibrium(model, env, stance, body_rpy, weights, lower, upper)
    return solve_box_qp(problem)
