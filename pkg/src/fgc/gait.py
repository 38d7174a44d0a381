"""Ambling and trot schedules, swing trajectories and sampled foot targets.

The body translates along +x at constant speed ``stride / T``. Stance feet are
fixed in the surface frame; swing feet follow a cycloid in x and a sine-squared
lift away from the surface, both with zero velocity at liftoff and touchdown.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .robot_model import LEG_IDS, RobotModel

AMBLE_ORDER = ("LF", "RH", "RF", "LH")


class GaitError(ValueError):
    pass


@dataclass(frozen=True)
class GaitParams:
    kind: str = "amble"
    cycle_s: float = 16.0
    stride_m: float = 0.03
    step_height_m: float = 0.015
    order: tuple[str, ...] = AMBLE_ORDER

    @classmethod
    def from_dict(cls, raw: dict | None) -> "GaitParams":
        raw = raw or {}
        return cls(
            kind=raw.get("kind", cls.kind),
            cycle_s=float(raw.get("cycle_s", cls.cycle_s)),
            stride_m=float(raw.get("stride_m", cls.stride_m)),
            step_height_m=float(raw.get("step_height_m", cls.step_height_m)),
            order=tuple(raw.get("order", cls.order)),
        )

    @property
    def speed(self) -> float:
        return self.stride_m / self.cycle_s


@dataclass(frozen=True)
class GaitSchedule:
    kind: str
    cycle_T: float
    # swing window per leg as exact cycle fractions [start, end)
    swing: dict[str, tuple[Fraction, Fraction]]
    order: tuple[str, ...]

    def transitions(self) -> list[Fraction]:
        """Sorted phase-transition fractions in [0, 1)."""
        pts = set()
        for a, b in self.swing.values():
            pts.add(a % 1)
            pts.add(b % 1)
        return sorted(pts)

    def transition_times(self) -> list[float]:
        return [float(f) * self.cycle_T for f in self.transitions()]

    def phases(self) -> list[tuple[float, float, tuple[str, ...]]]:
        """(start, end, stance legs) for each phase of one cycle."""
        fr = self.transitions()
        out = []
        for k, a in enumerate(fr):
            b = fr[k + 1] if k + 1 < len(fr) else Fraction(1)
            mid = float(a + b) / 2.0 * self.cycle_T
            out.append((float(a) * self.cycle_T, float(b) * self.cycle_T, self.stance_legs(mid)))
        return out

    def in_swing(self, leg: str, t: float) -> bool:
        a, b = self.swing[leg]
        tau = (t % self.cycle_T) / self.cycle_T
        return float(a) <= tau < float(b)

    def stance_legs(self, t: float) -> tuple[str, ...]:
        return tuple(l for l in LEG_IDS if not self.in_swing(l, t))

    def events(self) -> list[tuple[float, str, str]]:
        """(time, leg, 'unload' | 'load') within one cycle."""
        ev = []
        for leg, (a, b) in self.swing.items():
            ev.append((float(a) * self.cycle_T, leg, "unload"))
            ev.append((float(b) * self.cycle_T, leg, "load"))
        return sorted(ev)


def phase_schedule(kind: str, T: float, order=AMBLE_ORDER) -> GaitSchedule:
    """Exact swing windows for one cycle of period ``T``.

    Amble: leg ``order[k]`` swings over [t_2k, t_2k+1] with t_0 = 3T/16,
    t_1 = t_0 + T/16 and t_i = t_{i-2} + T/4.
    """
    if not T > 0:
        raise GaitError("cycle period must be positive")
    if kind == "amble":
        if sorted(order) != sorted(LEG_IDS):
            raise GaitError(f"amble order must be a permutation of {LEG_IDS}")
        t = [Fraction(3, 16), Fraction(4, 16)]
        for i in range(2, 8):
            t.append(t[i - 2] + Fraction(1, 4))
        swing = {leg: (t[2 * k], t[2 * k + 1]) for k, leg in enumerate(order)}
        return GaitSchedule("amble", T, swing, tuple(order))
    if kind == "trot":
        half = Fraction(1, 2)
        swing = {"LF": (Fraction(0), half), "RH": (Fraction(0), half),
                 "RF": (half, Fraction(1)), "LH": (half, Fraction(1))}
        return GaitSchedule("trot", T, swing, ("LF", "RH", "RF", "LH"))
    raise GaitError(f"unknown gait kind {kind!r}")


@dataclass
class FootTarget:
    leg_id: str
    position: np.ndarray  # shoulder frame
    phase: str            # "stance" | "swing"
    attached: bool


def body_height(model: RobotModel) -> float:
    """Distance from the body centre to the climbing plane in the nominal posture."""
    return float(np.mean([leg.shoulder_offset[2] + leg.nominal_foot[2] for leg in model.legs]))


def ideal_body_position(t: float, speed: float, model: RobotModel) -> np.ndarray:
    return np.array([speed * t, 0.0, -body_height(model)])


def _swing_profile(s: float) -> tuple[float, float]:
    """(forward fraction, lift fraction) at swing progress s in [0, 1]."""
    fwd = s - math.sin(2.0 * math.pi * s) / (2.0 * math.pi)
    lift = math.sin(math.pi * s) ** 2
    return fwd, lift


def world_foot_position(schedule: GaitSchedule, model: RobotModel, leg_id: str, t: float,
                        stride: float, step_height: float) -> tuple[np.ndarray, str]:
    """Planned foot position in the surface frame and its phase."""
    T = schedule.cycle_T
    speed = stride / T
    leg = model.leg(leg_id)
    a, b = (float(f) * T for f in schedule.swing[leg_id])
    n = math.floor(t / T)
    tau = t - n * T
    base = leg.shoulder_offset + leg.nominal_foot
    y = base[1]

    def anchor_x(t_mid):
        return base[0] + speed * t_mid

    if tau < a:
        return np.array([anchor_x(n * T + (a + b - T) / 2.0), y, 0.0]), "stance"
    if tau >= b:
        return np.array([anchor_x(n * T + (a + b + T) / 2.0), y, 0.0]), "stance"
    s = (tau - a) / (b - a)
    x0 = anchor_x(n * T + (a + b - T) / 2.0)
    fwd, lift = _swing_profile(s)
    return np.array([x0 + stride * fwd, y, -step_height * lift]), "swing"


def foot_targets_at(schedule: GaitSchedule, model: RobotModel, t: float, stride: float,
                    step_height: float, speed: float | None = None) -> dict[str, FootTarget]:
    """Shoulder-frame targets of all four feet at time ``t`` along the ideal body path."""
    if t < 0:
        raise GaitError("time must be non-negative")
    if stride <= 0 or step_height <= 0:
        raise GaitError("stride and step height must be positive")
    if speed is not None and abs(speed * schedule.cycle_T - stride) > 1e-9:
        raise GaitError("speed * T must equal the stride")
    body = ideal_body_position(t, stride / schedule.cycle_T, model)
    out = {}
    for leg in model.legs:
        world, phase = world_foot_position(schedule, model, leg.leg_id, t, stride, step_height)
        out[leg.leg_id] = FootTarget(
            leg_id=leg.leg_id,
            position=world - body - leg.shoulder_offset,
            phase=phase,
            attached=phase == "stance",
        )
    return out


@dataclass
class GaitSample:
    t: float
    phase_index: int
    stance: tuple[str, ...]
    targets: dict[str, np.ndarray] = field(default_factory=dict)


def sample_gait(schedule: GaitSchedule, model: RobotModel, params: GaitParams,
                per_phase: int = 1) -> list[GaitSample]:
    """Samples aligned with phase transitions, ``per_phase`` evenly spaced per phase."""
    if per_phase < 1:
        raise GaitError("sampling too sparse: at least one sample per phase is required")
    samples = []
    for k, (start, end, stance) in enumerate(schedule.phases()):
        for j in range(per_phase):
            t = start + (end - start) * j / per_phase
            targets = foot_targets_at(schedule, model, t, params.stride_m, params.step_height_m)
            samples.append(GaitSample(
                t=t, phase_index=k, stance=stance,
                targets={leg: targets[leg].position for leg in stance},
            ))
    return samples
