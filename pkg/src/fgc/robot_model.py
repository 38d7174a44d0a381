"""Robot description: elastic leg chains, mass properties, force limits, environment.

Everything here is immutable after loading. Lengths in metres, angles in radians
(except ``inclination_deg``), stiffness in SI units.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any

import numpy as np

LEG_IDS = ("LF", "RF", "LH", "RH")


class ConfigError(ValueError):
    """Base class for robot configuration problems."""


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    pass


@dataclass(frozen=True)
class ElasticLink:
    """Flexible link treated as a cantilever.

    ``I_x`` governs deflection in the leg's bending plane, ``I_z`` deflection
    along the preceding joint axis (out of plane).
    """

    L: float
    E: float
    I_x: float
    I_z: float

    def bending_stiffness(self) -> tuple[float, float]:
        k = 3.0 * self.E / self.L**3
        return k * self.I_x, k * self.I_z


@dataclass(frozen=True)
class RevoluteJointSpec:
    alpha: float
    a: float
    d: float
    theta_offset: float
    k_q: float
    lo: float = -math.pi
    hi: float = math.pi

    @property
    def dh_row(self) -> tuple[float, float, float, float]:
        return (self.alpha, self.a, self.d, self.theta_offset)


@dataclass(frozen=True)
class LegChain:
    leg_id: str
    shoulder_offset: np.ndarray
    joints: tuple[RevoluteJointSpec, ...]
    links: tuple[ElasticLink, ...]
    k_qs: float = 0.0
    # nominal stance foot position in the shoulder frame
    nominal_foot: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([j.lo for j in self.joints])
        hi = np.array([j.hi for j in self.joints])
        return lo, hi


@dataclass(frozen=True)
class RobotModel:
    legs: tuple[LegChain, ...]
    body_mass: float
    com_offset: np.ndarray
    body_length: float
    force_lower: np.ndarray
    force_upper: np.ndarray
    include_ankle_stiffness: bool = False

    def leg(self, leg_id: str) -> LegChain:
        for leg in self.legs:
            if leg.leg_id == leg_id:
                return leg
        raise KeyError(leg_id)

    @property
    def leg_ids(self) -> tuple[str, ...]:
        return tuple(leg.leg_id for leg in self.legs)

    def scaled_stiffness(self, factor: float) -> "RobotModel":
        """Copy with every joint and link stiffness multiplied by ``factor``."""
        legs = []
        for leg in self.legs:
            joints = tuple(replace(j, k_q=j.k_q * factor) for j in leg.joints)
            links = tuple(replace(l, E=l.E * factor) for l in leg.links)
            legs.append(replace(leg, joints=joints, links=links, k_qs=leg.k_qs * factor))
        return replace(self, legs=tuple(legs))


@dataclass(frozen=True)
class EnvConfig:
    """Climbing surface and gravity.

    Surface frame: the climbing plane is z = 0, +x is the direction of travel and
    +z points from the robot toward the plane, so the body is at z < 0 for every
    inclination. 0 deg is level ground, 180 deg a ceiling.
    """

    inclination_deg: float = 180.0
    gravity_mps2: float = 9.81

    @property
    def gravity_direction(self) -> np.ndarray:
        b = math.radians(self.inclination_deg)
        return np.array([-math.sin(b), 0.0, math.cos(b)])

    @property
    def gravity(self) -> np.ndarray:
        return self.gravity_mps2 * self.gravity_direction

    def with_gravity(self, g: float) -> "EnvConfig":
        return replace(self, gravity_mps2=g)


def build_stiffness_matrices(model: RobotModel, leg_id: str) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(K_omega, K_q)`` for one leg.

    ``K_omega`` is 4x4 with entries 3EI/L^3 ordered (link1 x, link1 z, link2 x,
    link2 z); ``K_q`` is 3x3 with the joint stiffnesses as configured (shoulder
    bevel-gear joints already hold the sum of both motors).
    """
    leg = model.leg(leg_id)
    k_w = []
    for link in leg.links:
        k_w.extend(link.bending_stiffness())
    return np.diag(k_w), np.diag([j.k_q for j in leg.joints])


def _vec3(value: Any, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ConfigValidationError(f"{name} must be a 3-vector")
    if not np.all(np.isfinite(arr)):
        raise ConfigValidationError(f"{name} must be finite")
    return arr


def _positive(value: Any, name: str) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise ConfigValidationError(f"{name} must be positive")
    return v


def _parse_leg(raw: dict) -> LegChain:
    leg_id = raw.get("id")
    if leg_id not in LEG_IDS:
        raise ConfigValidationError(f"leg id must be one of {LEG_IDS}, got {leg_id!r}")
    joints_raw = raw.get("joints", [])
    links_raw = raw.get("links", [])
    if len(joints_raw) != 3:
        raise ConfigValidationError(f"leg {leg_id}: exactly 3 active joints required")
    if len(links_raw) != 2:
        raise ConfigValidationError(f"leg {leg_id}: exactly 2 flexible links required")

    joints = []
    for k, j in enumerate(joints_raw):
        lo = float(j.get("lo", -math.pi))
        hi = float(j.get("hi", math.pi))
        if not lo < hi:
            raise ConfigValidationError(f"leg {leg_id} joint {k + 1}: command limit lo must be below hi")
        joints.append(RevoluteJointSpec(
            alpha=float(j["alpha"]), a=float(j["a"]), d=float(j["d"]),
            theta_offset=float(j["theta_offset"]),
            k_q=_positive(j["k_q"], f"leg {leg_id} joint {k + 1} stiffness k_q"),
            lo=lo, hi=hi,
        ))

    links = []
    for k, l in enumerate(links_raw):
        if float(l["L"]) <= 0.0:
            raise ConfigValidationError("link length must be positive")
        links.append(ElasticLink(
            L=float(l["L"]),
            E=_positive(l["E"], f"leg {leg_id} link {k + 1} elastic modulus"),
            I_x=_positive(l["I_x"], f"leg {leg_id} link {k + 1} I_x"),
            I_z=_positive(l["I_z"], f"leg {leg_id} link {k + 1} I_z"),
        ))
        if not all(math.isfinite(s) and s > 0 for s in links[-1].bending_stiffness()):
            raise ConfigValidationError(f"leg {leg_id} link {k + 1}: bending stiffness not finite")

    # the first flexible link is the knee row's `a` translation
    if not math.isclose(joints[2].a, links[0].L, rel_tol=0.0, abs_tol=1e-12):
        raise ConfigValidationError(f"leg {leg_id}: link 1 length must equal the knee DH offset a")

    k_qs = float(raw.get("k_qs", 0.0))
    if k_qs < 0:
        raise ConfigValidationError(f"leg {leg_id}: k_qs must be non-negative")
    nominal = raw.get("nominal_foot_m")
    return LegChain(
        leg_id=leg_id,
        shoulder_offset=_vec3(raw.get("shoulder_offset_m"), f"leg {leg_id} shoulder_offset_m"),
        joints=tuple(joints),
        links=tuple(links),
        k_qs=k_qs,
        nominal_foot=_vec3(nominal, f"leg {leg_id} nominal_foot_m") if nominal is not None else np.zeros(3),
    )


def parse_robot_config(doc: dict) -> tuple[RobotModel, EnvConfig]:
    try:
        body = doc["body"]
        legs_raw = doc["legs"]
    except (KeyError, TypeError) as exc:
        raise ConfigValidationError(f"missing required section {exc}") from None

    mass = _positive(body.get("mass_kg"), "body mass")
    com = _vec3(body.get("com_offset_m", [0.0, 0.0, 0.0]), "com_offset_m")
    length = _positive(body.get("length_m", 0.18), "body length")

    legs = tuple(_parse_leg(l) for l in legs_raw)
    ids = [l.leg_id for l in legs]
    if sorted(ids) != sorted(LEG_IDS):
        raise ConfigValidationError(f"exactly four legs {LEG_IDS} required, got {ids}")
    legs = tuple(sorted(legs, key=lambda l: LEG_IDS.index(l.leg_id)))

    bounds = doc.get("bounds", {})
    lower = _vec3(bounds.get("lower_n", [-3.5, -3.5, -8.0]), "bounds.lower_n")
    upper = _vec3(bounds.get("upper_n", [3.5, 3.5, 8.0]), "bounds.upper_n")
    if not np.all(lower < upper):
        raise ConfigValidationError("force bounds: lower must be below upper componentwise")

    env_raw = doc.get("env", {})
    incl = float(env_raw.get("inclination_deg", 180.0))
    if not 0.0 <= incl <= 180.0:
        raise ConfigValidationError("inclination_deg must lie in [0, 180]")
    g = float(env_raw.get("gravity_mps2", 9.81))
    if not math.isfinite(g) or g < 0:
        raise ConfigValidationError("gravity_mps2 must be non-negative")

    options = doc.get("options", {})
    model = RobotModel(
        legs=legs, body_mass=mass, com_offset=com, body_length=length,
        force_lower=lower, force_upper=upper,
        include_ankle_stiffness=bool(options.get("include_ankle_stiffness", False)),
    )
    return model, EnvConfig(inclination_deg=incl, gravity_mps2=g)


def load_robot_config(text: str) -> tuple[RobotModel, EnvConfig]:
    """Parse and validate a JSON robot document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigParseError(f"malformed robot config: {exc}") from None
    return parse_robot_config(doc)


def default_config_document() -> dict:
    text = resources.files("fgc").joinpath("data/default_robot.json").read_text(encoding="utf-8")
    return json.loads(text)


def default_robot() -> tuple[RobotModel, EnvConfig]:
    return parse_robot_config(default_config_document())
