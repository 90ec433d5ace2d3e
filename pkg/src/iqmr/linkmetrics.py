"""Pairwise link geometry: distance, link sustenance time, collision risk."""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .mobility import Kinematics, Position3, velocity

EQUIDISTANT_TOL = 1e-6  # m/s


class Relation(str, Enum):
    RECEDING = "receding"
    APPROACHING = "approaching"
    EQUIDISTANT = "equidistant"


@dataclass(frozen=True)
class CollisionParams:
    xi_x: float = 3.0
    xi_y: float = 3.0
    r_min: float = 1.0
    p_coll_threshold: float = 0.9


@dataclass(frozen=True)
class LstResult:
    """Seconds until the link breaks; ``seconds`` is None when equidistant."""

    seconds: float | None

    @property
    def equidistant(self) -> bool:
        return self.seconds is None


EQUIDISTANT = LstResult(None)


def relative_distance(a: Position3, b: Position3) -> float:
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.h - b.h) ** 2)


def link_sustenance_time(D: float, s_i: float, s_j: float, relation: Relation, R_t: float,
                         r_min: float) -> LstResult:
    if relation == Relation.RECEDING:
        closing = s_i + s_j
        if closing == 0.0:
            return EQUIDISTANT
        return LstResult(max(0.0, (2.0 * R_t - D) / closing))
    if relation == Relation.APPROACHING:
        closing = abs(s_i - s_j)
        if closing == 0.0:
            return EQUIDISTANT
        return LstResult(max(0.0, (D - r_min) / closing))
    return EQUIDISTANT


def classify_relative_motion(pos_i: Position3, kin_i: Kinematics, pos_j: Position3,
                             kin_j: Kinematics) -> Relation:
    """Sign of the rate of change of the separation, from current velocities."""
    dx, dy, dh = pos_j.x - pos_i.x, pos_j.y - pos_i.y, pos_j.h - pos_i.h
    dist = math.sqrt(dx * dx + dy * dy + dh * dh)
    vi, vj = velocity(kin_i), velocity(kin_j)
    rvx, rvy, rvh = vj[0] - vi[0], vj[1] - vi[1], vj[2] - vi[2]
    if dist == 0.0:
        speed = math.sqrt(rvx * rvx + rvy * rvy + rvh * rvh)
        return Relation.RECEDING if speed >= EQUIDISTANT_TOL else Relation.EQUIDISTANT
    rate = (dx * rvx + dy * rvy + dh * rvh) / dist
    if abs(rate) < EQUIDISTANT_TOL:
        return Relation.EQUIDISTANT
    return Relation.RECEDING if rate > 0 else Relation.APPROACHING


def collision_probability(r: float, params: CollisionParams) -> float:
    return -math.expm1(-(r * r) / (2.0 * params.xi_x * params.xi_y))


def normalize(x: float, x_min: float, x_max: float) -> float:
    if x_max == x_min:
        raise ValueError("degenerate normalisation range")
    x = min(max(x, x_min), x_max)
    return (x - x_min) / (x_max - x_min)


def denormalize(u: float, x_min: float, x_max: float) -> float:
    return x_min + u * (x_max - x_min)
