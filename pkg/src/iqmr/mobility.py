"""3D Gauss-Markov mobility inside a cylindrical airspace.

Each UAV carries a speed s, a heading d and a pitch p.  At every mobility
update they are pulled toward their means with memory ``alpha`` and
perturbed by uniform noise supplied by the caller, so everything here is
pure and reproducible.  Positions move along the resulting velocity and are
folded back into the cylinder by mirror reflection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Position3:
    x: float
    y: float
    h: float


@dataclass(frozen=True)
class Kinematics:
    s: float  # m/s
    d: float  # heading, radians
    p: float  # pitch, radians (positive climbs)


@dataclass(frozen=True)
class MobilityParams:
    alpha: float
    mean_speed: float
    mean_direction: float
    mean_pitch: float
    speed_range: tuple[float, float]
    direction_range: tuple[float, float]
    pitch_range: tuple[float, float]
    pause_time_s: float = 1.0

    @property
    def pitch_limit(self) -> float:
        # pitch bounds are magnitudes: a UAV may climb or descend
        return self.pitch_range[1]

    def noise_half_widths(self) -> tuple[float, float, float]:
        """Zero-centred noise amplitudes, one per kinematic component."""
        return (
            0.5 * (self.speed_range[1] - self.speed_range[0]),
            0.5 * (self.direction_range[1] - self.direction_range[0]),
            0.5 * (self.pitch_range[1] - self.pitch_range[0]),
        )


@dataclass(frozen=True)
class Domain:
    radius: float
    h_min: float
    h_max: float

    def contains(self, pos: Position3) -> bool:
        return math.hypot(pos.x, pos.y) <= self.radius and self.h_min <= pos.h <= self.h_max


def wrap_angle(a: float) -> float:
    """Map an angle onto (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def gmm_step(k: Kinematics, params: MobilityParams, noise: tuple[float, float, float]) -> Kinematics:
    """One Gauss-Markov update of (s, d, p).

    The heading mean is unwrapped next to the current heading before mixing
    so that, e.g., d = 179 deg and mean = -179 deg average to 180 deg rather
    than 0.
    """
    a = params.alpha
    b = 1.0 - a
    c = math.sqrt(max(0.0, 1.0 - a * a))
    n_s, n_d, n_p = noise

    s = a * k.s + b * params.mean_speed + c * n_s
    s = _clamp(s, params.speed_range[0], params.speed_range[1])

    d_mean = k.d + wrap_angle(params.mean_direction - k.d)
    d = a * k.d + b * d_mean + c * n_d
    if a != 1.0:
        d = wrap_angle(d)

    lim = params.pitch_limit
    p = a * k.p + b * params.mean_pitch + c * n_p
    p = _clamp(p, -lim, lim)
    return Kinematics(s, d, p)


def velocity(k: Kinematics) -> tuple[float, float, float]:
    cp = math.cos(k.p)
    return (k.s * math.cos(k.d) * cp, k.s * math.sin(k.d) * cp, k.s * math.sin(k.p))


def advance_position(pos: Position3, k: Kinematics, dt: float) -> Position3:
    """Straight-line displacement over dt seconds (no boundary handling)."""
    step = k.s * dt
    cp = math.cos(k.p)
    return Position3(
        pos.x + step * math.cos(k.d) * cp,
        pos.y + step * math.sin(k.d) * cp,
        pos.h + step * math.sin(k.p),
    )


def _fold(v: float, lo: float, hi: float) -> tuple[float, int]:
    """Mirror v into [lo, hi]; also return the number of reflections."""
    if lo <= v <= hi:
        return v, 0
    width = hi - lo
    period = 2.0 * width
    t = (v - lo) % period
    n = int(math.floor((v - lo) / width))
    if t > width:
        t = period - t
    return lo + t, abs(n)


def reflect_into_domain(pos: Position3, domain: Domain) -> Position3:
    """Mirror a point back across whichever cylinder boundary it crossed."""
    return reflect_with_kinematics(pos, None, domain)[0]


def reflect_with_kinematics(pos: Position3, k: Kinematics | None, domain: Domain):
    """Reflect a position and, if given, the velocity that carried it there.

    Returns ``(position, kinematics)``.  An odd number of altitude
    reflections negates the pitch; an odd number of radial reflections
    mirrors the heading across the radial normal at the new position.
    """
    x, y, h = pos.x, pos.y, pos.h
    h2, nh = _fold(h, domain.h_min, domain.h_max)
    rho = math.hypot(x, y)
    nr = 0
    if rho > domain.radius:
        rho2, nr = _fold(rho, 0.0, domain.radius)
        scale = rho2 / rho
        x, y = x * scale, y * scale
        while math.hypot(x, y) > domain.radius:
            x, y = math.nextafter(x, 0.0), math.nextafter(y, 0.0)
    new_pos = Position3(x, y, h2) if (nh or nr) else pos
    if k is None or not (nh % 2 or nr % 2):
        return new_pos, k
    d, p = k.d, k.p
    if nh % 2:
        p = -p
    if nr % 2:
        d = mirror_heading(d, new_pos)
    return new_pos, Kinematics(k.s, d, p)


def mirror_heading(d: float, at: Position3) -> float:
    """Reflect a heading across the radial normal of the cylinder wall at ``at``."""
    r = math.hypot(at.x, at.y)
    if r == 0.0:
        return d
    nx, ny = at.x / r, at.y / r
    vx, vy = math.cos(d), math.sin(d)
    dot = vx * nx + vy * ny
    return math.atan2(vy - 2 * dot * ny, vx - 2 * dot * nx)


def move(pos: Position3, k: Kinematics, dt: float, domain: Domain):
    """Advance then reflect; returns ``(position, kinematics)``."""
    return reflect_with_kinematics(advance_position(pos, k, dt), k, domain)
