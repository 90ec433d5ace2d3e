"""Hello-based neighbour discovery and forwarding-sector filtering.

Every UAV periodically broadcasts a hello carrying its location, battery,
reception ratios, learning parameters and best Q-value.  Receivers keep one
record per originator.  A record is a forwarding *candidate* when the
originator sat inside the receiver's sector (a cone of radius R_t around the
receiver-to-base-station axis) at reception time.  The broadcast period
adapts to the link sustenance time of the most fragile candidate link.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .linkmetrics import LstResult
from .mobility import Kinematics, Position3

ANGLE_SLACK = 1e-12  # absorbs rounding when a point sits exactly on the cone boundary


@dataclass(frozen=True)
class HelloMessage:
    originator: int
    location: Position3
    kinematics: Kinematics
    residual_j: float
    energy_norm: float
    prs_l2: float
    prs_l3: float
    beta: float
    gamma: float
    best_q: float
    p_coll: float = 0.0
    sent_tick: int = 0
    next_hello_tick: int = 0


@dataclass
class NeighbourRecord:
    msg: HelloMessage
    last_heard: int
    candidate: bool
    distance: float = 0.0  # receiver-originator separation at reception


@dataclass
class NeighbourTable:
    records: dict[int, NeighbourRecord] = field(default_factory=dict)
    # earliest tick at which some record may expire (purge fast path);
    # None means unknown, so the next purge scans everything
    earliest_expiry: int | None = None

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, node: int) -> bool:
        return node in self.records

    def candidates(self) -> list[NeighbourRecord]:
        return [r for r in self.records.values() if r.candidate]

    def candidate_ids(self) -> list[int]:
        return [k for k, r in self.records.items() if r.candidate]

    def remove(self, node: int) -> None:
        self.records.pop(node, None)

    def clear(self) -> None:
        self.records.clear()
        self.earliest_expiry = None


@dataclass(frozen=True)
class Sector:
    apex: Position3
    axis: tuple[float, float, float]  # unit vector
    radius: float
    half_angle: float

    @classmethod
    def toward(cls, apex: Position3, target: Position3, radius: float, half_angle: float) -> "Sector":
        vx, vy, vh = target.x - apex.x, target.y - apex.y, target.h - apex.h
        n = math.sqrt(vx * vx + vy * vy + vh * vh)
        if n == 0.0:
            raise ValueError("sector apex coincides with its target")
        return cls(apex, (vx / n, vy / n, vh / n), radius, half_angle)


def angle_to_axis(point: Position3, sector: Sector) -> float:
    vx, vy, vh = point.x - sector.apex.x, point.y - sector.apex.y, point.h - sector.apex.h
    ax, ay, ah = sector.axis
    dot = vx * ax + vy * ay + vh * ah
    cx, cy, ch = vy * ah - vh * ay, vh * ax - vx * ah, vx * ay - vy * ax
    return math.atan2(math.sqrt(cx * cx + cy * cy + ch * ch), dot)


def in_sector(candidate: Position3, sector: Sector) -> bool:
    """Inside the cone: within the radius and within the half-angle, both inclusive."""
    vx, vy, vh = candidate.x - sector.apex.x, candidate.y - sector.apex.y, candidate.h - sector.apex.h
    dist = math.sqrt(vx * vx + vy * vy + vh * vh)
    if dist == 0.0 or dist > sector.radius * (1.0 + 1e-12):
        return False
    return angle_to_axis(candidate, sector) <= sector.half_angle + ANGLE_SLACK


def broadcast_hello(uav, now: int = 0) -> HelloMessage:
    """Snapshot a UAV's advertised state (duck-typed on the engine's UavState)."""
    return HelloMessage(
        originator=uav.id,
        location=uav.pos,
        kinematics=uav.kin,
        residual_j=uav.battery.residual,
        energy_norm=uav.battery.normalized,
        prs_l2=uav.counters.ratio_l2,
        prs_l3=uav.counters.ratio_l3,
        beta=uav.beta,
        gamma=uav.gamma,
        best_q=max(uav.q.values(), default=0.0),
        p_coll=uav.p_coll,
        sent_tick=now,
        next_hello_tick=uav.next_hello_tick,
    )


def expiry_tick(record: NeighbourRecord, expiry_ticks: int, mode: str = "after-next-hello") -> int:
    """Last tick at which the record is still valid.

    ``since-last-heard`` keeps a record for the expiry window after it was
    heard.  ``after-next-hello`` grants the same window past the
    originator's advertised next broadcast, so slow hello schedules do not
    empty the table between refreshes.
    """
    if mode == "since-last-heard":
        return record.last_heard + expiry_ticks
    return max(record.msg.next_hello_tick, record.last_heard) + expiry_ticks


def is_expired(record: NeighbourRecord, now: int, expiry_ticks: int, mode: str = "after-next-hello") -> bool:
    return now > expiry_tick(record, expiry_ticks, mode)


def purge(table: NeighbourTable, now: int, expiry_ticks: int, mode: str = "after-next-hello") -> list[int]:
    """Remove expired records; returns the ids removed."""
    if table.earliest_expiry is not None and now <= table.earliest_expiry:
        return []
    stale = [k for k, r in table.records.items() if is_expired(r, now, expiry_ticks, mode)]
    for k in stale:
        del table.records[k]
    table.earliest_expiry = min((expiry_tick(r, expiry_ticks, mode) for r in table.records.values()),
                                default=None)
    return stale


def process_hello(table: NeighbourTable, msg: HelloMessage, sector: Sector, now: int,
                  expiry_ticks: int | None = None, mode: str = "after-next-hello",
                  purge_now: bool = True) -> NeighbourTable:
    """Upsert the originator's record, flag it as candidate if in-sector, then purge."""
    loc, apex = msg.location, sector.apex
    dist = math.sqrt((loc.x - apex.x) ** 2 + (loc.y - apex.y) ** 2 + (loc.h - apex.h) ** 2)
    rec = NeighbourRecord(msg, now, in_sector(loc, sector), dist)
    old = table.records.get(msg.originator)
    table.records[msg.originator] = rec
    if expiry_ticks is None:
        table.earliest_expiry = None
    elif table.earliest_expiry is not None:
        if old is not None and expiry_tick(old, expiry_ticks, mode) <= table.earliest_expiry:
            table.earliest_expiry = None  # the replaced record may have set the minimum
        else:
            table.earliest_expiry = min(table.earliest_expiry, expiry_tick(rec, expiry_ticks, mode))
    if expiry_ticks is not None and purge_now:
        purge(table, now, expiry_ticks, mode)
    return table


def next_hello_interval(now: int, lst: LstResult, base_ticks: int, max_ticks: int, tick_s: float) -> int:
    """Tick of the next broadcast: LST clamped to [base, max]; base when equidistant."""
    if lst.equidistant:
        return now + base_ticks
    ticks = int(math.floor(lst.seconds / tick_s + 1e-9))
    return now + min(max(ticks, base_ticks), max_ticks)
