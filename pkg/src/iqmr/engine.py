"""Tick/episode loop: modes, packet lifecycle, hello exchange and fault injection.

One ``World`` owns every UAV.  ``run_episode`` injects a burst of packets
and advances ticks until each packet is delivered to the base station or
dropped.  Each tick runs, in order: scheduled rejoins, mobility, energy,
hello exchange, receive-queue handling, mode transitions and one hop per
transmitting UAV.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from . import discovery, energetics, linkmetrics, mobility, radio, routing
from .config import ScenarioEvent, SimConfig
from .discovery import NeighbourTable, Sector
from .energetics import Battery, EnergyParams
from .linkmetrics import CollisionParams
from .metrics import EpisodeMetrics
from .mobility import Domain, Kinematics, MobilityParams, Position3

__all__ = ["Mode", "Packet", "ReceptionCounters", "ScenarioEvent", "UavState", "World",
           "InvariantViolation", "ALLOWED_TRANSITIONS", "transition_mode"]

# independent random streams per world
_STREAM_MOBILITY, _STREAM_FADING, _STREAM_SELECT, _STREAM_SCENARIO = range(4)
_PURPOSE_COVERAGE, _PURPOSE_HOP = 0, 1

TBS_POSITION = Position3(0.0, 0.0, 0.0)


class InvariantViolation(AssertionError):
    pass


class Mode(str, Enum):
    ND = "NeighbourDiscovery"
    R = "Receive"
    T = "Transmit"
    C = "Charge"


ALLOWED_TRANSITIONS = frozenset({
    (Mode.ND, Mode.R), (Mode.R, Mode.T), (Mode.T, Mode.R),
    (Mode.ND, Mode.C), (Mode.R, Mode.C), (Mode.T, Mode.C),
    (Mode.C, Mode.ND), (Mode.R, Mode.ND), (Mode.T, Mode.ND),
} | {(m, m) for m in Mode})


@dataclass
class ReceptionCounters:
    pac_l2: int = 0
    ack_l2: int = 0
    pac_l3: int = 0
    ack_l3: int = 0

    @property
    def ratio_l2(self) -> float:
        return self.ack_l2 / self.pac_l2 if self.pac_l2 else 0.0

    @property
    def ratio_l3(self) -> float:
        return self.ack_l3 / self.pac_l3 if self.pac_l3 else 0.0

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.pac_l2, self.ack_l2, self.pac_l3, self.ack_l3)


@dataclass(eq=False)
class Packet:
    id: int
    source: int
    created_episode: int
    size_bits: int = 1200
    path: list = field(default_factory=list)
    traces: dict = field(default_factory=dict)
    failures: int = 0


@dataclass(eq=False)
class UavState:
    id: int
    pos: Position3
    kin: Kinematics
    mob: MobilityParams
    battery: Battery
    mode: Mode = Mode.ND
    q_r: deque = field(default_factory=deque)
    q_t: deque = field(default_factory=deque)
    counters: ReceptionCounters = field(default_factory=ReceptionCounters)
    table: NeighbourTable = field(default_factory=NeighbourTable)
    q: dict = field(default_factory=dict)
    attached: bool = True
    leg_left: int = 0
    pause_left: int = 0
    next_hello_tick: int = 0
    beta: float = 1.0
    gamma: float = 0.1
    p_cov: float = 0.0  # coverage of the last link this UAV received on
    p_coll: float = 0.0  # worst pairwise collision probability against candidates
    nc: int = 0  # candidate count, TBS included
    tbs_in_range: bool = False
    relocate: bool = False

    @property
    def airborne(self) -> bool:
        return self.mode != Mode.C

    @property
    def active(self) -> bool:
        return self.mode != Mode.C and self.attached


def transition_mode(uav: UavState, e_th: float) -> Mode:
    """Next operating mode, following the four-mode cycle."""
    if uav.mode == Mode.C:
        return Mode.ND if uav.battery.full else Mode.C
    if uav.battery.residual < e_th:
        return Mode.C
    if not uav.attached or uav.nc == 0:
        return Mode.ND
    if uav.mode == Mode.ND:
        return Mode.R
    if uav.mode == Mode.R:
        return Mode.T if (not uav.q_r and uav.q_t) else Mode.R
    return Mode.R if not uav.q_t else Mode.T


def _seeded(*key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(key))))


class KeyedStreams:
    """Counter-based random streams addressed by (tick, node, purpose).

    Re-keying one Philox generator is far cheaper than building a fresh
    generator per link, and the draws for a given key never depend on what
    else the simulation consumed.
    """

    def __init__(self, seed: int):
        self.bitgen = np.random.Philox(key=[seed & (2**64 - 1), 0])
        self.gen = np.random.Generator(self.bitgen)
        self._state = self.bitgen.state
        self._seed = seed & (2**64 - 1)

    def at(self, tick: int, node: int, purpose: int) -> np.random.Generator:
        st = self._state
        st["state"]["key"][:] = (self._seed, ((tick & (2**40 - 1)) << 24) | ((node & 0xFFFFF) << 4) | purpose)
        st["state"]["counter"][:] = 0
        st["buffer_pos"] = 4
        st["has_uint32"] = 0
        self.bitgen.state = st
        return self.gen


class World:
    """A seeded simulation instance.

    ``on_update`` (optional) is called as ``on_update(node, action, reward,
    next_node)`` for every Q update; ``next_node`` is None for terminal
    updates.  The acceptance suite uses it to replay learning independently.
    """

    def __init__(self, cfg: SimConfig, on_update: Callable | None = None,
                 check_invariants: bool | None = None):
        self.cfg = cfg
        self.M = cfg.sim.num_uavs
        self.tbs = self.M
        self.seed = cfg.sim.seed
        self.on_update = on_update
        self.checking = cfg.sim.check_invariants if check_invariants is None else check_invariants
        self._derive()

        self.rng_mob = _seeded(self.seed, _STREAM_MOBILITY)
        self.rng_sel = _seeded(self.seed, _STREAM_SELECT)
        self.rng_scn = _seeded(self.seed, _STREAM_SCENARIO)
        self.fading = KeyedStreams(int(np.random.SeedSequence([self.seed, _STREAM_FADING]).generate_state(1, np.uint64)[0]))

        self.tick = 0
        self.episode = 0
        self.injected = 0
        self.delivered = 0
        self.dropped = 0
        self.next_packet_id = 0
        self.next_source = 0
        self.in_flight: dict[int, Packet] = {}
        self.ep_reward = 0.0
        self.rejoin_schedule: list[tuple[int, int]] = []  # (tick, uav id)
        self.transitions: set[tuple[Mode, Mode]] = set()
        self._senders: list[int] = []
        self._prev_counters: list[tuple] = []
        self._prev_energy: list[float] = []
        self._prev_modes: list[Mode] = []

        self.uavs = [self._spawn(i) for i in range(self.M)]
        self.qtables = [u.q for u in self.uavs]

    # ------------------------------------------------------------------ setup
    def _derive(self) -> None:
        cfg = self.cfg
        self.dt = cfg.sim.tick_ms / 1000.0
        self.R_t = cfg.radio_range_m
        self.domain = Domain(cfg.domain.radius_m, *cfg.domain.height_range_m)
        self.chan = radio.ChannelParams.from_config(cfg)
        self.energy = EnergyParams.from_config(cfg)
        c = cfg.collision
        self.coll = CollisionParams(c.xi_x_m, c.xi_y_m, c.r_min_m, c.p_coll_threshold)
        self.cons = routing.Constraints(cfg.energy.threshold_j, cfg.channel.p_cov_threshold,
                                        c.p_coll_threshold, c.r_min_m)
        d = cfg.discovery
        self.expiry_ticks = max(1, math.ceil(d.expiry_ms / cfg.sim.tick_ms - 1e-9))
        self.base_ticks = max(1, round(d.base_hello_interval_ms / cfg.sim.tick_ms))
        self.max_ticks = max(self.base_ticks, round(d.max_hello_interval_ms / cfg.sim.tick_ms))
        m = cfg.mobility
        self.leg_ticks = max(1, round(m.leg_time_s / self.dt))
        self.pause_ticks = max(0, round(m.pause_time_s / self.dt))
        self.half_angle = d.sector_half_angle_rad
        self.weights = cfg.rl.weights
        self.lam = cfg.rl.lambda_
        self.eps = cfg.rl.epsilon

    def _mob_params(self, mean_direction: float) -> MobilityParams:
        m = self.cfg.mobility
        return MobilityParams(m.alpha, m.mean_speed, mean_direction, 0.0, m.speed_range,
                              m.direction_range, m.pitch_range, m.pause_time_s)

    def _random_position(self) -> Position3:
        r = self.domain.radius * math.sqrt(self.rng_mob.random())
        th = self.rng_mob.uniform(-math.pi, math.pi)
        h = self.rng_mob.uniform(self.domain.h_min, self.domain.h_max)
        return Position3(r * math.cos(th), r * math.sin(th), h)

    def _random_kinematics(self) -> Kinematics:
        m = self.cfg.mobility
        lim = m.pitch_range[1]
        return Kinematics(self.rng_mob.uniform(*m.speed_range), self.rng_mob.uniform(-math.pi, math.pi),
                          self.rng_mob.uniform(-lim, lim))

    def _spawn(self, i: int) -> UavState:
        pos = self._random_position()
        kin = self._random_kinematics()
        mob = self._mob_params(self.rng_mob.uniform(-math.pi, math.pi))
        return UavState(i, pos, kin, mob, Battery(self.energy.initial_j, self.energy.initial_j),
                        leg_left=self.leg_ticks)

    def place(self, positions, kinematics=None) -> None:
        """Pin UAV positions (and optionally kinematics); used for fixed topologies."""
        for u, p in zip(self.uavs, positions):
            u.pos = p if isinstance(p, Position3) else Position3(*p)
        if kinematics is not None:
            for u, k in zip(self.uavs, kinematics):
                u.kin = k

    # -------------------------------------------------------------- geometry
    def position_of(self, node: int) -> Position3:
        return TBS_POSITION if node == self.tbs else self.uavs[node].pos

    def sector(self, u: UavState) -> Sector:
        return Sector.toward(u.pos, TBS_POSITION, self.R_t, self.half_angle)

    def _eff_r(self, dist: float) -> float:
        # separation expressed in transmission ranges, scaled; keeps the
        # collision term informative across the whole radio range
        return self.cfg.collision.radius_scale * dist / self.R_t

    def pair_p_coll(self, dist: float) -> float:
        return linkmetrics.collision_probability(self._eff_r(dist), self.coll)

    # ------------------------------------------------------------------- tick
    def step(self) -> None:
        t = self.tick
        if self.checking:
            self._snapshot_for_checks()
        self._rejoins(t)
        self._move()
        self._drain()
        self._hello(t)
        for u in self.uavs:
            if u.mode == Mode.R and u.q_r:
                u.q_t.extend(u.q_r)
                u.q_r.clear()
        for u in self.uavs:
            old = u.mode
            new = transition_mode(u, self.energy.threshold_j)
            if new != old:
                self._enter(u, old, new)
            self.transitions.add((old, new))
        limit = self.cfg.sim.l2_retry_limit
        for u in self.uavs:
            if u.mode == Mode.ND and u.attached and (u.q_t or u.q_r):
                # a fragmented holder cannot forward; waiting counts as a failed try
                u.q_t.extend(u.q_r)
                u.q_r.clear()
                pkt = u.q_t[0]
                pkt.failures += 1
                if pkt.failures >= limit:
                    u.q_t.popleft()
                    self._drop(pkt, u)
        self._senders = [u.id for u in self.uavs if u.mode == Mode.T and u.q_t and u.attached]
        for i in self._senders:
            self._transmit(self.uavs[i], t)
        if self.checking:
            self.check_invariants()
        self.tick += 1

    def _rejoins(self, t: int) -> None:
        if not self.rejoin_schedule:
            return
        due = [i for (tk, i) in self.rejoin_schedule if tk <= t]
        self.rejoin_schedule = [(tk, i) for (tk, i) in self.rejoin_schedule if tk > t]
        for i in due:
            u = self.uavs[i]
            u.attached = True
            u.table.clear()
            u.nc = 0
            if u.mode != Mode.C:
                u.mode = Mode.ND
            u.next_hello_tick = t

    def _move(self) -> None:
        if self.cfg.mobility.static:
            return
        rng = self.rng_mob
        for u in self.uavs:
            if u.mode == Mode.C:
                continue
            if u.relocate:
                u.kin = Kinematics(u.kin.s, rng.uniform(-math.pi, math.pi), u.kin.p)
                u.relocate = False
            if u.pause_left > 0:
                u.pause_left -= 1
                continue
            if u.leg_left <= 0:
                hw = u.mob.noise_half_widths()
                noise = (rng.uniform(-hw[0], hw[0]), rng.uniform(-hw[1], hw[1]), rng.uniform(-hw[2], hw[2]))
                u.kin = mobility.gmm_step(u.kin, u.mob, noise)
                u.leg_left = self.leg_ticks
            d0 = u.kin.d
            u.pos, u.kin = mobility.move(u.pos, u.kin, self.dt, self.domain)
            if u.kin.d != d0:
                # bounced off the wall: mirror the mean heading too, or the
                # mean-reverting term would pin the UAV against the boundary
                u.mob = replace(u.mob, mean_direction=mobility.mirror_heading(u.mob.mean_direction, u.pos))
            u.leg_left -= 1
            if u.leg_left == 0:
                u.pause_left = self.pause_ticks

    def _drain(self) -> None:
        drain = energetics.flight_drain(self.dt, self.energy)
        for u in self.uavs:
            if u.mode == Mode.C:
                u.battery = energetics.charge_step(u.battery, self.dt, self.energy)
            else:
                u.battery = energetics.debit(u.battery, drain)

    def _min_lst(self, u: UavState) -> linkmetrics.LstResult:
        best = None
        for rec in u.table.records.values():
            if not rec.candidate:
                continue
            loc, kin = rec.msg.location, rec.msg.kinematics
            D = linkmetrics.relative_distance(u.pos, loc)
            rel = linkmetrics.classify_relative_motion(u.pos, u.kin, loc, kin)
            lst = linkmetrics.link_sustenance_time(D, u.kin.s, kin.s, rel, self.R_t, self.coll.r_min)
            if not lst.equidistant and (best is None or lst.seconds < best):
                best = lst.seconds
        return linkmetrics.EQUIDISTANT if best is None else linkmetrics.LstResult(best)

    def _hello(self, t: int) -> None:
        active = [u for u in self.uavs if u.active]
        senders = [u for u in active if u.mode == Mode.ND or u.nc == 0 or u.next_hello_tick <= t]
        mode = self.cfg.discovery.expiry_mode
        if senders:
            sectors = {}
            for b in senders:
                b.next_hello_tick = discovery.next_hello_interval(
                    t, self._min_lst(b), self.base_ticks, self.max_ticks, self.dt)
                self.uav_p_coll(b)
                msg = discovery.broadcast_hello(b, t)
                bp = b.pos
                for r in active:
                    if r is b:
                        continue
                    rp = r.pos
                    if (bp.x - rp.x) ** 2 + (bp.y - rp.y) ** 2 + (bp.h - rp.h) ** 2 > self.R_t ** 2:
                        continue
                    sec = sectors.get(r.id)
                    if sec is None:
                        sec = sectors[r.id] = self.sector(r)
                    discovery.process_hello(r.table, msg, sec, t, self.expiry_ticks, mode, purge_now=False)
        for u in active:
            discovery.purge(u.table, t, self.expiry_ticks, mode)
            self._refresh(u)

    def uav_p_coll(self, u: UavState) -> float:
        """Worst pairwise collision probability against the UAV's candidates."""
        worst = 0.0
        p = u.pos
        for rec in u.table.records.values():
            if rec.candidate:
                pc = self.pair_p_coll(linkmetrics.relative_distance(p, rec.msg.location))
                if pc > worst:
                    worst = pc
        u.p_coll = worst
        return worst

    def _refresh(self, u: UavState) -> None:
        p = u.pos
        u.tbs_in_range = p.x * p.x + p.y * p.y + p.h * p.h <= self.R_t ** 2
        n = sum(1 for rec in u.table.records.values() if rec.candidate)
        u.nc = n + (1 if u.tbs_in_range else 0)
        if u.nc == 0:
            # fragmented: broadcast every tick until a candidate appears
            u.next_hello_tick = min(u.next_hello_tick, self.tick + 1)

    def _enter(self, u: UavState, old: Mode, new: Mode) -> None:
        if self.checking and (old, new) not in ALLOWED_TRANSITIONS:
            raise InvariantViolation(f"illegal transition {old} -> {new} for UAV {u.id}")
        if new == Mode.C:
            for q in (u.q_t, u.q_r):
                while q:
                    self._drop(q.popleft(), u)
            for v in self.uavs:
                v.table.remove(u.id)
            u.table.clear()
            u.nc = 0
            u.relocate = False
        elif old == Mode.C:
            u.pos = self._random_position()
            u.kin = self._random_kinematics()
            u.leg_left, u.pause_left = self.leg_ticks, 0
            u.next_hello_tick = self.tick + 1
        u.mode = new

    # -------------------------------------------------------------- routing
    def _active_index(self):
        """Ids and coordinates of every node whose signal counts at a receiver."""
        if self.cfg.channel.interferers == "transmitting":
            ids = self._senders
        else:
            ids = [u.id for u in self.uavs if u.active and u.mode in (Mode.R, Mode.T)]
        xyz = np.array([[self.uavs[i].pos.x, self.uavs[i].pos.y, self.uavs[i].pos.h] for i in ids])
        return ids, xyz

    def _candidates(self, u: UavState, pkt: Packet) -> list[routing.Candidate]:
        """Candidates passing the cheap constraints, with coverage still unset."""
        visited = set(pkt.path)
        out = []
        p = u.pos
        axis = Sector.toward(p, TBS_POSITION, self.R_t, self.half_angle)
        e_th = self.cons.e_th
        entries = []
        for j in sorted(u.table.candidate_ids()):
            if j in visited:
                continue
            entries.append((j, u.table.records[j].msg.residual_j, self.uavs[j].pos))
        if u.tbs_in_range and self.tbs not in visited:
            entries.append((self.tbs, math.inf, TBS_POSITION))
        for j, res, jp in entries:
            if res < e_th:
                continue
            dist = linkmetrics.relative_distance(p, jp)
            if dist < self.cons.r_min:
                if j != self.tbs:
                    self.uavs[j].relocate = True
                continue
            pc = 0.0 if j == self.tbs else self.pair_p_coll(dist)
            if pc > self.cons.p_coll_th:
                continue
            out.append(routing.Candidate(j, u.q.get(j, 0.0), discovery.angle_to_axis(jp, axis),
                                         res, 0.0, pc, dist))
        return out

    def _coverage(self, u: UavState, cands, t: int) -> list[float]:
        ids, xyz = self._active_index()
        index = {i: k for k, i in enumerate(ids)}
        rx = np.array([[c.x, c.y, c.h] for c in (self.position_of(c.node) for c in cands)])
        own = [index.get(c.node, -1) for c in cands]
        rng = None if self.chan.deterministic else self.fading.at(t, u.id, _PURPOSE_COVERAGE)
        return radio.coverage_many(index[u.id], xyz, rx, own, self.chan, rng).tolist()

    def _hop_success(self, u: UavState, j: int, t: int) -> bool:
        if j != self.tbs:
            v = self.uavs[j]
            if not v.active or linkmetrics.relative_distance(u.pos, v.pos) > self.R_t:
                return False
        ids, xyz = self._active_index()
        index = {i: k for k, i in enumerate(ids)}
        jp = self.position_of(j)
        rng = None if self.chan.deterministic else self.fading.at(t, u.id, _PURPOSE_HOP)
        sir = radio.sir_samples(index[u.id], xyz, np.array([[jp.x, jp.y, jp.h]]), [index.get(j, -1)],
                                self.chan, rng, 1)
        return bool(sir[0, 0] >= self.chan.sir_threshold)

    def learning_rates(self, u: UavState, p_cov: float) -> tuple[float, float]:
        rl = self.cfg.rl
        beta = routing.adaptive_learning_rate(p_cov, rl.beta_mode, rl.beta_min, rl.beta_max, rl.beta_fixed)
        if rl.gamma_mode == "fixed":
            gamma = rl.gamma_fixed
        else:
            gamma = routing.adaptive_discount_factor(min(u.nc, self.M), self.M, rl.gamma_min, rl.gamma_max)
        return beta, gamma

    def _transmit(self, u: UavState, t: int) -> None:
        pkt = u.q_t[0]
        if len(pkt.path) - 1 >= self.cfg.rl.max_hops:
            u.q_t.popleft()
            self._drop(pkt, u)
            return
        cands = self._candidates(u, pkt)
        if cands:
            covs = self._coverage(u, cands, t)
            th = self.cons.p_cov_th
            cands = [routing.Candidate(c.node, c.q, c.divergence, c.residual_j, pc, c.p_coll, c.distance)
                     for c, pc in zip(cands, covs) if pc >= th]
        choice = routing.select_next_hop(cands, self.eps, self.rng_sel, self.cons, pkt.path, prefiltered=True)
        if choice is routing.FRAGMENTED:
            # nothing feasible: counts toward the retry limit, costs no energy
            u.next_hello_tick = min(u.next_hello_tick, t + 1)
            pkt.failures += 1
            if pkt.failures >= self.cfg.sim.l2_retry_limit:
                u.q_t.popleft()
                self._drop(pkt, u)
            return
        chosen = next(c for c in cands if c.node == choice.node)
        self.attempt_hop(pkt, u, chosen, choice.greedy, t)

    def attempt_hop(self, pkt: Packet, u: UavState, c: routing.Candidate, greedy: bool, t: int) -> bool:
        j = c.node
        u.battery = energetics.debit(u.battery, energetics.transmission_energy(pkt.size_bits, c.distance,
                                                                               self.energy))
        u.counters.pac_l2 += 1
        beta, gamma = self.learning_rates(u, c.p_cov)
        u.beta, u.gamma = beta, gamma
        if not self._hop_success(u, j, t):
            pkt.failures += 1
            if pkt.failures >= self.cfg.sim.l2_retry_limit:
                u.q_t.popleft()
                self._drop(pkt, u, (u.id, j), greedy, beta, gamma)
            return False

        u.counters.ack_l2 += 1
        pkt.failures = 0
        pkt.path.append(j)
        u.q_t.popleft()
        if j == self.tbs:
            snap = routing.StateSnapshot(1.0, 1.0, 1.0, c.p_cov, 0.0)
            nc_next, max_next = 1, 0.0
        else:
            v = self.uavs[j]
            v.p_cov = c.p_cov
            snap = routing.StateSnapshot(v.battery.normalized, v.counters.ratio_l2, v.counters.ratio_l3,
                                         c.p_cov, self.uav_p_coll(v))
            nc_next, max_next = v.nc, max(v.q.values(), default=0.0)
        reward = routing.compute_reward(snap, nc_next, self.weights)
        self.ep_reward += reward
        pkt.traces = routing.update_eligibility(pkt.traces, (u.id, j), greedy, beta, self.lam)
        routing.apply_td(self.qtables, pkt.traces, reward, max_next, beta, gamma)
        if self.on_update is not None:
            self.on_update(u.id, j, reward, None if j == self.tbs else j)
        if j == self.tbs:
            self.deliver_l3(pkt)
        else:
            self.uavs[j].q_r.append(pkt)
        return True

    def deliver_l3(self, pkt: Packet) -> None:
        self.uavs[pkt.source].counters.ack_l3 += 1
        self.delivered += 1
        del self.in_flight[pkt.id]

    def _drop(self, pkt: Packet, holder: UavState, pair=None, greedy=True, beta=None, gamma=None) -> None:
        """Discard a packet; its path so far receives a terminal zero-reward update."""
        if beta is None:
            beta, gamma = holder.beta, holder.gamma
        if pair is not None:
            traces = routing.update_eligibility(pkt.traces, pair, greedy, beta, self.lam)
        else:
            decay = beta * self.lam
            traces = {k: v * decay for k, v in pkt.traces.items()}
        routing.apply_td(self.qtables, traces, 0.0, 0.0, beta, gamma)
        if self.on_update is not None and pair is not None:
            self.on_update(pair[0], pair[1], 0.0, None)
        pkt.traces = traces
        self.dropped += 1
        del self.in_flight[pkt.id]

    # --------------------------------------------------------------- episode
    def _next_source(self) -> UavState | None:
        for _ in range(self.M):
            u = self.uavs[self.next_source]
            self.next_source = (self.next_source + 1) % self.M
            if u.active and u.battery.residual >= self.energy.threshold_j:
                return u
        return None

    def inject(self) -> int:
        n = 0
        for _ in range(self.cfg.sim.burst_size):
            src = self._next_source()
            if src is None:
                break
            pkt = Packet(self.next_packet_id, src.id, self.episode, path=[src.id])
            self.next_packet_id += 1
            src.q_t.append(pkt)
            src.counters.pac_l3 += 1
            self.in_flight[pkt.id] = pkt
            self.injected += 1
            n += 1
        return n

    def run_episode(self) -> EpisodeMetrics:
        self.apply_scenario(self.episode)
        self.ep_reward = 0.0
        self.inject()
        budget = self.cfg.sim.tick_budget
        ticks = 0
        while ticks < budget and (self.in_flight or ticks == 0):
            self.step()
            ticks += 1
        if self.in_flight:
            for u in self.uavs:
                for q in (u.q_t, u.q_r):
                    while q:
                        self._drop(q.popleft(), u)
        row = EpisodeMetrics(
            episode=self.episode,
            cum_reward=self.ep_reward,
            residual_energy_j=sum(u.battery.residual for u in self.uavs),
            delivered=self.delivered,
            dropped=self.dropped,
            fragmented=sum(1 for u in self.uavs if u.airborne and u.nc == 0),
            mean_q=self.mean_q(),
        )
        self.episode += 1
        return row

    def run(self, episodes: int | None = None, callback: Callable | None = None) -> list[EpisodeMetrics]:
        n = self.cfg.sim.episodes if episodes is None else episodes
        rows = []
        for _ in range(n):
            row = self.run_episode()
            rows.append(row)
            if callback is not None:
                callback(row)
        return rows

    def mean_q(self) -> float:
        vals = [v for u in self.uavs for v in u.q.values()]
        return float(sum(vals) / len(vals)) if vals else 0.0

    def incoming_q(self) -> list[float]:
        """Per-UAV score: the best Q any other UAV holds for forwarding to it."""
        best = [0.0] * self.M
        for u in self.uavs:
            for j, v in u.q.items():
                if j < self.M and v > best[j]:
                    best[j] = v
        return best

    # -------------------------------------------------------------- scenario
    def select_targets(self, ev: ScenarioEvent) -> list[int]:
        pool = [u.id for u in self.uavs if u.airborne]
        if ev.selector == "explicit-ids":
            return sorted(set(ev.ids))
        if ev.selector == "random-fraction":
            k = max(1, int(round(ev.fraction * len(pool))))
            k = min(k, len(pool))
            return sorted(int(i) for i in self.rng_scn.choice(pool, size=k, replace=False))
        score = self.incoming_q()
        ranked = sorted(pool, key=lambda i: (-score[i], i))
        half = (len(ranked) + 1) // 2
        return sorted(ranked[:half] if ev.selector == "top-q-half" else ranked[half:])

    def apply_scenario(self, episode: int, events=None) -> None:
        events = self.cfg.scenario if events is None else events
        for ev in events:
            if ev.episode != episode:
                continue
            if ev.kind == "sweep-param":
                self.cfg = self.cfg.replace(ev.param, ev.value)
                self._derive()
                continue
            targets = self.select_targets(ev)
            if ev.kind == "deplete-energy":
                below = max(0.0, self.energy.threshold_j - 1.0)
                for i in targets:
                    u = self.uavs[i]
                    if u.mode != Mode.C:
                        u.battery = Battery(min(below, u.battery.residual), u.battery.capacity)
            elif ev.kind == "fragment":
                self._fragment(targets, ev)

    def _fragment(self, targets: list[int], ev: ScenarioEvent) -> None:
        tick_ms = self.cfg.sim.tick_ms
        back = self.tick + max(1, math.ceil(ev.duration_ms / tick_ms - 1e-9))
        if ev.rejoin == "all-at-once":
            groups = [targets]
        else:
            groups = [targets[k::4] for k in range(4)]
        step_ms = ev.rejoin_window_ms / 4.0
        for k, group in enumerate(groups):
            # quarters stay at least one tick apart even when the window is sub-tick
            offset = max(k, math.ceil(k * step_ms / tick_ms - 1e-9))
            for i in group:
                u = self.uavs[i]
                u.attached = False
                u.table.clear()
                u.nc = 0
                self.rejoin_schedule.append((back + offset, i))

    # ------------------------------------------------------------ invariants
    def _snapshot_for_checks(self) -> None:
        self._prev_counters = [u.counters.as_tuple() for u in self.uavs]
        self._prev_energy = [u.battery.residual for u in self.uavs]
        self._prev_modes = [u.mode for u in self.uavs]

    def check_invariants(self) -> None:
        def fail(msg):
            raise InvariantViolation(f"tick {self.tick}: {msg}")

        queued = sum(len(u.q_t) + len(u.q_r) for u in self.uavs)
        if queued != len(self.in_flight):
            fail(f"{queued} queued packets but {len(self.in_flight)} in flight")
        if self.injected != self.delivered + self.dropped + len(self.in_flight):
            fail("packet conservation broken")
        cap = self.energy.initial_j
        total = 0.0
        for u in self.uavs:
            c = u.counters
            if c.ack_l2 > c.pac_l2 or c.ack_l3 > c.pac_l3:
                fail(f"UAV {u.id}: more ACKs than transmissions")
            if self._prev_counters:
                if any(a < b for a, b in zip(c.as_tuple(), self._prev_counters[u.id])):
                    fail(f"UAV {u.id}: counters decreased")
                e0, m0 = self._prev_energy[u.id], self._prev_modes[u.id]
                e1 = u.battery.residual
                if m0 != Mode.C and u.mode != Mode.C and e1 > e0:
                    fail(f"UAV {u.id}: energy rose outside Charge")
                if m0 == Mode.C and u.mode == Mode.C and e1 < e0:
                    fail(f"UAV {u.id}: energy fell while charging")
            if not 0.0 <= u.battery.residual <= cap:
                fail(f"UAV {u.id}: battery out of range")
            total += u.battery.residual
            if self._prev_energy and self._prev_energy[u.id] < self.energy.threshold_j and u.mode != Mode.C:
                fail(f"UAV {u.id}: below threshold but not charging")
            if u.mode == Mode.C:
                if u.q_t or u.q_r or len(u.table):
                    fail(f"UAV {u.id}: charging with packets or neighbours")
                for v in self.uavs:
                    if u.id in v.table:
                        fail(f"charging UAV {u.id} still in table of {v.id}")
            else:
                if not self.domain.contains(u.pos):
                    fail(f"UAV {u.id}: outside the airspace")
            for k, rec in u.table.records.items():
                if rec.distance > self.R_t * (1 + 1e-12):
                    fail(f"UAV {u.id}: record {k} heard beyond radio range")
                if discovery.is_expired(rec, self.tick, self.expiry_ticks, self.cfg.discovery.expiry_mode):
                    fail(f"UAV {u.id}: stale record {k}")
            if u.active and u.nc == 0 and u.next_hello_tick > self.tick + 1:
                fail(f"UAV {u.id}: fragmented but not broadcasting")
            for a, v in u.q.items():
                if not (math.isfinite(v) and -1e-12 <= v <= 10.0 + 1e-9):
                    fail(f"Q[{u.id}][{a}] = {v} out of bounds")
            for pkt in list(u.q_t) + list(u.q_r):
                if len(set(pkt.path)) != len(pkt.path) or len(pkt.path) - 1 > self.cfg.rl.max_hops:
                    fail(f"packet {pkt.id}: bad path {pkt.path}")
        if total > self.M * cap * (1 + 1e-12):
            fail("network energy exceeds capacity")
        for tr in self.transitions:
            if tr not in ALLOWED_TRANSITIONS:
                fail(f"illegal transition {tr}")
