import dataclasses
import math

import pytest
from hypothesis import given, settings, strategies as st

from iqmr.config import ScenarioEvent, SimConfig, loads, resolve
from iqmr.engine import ALLOWED_TRANSITIONS, InvariantViolation, Mode, World, transition_mode
from iqmr.metrics import format_rows
from qlearning_reference import LINE, OneStepQ, line_config

from conftest import DESK


def micro(**over):
    cfg = SimConfig()
    for k, v in {"sim.num_uavs": 1, "mobility.static": True, "channel.deterministic": True, **over}.items():
        cfg = cfg.replace(k, v)
    w = World(resolve(cfg), check_invariants=True)
    w.place([(30.0, 40.0, 120.0)])
    return w


def test_micro_world_oracle(oracles):
    o = oracles["micro_world"]
    w = micro()
    row = w.run_episode()
    assert row.delivered == o["delivered"]
    assert row.cum_reward == pytest.approx(o["reward"], rel=1e-9)
    assert row.residual_energy_j == pytest.approx(o["residual"], rel=1e-9)


def test_retry_drop_oracle(oracles):
    o = oracles["retry_drop"]
    w = micro(**{"channel.sir_threshold_db": 200.0, "channel.p_cov_threshold": 0.0})
    row = w.run_episode()
    c = w.uavs[0].counters
    assert (c.pac_l2, c.ack_l2, row.dropped) == (o["pac_l2"], o["ack_l2"], o["dropped"])
    assert (c.pac_l3, c.ack_l3) == (1, 0)
    assert w.cfg.sim.l2_retry_limit == o["limit"]


def test_plain_q_replay_matches_reference():
    ref = OneStepQ()
    w = World(line_config(episodes=300), on_update=ref.observe, check_invariants=True)
    w.place(LINE)
    w.run()
    assert w.delivered > 0
    for u in w.uavs:
        assert u.q == ref.q.get(u.id, {})


def test_transition_table():
    assert (Mode.C, Mode.T) not in ALLOWED_TRANSITIONS
    assert (Mode.ND, Mode.T) not in ALLOWED_TRANSITIONS


def test_low_energy_forces_charge():
    w = micro()
    u = w.uavs[0]
    from iqmr.energetics import Battery
    u.battery = Battery(50.0, u.battery.capacity)
    assert transition_mode(u, 100.0) == Mode.C


def test_deplete_event_sends_uavs_to_charge():
    cfg = loads(DESK.read_text()).replace("sim.check_invariants", True)
    ev = ScenarioEvent(episode=2, kind="deplete-energy", selector="explicit-ids", ids=(0, 1))
    w = World(dataclasses.replace(cfg, scenario=(ev,)))
    w.run(3)
    assert w.uavs[0].mode == Mode.C and w.uavs[1].mode == Mode.C
    assert all(0 not in v.table and 1 not in v.table for v in w.uavs)


def test_determinism():
    cfg = loads(DESK.read_text())
    a = format_rows(World(cfg).run(60))
    b = format_rows(World(cfg).run(60))
    assert a == b


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 10), burst=st.integers(1, 4),
       half=st.sampled_from([math.pi / 4, math.pi / 2]),
       interferers=st.sampled_from(["airborne", "transmitting"]))
def test_runtime_invariants_random_worlds(seed, m, burst, half, interferers):
    cfg = SimConfig()
    for k, v in (("sim.num_uavs", m), ("sim.seed", seed), ("sim.burst_size", burst),
                 ("domain.radius_m", 300.0), ("discovery.sector_half_angle_rad", half),
                 ("channel.interferers", interferers), ("channel.coverage_samples", 50),
                 ("energy.initial_j", 3000.0)):
        cfg = cfg.replace(k, v)
    seen = []

    def on_update(node, action, reward, nxt):
        if nxt is not None and w.uavs[nxt].nc == 0:
            seen.append(reward)

    w = World(cfg, on_update=on_update, check_invariants=True)
    w.run(6)
    assert all(r == 0.0 for r in seen)
    assert w.injected == w.delivered + w.dropped


def test_invariant_violation_is_raised():
    w = World(loads(DESK.read_text()), check_invariants=True)
    w.run(2)
    w.delivered += 1  # break packet conservation
    with pytest.raises(InvariantViolation):
        w.step()


def test_fragment_scenario_rejoins():
    cfg = loads(DESK.read_text()).replace("sim.check_invariants", True)
    ev = ScenarioEvent(episode=0, kind="fragment", selector="top-q-half", duration_ms=400,
                       rejoin="staggered-quarters", rejoin_window_ms=10)
    w = World(cfg)
    w.run(20)
    targets = w.select_targets(ev)
    w.apply_scenario(0, (ev,))
    assert all(not w.uavs[i].attached and w.uavs[i].nc == 0 for i in targets)
    ticks = sorted({tk for tk, _ in w.rejoin_schedule})
    assert ticks == [w.tick + 4 + k for k in range(4)]
    for _ in range(8):
        w.step()
    assert not w.rejoin_schedule
    assert all(w.uavs[i].attached for i in targets)
