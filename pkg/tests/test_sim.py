import math
from dataclasses import replace

import numpy as np
import pytest

import oracles
from uavnetsim.channel import ChannelParams, max_range
from uavnetsim.config import ConfigError, ScenarioConfig, set_field
from uavnetsim.sim import (BASE, EventQueue, RunResult, Simulation, pdr_window, run,
                           substream)

D_MAX = max_range(ChannelParams())


def static(positions, base=(0.0, 0.0, 0.0), area=(3000.0, 3000.0, 250.0), duration=20.0, **kw):
    cfg = ScenarioConfig()
    cfg = replace(cfg, agents=len(positions), duration=duration, base_position=tuple(base),
                  area=replace(cfg.area, x=area[0], y=area[1], z=area[2]),
                  mobility=replace(cfg.mobility, model="static", positions=tuple(map(tuple, positions))))
    for k, v in kw.items():
        cfg = set_field(cfg, k.replace("__", "."), v)
    return cfg


def short(**kw):
    cfg = set_field(ScenarioConfig(), "duration", 20.0)
    for k, v in kw.items():
        cfg = set_field(cfg, k.replace("__", "."), v)
    return cfg


def test_zero_duration():
    r = run(set_field(ScenarioConfig(), "duration", 0.0), 1)
    assert r.packets_sent == 0 and r.mean_pdr == 1.0 and r.pdr_series == []


def test_perfect_link_one_meter():
    cfg = static([(251.0, 250.0, 0.0)], base=(250.0, 250.0, 0.0), traffic__start=1.0)
    r = run(cfg, 1)
    assert r.packets_sent > 0 and r.mean_pdr == 1.0
    assert r.packets_delivered == r.packets_sent


def test_no_link_at_twice_range():
    cfg = static([(2 * D_MAX, 0.0, 0.0)], area=(3000.0, 10.0, 10.0))
    r = run(cfg, 1)
    assert r.mean_pdr == 0.0
    assert r.packets_dropped_no_route == r.packets_sent > 0


def test_three_node_line_via_middle():
    pos = [(1000.0, 0.0, 0.0), (2000.0, 0.0, 0.0)]
    cfg = static(pos, area=(2500.0, 10.0, 10.0), traffic__source=2, traffic__start=2.0)
    sim = Simulation(cfg, 1)
    r = sim.run()
    path = oracles.shortest_viable_path([(0.0, 0.0, 0.0)] + pos, D_MAX, 2, 0)
    assert path == [2, 1, 0]
    assert sim.tables.next_hop(2, BASE) == 1 and sim.tables.next_hop(1, BASE) == BASE
    assert r.mean_pdr == 1.0


def test_direct_neighbor_single_hop():
    cfg = static([(100.0, 0.0, 0.0), (200.0, 0.0, 0.0)], area=(300.0, 10.0, 10.0),
                 traffic__source=1, traffic__start=2.0)
    sim = Simulation(cfg, 3)
    sim.run()
    assert sim.tables.next_hop(1, BASE) == BASE


def test_before_first_phase_no_route():
    cfg = static([(100.0, 0.0, 0.0)], area=(300.0, 10.0, 10.0), duration=0.4)
    r = run(cfg, 1)
    assert r.packets_dropped_no_route == r.packets_sent > 0


def test_baseline_protocol_runs_line():
    pos = [(1000.0, 0.0, 0.0), (2000.0, 0.0, 0.0)]
    cfg = static(pos, area=(2500.0, 10.0, 10.0), traffic__source=2, traffic__start=2.0,
                 routing__protocol="batman-baseline")
    assert run(cfg, 1).mean_pdr == 1.0


def test_invalid_config_rejected_before_start():
    bad = replace(ScenarioConfig(), agents=0)
    with pytest.raises(ConfigError, match="agents"):
        Simulation(bad, 1)


@pytest.mark.parametrize("model", ["waypoint", "random-walk", "swarm", "dispersion"])
def test_determinism_bytes(model):
    cfg = short(mobility__model=model, channel__model="nakagami")
    assert run(cfg, 5).to_json() == run(cfg, 5).to_json()


def test_seeds_differ():
    cfg = short(channel__model="nakagami")
    assert run(cfg, 1).to_json() != run(cfg, 2).to_json()


@pytest.mark.parametrize("model", ["waypoint", "random-walk", "swarm", "dispersion"])
@pytest.mark.parametrize("channel", ["friis", "nakagami"])
def test_conservation(model, channel):
    r = run(short(mobility__model=model, channel__model=channel), 3)
    total = (r.packets_delivered + r.packets_dropped_no_route + r.packets_dropped_channel
             + r.packets_dropped_ttl)
    assert total == r.packets_sent
    assert 0.0 <= r.mean_pdr <= 1.0
    assert r.mean_pdr == pytest.approx(r.packets_delivered / r.packets_sent)


def trace(cfg, seed=2):
    sim = Simulation(cfg, seed)
    sim.trace = []
    sim.run()
    return sim.trace, sim.source


def test_channel_toggle_does_not_perturb_mobility_or_source():
    a = trace(short(channel__model="friis"))
    b = trace(short(channel__model="nakagami"))
    assert a == b


def test_gnss_toggle_does_not_perturb_ground_truth():
    a = trace(short(channel__model="nakagami"))
    b = trace(short(channel__model="nakagami", gnss__max_error=120.0))
    assert a == b


def test_protocol_toggle_does_not_perturb_mobility():
    a = trace(short(mobility__model="random-walk"))
    b = trace(short(mobility__model="random-walk", routing__protocol="batman-baseline"))
    assert a == b


def test_agents_stay_in_area_and_speed_bound():
    for model in ("waypoint", "random-walk", "swarm", "dispersion"):
        cfg = short(mobility__model=model)
        tr, _ = trace(cfg)
        v = cfg.mobility.velocity
        last = {}
        for t, i, p in tr:
            assert -1e-9 <= p.x <= 500 + 1e-9 and -1e-9 <= p.z <= 250 + 1e-9
            if i in last:
                assert p.distance(last[i]) <= v * 0.25 + 1e-9
            last[i] = p


def test_substreams_independent_and_stable():
    a = substream(1, "mobility").random(4)
    assert (a == substream(1, "mobility").random(4)).all()
    assert not (a == substream(1, "fading").random(4)).any()


def test_event_queue_order():
    q = EventQueue()
    q.push(1.0, "b", 1)
    q.push(0.5, "a", 0)
    q.push(1.0, "c", 2)
    assert [q.pop().payload for _ in range(3)] == [0, 1, 2]
    assert q.peek_time() == math.inf


def test_pdr_window_examples():
    assert pdr_window([(0.1 * k, True) for k in range(30)], 1.0) == [(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]
    alt = [(0.1 * k, k % 2 == 0) for k in range(40)]
    assert [p for _, p in pdr_window(alt, 1.0)] == [0.5] * 4
    assert pdr_window([(0.5, True), (3.5, False)], 1.0) == [(1.0, 1.0), (4.0, 0.0)]
    with pytest.raises(ValueError):
        pdr_window([], 0.0)


def test_series_weighted_mean_equals_mean_pdr():
    sim = Simulation(short(channel__model="nakagami", duration=30.0), 4)
    r = sim.run()
    sent = {}
    for t, _ in sim.records:
        k = int(math.floor(t / 1.0 + 1e-9))
        sent[k] = sent.get(k, 0) + 1
    weights = [sent[int(round(end)) - 1] for end, _ in r.pdr_series]
    weighted = sum(w * p for w, (_, p) in zip(weights, r.pdr_series)) / sum(weights)
    assert abs(weighted - r.mean_pdr) <= 1e-12


def test_run_result_round_trip_and_csv():
    r = run(short(), 1)
    assert RunResult.from_json(r.to_json()) == RunResult.from_json(r.to_json())
    assert RunResult.from_json(r.to_json()).to_json() == r.to_json()
    lines = r.series_csv().splitlines()
    assert lines[0] == "time_s,pdr" and len(lines) == len(r.pdr_series) + 1


def test_traffic_rate_matches_packet_interval():
    cfg = short(duration=10.0)
    r = run(cfg, 1)
    assert r.packets_sent == math.ceil(10.0 / cfg.traffic.packet_interval)


def test_min_over_horizon_option_runs():
    r = run(short(routing__pred_distance="min", channel__model="nakagami"), 1)
    assert 0.0 <= r.mean_pdr <= 1.0


def test_friis_full_mesh_at_reference_area():
    # the reference area diagonal is shorter than the free-space range
    sim = Simulation(short(), 1)
    sim.run()
    assert np.isfinite(sim.thresholds).all() and (sim.thresholds == 0).all()
