import math

import pytest

from repsim.engine import Simulator, TraceWatcher, run_scenario
from repsim.metrics import compute_metrics
from repsim.scenario import scenario_from_dict
from repsim.tracelog import EV_TX


def chain_doc(m_behavior="honest", duration=3.0, rate=10.0, extra_nodes=(),
              p_loss=0.0, **overrides):
    """Chain 0-1-2-3 with adjacent-only connectivity (spacing 100, range 150)."""
    nodes = [
        {"id": 0, "pos": [0, 0]},
        {"id": 1, "pos": [100, 0], "behavior": m_behavior},
        {"id": 2, "pos": [200, 0]},
        {"id": 3, "pos": [300, 0]},
    ] + list(extra_nodes)
    doc = {
        "name": "chain",
        "duration": duration,
        "grace_fraction": 0.0,
        "medium": {"radio_range": 150.0, "p_loss": p_loss},
        "nodes": nodes,
        "flows": [{"src": 0, "dst": 3, "rate": rate}],
        "seed": 11,
    }
    doc.update(overrides)
    return doc


class TestNeighbors:
    def test_within_range_mutual(self):
        sim = Simulator(scenario_from_dict(chain_doc()))
        assert 1 in sim.neighbors(0)
        assert 0 in sim.neighbors(1)

    def test_out_of_range(self):
        sim = Simulator(scenario_from_dict(chain_doc()))
        assert 2 not in sim.neighbors(0)

    def test_never_own_neighbor(self):
        sim = Simulator(scenario_from_dict(chain_doc()))
        for nid in (0, 1, 2, 3):
            assert nid not in sim.neighbors(nid)


class TestDeterminism:
    def test_same_seed_identical_digest(self):
        doc = chain_doc(m_behavior="blackhole", p_loss=0.1)
        a = run_scenario(scenario_from_dict(doc))
        b = run_scenario(scenario_from_dict(doc))
        assert a.digest() == b.digest()
        assert a.records == b.records

    def test_different_seed_differs_under_loss(self):
        doc = chain_doc(p_loss=0.3)
        a = run_scenario(scenario_from_dict(doc), seed=1)
        b = run_scenario(scenario_from_dict(doc), seed=2)
        assert a.digest() != b.digest()


class TestConservationAndDelivery:
    def test_two_node_lossless_delivers_everything(self):
        doc = {
            "name": "pair", "duration": 5.0,
            "medium": {"radio_range": 150.0},
            "nodes": [{"id": 0, "pos": [0, 0]}, {"id": 1, "pos": [100, 0]}],
            "flows": [{"src": 0, "dst": 1, "rate": 10.0, "stop": 4.0}],
        }
        report = compute_metrics(run_scenario(scenario_from_dict(doc)).records)
        assert report.generated > 0
        assert report.delivered == report.generated
        assert report.pdr_overall == 1.0

    def test_zero_duration_all_zero(self):
        doc = chain_doc(duration=0.0)
        report = compute_metrics(run_scenario(scenario_from_dict(doc)).records)
        assert report.generated == 0
        assert report.delivered == 0
        assert report.pdr_overall == 0.0

    def test_conservation_with_grayhole_and_loss(self):
        doc = chain_doc(m_behavior="grayhole", p_loss=0.05, duration=8.0)
        doc["nodes"][1]["p_drop"] = 0.4
        report = compute_metrics(run_scenario(scenario_from_dict(doc)).records)
        for stats in report.flows.values():
            assert (stats.generated == stats.delivered + stats.dropped_adversary
                    + stats.dropped_channel + stats.dropped_policy
                    + stats.in_flight)
            assert stats.in_flight >= 0

    def test_blackhole_limit_every_window_all_missing(self):
        doc = chain_doc(m_behavior="blackhole")
        result = run_scenario(scenario_from_dict(doc))
        reports = [r for r in result.records
                   if r["ev"] == "report" and r["node"] == 0 and r["neighbor"] == 1]
        assert reports
        for r in reports:
            assert r["forwarded"] == 0
            assert r["missing"] > 0

    def test_perfect_channel_limit_zero_missing(self):
        doc = chain_doc(m_behavior="honest")
        result = run_scenario(scenario_from_dict(doc))
        reports = [r for r in result.records if r["ev"] == "report"]
        assert reports
        for r in reports:
            assert r["missing"] == 0


class TestLossMonteCarlo:
    def test_delivered_fraction_matches_binomial(self):
        """10,000 Bernoulli transmissions at p_loss = 0.5: the delivered
        fraction must sit within 0.02 of 0.5, which is four binomial
        standard deviations (sigma = sqrt(.25/10000) = 0.005)."""
        doc = {
            "name": "mc", "duration": 1.0,
            "medium": {"radio_range": 150.0, "p_loss": 0.5},
            "nodes": [{"id": 0, "pos": [0, 0]}, {"id": 1, "pos": [100, 0]}],
        }
        sim = Simulator(scenario_from_dict(doc), seed=424242)
        n = 10_000
        from repsim.packets import DataPacket
        for pid in range(n):
            sim.transmit(0, DataPacket(pid=pid, origin=0, dest=1,
                                       route=(0, 1), flow=None))
        delivered = len(sim._heap)
        sigma = math.sqrt(0.5 * 0.5 / n)
        assert 4 * sigma <= 0.02
        assert abs(delivered / n - 0.5) <= 0.02

    def test_p_loss_one_delivers_nothing(self):
        doc = chain_doc(p_loss=1.0, duration=2.0)
        report = compute_metrics(run_scenario(scenario_from_dict(doc)).records)
        assert report.delivered == 0


class TestTraceAndProbeBudget:
    def test_trace_packets_travel_one_hop(self):
        result = run_scenario(scenario_from_dict(chain_doc()))
        trace_tx = [r for r in result.records
                    if r["ev"] == EV_TX and r["kind"] == "trace"]
        assert trace_tx
        seen = set()
        for r in trace_tx:
            assert r["pkt"] not in seen  # never rebroadcast
            seen.add(r["pkt"])

    def test_probe_never_beyond_two_hops(self):
        doc = chain_doc(m_behavior="blackhole", duration=6.0)
        doc["script"] = [{"time": 2.5, "action": "inject_warning",
                          "node": 0, "accuser": 2, "accused": 1}]
        result = run_scenario(scenario_from_dict(doc))
        probes = {r["pkt"] for r in result.records if r["ev"] == "probe"}
        for pid in probes:
            hops = [r["node"] for r in result.records
                    if r["ev"] == EV_TX and r["pkt"] == pid]
            assert len(hops) <= 2


class TestWindowVerdicts:
    def test_single_update_per_neighbor_per_window(self):
        doc = chain_doc(m_behavior="trace_dropper", duration=4.0)
        result = run_scenario(scenario_from_dict(doc))
        window_evidence = {}
        for r in result.records:
            if r["ev"] != "reput":
                continue
            if r["evidence"] in ("self_window", "trace_non_forward", "trace_drop"):
                key = (r["node"], r["neighbor"], r["window"])
                assert key not in window_evidence, key
                window_evidence[key] = r["evidence"]
        assert window_evidence

    def test_trace_dropper_penalized_by_witnesses(self):
        doc = chain_doc(m_behavior="trace_dropper")
        result = run_scenario(scenario_from_dict(doc))
        events = [r for r in result.records
                  if r["ev"] == "reput" and r["node"] == 2 and r["neighbor"] == 1
                  and r["evidence"] == "trace_non_forward"]
        assert events
        assert events[0]["value"] == -40.0


class TestBehaviorSwitch:
    def test_switch_takes_effect(self):
        doc = chain_doc(m_behavior="blackhole", duration=6.0)
        doc["nodes"][1]["switches"] = [{"time": 3.0, "behavior": "honest"}]
        doc["flows"][0]["rate"] = 5.0
        result = run_scenario(scenario_from_dict(doc))
        drops = [r["t"] for r in result.records
                 if r["ev"] == "drop" and r["cat"] == "adversary"]
        assert drops
        assert max(drops) < 3.0


class TestIdsToggle:
    def test_ids_off_emits_no_ids_bytes(self):
        doc = chain_doc(m_behavior="blackhole", duration=5.0)
        result = run_scenario(scenario_from_dict(doc), ids_enabled=False)
        for r in result.records:
            assert r["ev"] not in ("reput", "probe", "probe_result",
                                   "report", "declared", "redeemed")
            if r["ev"] == EV_TX:
                assert r["kind"] not in ("trace", "warning")
                assert "avoid" not in r
        assert result.reputation_rows == []

    def test_ids_on_strictly_better_pdr_same_seed(self):
        # Diamond: 0 -> 3 via blackhole 1 (short) or honest 2 (long).
        doc = {
            "name": "diamond", "duration": 20.0, "grace_fraction": 0.0,
            "medium": {"radio_range": 160.0},
            "nodes": [
                {"id": 0, "pos": [0, 0]},
                {"id": 1, "pos": [150, 0], "behavior": "blackhole"},
                {"id": 2, "pos": [0, 150]},
                {"id": 3, "pos": [150, 150]},
            ],
            "flows": [{"src": 0, "dst": 3, "rate": 8.0, "stop": 19.0}],
            "seed": 3,
        }
        sc = scenario_from_dict(doc)
        on = compute_metrics(run_scenario(sc, ids_enabled=True).records)
        off = compute_metrics(run_scenario(sc, ids_enabled=False).records)
        assert on.pdr_overall > off.pdr_overall


class TestTraceWatcher:
    def test_complete_forward(self):
        w = TraceWatcher(1.0, 0.0)
        w.note_handoff(1, duty=5, handed_by=4, now=0.2)
        w.note_forward(1, forwarder=5, now=0.3)
        w.note_trace(1, emitter=5)
        tally = w.close_window(0)
        assert tally[5].complete == 1

    def test_silence_after_plain_handoff_is_case1(self):
        w = TraceWatcher(1.0, 0.0)
        w.note_handoff(1, duty=5, handed_by=4, now=0.2)
        tally = w.close_window(0)
        assert tally[5].case1 == 1

    def test_forward_without_trace_is_case2(self):
        w = TraceWatcher(1.0, 0.0)
        w.note_handoff(1, duty=5, handed_by=4, now=0.2)
        w.note_forward(1, forwarder=5, now=0.3)
        assert w.close_window(0)[5].case2 == 1

    def test_silence_after_traced_handoff_is_case3(self):
        w = TraceWatcher(1.0, 0.0)
        w.note_handoff(1, duty=5, handed_by=4, now=0.2)
        w.note_trace(1, emitter=4)  # the upstream trace names the duty
        assert w.close_window(0)[5].case3 == 1

    def test_trace_only_is_ignored(self):
        w = TraceWatcher(1.0, 0.0)
        w.note_trace(1, emitter=5)
        assert w.close_window(0) == {}

    def test_receipt_creates_record(self):
        w = TraceWatcher(1.0, 0.0)
        w.note_forward(1, forwarder=5, now=0.3)
        assert w.close_window(0)[5].case2 == 1


class TestMobility:
    def waypoint_doc(self):
        return {
            "name": "walk", "duration": 12.0, "seed": 4,
            "medium": {"radio_range": 150.0},
            "nodes": [
                {"id": 0, "pos": [0, 0]},
                {"id": 1, "pos": [100, 0],
                 "waypoint": {"area": [800, 800], "speed": [40, 60],
                              "pause": 0.5}},
            ],
            "flows": [{"src": 0, "dst": 1, "rate": 5.0}],
        }

    def test_positions_move_and_links_break(self):
        sc = scenario_from_dict(self.waypoint_doc())
        sim = Simulator(sc)
        start = sim.nodes[1].pos
        sim.run()
        assert sim.nodes[1].pos != start

    def test_mobile_runs_stay_deterministic(self):
        sc = scenario_from_dict(self.waypoint_doc())
        assert run_scenario(sc).digest() == run_scenario(sc).digest()

    def test_static_scenarios_schedule_no_mobility(self):
        sc = scenario_from_dict(chain_doc())
        sim = Simulator(sc)
        assert sim._mobile == []
