import json
import math

import pytest

from repsim.scenario import (ScenarioError, connected_placement, load_scenario,
                             random_scenario, save_scenario,
                             scenario_from_dict, scenario_to_dict)


def minimal_doc():
    return {
        "duration": 5.0,
        "nodes": [{"id": 0, "pos": [0, 0]}, {"id": 1, "pos": [100, 0]}],
        "flows": [{"src": 0, "dst": 1, "rate": 2.0}],
    }


class TestValidation:
    def test_minimal_gets_defaults(self):
        sc = scenario_from_dict(minimal_doc())
        assert sc.ids_enabled
        assert sc.window_length == 1.0
        assert sc.reputation.r_u == -40.0
        assert sc.medium.p_loss == 0.0

    def test_threshold_violation_names_constraint(self):
        doc = minimal_doc()
        doc["reputation"] = {"r_u": -10.0, "r_t": -40.0}
        with pytest.raises(ScenarioError, match="reputation"):
            scenario_from_dict(doc)

    def test_unknown_behavior_rejected(self):
        doc = minimal_doc()
        doc["nodes"][0]["behavior"] = "wormhole"
        with pytest.raises(ScenarioError, match="behavior"):
            scenario_from_dict(doc)

    def test_unknown_reputation_param_rejected(self):
        doc = minimal_doc()
        doc["reputation"] = {"w_goood": 1}
        with pytest.raises(ScenarioError, match="unknown parameter"):
            scenario_from_dict(doc)

    def test_duplicate_node_id(self):
        doc = minimal_doc()
        doc["nodes"].append({"id": 0, "pos": [5, 5]})
        with pytest.raises(ScenarioError, match="duplicate"):
            scenario_from_dict(doc)

    def test_flow_endpoint_must_exist(self):
        doc = minimal_doc()
        doc["flows"][0]["dst"] = 9
        with pytest.raises(ScenarioError, match="flows"):
            scenario_from_dict(doc)

    def test_p_loss_bounds(self):
        doc = minimal_doc()
        doc["medium"] = {"p_loss": 1.5}
        with pytest.raises(ScenarioError, match="p_loss"):
            scenario_from_dict(doc)

    def test_missing_duration(self):
        with pytest.raises(ScenarioError, match="duration"):
            scenario_from_dict({"nodes": [{"id": 0, "pos": [0, 0]}]})

    def test_unknown_script_action(self):
        doc = minimal_doc()
        doc["script"] = [{"action": "teleport", "node": 0, "time": 1.0}]
        with pytest.raises(ScenarioError, match="action"):
            scenario_from_dict(doc)


class TestRoundTrip:
    def test_load_serialize_load_identical(self, tmp_path):
        doc = minimal_doc()
        doc["reputation"] = {"y_drop": 12.0}
        doc["nodes"][1]["behavior"] = "grayhole"
        doc["nodes"][1]["p_drop"] = 0.25
        doc["script"] = [{"action": "inject_warning", "node": 0,
                          "time": 1.0, "accuser": 1, "accused": 1}]
        sc = scenario_from_dict(doc)
        path = tmp_path / "scenario.json"
        save_scenario(sc, str(path))
        again = load_scenario(str(path))
        assert again == sc
        assert scenario_to_dict(again) == scenario_to_dict(sc)

    def test_missing_file(self):
        with pytest.raises(ScenarioError, match="not found"):
            load_scenario("/nonexistent/scenario.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ScenarioError, match="not valid JSON"):
            load_scenario(str(path))


class TestBuilders:
    def test_connected_placement_is_connected(self):
        import random
        pts = connected_placement(15, 800.0, 260.0, random.Random(5))
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for v in range(len(pts)):
                if v not in seen and math.dist(pts[u], pts[v]) <= 260.0:
                    seen.add(v)
                    stack.append(v)
        assert len(seen) == len(pts)

    def test_random_scenario_structure(self):
        sc = random_scenario("t", n_nodes=20, n_flows=5, duration=10.0,
                             seed=3, n_blackholes=4)
        assert len(sc.nodes) == 20
        assert len(sc.flows) == 5
        black = {n.id for n in sc.nodes if n.behavior == "blackhole"}
        assert len(black) == 4
        for f in sc.flows:
            assert f.src not in black
            assert f.dst not in black

    def test_random_scenario_deterministic(self):
        a = random_scenario("t", 20, 5, 10.0, seed=4, n_blackholes=4)
        b = random_scenario("t", 20, 5, 10.0, seed=4, n_blackholes=4)
        assert a == b


class TestWaypoint:
    def test_waypoint_round_trip(self, tmp_path):
        doc = minimal_doc()
        doc["nodes"][1]["waypoint"] = {"area": [500, 500],
                                       "speed": [10, 20], "pause": 2.0}
        sc = scenario_from_dict(doc)
        assert sc.nodes[1].waypoint.pause == 2.0
        path = tmp_path / "wp.json"
        save_scenario(sc, str(path))
        assert load_scenario(str(path)) == sc

    def test_waypoint_speed_validated(self):
        doc = minimal_doc()
        doc["nodes"][0]["waypoint"] = {"area": [500, 500], "speed": [20, 10]}
        with pytest.raises(ScenarioError, match="speed"):
            scenario_from_dict(doc)
