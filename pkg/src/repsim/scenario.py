"""Scenario configuration: schema, validation, defaults and builders.

Scenarios are JSON documents. Every knob of the simulator and the
reputation scheme can be overridden; defaults come from the parameter
tables in `reputation` and the engine. Validation errors name the
offending field and the violated constraint.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
from dataclasses import dataclass
from typing import Any, Optional

from .reputation import ReputationParams

BEHAVIOR_KINDS = ("honest", "blackhole", "grayhole", "trace_dropper", "selfish")

SCRIPT_ACTIONS = ("set_reputation", "inject_warning")


class ScenarioError(ValueError):
    """Configuration rejected: message names the field and constraint."""


@dataclass(frozen=True)
class BehaviorSwitch:
    time: float
    behavior: str
    p_drop: float = 0.0


@dataclass(frozen=True)
class WaypointSpec:
    """Random-waypoint mobility: roam a rectangle at a drawn speed with a
    pause at each target."""
    area: tuple[float, float]
    speed: tuple[float, float]
    pause: float = 0.0


@dataclass(frozen=True)
class NodeSpec:
    id: int
    pos: tuple[float, float]
    behavior: str = "honest"
    p_drop: float = 0.0
    switches: tuple[BehaviorSwitch, ...] = ()
    initial_malicious: tuple[int, ...] = ()
    waypoint: Optional[WaypointSpec] = None


@dataclass(frozen=True)
class FlowSpec:
    src: int
    dst: int
    rate: float
    size: int = 512
    start: float = 0.0
    stop: Optional[float] = None


@dataclass(frozen=True)
class MediumSpec:
    radio_range: float = 250.0
    p_loss: float = 0.0
    propagation_delay: float = 0.001


@dataclass(frozen=True)
class ScriptAction:
    time: float
    action: str
    node: int
    subject: int = -1
    value: float = 0.0
    accuser: int = -1
    accused: int = -1


@dataclass(frozen=True)
class Scenario:
    name: str
    duration: float
    nodes: tuple[NodeSpec, ...]
    flows: tuple[FlowSpec, ...] = ()
    medium: MediumSpec = MediumSpec()
    reputation: ReputationParams = ReputationParams()
    seed: int = 0
    ids_enabled: bool = True
    window_length: float = 1.0
    grace_fraction: float = 0.1
    send_buffer_cap: int = 64
    rreq_interval: float = 1.0
    probe_rate_windows: int = 5
    script: tuple[ScriptAction, ...] = ()

    def node_ids(self) -> list[int]:
        return [n.id for n in self.nodes]


def _require(cond: bool, f: str, constraint: str) -> None:
    if not cond:
        raise ScenarioError(f"{f}: {constraint}")


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    """Build and validate a Scenario from a parsed JSON document."""
    if not isinstance(doc, dict):
        raise ScenarioError("scenario: top level must be a JSON object")

    _require("duration" in doc, "duration", "field is required")
    duration = float(doc["duration"])
    _require(duration >= 0, "duration", "must be >= 0")

    raw_nodes = doc.get("nodes", [])
    _require(isinstance(raw_nodes, list) and raw_nodes, "nodes",
             "at least one node is required")
    nodes = []
    seen_ids: set[int] = set()
    for i, nd in enumerate(raw_nodes):
        nid = nd.get("id")
        _require(isinstance(nid, int), f"nodes[{i}].id", "must be an integer")
        _require(nid not in seen_ids, f"nodes[{i}].id",
                 f"duplicate node id {nid}")
        seen_ids.add(nid)
        pos = nd.get("pos")
        _require(isinstance(pos, (list, tuple)) and len(pos) == 2,
                 f"nodes[{i}].pos", "must be [x, y]")
        behavior = nd.get("behavior", "honest")
        _require(behavior in BEHAVIOR_KINDS, f"nodes[{i}].behavior",
                 f"unknown behavior {behavior!r}, expected one of {BEHAVIOR_KINDS}")
        p_drop = float(nd.get("p_drop", 0.0))
        _require(0.0 <= p_drop <= 1.0, f"nodes[{i}].p_drop",
                 "must be within [0, 1]")
        switches = []
        for j, sw in enumerate(nd.get("switches", [])):
            b = sw.get("behavior")
            _require(b in BEHAVIOR_KINDS, f"nodes[{i}].switches[{j}].behavior",
                     f"unknown behavior {b!r}")
            switches.append(BehaviorSwitch(
                time=float(sw.get("time", 0.0)),
                behavior=b,
                p_drop=float(sw.get("p_drop", 0.0)),
            ))
        waypoint = None
        wp = nd.get("waypoint")
        if wp is not None:
            area = wp.get("area")
            speed = wp.get("speed")
            _require(isinstance(area, (list, tuple)) and len(area) == 2,
                     f"nodes[{i}].waypoint.area", "must be [width, height]")
            _require(isinstance(speed, (list, tuple)) and len(speed) == 2
                     and 0 < float(speed[0]) <= float(speed[1]),
                     f"nodes[{i}].waypoint.speed",
                     "must be [min, max] with 0 < min <= max")
            waypoint = WaypointSpec(
                area=(float(area[0]), float(area[1])),
                speed=(float(speed[0]), float(speed[1])),
                pause=float(wp.get("pause", 0.0)),
            )
        nodes.append(NodeSpec(
            id=nid,
            pos=(float(pos[0]), float(pos[1])),
            behavior=behavior,
            p_drop=p_drop,
            switches=tuple(sorted(switches, key=lambda s: s.time)),
            initial_malicious=tuple(nd.get("initial_malicious", [])),
            waypoint=waypoint,
        ))
    ids = {n.id for n in nodes}
    for i, n in enumerate(nodes):
        for m in n.initial_malicious:
            _require(m in ids, f"nodes[{i}].initial_malicious",
                     f"unknown node id {m}")

    flows = []
    for i, fl in enumerate(doc.get("flows", [])):
        src, dst = fl.get("src"), fl.get("dst")
        _require(src in ids, f"flows[{i}].src", f"unknown node id {src}")
        _require(dst in ids, f"flows[{i}].dst", f"unknown node id {dst}")
        _require(src != dst, f"flows[{i}]", "src and dst must differ")
        rate = float(fl.get("rate", 1.0))
        _require(rate > 0, f"flows[{i}].rate", "must be > 0")
        stop = fl.get("stop")
        flows.append(FlowSpec(
            src=src, dst=dst, rate=rate,
            size=int(fl.get("size", 512)),
            start=float(fl.get("start", 0.0)),
            stop=None if stop is None else float(stop),
        ))

    med = doc.get("medium", {})
    p_loss = float(med.get("p_loss", 0.0))
    _require(0.0 <= p_loss <= 1.0, "medium.p_loss", "must be within [0, 1]")
    radio_range = float(med.get("radio_range", 250.0))
    _require(radio_range > 0, "medium.radio_range", "must be > 0")
    medium = MediumSpec(
        radio_range=radio_range,
        p_loss=p_loss,
        propagation_delay=float(med.get("propagation_delay", 0.001)),
    )

    rep_overrides = doc.get("reputation", {})
    base = dataclasses.asdict(ReputationParams())
    unknown = set(rep_overrides) - set(base)
    _require(not unknown, "reputation",
             f"unknown parameter(s): {sorted(unknown)}")
    base.update(rep_overrides)
    try:
        reputation = ReputationParams(**base)
    except ValueError as exc:
        raise ScenarioError(f"reputation: {exc}") from exc

    script = []
    for i, sc in enumerate(doc.get("script", [])):
        action = sc.get("action")
        _require(action in SCRIPT_ACTIONS, f"script[{i}].action",
                 f"unknown action {action!r}, expected one of {SCRIPT_ACTIONS}")
        node = sc.get("node")
        _require(node in ids, f"script[{i}].node", f"unknown node id {node}")
        script.append(ScriptAction(
            time=float(sc.get("time", 0.0)),
            action=action,
            node=node,
            subject=int(sc.get("subject", -1)),
            value=float(sc.get("value", 0.0)),
            accuser=int(sc.get("accuser", -1)),
            accused=int(sc.get("accused", -1)),
        ))

    window_length = float(doc.get("window_length", 1.0))
    _require(window_length > 0, "window_length", "must be > 0")
    grace = float(doc.get("grace_fraction", 0.1))
    _require(0.0 <= grace < 1.0, "grace_fraction", "must be within [0, 1)")

    return Scenario(
        name=str(doc.get("name", "scenario")),
        duration=duration,
        nodes=tuple(nodes),
        flows=tuple(flows),
        medium=medium,
        reputation=reputation,
        seed=int(doc.get("seed", 0)),
        ids_enabled=bool(doc.get("ids_enabled", True)),
        window_length=window_length,
        grace_fraction=grace,
        send_buffer_cap=int(doc.get("send_buffer_cap", 64)),
        rreq_interval=float(doc.get("rreq_interval", 1.0)),
        probe_rate_windows=int(doc.get("probe_rate_windows", 5)),
        script=tuple(sorted(script, key=lambda s: s.time)),
    )


def scenario_to_dict(sc: Scenario) -> dict[str, Any]:
    """Serialize a Scenario so that loading it back round-trips exactly."""
    return {
        "name": sc.name,
        "duration": sc.duration,
        "seed": sc.seed,
        "ids_enabled": sc.ids_enabled,
        "window_length": sc.window_length,
        "grace_fraction": sc.grace_fraction,
        "send_buffer_cap": sc.send_buffer_cap,
        "rreq_interval": sc.rreq_interval,
        "probe_rate_windows": sc.probe_rate_windows,
        "medium": dataclasses.asdict(sc.medium),
        "reputation": dataclasses.asdict(sc.reputation),
        "nodes": [
            {
                "id": n.id,
                "pos": list(n.pos),
                "behavior": n.behavior,
                "p_drop": n.p_drop,
                "switches": [dataclasses.asdict(s) for s in n.switches],
                "initial_malicious": list(n.initial_malicious),
                **({"waypoint": {"area": list(n.waypoint.area),
                                 "speed": list(n.waypoint.speed),
                                 "pause": n.waypoint.pause}}
                   if n.waypoint else {}),
            }
            for n in sc.nodes
        ],
        "flows": [
            {"src": f.src, "dst": f.dst, "rate": f.rate, "size": f.size,
             "start": f.start, "stop": f.stop}
            for f in sc.flows
        ],
        "script": [dataclasses.asdict(a) for a in sc.script],
    }


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"scenario file is not valid JSON: {exc}")
    return scenario_from_dict(doc)


def save_scenario(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scenario_to_dict(sc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# Scenario builders used by the test harness and handy for experiments.

def connected_placement(n_nodes: int, area: float, radio_range: float,
                        rng: random.Random,
                        max_tries: int = 200) -> list[tuple[float, float]]:
    """Random node placement retried until the graph is connected."""
    for _ in range(max_tries):
        pts = [(rng.uniform(0, area), rng.uniform(0, area))
               for _ in range(n_nodes)]
        if _is_connected(pts, radio_range):
            return pts
    raise ScenarioError(
        "placement: could not generate a connected topology; "
        "increase radio_range or shrink the area")


def _neighbors_of(pts: list[tuple[float, float]], radio_range: float
                  ) -> list[set[int]]:
    nbs: list[set[int]] = [set() for _ in pts]
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            if math.dist(pts[i], pts[j]) <= radio_range:
                nbs[i].add(j)
                nbs[j].add(i)
    return nbs


def _is_connected(pts: list[tuple[float, float]], radio_range: float,
                  exclude: set[int] = frozenset()) -> bool:
    alive = [i for i in range(len(pts)) if i not in exclude]
    if not alive:
        return False
    nbs = _neighbors_of(pts, radio_range)
    seen = {alive[0]}
    stack = [alive[0]]
    while stack:
        u = stack.pop()
        for v in nbs[u]:
            if v not in exclude and v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(alive)


def random_scenario(name: str, n_nodes: int, n_flows: int, duration: float,
                    seed: int, n_blackholes: int = 0, rate: float = 4.0,
                    area: float = 900.0, radio_range: float = 280.0,
                    p_loss: float = 0.0) -> Scenario:
    """Random connected topology with optional blackholes.

    Blackholes are picked among the best-connected nodes so they actually
    sit on paths; flow endpoints are honest nodes with a multi-hop honest
    path between them, so avoidance has somewhere to reroute.
    """
    rng = random.Random(seed)
    for attempt in range(300):
        pts = connected_placement(n_nodes, area, radio_range, rng)
        nbs = _neighbors_of(pts, radio_range)
        order = sorted(range(n_nodes), key=lambda i: (-len(nbs[i]), i))
        black = set(order[:n_blackholes])
        if n_blackholes and not _is_connected(pts, radio_range, exclude=black):
            continue
        honest = [i for i in range(n_nodes) if i not in black]
        pairs = _flow_pairs(honest, pts, radio_range, black, n_flows, rng)
        if pairs is None:
            continue
        nodes = tuple(
            NodeSpec(id=i, pos=pts[i],
                     behavior="blackhole" if i in black else "honest")
            for i in range(n_nodes))
        flows = tuple(
            FlowSpec(src=s, dst=d, rate=rate, start=0.5,
                     stop=max(0.5, duration - 1.0))
            for s, d in pairs)
        return Scenario(
            name=name, duration=duration, nodes=nodes, flows=flows,
            medium=MediumSpec(radio_range=radio_range, p_loss=p_loss),
            seed=seed)
    raise ScenarioError("placement: no viable topology after many attempts")


def _flow_pairs(honest, pts, radio_range, black, n_flows, rng):
    """Pick honest endpoint pairs at least two hops apart with an
    honest-only path between them.

    When blackholes are present, every minimum-hop path for a chosen pair
    must cross one (honest-only detour strictly longer), so the attack
    actually attracts traffic and avoidance has room to improve delivery.
    """
    nbs = _neighbors_of(pts, radio_range)
    pairs = []
    candidates = list(honest)
    rng.shuffle(candidates)
    for src in candidates:
        for dst in candidates:
            if src >= dst:
                continue
            hops_all = _hop_distance(nbs, src, dst, set())
            hops_honest = _hop_distance(nbs, src, dst, black)
            if hops_all is None or hops_all < 2 or hops_honest is None:
                continue
            if black and hops_honest <= hops_all:
                continue
            pairs.append((src, dst))
            break
        if len(pairs) == n_flows:
            return pairs
    return None


def _hop_distance(nbs, src, dst, exclude):
    if src in exclude or dst in exclude:
        return None
    dist = {src: 0}
    queue = [src]
    while queue:
        u = queue.pop(0)
        if u == dst:
            return dist[u]
        for v in sorted(nbs[u]):
            if v not in exclude and v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return None
