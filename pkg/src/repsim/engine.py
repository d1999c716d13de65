"""Deterministic discrete-event simulation of the network and the IDS.

One seeded generator drives every random draw in a documented order
(channel loss per receiver in id order, grayhole draws per packet
arrival, waypoint draws per node in id order), so a (scenario, seed) pair
always reproduces the same event trace bit for bit.

The wireless medium is promiscuous: a transmission reaches every node in
radio range, addressee or not, each copy surviving an independent loss
draw. Overheard copies feed the monitor (PACKs), the trace audit and
probe resolution.

Trace audit rules, per observer X and duty holder M within one window:
  - X saw M forward the data and its trace: clean.
  - X saw the data forward but no trace: trace omission, costs y_drop.
  - X saw a handoff to M (no trace expected: the sender originated) and
    then silence: non-forwarding, costs y_drop.
  - X saw a handoff to M accompanied by a trace M was to relay, then
    silence: message and trace both dropped, costs t_trace.
One verdict per neighbor per window; the monitor's own window report
takes precedence over third-party audit marks.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import math
import random
from dataclasses import dataclass, replace
from typing import Optional

from . import packets, routing, tracelog
from .monitor import PacketBuffer, window_of
from .reputation import (AvoidSighting, IndirectAction, ReputationParams,
                         ReputationTable, TraceDrop, TraceNonForward,
                         TrustLevel, Warning, WindowReport,
                         apply_self_window, apply_trace_evidence,
                         apply_trace_test_result, classify, clamp,
                         fading_tick)
from .scenario import Scenario, ScenarioError
from .tracetest import TestOutcome, TraceTestManager

logger = logging.getLogger("repsim.engine")

# Event kinds, popped in (time, seq) order.
_DELIVERY = 0
_WINDOW = 1
_GEN = 2
_PROBE_DEADLINE = 3
_SCRIPT = 4
_MOBILITY = 5

MOBILITY_STEP = 0.25  # seconds between waypoint position updates


@dataclass
class _DutyRecord:
    """Audit state for one (packet, duty holder) pair at one observer."""
    window: int
    handoff_from: Optional[int]
    upstream_trace: bool = False
    data_seen: bool = False
    trace_seen: bool = False


@dataclass(frozen=True)
class TraceTally:
    complete: int = 0
    case1: int = 0  # handoff witnessed, then silence
    case2: int = 0  # data forwarded, trace omitted
    case3: int = 0  # trace-accompanied handoff, then silence


class TraceWatcher:
    """Per-node ledger of forwarding duties witnessed promiscuously."""

    def __init__(self, window_len: float, grace_fraction: float):
        self.window_len = window_len
        self.grace = grace_fraction
        self._rec: dict[tuple[int, int], _DutyRecord] = {}
        self._by_pid: dict[int, set[int]] = {}

    def note_handoff(self, pid: int, duty: int, handed_by: int, now: float,
                     upstream_trace: bool = False) -> None:
        key = (pid, duty)
        if key in self._rec:
            return
        self._rec[key] = _DutyRecord(
            window=window_of(now, self.window_len, self.grace),
            handoff_from=handed_by,
            upstream_trace=upstream_trace,
        )
        self._by_pid.setdefault(pid, set()).add(duty)

    def note_forward(self, pid: int, forwarder: int, now: float) -> None:
        key = (pid, forwarder)
        rec = self._rec.get(key)
        if rec is None:
            rec = _DutyRecord(
                window=window_of(now, self.window_len, self.grace),
                handoff_from=None,
            )
            self._rec[key] = rec
            self._by_pid.setdefault(pid, set()).add(forwarder)
        rec.data_seen = True

    def note_trace(self, data_pid: int, emitter: int) -> None:
        for duty in self._by_pid.get(data_pid, ()):
            rec = self._rec.get((data_pid, duty))
            if rec is None:
                continue
            if duty == emitter:
                rec.trace_seen = True
            elif rec.handoff_from == emitter:
                rec.upstream_trace = True

    def close_window(self, window: int) -> dict[int, TraceTally]:
        complete: dict[int, int] = {}
        case1: dict[int, int] = {}
        case2: dict[int, int] = {}
        case3: dict[int, int] = {}
        for (pid, duty), rec in list(self._rec.items()):
            if rec.window != window:
                continue
            if rec.data_seen and rec.trace_seen:
                complete[duty] = complete.get(duty, 0) + 1
            elif rec.data_seen:
                case2[duty] = case2.get(duty, 0) + 1
            elif rec.trace_seen:
                pass  # trace heard but data copy lost: insufficient evidence
            elif rec.upstream_trace:
                case3[duty] = case3.get(duty, 0) + 1
            else:
                case1[duty] = case1.get(duty, 0) + 1
            del self._rec[(pid, duty)]
            bucket = self._by_pid.get(pid)
            if bucket is not None:
                bucket.discard(duty)
                if not bucket:
                    del self._by_pid[pid]
        out = {}
        for duty in set(complete) | set(case1) | set(case2) | set(case3):
            out[duty] = TraceTally(
                complete=complete.get(duty, 0),
                case1=case1.get(duty, 0),
                case2=case2.get(duty, 0),
                case3=case3.get(duty, 0),
            )
        return out


@dataclass
class _Behavior:
    kind: str
    p_drop: float = 0.0


class NodeRuntime:
    """Mutable per-node state driven by the single-threaded event loop."""

    def __init__(self, spec, scenario: Scenario):
        self.id = spec.id
        self.pos = spec.pos
        self.spec = spec
        self._phases = [(0.0, _Behavior(spec.behavior, spec.p_drop))] + [
            (sw.time, _Behavior(sw.behavior, sw.p_drop)) for sw in spec.switches]
        self._phase_idx = 0
        self.table = ReputationTable(owner=spec.id)
        self.monitor = PacketBuffer(owner=spec.id,
                                    window_len=scenario.window_length,
                                    grace_fraction=scenario.grace_fraction)
        self.watcher = TraceWatcher(scenario.window_length,
                                    scenario.grace_fraction)
        self.cache = routing.RouteCache(owner=spec.id)
        self.tests = TraceTestManager(owner=spec.id,
                                      rate_limit_windows=scenario.probe_rate_windows)
        self.send_buffer: dict[int, list] = {}
        self.seen_rreqs: set[tuple[int, int]] = set()
        self.last_rreq_time: dict[int, float] = {}
        self.flow_ledger: dict[tuple[int, int], tuple[int, ...]] = {}
        self.last_route_via: dict[int, tuple[int, ...]] = {}
        self.rerr_sent: set[tuple[int, int, int]] = set()
        self.wp_target: tuple[float, float] | None = None
        self.wp_speed: float = 0.0
        self.wp_pause_until: float = 0.0

    def behavior_at(self, now: float) -> _Behavior:
        while (self._phase_idx + 1 < len(self._phases)
               and self._phases[self._phase_idx + 1][0] <= now):
            self._phase_idx += 1
        return self._phases[self._phase_idx][1]

    def note_route(self, route: tuple[int, ...]) -> None:
        for h in route:
            if h != self.id:
                self.last_route_via[h] = route


@dataclass
class SimResult:
    records: list[dict]
    reputation_rows: list[tuple]  # (window, observer, subject, value, class)

    def digest(self) -> str:
        return tracelog.digest(self.records)


class Simulator:
    """One self-contained simulation instance."""

    def __init__(self, scenario: Scenario, seed: Optional[int] = None,
                 ids_enabled: Optional[bool] = None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else seed
        self.ids = scenario.ids_enabled if ids_enabled is None else ids_enabled
        self.rng = random.Random(self.seed)
        self.params: ReputationParams = scenario.reputation
        self.W = scenario.window_length
        self.now = 0.0
        self._seq = itertools.count()
        self._heap: list = []
        self._pid = itertools.count(1)
        self._req = itertools.count(1)
        self.records: list[dict] = []
        self.rep_rows: list[tuple] = []
        self.nodes: dict[int, NodeRuntime] = {
            spec.id: NodeRuntime(spec, scenario) for spec in scenario.nodes}
        self._mobile = sorted(s.id for s in scenario.nodes if s.waypoint)
        self._neighbor_map = self._build_neighbors()
        self._init_malicious()

    # -- topology ---------------------------------------------------------

    def _build_neighbors(self) -> dict[int, tuple[int, ...]]:
        rng_range = self.sc.medium.radio_range
        out: dict[int, list[int]] = {nid: [] for nid in self.nodes}
        ids = sorted(self.nodes)
        for i, a in enumerate(ids):
            for b in ids[i + 1:]:
                if math.dist(self.nodes[a].pos, self.nodes[b].pos) <= rng_range:
                    out[a].append(b)
                    out[b].append(a)
        return {nid: tuple(sorted(nbs)) for nid, nbs in out.items()}

    def neighbors(self, nid: int) -> tuple[int, ...]:
        """Current one-hop neighborhood; positions move only at mobility
        steps, so the map is rebuilt there and stays valid in between."""
        return self._neighbor_map[nid]

    def _on_mobility(self) -> None:
        for nid in self._mobile:
            rt = self.nodes[nid]
            wp = rt.spec.waypoint
            if self.now < rt.wp_pause_until:
                continue
            if rt.wp_target is None:
                rt.wp_target = (self.rng.uniform(0, wp.area[0]),
                                self.rng.uniform(0, wp.area[1]))
                rt.wp_speed = self.rng.uniform(*wp.speed)
                continue
            step = rt.wp_speed * MOBILITY_STEP
            dist = math.dist(rt.pos, rt.wp_target)
            if dist <= step:
                rt.pos = rt.wp_target
                rt.wp_target = None
                rt.wp_pause_until = self.now + wp.pause
            else:
                frac = step / dist
                rt.pos = (rt.pos[0] + (rt.wp_target[0] - rt.pos[0]) * frac,
                          rt.pos[1] + (rt.wp_target[1] - rt.pos[1]) * frac)
        self._neighbor_map = self._build_neighbors()
        t_next = self.now + MOBILITY_STEP
        if t_next <= self.sc.duration:
            self._push(t_next, _MOBILITY)

    def _init_malicious(self) -> None:
        for spec in self.sc.nodes:
            rt = self.nodes[spec.id]
            for target in spec.initial_malicious:
                if target not in self.neighbors(spec.id):
                    raise ScenarioError(
                        f"nodes[{spec.id}].initial_malicious: node {target} "
                        "is not a one-hop neighbor")
                entry = rt.table.ensure(target, self.params, 0)
                rt.table.set(target, replace(
                    entry, value=self.params.r_min, declared_malicious=True))

    # -- event plumbing ---------------------------------------------------

    def _push(self, time: float, kind: int, a=None, b=None, c=None) -> None:
        heapq.heappush(self._heap, (time, next(self._seq), kind, a, b, c))

    def _rec(self, record: dict) -> None:
        self.records.append(record)

    def _window_now(self) -> int:
        return int(self.now // self.W)

    # -- run loop ---------------------------------------------------------

    def run(self) -> SimResult:
        sc = self.sc
        self._rec({"ev": tracelog.EV_META, "t": 0.0, "scenario": sc.name,
                   "seed": self.seed, "ids": self.ids,
                   "duration": sc.duration, "window_length": self.W})
        if sc.duration > 0:
            if self.W <= sc.duration:
                self._push(self.W, _WINDOW, 0)
            for idx, flow in enumerate(sc.flows):
                if flow.start <= sc.duration:
                    self._push(flow.start, _GEN, idx, 0)
            for action in sc.script:
                if action.time <= sc.duration:
                    self._push(action.time, _SCRIPT, action)
            if self._mobile and MOBILITY_STEP <= sc.duration:
                self._push(MOBILITY_STEP, _MOBILITY)
        n_events = 0
        while self._heap:
            time, _, kind, a, b, c = heapq.heappop(self._heap)
            if time > sc.duration:
                break
            self.now = time
            n_events += 1
            if kind == _DELIVERY:
                self._on_delivery(a, b, c)
            elif kind == _WINDOW:
                self._on_window_close(a)
            elif kind == _GEN:
                self._on_generate(a, b)
            elif kind == _PROBE_DEADLINE:
                self._on_probe_deadline(a, b, c)
            elif kind == _SCRIPT:
                self._on_script(a)
            elif kind == _MOBILITY:
                self._on_mobility()
        self.now = sc.duration
        self._rec({"ev": tracelog.EV_END, "t": sc.duration, "events": n_events})
        return SimResult(records=self.records, reputation_rows=self.rep_rows)

    # -- transmission and the medium --------------------------------------

    def transmit(self, sender: int, pkt, addressee: Optional[int] = None) -> None:
        rec = {"ev": tracelog.EV_TX, "t": self.now, "node": sender,
               "kind": pkt.kind, "pkt": pkt.pid}
        if pkt.kind == packets.RREQ:
            rec["origin"] = pkt.origin
            rec["req"] = pkt.request_id
            if pkt.avoid:
                rec["avoid"] = list(pkt.avoid)
        elif pkt.kind == packets.RREP and pkt.avoid:
            rec["avoid"] = list(pkt.avoid)
        self._rec(rec)
        p_loss = self.sc.medium.p_loss
        delay = self.sc.medium.propagation_delay
        delivered_to_addressee = False
        for rx in self.neighbors(sender):
            if p_loss > 0.0 and self.rng.random() < p_loss:
                continue
            if rx == addressee:
                delivered_to_addressee = True
            self._push(self.now + delay, _DELIVERY, rx, sender, pkt)
        if (addressee is not None and not delivered_to_addressee
                and pkt.kind == packets.DATA):
            reason = (routing.CHANNEL_LOSS
                      if addressee in self.neighbors(sender) else "OUT_OF_RANGE")
            self._drop(addressee, pkt, tracelog.CAT_CHANNEL, reason)

    def _drop(self, node: int, pkt, cat: str, reason: str) -> None:
        self._rec({"ev": tracelog.EV_DROP, "t": self.now, "node": node,
                   "pkt": pkt.pid, "flow": pkt.flow if pkt.kind == packets.DATA else None,
                   "cat": cat, "reason": reason})

    # -- traffic ----------------------------------------------------------

    def _on_generate(self, flow_idx: int, n: int) -> None:
        flow = self.sc.flows[flow_idx]
        stop = flow.stop if flow.stop is not None else self.sc.duration
        pid = next(self._pid)
        self._rec({"ev": tracelog.EV_GEN, "t": self.now, "flow": flow_idx,
                   "pkt": pid, "src": flow.src, "dst": flow.dst})
        rt = self.nodes[flow.src]
        pkt = packets.DataPacket(pid=pid, origin=flow.src, dest=flow.dst,
                                 route=(), flow=flow_idx, size=flow.size)
        route = rt.cache.best(flow.dst, self._classifier(rt))
        if route is not None:
            self._send_data(rt, replace(pkt, route=route))
        else:
            self._buffer_packet(rt, pkt)
            self._maybe_discover(rt, flow.dst)
        t_next = flow.start + (n + 1) / flow.rate
        if t_next <= stop and t_next <= self.sc.duration:
            self._push(t_next, _GEN, flow_idx, n + 1)

    def _classifier(self, rt: NodeRuntime):
        table, params = rt.table, self.params
        return lambda nid: table.classify_of(nid, params)

    def _buffer_packet(self, rt: NodeRuntime, pkt) -> None:
        queue = rt.send_buffer.setdefault(pkt.dest, [])
        queue.append(pkt)
        if len(queue) > self.sc.send_buffer_cap:
            dropped = queue.pop(0)
            self._drop(rt.id, dropped, tracelog.CAT_POLICY,
                       routing.BUFFER_OVERFLOW)

    def _maybe_discover(self, rt: NodeRuntime, dest: int) -> None:
        last = rt.last_rreq_time.get(dest)
        if last is not None and self.now - last < self.sc.rreq_interval:
            return
        rt.last_rreq_time[dest] = self.now
        malicious = rt.table.malicious_list() if self.ids else []
        rreq = routing.originate_rreq(rt.id, dest, malicious, next(self._req))
        rt.seen_rreqs.add((rreq.origin, rreq.request_id))
        self.transmit(rt.id, packets.RouteRequestPacket(
            pid=next(self._pid), request_id=rreq.request_id,
            origin=rreq.origin, dest=rreq.destination,
            avoid=rreq.avoid_list, route=rreq.accumulated_route))

    def _send_data(self, rt: NodeRuntime, pkt) -> None:
        """Originate a data packet along a cached source route."""
        nxt = pkt.route[1]
        rt.flow_ledger[(pkt.origin, pkt.dest)] = pkt.route
        rt.note_route(pkt.route)
        if self.ids and nxt != pkt.dest:
            rt.monitor.register_sent(pkt.pid, nxt, self.now)
            # Origination carries no trace, so silence here is plain
            # non-forwarding, not a trace drop.
            rt.watcher.note_handoff(pkt.pid, nxt, rt.id, self.now,
                                    upstream_trace=False)
        self.transmit(rt.id, pkt, addressee=nxt)

    # -- delivery dispatch -------------------------------------------------

    def _on_delivery(self, rx: int, tx: int, pkt) -> None:
        rt = self.nodes[rx]
        kind = pkt.kind
        if kind == packets.DATA:
            self._observe_data(rt, tx, pkt)
            route = pkt.route
            if tx in route:
                idx = route.index(tx)
                if idx + 1 < len(route) and route[idx + 1] == rx:
                    self._handle_data(rt, pkt, prev=tx)
        elif kind == packets.TRACE:
            if self.ids:
                rt.watcher.note_trace(pkt.data_pid, tx)
        elif kind == packets.RREQ:
            self._handle_rreq(rt, pkt, tx)
        elif kind == packets.RREP:
            route = pkt.route
            idx = route.index(tx) if tx in route else -1
            if idx > 0 and route[idx - 1] == rx:
                self._handle_rrep(rt, pkt, tx)
        elif kind == packets.RERR:
            back = pkt.back_route
            idx = back.index(tx) if tx in back else -1
            if idx >= 0 and idx + 1 < len(back) and back[idx + 1] == rx:
                self._handle_rerr(rt, pkt)
        elif kind == packets.WARNING:
            self._handle_warning(rt, pkt)

    def _observe_data(self, rt: NodeRuntime, tx: int, pkt) -> None:
        """Promiscuous bookkeeping every receiver does for a DATA copy."""
        if not self.ids:
            return
        rt.monitor.on_overheard(pkt.pid, tx)
        outcome = rt.tests.on_overheard_forward(pkt.pid, tx)
        if outcome is TestOutcome.PASSED:
            self._resolve_test(rt, tx, passed=True)
        route = pkt.route
        if tx in route:
            idx = route.index(tx)
            if idx > 0:
                rt.watcher.note_forward(pkt.pid, tx, self.now)
            if idx + 1 < len(route):
                duty = route[idx + 1]
                if (duty != pkt.dest and duty != rt.id and tx != rt.id
                        and duty in self.neighbors(rt.id)):
                    rt.watcher.note_handoff(pkt.pid, duty, tx, self.now)

    # -- data plane --------------------------------------------------------

    def _handle_data(self, rt: NodeRuntime, pkt, prev: int) -> None:
        if pkt.dest == rt.id:
            self._rec({"ev": tracelog.EV_DELIVER, "t": self.now,
                       "node": rt.id, "pkt": pkt.pid, "flow": pkt.flow})
            return
        prev_level = (rt.table.classify_of(prev, self.params)
                      if self.ids else TrustLevel.UNDECIDED)
        decision = routing.forward_decision(
            rt.id, pkt.route, prev, prev_level,
            rt.table.malicious_list() if self.ids else [])
        if isinstance(decision, routing.Refuse):
            self._drop(rt.id, pkt, tracelog.CAT_POLICY, decision.reason)
            if decision.reason == routing.NEXT_HOP_MALICIOUS:
                idx = pkt.route.index(rt.id)
                self._send_rerr(rt, pkt.route, broken=(rt.id, pkt.route[idx + 1]),
                                flow_src=pkt.origin, dest=pkt.dest)
            return
        behavior = rt.behavior_at(self.now)
        if behavior.kind in ("blackhole", "selfish"):
            self._drop(rt.id, pkt, tracelog.CAT_ADVERSARY, behavior.kind.upper())
            return
        if behavior.kind == "grayhole" and self.rng.random() < behavior.p_drop:
            self._drop(rt.id, pkt, tracelog.CAT_ADVERSARY, "GRAYHOLE")
            return
        nxt = decision.next_hop
        rt.flow_ledger[(pkt.origin, pkt.dest)] = pkt.route
        rt.note_route(pkt.route)
        if self.ids and nxt != pkt.dest:
            rt.monitor.register_sent(pkt.pid, nxt, self.now)
            rt.watcher.note_handoff(pkt.pid, nxt, rt.id, self.now,
                                    upstream_trace=behavior.kind != "trace_dropper")
        self.transmit(rt.id, pkt, addressee=nxt)
        if self.ids:
            if behavior.kind == "trace_dropper":
                self._rec({"ev": tracelog.EV_TRACE_SUPPRESSED, "t": self.now,
                           "node": rt.id, "pkt": pkt.pid})
            else:
                idx = pkt.route.index(rt.id)
                self.transmit(rt.id, packets.TracePacket(
                    pid=next(self._pid), data_pid=pkt.pid,
                    chain=pkt.route[1:idx + 1]))

    # -- routing control plane ---------------------------------------------

    def _handle_rreq(self, rt: NodeRuntime, pkt, tx: int) -> None:
        if (self.ids and rt.table.classify_of(tx, self.params)
                is TrustLevel.UNTRUSTWORTHY):
            self._rec({"ev": tracelog.EV_RREQ_DROP, "t": self.now,
                       "node": rt.id, "origin": pkt.origin, "req": pkt.request_id,
                       "reason": routing.MALICIOUS_PREV_HOP})
            return
        key = (pkt.origin, pkt.request_id)
        if key in rt.seen_rreqs:
            self._rec({"ev": tracelog.EV_RREQ_DROP, "t": self.now,
                       "node": rt.id, "origin": pkt.origin, "req": pkt.request_id,
                       "reason": routing.DUP_RREQ})
            return
        rt.seen_rreqs.add(key)
        rreq = routing.RouteRequest(
            request_id=pkt.request_id, origin=pkt.origin,
            destination=pkt.dest, avoid_list=pkt.avoid,
            accumulated_route=pkt.route)
        decision = routing.handle_rreq(
            rt.id, rreq, rt.table.malicious_list() if self.ids else [])
        if isinstance(decision, routing.Drop):
            self._rec({"ev": tracelog.EV_RREQ_DROP, "t": self.now,
                       "node": rt.id, "origin": pkt.origin, "req": pkt.request_id,
                       "reason": decision.reason})
            return
        if self.ids:
            self._scan_avoid(rt, pkt.avoid)
        if isinstance(decision, routing.Reply):
            reply = decision.reply
            self.transmit(rt.id, packets.RouteReplyPacket(
                pid=next(self._pid), request_id=reply.request_id,
                origin=rreq.origin, route=reply.route, replier=rt.id,
                avoid=tuple(rt.table.malicious_list()) if self.ids else ()),
                addressee=reply.route[-2])
        else:
            fwd = decision.request
            self.transmit(rt.id, packets.RouteRequestPacket(
                pid=next(self._pid), request_id=fwd.request_id,
                origin=fwd.origin, dest=fwd.destination,
                avoid=fwd.avoid_list, route=fwd.accumulated_route))

    def _scan_avoid(self, rt: NodeRuntime, avoid: tuple[int, ...]) -> None:
        nbs = self.neighbors(rt.id)
        for subject in avoid:
            if subject == rt.id or subject not in nbs:
                continue
            entry_before = rt.table.get(subject)
            action = rt.table.apply_indirect(
                subject, AvoidSighting(subject), self.params,
                self._window_now(), is_neighbor=True)
            self._log_reput(rt, subject, "avoid_sighting",
                            changed=rt.table.get(subject) != entry_before)
            if action is IndirectAction.TRIGGER_TRACE_TEST:
                self._maybe_start_test(rt, subject)

    def _handle_rrep(self, rt: NodeRuntime, pkt, tx: int) -> None:
        if (self.ids and rt.table.classify_of(tx, self.params)
                is TrustLevel.UNTRUSTWORTHY):
            self._rec({"ev": tracelog.EV_RREP_DROP, "t": self.now,
                       "node": rt.id, "pkt": pkt.pid,
                       "reason": routing.MALICIOUS_PREV_HOP})
            return
        if self.ids:
            self._scan_avoid(rt, pkt.avoid)
        route = pkt.route
        if rt.id == pkt.origin:
            ok = rt.cache.insert(route, rt.table.malicious_list()
                                 if self.ids else [])
            if not ok:
                self._rec({"ev": tracelog.EV_RREP_DROP, "t": self.now,
                           "node": rt.id, "pkt": pkt.pid,
                           "reason": "ROUTE_CONTAINS_MALICIOUS"})
                return
            rt.note_route(route)
            self._rec({"ev": tracelog.EV_ROUTE, "t": self.now, "node": rt.id,
                       "dst": route[-1], "route": list(route)})
            self._flush_buffer(rt, route[-1])
            return
        idx = route.index(rt.id)
        self.transmit(rt.id, pkt, addressee=route[idx - 1])

    def _flush_buffer(self, rt: NodeRuntime, dest: int) -> None:
        queue = rt.send_buffer.pop(dest, [])
        for pkt in queue:
            route = rt.cache.best(dest, self._classifier(rt))
            if route is None:
                rt.send_buffer.setdefault(dest, []).append(pkt)
            else:
                self._send_data(rt, replace(pkt, route=route))

    def _send_rerr(self, rt: NodeRuntime, route: tuple[int, ...],
                   broken: tuple[int, int], flow_src: int, dest: int) -> None:
        key = (flow_src, dest, broken[1])
        if key in rt.rerr_sent or flow_src == rt.id:
            return
        rt.rerr_sent.add(key)
        idx = route.index(rt.id)
        back = tuple(reversed(route[:idx + 1]))
        self._rec({"ev": tracelog.EV_RERR, "t": self.now, "node": rt.id,
                   "link": list(broken), "dests": [dest]})
        rt.cache.purge_link(*broken)
        if len(back) < 2:
            return
        self.transmit(rt.id, packets.RouteErrorPacket(
            pid=next(self._pid), origin=rt.id, target=flow_src,
            broken=broken, dests=(dest,), back_route=back),
            addressee=back[1])

    def _handle_rerr(self, rt: NodeRuntime, pkt) -> None:
        rt.cache.purge_link(*pkt.broken)
        if rt.id == pkt.target:
            return
        back = pkt.back_route
        idx = back.index(rt.id)
        if idx + 1 < len(back):
            self.transmit(rt.id, pkt, addressee=back[idx + 1])

    # -- warnings and trace tests -------------------------------------------

    def _handle_warning(self, rt: NodeRuntime, pkt) -> None:
        self._rec({"ev": tracelog.EV_WARNING_RX, "t": self.now, "node": rt.id,
                   "accuser": pkt.accuser, "accused": pkt.accused})
        if not self.ids:
            return
        accused = pkt.accused
        if accused == rt.id or accused not in self.neighbors(rt.id):
            return
        entry_before = rt.table.get(accused)
        action = rt.table.apply_indirect(
            accused, Warning(accused), self.params, self._window_now(),
            is_neighbor=True)
        self._log_reput(rt, accused, "warning",
                        changed=rt.table.get(accused) != entry_before)
        if action is IndirectAction.TRIGGER_TRACE_TEST:
            self._maybe_start_test(rt, accused)

    def _maybe_start_test(self, rt: NodeRuntime, target: int) -> None:
        window = self._window_now()
        entry = rt.table.get(target)
        if not rt.tests.should_trigger(entry, target, self.params, window):
            return
        probe = rt.tests.build_probe(target, next(self._pid), rt.last_route_via)
        if probe is None:
            return  # no usable route: test skipped, band unchanged
        deadline = self.now + self.W
        rt.tests.register(probe, self.now, deadline, window)
        self._rec({"ev": tracelog.EV_PROBE, "t": self.now, "node": rt.id,
                   "target": target, "pkt": probe.probe_id})
        data = packets.DataPacket(pid=probe.probe_id, origin=rt.id,
                                  dest=probe.route[-1], route=probe.route,
                                  flow=None)
        # Probes stay out of the monitor and the trace audit; the pending
        # test itself adjudicates the forward.
        self.transmit(rt.id, data, addressee=target)
        self._push(deadline, _PROBE_DEADLINE, rt.id, target, probe.probe_id)

    def _on_probe_deadline(self, node: int, target: int, probe_id: int) -> None:
        rt = self.nodes[node]
        outcome = rt.tests.on_deadline(target, probe_id)
        if outcome is TestOutcome.FAILED:
            self._resolve_test(rt, target, passed=False)

    def _resolve_test(self, rt: NodeRuntime, target: int, passed: bool) -> None:
        window = self._window_now()
        entry = rt.table.ensure(target, self.params, window)
        updated = apply_trace_test_result(entry, passed, self.params, window)
        self._commit(rt, target, entry, updated,
                     "trace_test_passed" if passed else "trace_test_failed",
                     window)
        self._rec({"ev": tracelog.EV_PROBE_RESULT, "t": self.now,
                   "node": rt.id, "target": target, "passed": passed,
                   "value": updated.value})
        if not passed:
            self.transmit(rt.id, packets.WarningPacket(
                pid=next(self._pid), accuser=rt.id, accused=target,
                window=window))

    # -- reputation bookkeeping ---------------------------------------------

    def _log_reput(self, rt: NodeRuntime, subject: int, evidence: str,
                   changed: bool = True) -> None:
        if not changed:
            return
        entry = rt.table.get(subject)
        if entry is None:
            return
        self._rec({
            "ev": tracelog.EV_REPUT, "t": self.now, "node": rt.id,
            "neighbor": subject, "window": self._window_now(),
            "evidence": evidence, "value": entry.value,
            "class": classify(entry.value, self.params).tag,
            "declared_malicious": entry.declared_malicious,
        })

    def _commit(self, rt: NodeRuntime, subject: int, old, new,
                evidence: str, window: int) -> None:
        rt.table.set(subject, new)
        self._rec({
            "ev": tracelog.EV_REPUT, "t": self.now, "node": rt.id,
            "neighbor": subject, "window": window, "evidence": evidence,
            "value": new.value, "class": classify(new.value, self.params).tag,
            "declared_malicious": new.declared_malicious,
        })
        if new.declared_malicious and not old.declared_malicious:
            self._on_declared(rt, subject)
        elif old.declared_malicious and not new.declared_malicious:
            self._on_redeemed(rt, subject)

    def _on_declared(self, rt: NodeRuntime, subject: int) -> None:
        self._rec({"ev": tracelog.EV_DECLARED, "t": self.now,
                   "node": rt.id, "neighbor": subject})
        active = [r for r in rt.flow_ledger.values() if rt.id in r]
        errors = routing.purge_on_malicious(rt.cache, subject, active)
        for (origin_dest, route) in list(rt.flow_ledger.items()):
            if subject in route:
                del rt.flow_ledger[origin_dest]
        for err in errors:
            # Unicast one error per broken link back to each affected source.
            for route in active:
                if subject not in route or rt.id not in route:
                    continue
                i_self = route.index(rt.id)
                i_subj = route.index(subject)
                if i_subj != i_self + 1:
                    continue
                if (route[i_subj - 1], subject) != err.broken_link:
                    continue
                self._send_rerr(rt, route, err.broken_link,
                                flow_src=route[0], dest=route[-1])

    def _on_redeemed(self, rt: NodeRuntime, subject: int) -> None:
        self._rec({"ev": tracelog.EV_REDEEMED, "t": self.now,
                   "node": rt.id, "neighbor": subject})
        rt.tests.clear_condemnation(subject)

    # -- windows -------------------------------------------------------------

    def _on_window_close(self, window: int) -> None:
        for nid in sorted(self.nodes):
            self._close_node_window(self.nodes[nid], window)
        t_next = (window + 2) * self.W
        if t_next <= self.sc.duration:
            self._push(t_next, _WINDOW, window + 1)

    def _close_node_window(self, rt: NodeRuntime, window: int) -> None:
        if self.ids:
            reports = {r.neighbor: r for r in rt.monitor.close_window(window)}
            tallies = rt.watcher.close_window(window)
            for nb in sorted(set(reports) | set(tallies)):
                report = reports.get(nb)
                if report is not None:
                    self._rec({"ev": tracelog.EV_REPORT, "t": self.now,
                               "node": rt.id, "neighbor": nb, "window": window,
                               "forwarded": report.forwarded,
                               "missing": report.missing})
                tally = tallies.get(nb)
                entry = rt.table.ensure(nb, self.params, window)
                adverse_report = (report is not None
                                  and report.missing > self.params.drop_threshold)
                if adverse_report:
                    updated = apply_self_window(entry, report, self.params)
                    self._commit(rt, nb, entry, updated, "self_window", window)
                elif tally is not None and tally.case3 > 0:
                    updated = apply_trace_evidence(entry, TraceDrop(),
                                                   self.params, window)
                    self._commit(rt, nb, entry, updated, "trace_drop", window)
                elif tally is not None and (tally.case1 or tally.case2):
                    updated = apply_trace_evidence(entry, TraceNonForward(),
                                                   self.params, window)
                    self._commit(rt, nb, entry, updated, "trace_non_forward",
                                 window)
                elif report is not None:
                    updated = apply_self_window(entry, report, self.params)
                    if updated != entry:
                        self._commit(rt, nb, entry, updated, "self_window",
                                     window)
                elif tally is not None and tally.complete > 0:
                    synth = WindowReport(neighbor=nb, window=window,
                                         forwarded=tally.complete, missing=0)
                    updated = apply_self_window(entry, synth, self.params)
                    if updated != entry:
                        self._commit(rt, nb, entry, updated, "self_window",
                                     window)
            for nb in sorted(rt.table.entries):
                entry = rt.table.entries[nb]
                faded = fading_tick(entry, window, self.params)
                if faded != entry:
                    if (faded.value != entry.value
                            or faded.declared_malicious != entry.declared_malicious):
                        self._commit(rt, nb, entry, faded, "fading", window)
                    else:
                        rt.table.set(nb, faded)
        for nb in sorted(rt.table.entries):
            entry = rt.table.entries[nb]
            self.rep_rows.append((window, rt.id, nb, entry.value,
                                  classify(entry.value, self.params).tag))

    # -- scripted actions -----------------------------------------------------

    def _on_script(self, action) -> None:
        rt = self.nodes[action.node]
        self._rec({"ev": tracelog.EV_SCRIPT, "t": self.now,
                   "action": action.action, "node": action.node})
        if action.action == "set_reputation":
            window = self._window_now()
            entry = rt.table.ensure(action.subject, self.params, window)
            updated = replace(entry, value=clamp(action.value, self.params))
            self._commit(rt, action.subject, entry, updated, "scripted", window)
        elif action.action == "inject_warning":
            self._handle_warning(rt, packets.WarningPacket(
                pid=next(self._pid), accuser=action.accuser,
                accused=action.accused, window=self._window_now()))


def run_scenario(scenario: Scenario, seed: Optional[int] = None,
                 ids_enabled: Optional[bool] = None) -> SimResult:
    """Run one isolated simulation instance and return its result."""
    return Simulator(scenario, seed=seed, ids_enabled=ids_enabled).run()
