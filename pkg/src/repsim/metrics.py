"""Metrics computed as a pure function of a finished event trace.

Recomputing from a persisted trace reproduces the report exactly; nothing
here looks at simulator state. A trace without its end sentinel is
rejected outright rather than producing a partial report.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass
from typing import Optional

from . import tracelog


class TruncatedTrace(ValueError):
    pass


@dataclass
class FlowStats:
    src: int
    dst: int
    generated: int = 0
    delivered: int = 0
    dropped_adversary: int = 0
    dropped_channel: int = 0
    dropped_policy: int = 0

    @property
    def in_flight(self) -> int:
        return (self.generated - self.delivered - self.dropped_adversary
                - self.dropped_channel - self.dropped_policy)

    @property
    def pdr(self) -> float:
        return self.delivered / self.generated if self.generated else 0.0


@dataclass
class MetricsReport:
    scenario: str
    seed: int
    ids_enabled: bool
    duration: float
    flows: dict[int, FlowStats]
    pdr_overall: float
    control_overhead: float
    detection_latency: dict[tuple[int, int], float]
    false_positives: int
    false_negatives: int
    redemptions: list[tuple[int, int, float, Optional[float]]]
    generated: int = 0
    delivered: int = 0
    dropped_adversary: int = 0
    dropped_channel: int = 0
    dropped_policy: int = 0
    in_flight_at_end: int = 0
    transmissions: int = 0

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "ids_enabled": self.ids_enabled,
            "duration": self.duration,
            "pdr_overall": self.pdr_overall,
            "control_overhead": self.control_overhead,
            "generated": self.generated,
            "delivered": self.delivered,
            "dropped_adversary": self.dropped_adversary,
            "dropped_channel": self.dropped_channel,
            "dropped_policy": self.dropped_policy,
            "in_flight_at_end": self.in_flight_at_end,
            "transmissions": self.transmissions,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "flows": {
                str(idx): {
                    "src": f.src, "dst": f.dst,
                    "generated": f.generated, "delivered": f.delivered,
                    "dropped_adversary": f.dropped_adversary,
                    "dropped_channel": f.dropped_channel,
                    "dropped_policy": f.dropped_policy,
                    "in_flight": f.in_flight,
                    "pdr": f.pdr,
                }
                for idx, f in sorted(self.flows.items())
            },
            "detection_latency": {
                f"{obs}->{subj}": lat
                for (obs, subj), lat in sorted(self.detection_latency.items())
            },
            "redemptions": [
                {"observer": obs, "subject": subj,
                 "declared_at": t_dec, "redeemed_at": t_red}
                for obs, subj, t_dec, t_red in self.redemptions
            ],
        }


def compute_metrics(records: list[dict]) -> MetricsReport:
    """Fold a complete event trace into a metrics report."""
    if not records or records[0].get("ev") != tracelog.EV_META:
        raise TruncatedTrace("trace has no meta record")
    if records[-1].get("ev") != tracelog.EV_END:
        raise TruncatedTrace("trace has no end sentinel; refusing partial report")
    meta = records[0]

    flows: dict[int, FlowStats] = {}
    tx_total = 0
    tx_non_data = 0
    first_misbehavior: dict[int, float] = {}
    first_malicious: dict[tuple[int, int], float] = {}
    ever_malicious_subjects: set[int] = set()
    declared_events: list[tuple[float, int, int]] = []
    redeemed_events: list[tuple[float, int, int]] = []

    for r in records:
        if r["ev"] == tracelog.EV_GEN:
            st = flows.get(r["flow"])
            if st is None:
                st = flows[r["flow"]] = FlowStats(src=r["src"], dst=r["dst"])
            st.generated += 1

    for r in records:
        ev = r["ev"]
        if ev == tracelog.EV_DELIVER:
            if r["flow"] is not None:
                flows[r["flow"]].delivered += 1
        elif ev == tracelog.EV_DROP:
            cat = r["cat"]
            if cat == tracelog.CAT_ADVERSARY:
                node = r["node"]
                if node not in first_misbehavior:
                    first_misbehavior[node] = r["t"]
            if r["flow"] is not None:
                st = flows[r["flow"]]
                if cat == tracelog.CAT_ADVERSARY:
                    st.dropped_adversary += 1
                elif cat == tracelog.CAT_CHANNEL:
                    st.dropped_channel += 1
                else:
                    st.dropped_policy += 1
        elif ev == tracelog.EV_TRACE_SUPPRESSED:
            node = r["node"]
            if node not in first_misbehavior:
                first_misbehavior[node] = r["t"]
        elif ev == tracelog.EV_TX:
            tx_total += 1
            if r["kind"] != "data":
                tx_non_data += 1
        elif ev == tracelog.EV_REPUT:
            if r["class"] == "Malicious":
                key = (r["node"], r["neighbor"])
                if key not in first_malicious:
                    first_malicious[key] = r["t"]
                ever_malicious_subjects.add(r["neighbor"])
        elif ev == tracelog.EV_DECLARED:
            declared_events.append((r["t"], r["node"], r["neighbor"]))
        elif ev == tracelog.EV_REDEEMED:
            redeemed_events.append((r["t"], r["node"], r["neighbor"]))

    latency: dict[tuple[int, int], float] = {}
    for (obs, subj), t_class in first_malicious.items():
        t_mis = first_misbehavior.get(subj)
        if t_mis is not None and t_class >= t_mis:
            latency[(obs, subj)] = t_class - t_mis

    misbehaving = set(first_misbehavior)
    false_positives = len(ever_malicious_subjects - misbehaving)
    false_negatives = len(misbehaving - ever_malicious_subjects)

    redemptions = _pair_redemptions(declared_events, redeemed_events)

    generated = sum(f.generated for f in flows.values())
    delivered = sum(f.delivered for f in flows.values())

    return MetricsReport(
        scenario=meta["scenario"],
        seed=meta["seed"],
        ids_enabled=meta["ids"],
        duration=meta["duration"],
        flows=flows,
        pdr_overall=(delivered / generated) if generated else 0.0,
        control_overhead=(tx_non_data / tx_total) if tx_total else 0.0,
        detection_latency=latency,
        false_positives=false_positives,
        false_negatives=false_negatives,
        redemptions=redemptions,
        generated=generated,
        delivered=delivered,
        dropped_adversary=sum(f.dropped_adversary for f in flows.values()),
        dropped_channel=sum(f.dropped_channel for f in flows.values()),
        dropped_policy=sum(f.dropped_policy for f in flows.values()),
        in_flight_at_end=sum(f.in_flight for f in flows.values()),
        transmissions=tx_total,
    )


def _pair_redemptions(declared, redeemed):
    """Match declared/redeemed events per (observer, subject) in order."""
    out = []
    pending: dict[tuple[int, int], list[float]] = {}
    red_by_key: dict[tuple[int, int], list[float]] = {}
    for t, obs, subj in redeemed:
        red_by_key.setdefault((obs, subj), []).append(t)
    for t, obs, subj in declared:
        pending.setdefault((obs, subj), []).append(t)
    for key in sorted(pending):
        reds = red_by_key.get(key, [])
        ri = 0
        for t_dec in pending[key]:
            t_red = None
            while ri < len(reds):
                if reds[ri] >= t_dec:
                    t_red = reds[ri]
                    ri += 1
                    break
                ri += 1
            out.append((key[0], key[1], t_dec, t_red))
    return out


def aggregate(reports: list[MetricsReport]) -> dict:
    """Mean and population stddev of the headline numbers across seeds."""
    def stats(values):
        vals = list(values)
        return {
            "mean": statistics.mean(vals) if vals else 0.0,
            "stddev": statistics.pstdev(vals) if vals else 0.0,
        }

    return {
        "seeds": [r.seed for r in reports],
        "pdr_overall": stats(r.pdr_overall for r in reports),
        "control_overhead": stats(r.control_overhead for r in reports),
        "false_positives": stats(r.false_positives for r in reports),
        "false_negatives": stats(r.false_negatives for r in reports),
        "delivered": stats(r.delivered for r in reports),
        "generated": stats(r.generated for r in reports),
    }
