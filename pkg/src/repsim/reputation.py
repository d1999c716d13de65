"""Local reputation state machine.

Each node rates its one-hop neighbors on a bounded scale. Evidence arrives
through three channels with decreasing weight: first-hand observation
(window reports and trace audits), WARNING messages from neighbors, and
avoid-list sightings in route headers. Only first-hand evidence can push a
neighbor into the malicious band; indirect evidence bottoms out just above
it. Inactive malicious entries recover slowly (fading) back into the
suspicious band.

Everything here is pure value-in/value-out: callers own the tables and the
event ordering.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Union


class TrustLevel(enum.Enum):
    """Three-level trust classification of a neighbor."""

    TRUSTWORTHY = 1
    UNDECIDED = 0
    UNTRUSTWORTHY = -1

    @property
    def tag(self) -> str:
        """Human-facing tag: Normal / Suspicious / Malicious."""
        return _TAGS[self]

    @property
    def t(self) -> int:
        """Numeric trust value (+1, 0, -1)."""
        return self.value


_TAGS = {
    TrustLevel.TRUSTWORTHY: "Normal",
    TrustLevel.UNDECIDED: "Suspicious",
    TrustLevel.UNTRUSTWORTHY: "Malicious",
}


@dataclass(frozen=True)
class ReputationParams:
    """Scale, thresholds and evidence weights for the reputation scheme.

    The scale runs from r_min to r_max with the untrustworthy threshold r_u
    and the trustworthy threshold r_t strictly between them. r_max = 0 by
    default so the positive cap and the upper clamp coincide.
    """

    r_min: float = -100.0
    r_max: float = 0.0
    r_u: float = -40.0
    r_t: float = -10.0
    init_value: float = -25.0
    w_good: float = 5.0
    y_drop: float = 15.0
    t_trace: float = 20.0
    z_warn: float = 5.0
    z_avoid: float = 2.0
    drop_threshold: int = 2
    inactivity_windows: int = 10
    fading_rate: float = 5.0
    redemption_target: float = -35.0
    indirect_floor_margin: float = 1.0

    def __post_init__(self) -> None:
        checks = [
            (self.r_min < self.r_u < self.r_t < self.r_max,
             "thresholds must satisfy r_min < r_u < r_t < r_max"),
            (self.r_u < self.init_value < self.r_t,
             "init_value must lie strictly between r_u and r_t"),
            (self.y_drop > self.z_warn,
             "y_drop must exceed z_warn"),
            # Defaults pin w_good == z_warn, so equality is allowed here.
            (self.w_good >= self.z_warn > self.z_avoid,
             "weights must satisfy w_good >= z_warn > z_avoid"),
            (self.w_good >= 0 and self.y_drop >= 0 and self.t_trace >= 0
             and self.z_warn >= 0 and self.z_avoid >= 0,
             "evidence weights must be non-negative"),
            (self.drop_threshold >= 0,
             "drop_threshold must be non-negative"),
            (self.inactivity_windows >= 0,
             "inactivity_windows must be non-negative"),
            (self.fading_rate > 0,
             "fading_rate must be positive"),
            (self.r_u < self.redemption_target < self.init_value,
             "redemption_target must lie strictly between r_u and init_value"),
            (self.indirect_floor_margin > 0,
             "indirect_floor_margin must be positive"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)


DEFAULT_PARAMS = ReputationParams()


@dataclass(frozen=True)
class ReputationEntry:
    """One neighbor's standing in an observer's table."""

    value: float
    declared_malicious: bool = False
    windows_since_adverse: int = 0
    last_update_window: int = 0


@dataclass(frozen=True)
class WindowReport:
    """Per-neighbor tally for one closed timing window."""

    neighbor: int
    window: int
    forwarded: int
    missing: int


# Evidence kinds. Every reputation mutation is attributable to exactly one
# of these, which is what makes the audit log replayable.

@dataclass(frozen=True)
class SelfWindow:
    report: WindowReport


@dataclass(frozen=True)
class TraceNonForward:
    pass


@dataclass(frozen=True)
class TraceDrop:
    pass


@dataclass(frozen=True)
class Warning:
    subject: int


@dataclass(frozen=True)
class AvoidSighting:
    subject: int


@dataclass(frozen=True)
class TraceTestResult:
    passed: bool


Evidence = Union[SelfWindow, TraceNonForward, TraceDrop, Warning,
                 AvoidSighting, TraceTestResult]


class IndirectAction(enum.Enum):
    NONE = "none"
    TRIGGER_TRACE_TEST = "trigger_trace_test"


def clamp(value: float, params: ReputationParams) -> float:
    return min(params.r_max, max(params.r_min, value))


def classify(value: float, params: ReputationParams) -> TrustLevel:
    """Classify a reputation value.

    Boundary rule: value >= r_t is trustworthy, value <= r_u is
    untrustworthy, anything strictly between is undecided.
    """
    if value < params.r_min or value > params.r_max:
        raise ValueError(
            f"reputation value {value} outside [{params.r_min}, {params.r_max}]")
    if value >= params.r_t:
        return TrustLevel.TRUSTWORTHY
    if value <= params.r_u:
        return TrustLevel.UNTRUSTWORTHY
    return TrustLevel.UNDECIDED


def new_entry(params: ReputationParams, window: int) -> ReputationEntry:
    """Fresh entry for a neighbor first observed in the given window."""
    return ReputationEntry(
        value=params.init_value,
        declared_malicious=False,
        windows_since_adverse=0,
        last_update_window=window,
    )


def apply_self_window(entry: ReputationEntry, report: WindowReport,
                      params: ReputationParams) -> ReputationEntry:
    """Fold one window report into the entry.

    More missing packets than the drop threshold is a negative observation
    (-y_drop, inactivity clock reset); otherwise a positive one (+w_good,
    capped at r_max). Positive evidence is ignored while the entry is
    declared malicious: redemption goes through fading or a trace test.

    Reports older than the entry's last update are rejected unchanged; they
    indicate replay or reordering in the caller.
    """
    if report.window < entry.last_update_window:
        return entry
    if report.missing > params.drop_threshold:
        value = clamp(entry.value - params.y_drop, params)
        return ReputationEntry(
            value=value,
            declared_malicious=entry.declared_malicious or value <= params.r_u,
            windows_since_adverse=0,
            last_update_window=report.window,
        )
    if entry.declared_malicious:
        return replace(entry, last_update_window=report.window)
    value = clamp(min(entry.value + params.w_good, params.r_max), params)
    return replace(entry, value=value, last_update_window=report.window)


def apply_trace_evidence(entry: ReputationEntry,
                         kind: Union[TraceNonForward, TraceDrop],
                         params: ReputationParams,
                         window: int) -> ReputationEntry:
    """Apply a first-hand trace audit verdict (one per window).

    A witnessed non-forward costs y_drop; dropping a relayed trace along
    with the message costs t_trace.
    """
    penalty = params.t_trace if isinstance(kind, TraceDrop) else params.y_drop
    value = clamp(entry.value - penalty, params)
    return ReputationEntry(
        value=value,
        declared_malicious=entry.declared_malicious or value <= params.r_u,
        windows_since_adverse=0,
        last_update_window=window,
    )


def apply_indirect_entry(entry: ReputationEntry,
                         kind: Union[Warning, AvoidSighting],
                         params: ReputationParams,
                         window: int) -> tuple[ReputationEntry, IndirectAction]:
    """Apply second-hand evidence to one entry.

    If the subject already sits at or below r_u the rumor is not applied;
    instead the caller is told to run a trace test, which is the only thing
    allowed to settle the question. Otherwise the value drops by the
    channel weight but never past r_u + margin: indirect evidence alone can
    never make a neighbor untrustworthy.
    """
    if entry.value <= params.r_u:
        return (replace(entry, windows_since_adverse=0,
                        last_update_window=window),
                IndirectAction.TRIGGER_TRACE_TEST)
    weight = params.z_warn if isinstance(kind, Warning) else params.z_avoid
    floor = params.r_u + params.indirect_floor_margin
    value = max(entry.value - weight, min(entry.value, floor))
    return (ReputationEntry(
        value=value,
        declared_malicious=entry.declared_malicious,
        windows_since_adverse=0,
        last_update_window=window,
    ), IndirectAction.NONE)


def apply_trace_test_result(entry: ReputationEntry, passed: bool,
                            params: ReputationParams,
                            window: int) -> ReputationEntry:
    """Settle a trace test: pass restores the default, fail condemns."""
    if passed:
        return ReputationEntry(
            value=params.init_value,
            declared_malicious=False,
            windows_since_adverse=0,
            last_update_window=window,
        )
    return ReputationEntry(
        value=params.r_min,
        declared_malicious=True,
        windows_since_adverse=0,
        last_update_window=window,
    )


def fading_tick(entry: ReputationEntry, current_window: int,
                params: ReputationParams) -> ReputationEntry:
    """Advance the inactivity clock; fade a quiet malicious entry upward.

    Called exactly once per entry per window, after that window's evidence.
    A window that produced adverse evidence does not count as quiet. Once
    enough quiet windows have passed, a declared-malicious entry gains
    fading_rate per window until it reaches the redemption target, where
    the malicious flag clears and the node re-enters the suspicious band.
    """
    adverse_this_window = (entry.windows_since_adverse == 0
                           and entry.last_update_window == current_window)
    windows = entry.windows_since_adverse if adverse_this_window \
        else entry.windows_since_adverse + 1
    value = entry.value
    declared = entry.declared_malicious
    if declared and windows >= params.inactivity_windows:
        value = min(entry.value + params.fading_rate, params.redemption_target)
        if value >= params.redemption_target:
            value = params.redemption_target
            declared = False
    return ReputationEntry(
        value=value,
        declared_malicious=declared,
        windows_since_adverse=windows,
        last_update_window=entry.last_update_window,
    )


def apply_evidence(entry: ReputationEntry, evidence: Evidence,
                   params: ReputationParams,
                   window: int) -> tuple[ReputationEntry, IndirectAction]:
    """Dispatch any evidence kind onto an entry (audit replay helper)."""
    if isinstance(evidence, SelfWindow):
        return apply_self_window(entry, evidence.report, params), IndirectAction.NONE
    if isinstance(evidence, (TraceNonForward, TraceDrop)):
        return apply_trace_evidence(entry, evidence, params, window), IndirectAction.NONE
    if isinstance(evidence, (Warning, AvoidSighting)):
        return apply_indirect_entry(entry, evidence, params, window)
    if isinstance(evidence, TraceTestResult):
        return (apply_trace_test_result(entry, evidence.passed, params, window),
                IndirectAction.NONE)
    raise TypeError(f"unknown evidence kind: {evidence!r}")


@dataclass
class ReputationTable:
    """One node's view of its one-hop neighbors.

    Entries are created lazily on first observation and persist for the
    rest of the run (departed neighbors keep their standing and recover it
    on return). The owner never has an entry for itself.
    """

    owner: int
    entries: dict[int, ReputationEntry] = field(default_factory=dict)

    def get(self, neighbor: int) -> Optional[ReputationEntry]:
        return self.entries.get(neighbor)

    def ensure(self, neighbor: int, params: ReputationParams,
               window: int) -> ReputationEntry:
        if neighbor == self.owner:
            raise ValueError("a node does not rate itself")
        entry = self.entries.get(neighbor)
        if entry is None:
            entry = new_entry(params, window)
            self.entries[neighbor] = entry
        return entry

    def set(self, neighbor: int, entry: ReputationEntry) -> None:
        if neighbor == self.owner:
            raise ValueError("a node does not rate itself")
        self.entries[neighbor] = entry

    def apply_indirect(self, subject: int,
                       kind: Union[Warning, AvoidSighting],
                       params: ReputationParams, window: int,
                       is_neighbor: bool) -> IndirectAction:
        """Table-level indirect evidence: ignored unless subject is a
        current neighbor with (or gaining) an entry."""
        if subject == self.owner:
            raise ValueError("indirect evidence about the owner itself")
        if not is_neighbor and subject not in self.entries:
            return IndirectAction.NONE
        entry = self.ensure(subject, params, window)
        updated, action = apply_indirect_entry(entry, kind, params, window)
        self.entries[subject] = updated
        return action

    def malicious_list(self) -> list[int]:
        """Neighbor ids currently declared malicious, ascending."""
        return sorted(nb for nb, e in self.entries.items()
                      if e.declared_malicious)

    def classify_of(self, neighbor: int,
                    params: ReputationParams) -> TrustLevel:
        """Classification of a neighbor; unknown nodes rate as undecided."""
        entry = self.entries.get(neighbor)
        if entry is None:
            return TrustLevel.UNDECIDED
        return classify(entry.value, params)


def replay(evidence_log: Iterable[tuple[int, Evidence]],
           params: ReputationParams, start_window: int = 0) -> ReputationEntry:
    """Rebuild an entry from a logged (window, evidence) stream."""
    entry = new_entry(params, start_window)
    for window, ev in evidence_log:
        entry, _ = apply_evidence(entry, ev, params, window)
    return entry


def fading_windows_to_target(value: float, params: ReputationParams) -> int:
    """Post-inactivity fading ticks needed to reach the redemption target."""
    if value >= params.redemption_target:
        return 0
    return math.ceil((params.redemption_target - value) / params.fading_rate)
