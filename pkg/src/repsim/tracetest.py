"""Active probing of suspicious neighbors.

When a neighbor already rated untrustworthy picks up fresh indirect
evidence (a warning or an avoid-list sighting), the observer sends it a
dummy data packet routed one hop past it and watches in promiscuous mode.
Forwarding the probe exonerates the neighbor (reputation reset to the
default); dropping it condemns it and a warning is broadcast one hop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .reputation import ReputationEntry, ReputationParams

PROBE_PAYLOAD = b"\x00" * 64
PROBE_TTL = 2


class TestOutcome(enum.Enum):
    PASSED = "passed"
    FAILED = "failed"


@dataclass(frozen=True)
class ProbePacket:
    """Dummy data packet with a two-hop budget through the target."""

    probe_id: int
    target: int
    route: tuple[int, ...]  # (issuer, target, witness)
    ttl: int = PROBE_TTL
    payload: bytes = PROBE_PAYLOAD

    def __post_init__(self) -> None:
        if len(self.route) < 3 or self.route[1] != self.target:
            raise ValueError("probe route must run issuer, target, witness")
        if self.ttl != PROBE_TTL:
            raise ValueError("probe ttl is fixed at two hops")


@dataclass
class PendingTest:
    probe_id: int
    target: int
    issued_at: float
    deadline: float


@dataclass
class TraceTestManager:
    """Issuer-side bookkeeping: pending probes, rate limits, verdicts."""

    owner: int
    rate_limit_windows: int = 5
    pending: dict[int, PendingTest] = field(default_factory=dict)  # by target
    failed_epoch: set[int] = field(default_factory=set)
    last_test_window: dict[int, int] = field(default_factory=dict)

    def should_trigger(self, entry: Optional[ReputationEntry], target: int,
                       params: ReputationParams, window: int) -> bool:
        """Gate for starting a test on fresh indirect evidence.

        Only neighbors at or below the untrustworthy threshold are tested,
        never one already condemned by a failed test this epoch, never two
        tests in flight for the same target, and at most one test per
        target per rate-limit period.
        """
        if entry is None or entry.value > params.r_u:
            return False
        if target in self.failed_epoch:
            return False
        if target in self.pending:
            return False
        last = self.last_test_window.get(target)
        if last is not None and window - last < self.rate_limit_windows:
            return False
        return True

    def build_probe(self, target: int, probe_id: int,
                    last_route_via: dict[int, tuple[int, ...]]
                    ) -> Optional[ProbePacket]:
        """Build a probe from the last known route through the target.

        The witness is a node adjacent to the target on that route (other
        than the issuer). Returns None when no usable route remains, in
        which case the test is skipped and the target keeps its band.
        """
        route = last_route_via.get(target)
        if route is None or target not in route:
            return None
        idx = route.index(target)
        witness = None
        for j in (idx + 1, idx - 1):
            if 0 <= j < len(route) and route[j] != self.owner:
                witness = route[j]
                break
        if witness is None:
            return None
        return ProbePacket(probe_id=probe_id, target=target,
                           route=(self.owner, target, witness))

    def register(self, probe: ProbePacket, now: float,
                 deadline: float, window: int) -> PendingTest:
        if probe.target in self.pending:
            raise ValueError(f"test already pending for {probe.target}")
        test = PendingTest(probe_id=probe.probe_id, target=probe.target,
                           issued_at=now, deadline=deadline)
        self.pending[probe.target] = test
        self.last_test_window[probe.target] = window
        return test

    def on_overheard_forward(self, packet_id: int,
                             forwarder: int) -> Optional[TestOutcome]:
        """A PACK for the probe resolves the test as passed."""
        test = self.pending.get(forwarder)
        if test is None or test.probe_id != packet_id:
            return None
        del self.pending[forwarder]
        return TestOutcome.PASSED

    def on_deadline(self, target: int, probe_id: int) -> Optional[TestOutcome]:
        """Deadline with no PACK resolves the test as failed."""
        test = self.pending.get(target)
        if test is None or test.probe_id != probe_id:
            return None
        del self.pending[target]
        self.failed_epoch.add(target)
        return TestOutcome.FAILED

    def clear_condemnation(self, target: int) -> None:
        """Called when the target redeems (fading or a later passed test)."""
        self.failed_epoch.discard(target)
