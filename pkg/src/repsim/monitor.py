"""Per-node watchdog over passive acknowledgements.

A node registers every data packet it hands to a next hop, listens in
promiscuous mode for that neighbor retransmitting it (the PACK), and at
each timing-window close tallies forwarded vs. missing per neighbor. The
tallies feed the reputation core.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .reputation import WindowReport


def window_of(now: float, window_len: float, grace_fraction: float = 0.0) -> int:
    """Window index for an event at `now`.

    Events landing in the trailing `grace_fraction` of a window are deferred
    to the next window's ledger so in-flight forwards are not punished.
    """
    k = int(now // window_len)
    if grace_fraction > 0.0 and (now / window_len) - k >= 1.0 - grace_fraction:
        k += 1
    return k


@dataclass
class RegisteredPacket:
    packet_id: int
    next_hop: int
    registered_at: float
    window: int


@dataclass
class PacketBuffer:
    """Registered-packet queue plus per-(neighbor, window) match counters."""

    owner: int
    window_len: float = 1.0
    grace_fraction: float = 0.1
    pending: dict[int, RegisteredPacket] = field(default_factory=dict)
    matched: dict[tuple[int, int], int] = field(default_factory=dict)
    last_closed: int = -1

    def register_sent(self, packet_id: int, next_hop: int, now: float) -> None:
        """Register a transmitted packet awaiting its PACK.

        Re-registering the same packet id (a retransmission) is a no-op so
        the packet is counted once.
        """
        if packet_id in self.pending:
            return
        w = window_of(now, self.window_len, self.grace_fraction)
        self.pending[packet_id] = RegisteredPacket(packet_id, next_hop, now, w)

    def on_overheard(self, packet_id: int, forwarder: int) -> bool:
        """Match an overheard forward against the pending queue.

        Counts only if the packet is pending and the transmitter is the hop
        it was registered against. Returns True on a match.
        """
        reg = self.pending.get(packet_id)
        if reg is None or reg.next_hop != forwarder:
            return False
        del self.pending[packet_id]
        key = (reg.next_hop, reg.window)
        self.matched[key] = self.matched.get(key, 0) + 1
        return True

    def close_window(self, window: int) -> list[WindowReport]:
        """Close a window: everything still pending in it counts missing.

        Returns one report per neighbor with at least one registration,
        sorted by neighbor id. Closing a window twice is a caller bug.
        """
        if window <= self.last_closed:
            raise ValueError(f"window {window} already closed")
        self.last_closed = window
        missing: dict[int, int] = {}
        stale = [pid for pid, reg in self.pending.items() if reg.window == window]
        for pid in stale:
            reg = self.pending.pop(pid)
            missing[reg.next_hop] = missing.get(reg.next_hop, 0) + 1
        forwarded: dict[int, int] = {}
        for (nb, w), count in list(self.matched.items()):
            if w == window:
                forwarded[nb] = count
                del self.matched[(nb, w)]
        reports = []
        for nb in sorted(set(forwarded) | set(missing)):
            reports.append(WindowReport(
                neighbor=nb,
                window=window,
                forwarded=forwarded.get(nb, 0),
                missing=missing.get(nb, 0),
            ))
        return reports
