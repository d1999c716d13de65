"""Wire messages exchanged over the simulated medium.

The packet space is a tagged union: DATA, TRACE, RREQ, RREP, RERR and
WARNING. Trace-test probes ride the DATA format on purpose (an adaptive
dropper must not be able to tell them apart); the issuer keeps the probe
identity in its own books.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

DATA = "data"
TRACE = "trace"
RREQ = "rreq"
RREP = "rrep"
RERR = "rerr"
WARNING = "warning"


@dataclass(frozen=True)
class DataPacket:
    pid: int
    origin: int
    dest: int
    route: tuple[int, ...]
    flow: Optional[int] = None  # None for probes and other non-flow data
    size: int = 512
    kind: str = DATA


@dataclass(frozen=True)
class TracePacket:
    """One-hop audit broadcast accompanying each honest DATA forward.

    Carries the id of the data packet it vouches for and the chain of
    relays that have forwarded it so far (ending with the emitter). It is
    terminal: receivers never rebroadcast it as-is.
    """
    pid: int
    data_pid: int
    chain: tuple[int, ...]
    kind: str = TRACE


@dataclass(frozen=True)
class RouteRequestPacket:
    pid: int
    request_id: int
    origin: int
    dest: int
    avoid: tuple[int, ...]
    route: tuple[int, ...]  # accumulated route, starts with origin
    kind: str = RREQ


@dataclass(frozen=True)
class RouteReplyPacket:
    pid: int
    request_id: int
    origin: int  # requester the reply travels back to
    route: tuple[int, ...]  # full source route origin..dest
    replier: int
    avoid: tuple[int, ...] = ()
    kind: str = RREP


@dataclass(frozen=True)
class RouteErrorPacket:
    pid: int
    origin: int  # node reporting the break
    target: int  # flow source the error travels back to
    broken: tuple[int, int]
    dests: tuple[int, ...]
    back_route: tuple[int, ...]  # hop sequence from origin back to target
    kind: str = RERR


@dataclass(frozen=True)
class WarningPacket:
    pid: int
    accuser: int
    accused: int
    window: int
    kind: str = WARNING


Packet = Union[DataPacket, TracePacket, RouteRequestPacket,
               RouteReplyPacket, RouteErrorPacket, WarningPacket]
