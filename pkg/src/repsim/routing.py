"""DSR-lite source routing with avoid lists and reputation-aware ranking.

Routes are full hop sequences carried in packet headers. Route requests
flood with an avoid list (the originator's malicious list, unioned with
each forwarder's); nodes that find themselves on the list drop the
request. Replies and data from untrustworthy previous hops are refused.
When a node declares a neighbor malicious every cached path through it is
purged and route errors go back to the affected flow sources.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .reputation import TrustLevel

AVOID_LIST_CAP = 32

# Reason codes attached to every drop/refuse decision in the event trace.
OWN_ID_IN_AVOID = "OWN_ID_IN_AVOID"
DUP_RREQ = "DUP_RREQ"
MALICIOUS_PREV_HOP = "MALICIOUS_PREV_HOP"
LOOP = "LOOP"
NEXT_HOP_MALICIOUS = "NEXT_HOP_MALICIOUS"
MISROUTE = "MISROUTE"
NO_ROUTE = "NO_ROUTE"
BUFFER_OVERFLOW = "BUFFER_OVERFLOW"
CHANNEL_LOSS = "CHANNEL_LOSS"


def validate_route(hops: Sequence[int]) -> tuple[int, ...]:
    """Check source-route invariants: length >= 2, no repeated hop."""
    route = tuple(hops)
    if len(route) < 2:
        raise ValueError("a source route needs at least two hops")
    if len(set(route)) != len(route):
        raise ValueError(f"source route repeats a node: {route}")
    return route


@dataclass(frozen=True)
class RouteRequest:
    request_id: int
    origin: int
    destination: int
    avoid_list: tuple[int, ...]
    accumulated_route: tuple[int, ...]


@dataclass(frozen=True)
class RouteReply:
    request_id: int
    route: tuple[int, ...]
    replier: int


@dataclass(frozen=True)
class RouteError:
    broken_link: tuple[int, int]
    destinations: tuple[int, ...]


# Decisions returned by the handlers.

@dataclass(frozen=True)
class Drop:
    reason: str


@dataclass(frozen=True)
class Reply:
    reply: RouteReply


@dataclass(frozen=True)
class Forward:
    request: RouteRequest


@dataclass(frozen=True)
class Relay:
    next_hop: int


@dataclass(frozen=True)
class Refuse:
    reason: str


def merge_avoid(avoid: Sequence[int], additions: Sequence[int],
                exclude: Sequence[int] = ()) -> tuple[int, ...]:
    """Union two avoid lists without duplicates, capped at the newest
    AVOID_LIST_CAP entries. Ids in `exclude` never appear."""
    banned = set(exclude)
    merged: list[int] = []
    for nid in list(avoid) + list(additions):
        if nid not in banned and nid not in merged:
            merged.append(nid)
    if len(merged) > AVOID_LIST_CAP:
        merged = merged[len(merged) - AVOID_LIST_CAP:]
    return tuple(merged)


def originate_rreq(owner: int, destination: int,
                   malicious_list: Sequence[int],
                   request_id: int) -> RouteRequest:
    """Build a fresh route request carrying the owner's malicious list."""
    if destination == owner:
        raise ValueError("cannot discover a route to oneself")
    return RouteRequest(
        request_id=request_id,
        origin=owner,
        destination=destination,
        avoid_list=merge_avoid((), malicious_list, exclude=(owner, destination)),
        accumulated_route=(owner,),
    )


def handle_rreq(node: int, rreq: RouteRequest,
                own_malicious: Sequence[int]):
    """Process a received route request.

    Returns Drop, Reply or Forward. Duplicate suppression and the
    malicious-previous-hop refusal happen in the caller, which sees the
    transmission context. Avoid-list reputation sightings are also the
    caller's job since they need the neighbor set.
    """
    if node in rreq.avoid_list:
        return Drop(OWN_ID_IN_AVOID)
    if node in rreq.accumulated_route:
        return Drop(LOOP)
    if node == rreq.destination:
        return Reply(RouteReply(
            request_id=rreq.request_id,
            route=rreq.accumulated_route + (node,),
            replier=node,
        ))
    return Forward(RouteRequest(
        request_id=rreq.request_id,
        origin=rreq.origin,
        destination=rreq.destination,
        avoid_list=merge_avoid(
            rreq.avoid_list, own_malicious,
            exclude=rreq.accumulated_route + (rreq.origin, node)),
        accumulated_route=rreq.accumulated_route + (node,),
    ))


def rank_paths(candidates: Sequence[tuple[int, ...]],
               classify_hop: Callable[[int], TrustLevel]) -> tuple[int, ...]:
    """Pick the best route.

    Lexicographic order: fewest malicious-classified relays, then fewest
    suspicious relays, then fewest hops, then smallest hop sequence. This
    realizes the stated preference for clean paths over short ones.
    """
    if not candidates:
        raise ValueError("rank_paths needs at least one candidate")
    return min(candidates, key=lambda route: path_rank_key(route, classify_hop))


def path_rank_key(route: Sequence[int],
                  classify_hop: Callable[[int], TrustLevel]):
    relays = route[1:-1]
    levels = [classify_hop(h) for h in relays]
    return (
        sum(1 for lv in levels if lv is TrustLevel.UNTRUSTWORTHY),
        sum(1 for lv in levels if lv is TrustLevel.UNDECIDED),
        len(route),
        tuple(route),
    )


def forward_decision(node: int, route: Sequence[int], prev_hop: int,
                     prev_level: TrustLevel,
                     declared_malicious: Sequence[int]):
    """Decide what a relay does with a data packet.

    Refuses traffic from an untrustworthy previous hop, drops misrouted
    packets, and blocks forwarding toward a next hop the relay itself has
    declared malicious. Otherwise relays to the successor hop.
    """
    if prev_level is TrustLevel.UNTRUSTWORTHY:
        return Refuse(MALICIOUS_PREV_HOP)
    if node not in route:
        return Refuse(MISROUTE)
    idx = route.index(node)
    if idx == len(route) - 1:
        raise ValueError("forward_decision called at the destination")
    nxt = route[idx + 1]
    if nxt in declared_malicious:
        return Refuse(NEXT_HOP_MALICIOUS)
    return Relay(nxt)


@dataclass
class RouteCache:
    """Per-destination cached source routes.

    The cache never holds a route through a node its owner has declared
    malicious; that is enforced on insert and again on declaration.
    """

    owner: int
    routes: dict[int, list[tuple[int, ...]]] = field(default_factory=dict)

    def insert(self, route: Sequence[int],
               declared_malicious: Sequence[int]) -> bool:
        r = validate_route(route)
        if r[0] != self.owner:
            raise ValueError("cached routes must start at the owner")
        if any(h in declared_malicious for h in r[1:]):
            return False
        dest = r[-1]
        bucket = self.routes.setdefault(dest, [])
        if r not in bucket:
            bucket.append(r)
        return True

    def candidates(self, dest: int) -> list[tuple[int, ...]]:
        return list(self.routes.get(dest, ()))

    def best(self, dest: int,
             classify_hop: Callable[[int], TrustLevel]) -> Optional[tuple[int, ...]]:
        cands = self.routes.get(dest)
        if not cands:
            return None
        return rank_paths(cands, classify_hop)

    def purge_node(self, node: int) -> list[tuple[int, ...]]:
        """Remove every route containing the node; returns what was cut."""
        removed = []
        for dest, bucket in list(self.routes.items()):
            keep = []
            for r in bucket:
                if node in r:
                    removed.append(r)
                else:
                    keep.append(r)
            if keep:
                self.routes[dest] = keep
            else:
                self.routes.pop(dest)
        return removed

    def purge_link(self, u: int, v: int) -> list[tuple[int, ...]]:
        """Remove routes using link u->v (or v->u; links are symmetric)."""
        removed = []
        for dest, bucket in list(self.routes.items()):
            keep = []
            for r in bucket:
                if _has_link(r, u, v):
                    removed.append(r)
                else:
                    keep.append(r)
            if keep:
                self.routes[dest] = keep
            else:
                self.routes.pop(dest)
        return removed


def _has_link(route: tuple[int, ...], u: int, v: int) -> bool:
    for a, b in zip(route, route[1:]):
        if (a, b) == (u, v) or (a, b) == (v, u):
            return True
    return False


def purge_on_malicious(cache: RouteCache, node: int,
                       active_routes: Sequence[tuple[int, ...]] = ()
                       ) -> list[RouteError]:
    """Purge a freshly declared node and build route errors.

    One error per distinct broken first link among the active routes the
    owner has been carrying traffic on.
    """
    cache.purge_node(node)
    errors: dict[tuple[int, int], set[int]] = {}
    for route in active_routes:
        if node not in route:
            continue
        idx = route.index(node)
        if idx == 0:
            continue
        link = (route[idx - 1], node)
        errors.setdefault(link, set()).add(route[-1])
    return [RouteError(broken_link=link, destinations=tuple(sorted(dests)))
            for link, dests in sorted(errors.items())]
