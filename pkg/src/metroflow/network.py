"""Metro network topology, route enumeration and transfer-time interpolation.

Routes are found by a depth-first search over simple paths. The search keeps
track of the line being ridden so that transfers can be counted, and it is
bounded by a maximum transfer count and a distance bound relative to the best
route found so far. A reverse Dijkstra pass gives an admissible lower bound on
the remaining distance, which keeps the search exact while cutting most of
the exponential blow-up.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .errors import InputError, NoRouteError


@dataclass(frozen=True)
class Station:
    code: str
    name: str
    lines: frozenset[str]

    @property
    def is_transfer(self) -> bool:
        return len(self.lines) >= 2


@dataclass(frozen=True)
class Edge:
    a: str
    b: str
    line: str
    distance: float


class MetroNetwork:
    """Undirected metro graph with per-edge line codes and distances (meters).

    Several lines may share a station pair; each is kept as its own edge.
    The network is treated as immutable once built.
    """

    def __init__(self, stations: Iterable[Station], edges: Iterable[Edge]):
        self.stations: dict[str, Station] = {}
        for s in stations:
            if s.code in self.stations:
                raise InputError(f"duplicate station code {s.code!r}")
            self.stations[s.code] = s
        self.edges: list[Edge] = []
        self._adj: dict[str, list[tuple[str, str, float]]] = {c: [] for c in self.stations}
        for e in edges:
            self._check_edge(e)
            self.edges.append(e)
            self._adj[e.a].append((e.b, e.line, float(e.distance)))
            self._adj[e.b].append((e.a, e.line, float(e.distance)))
        # neighbor order fixes DFS order; results are sorted anyway
        for nbrs in self._adj.values():
            nbrs.sort()
        self.lines = frozenset(line for s in self.stations.values() for line in s.lines)

    def _check_edge(self, e: Edge) -> None:
        for end in (e.a, e.b):
            if end not in self.stations:
                raise InputError(f"edge {e.a}-{e.b} references unknown station {end!r}")
            if e.line not in self.stations[end].lines:
                raise InputError(f"station {end!r} does not list line {e.line!r} of edge {e.a}-{e.b}")
        if e.a == e.b:
            raise InputError(f"self-loop edge at {e.a!r}")
        if not (e.distance > 0 and math.isfinite(e.distance)):
            raise InputError(f"edge {e.a}-{e.b} has non-positive distance {e.distance}")

    def __contains__(self, code: object) -> bool:
        return code in self.stations

    def neighbors(self, code: str) -> list[tuple[str, str, float]]:
        """(neighbor, line, distance) triples for ``code``."""
        return self._adj[code]

    @property
    def transfer_stations(self) -> list[str]:
        return sorted(c for c, s in self.stations.items() if s.is_transfer)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "stations": [
                {"code": s.code, "name": s.name, "lines": sorted(s.lines)}
                for s in self.stations.values()
            ],
            "edges": [
                {"a": e.a, "b": e.b, "line": e.line, "distance_m": e.distance}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MetroNetwork":
        try:
            stations = [
                Station(str(s["code"]), str(s.get("name", s["code"])), frozenset(str(x) for x in s["lines"]))
                for s in data["stations"]
            ]
            edges = [
                Edge(str(e["a"]), str(e["b"]), str(e["line"]), float(e["distance_m"]))
                for e in data["edges"]
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed network document: {exc!r}") from exc
        return cls(stations, edges)

    @classmethod
    def load(cls, path: str | Path) -> "MetroNetwork":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_lines(cls, lines: dict[str, Sequence[str]], distances: dict[tuple[str, str], float] | float = 1000.0,
                   names: dict[str, str] | None = None) -> "MetroNetwork":
        """Build a network from ordered station lists per line.

        ``distances`` is either one spacing for all hops or a mapping keyed by
        station pair (either order).
        """
        memberships: dict[str, set[str]] = {}
        edges = []
        for line, seq in lines.items():
            for code in seq:
                memberships.setdefault(code, set()).add(line)
            for a, b in zip(seq, seq[1:]):
                if isinstance(distances, dict):
                    d = distances.get((a, b), distances.get((b, a)))
                    if d is None:
                        raise InputError(f"no distance given for {a}-{b}")
                else:
                    d = distances
                edges.append(Edge(a, b, line, float(d)))
        names = names or {}
        stations = [Station(c, names.get(c, c), frozenset(ls)) for c, ls in memberships.items()]
        return cls(stations, edges)


@dataclass(frozen=True)
class TransferEvent:
    """A line change at ``station``.

    ``n_before`` counts hops from the origin to the transfer station and
    ``n_after`` hops from there to the destination. ``time`` is filled in
    once swipe times are known.
    """

    station: str
    n_before: int
    n_after: int
    time: Any = None
    card_id: str | None = None


@dataclass(frozen=True)
class Itinerary:
    origin: str
    destination: str
    path: tuple[str, ...]
    legs: tuple[tuple[str, tuple[str, ...]], ...]
    transfers: tuple[TransferEvent, ...]
    total_distance: float

    @property
    def n_transfers(self) -> int:
        return len(self.transfers)

    @property
    def hops(self) -> int:
        return len(self.path) - 1

    def sort_key(self) -> tuple:
        return (_dist_key(self.total_distance), self.n_transfers, self.path)


def _dist_key(d: float) -> float:
    # equal-distance ties must not depend on summation order
    return round(d, 6)


def _build_itinerary(path: list[str], hop_lines: list[str], dist: float) -> Itinerary:
    legs: list[tuple[str, tuple[str, ...]]] = []
    transfers = []
    start = 0
    hops = len(hop_lines)
    for k in range(1, hops + 1):
        if k == hops or hop_lines[k] != hop_lines[k - 1]:
            legs.append((hop_lines[k - 1], tuple(path[start:k + 1])))
            if k < hops:
                transfers.append(TransferEvent(path[k], k, hops - k))
            start = k
    return Itinerary(path[0], path[-1], tuple(path), tuple(legs), tuple(transfers), dist)


def _distance_to(net: MetroNetwork, target: str) -> dict[str, float]:
    dist = {target: 0.0}
    heap = [(0.0, target)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v, _, w in net.neighbors(u):
            nd = d + w
            if nd < dist.get(v, math.inf):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def _check_od(net: MetroNetwork, origin: str, destination: str) -> None:
    for code in (origin, destination):
        if code not in net:
            raise InputError(f"unknown station {code!r}")
    if origin == destination:
        raise InputError("origin and destination must differ")


def enumerate_routes(net: MetroNetwork, origin: str, destination: str,
                     max_transfers: int = 3, distance_slack: float = 0.5) -> list[Itinerary]:
    """All simple routes within ``(1 + distance_slack)`` of the shortest one.

    Only routes with at most ``max_transfers`` line changes are considered.
    When several line assignments exist for the same station path (shared
    track) the one with fewest transfers is kept. The result is sorted by
    distance, then transfer count, then station sequence. An unreachable
    destination gives an empty list.
    """
    _check_od(net, origin, destination)
    if max_transfers < 0 or distance_slack < 0:
        raise InputError("max_transfers and distance_slack must be non-negative")
    remaining = _distance_to(net, destination)
    if origin not in remaining:
        return []

    factor = 1.0 + distance_slack
    best = [math.inf]
    found: dict[tuple[str, ...], tuple[int, tuple[str, ...], float]] = {}
    path = [origin]
    hop_lines: list[str] = []
    on_path = {origin}
    eps = 1e-9

    def bound() -> float:
        return best[0] * factor * (1 + eps)

    def dfs(u: str, dist: float, n_tr: int) -> None:
        if u == destination:
            key = tuple(path)
            prev = found.get(key)
            cand = (n_tr, tuple(hop_lines), dist)
            if prev is None or cand[:2] < prev[:2]:
                found[key] = cand
            if dist < best[0]:
                best[0] = dist
            return
        current = hop_lines[-1] if hop_lines else None
        for v, line, w in net.neighbors(u):
            if v in on_path or v not in remaining:
                continue
            nt = n_tr + (current is not None and line != current)
            if nt > max_transfers:
                continue
            nd = dist + w
            if nd + remaining[v] > bound():
                continue
            path.append(v)
            hop_lines.append(line)
            on_path.add(v)
            dfs(v, nd, nt)
            on_path.discard(v)
            hop_lines.pop()
            path.pop()

    dfs(origin, 0.0, 0)
    if not found:
        return []
    limit = bound()
    routes = [
        _build_itinerary(list(p), list(lines), d)
        for p, (_, lines, d) in found.items()
        if d <= limit
    ]
    routes.sort(key=Itinerary.sort_key)
    return routes


def best_route(net: MetroNetwork, origin: str, destination: str, max_transfers: int = 3) -> Itinerary:
    """Shortest-distance route (ties: fewer transfers, then station sequence)."""
    routes = enumerate_routes(net, origin, destination, max_transfers=max_transfers, distance_slack=0.0)
    if not routes:
        raise NoRouteError(f"no route from {origin!r} to {destination!r}")
    return routes[0]


def transfer_timestamp(n_before: int, n_after: int, t_on, t_off):
    """Interpolate the instant a passenger passes a transfer station.

    The trip time is split in proportion to the hop counts before and after
    the transfer station. Works for datetimes and plain numbers.
    """
    if n_before < 1 or n_after < 1:
        raise InputError(f"hop counts must be >= 1, got {n_before}, {n_after}")
    if not t_off > t_on:
        raise InputError("t_off must be later than t_on")
    return t_on + (t_off - t_on) * (n_before / (n_before + n_after))


@dataclass
class TransferExtraction:
    events: list[TransferEvent] = field(default_factory=list)
    unroutable: list[Any] = field(default_factory=list)


class RouteCache:
    """Memo of best routes per OD pair."""

    def __init__(self, net: MetroNetwork, max_transfers: int = 3):
        self.net = net
        self.max_transfers = max_transfers
        self._memo: dict[tuple[str, str], Itinerary | None] = {}

    def get(self, origin: str, destination: str) -> Itinerary | None:
        key = (origin, destination)
        if key not in self._memo:
            try:
                self._memo[key] = best_route(self.net, origin, destination, self.max_transfers)
            except NoRouteError:
                self._memo[key] = None
        return self._memo[key]


def extract_transfers(records: Iterable, net: MetroNetwork, cache: RouteCache | None = None) -> TransferExtraction:
    """Locate and time-stamp the transfers implied by each trip record.

    For a route of H hops with a transfer after H_k hops, the event time is
    ``t_on + H_k / H * (t_off - t_on)``. Records whose OD pair has no route
    (or whose stations are unknown) land in ``unroutable``.
    """
    cache = cache or RouteCache(net)
    out = TransferExtraction()
    for rec in records:
        if rec.in_station not in net or rec.out_station not in net or rec.in_station == rec.out_station:
            out.unroutable.append(rec)
            continue
        route = cache.get(rec.in_station, rec.out_station)
        if route is None:
            out.unroutable.append(rec)
            continue
        for tr in route.transfers:
            t = transfer_timestamp(tr.n_before, tr.n_after, rec.in_time, rec.out_time)
            out.events.append(replace(tr, time=t, card_id=rec.card_id))
    return out
