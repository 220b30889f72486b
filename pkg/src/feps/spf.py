"""OSPF shortest paths: plain SPF, failure-constrained SPF, equal-cost path
enumeration and the all-pairs distance / path queries used by RF location.

Ties between equal-cost paths always resolve to the lexicographically smallest
router sequence.  That rule is consistent with hop-by-hop forwarding: the
smallest path from x starts with the smallest tight neighbour y and continues
with the smallest path from y.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import _spfcore
from ._spfcore import INF
from .topology import FailureSpec, Topology, remove_component


class Unreachable(LookupError):
    """Destination not reachable from the source in the working graph."""


@dataclass(frozen=True)
class PathSeq:
    routers: tuple[int, ...]
    cost: int

    @property
    def hops(self) -> int:
        return len(self.routers)

    @property
    def src(self) -> int:
        return self.routers[0]

    @property
    def dst(self) -> int:
        return self.routers[-1]

    def links(self) -> Iterator[tuple[int, int]]:
        return zip(self.routers, self.routers[1:])

    def __len__(self) -> int:
        return len(self.routers)


@dataclass(frozen=True)
class SpfResult:
    source: int
    dist: dict[int, int]
    primary_path: dict[int, PathSeq]

    @property
    def reachable(self) -> frozenset[int]:
        return frozenset(self.dist)

    def next_hop(self, dst: int) -> int | None:
        p = self.primary_path[dst].routers
        return p[1] if len(p) > 1 else None


def path_cost(t: Topology, routers) -> int:
    return sum(t.cost(a, b) for a, b in zip(routers, routers[1:]))


def spf(t: Topology, src: int) -> SpfResult:
    """Single-source shortest paths with lexicographic tie-breaking."""
    if src not in t:
        raise KeyError(f"router {src} not in topology")
    cost = t.cost_matrix
    s = t.index[src]
    dist = _spfcore.dijkstra(cost, s)
    pred = _spfcore.lex_tree(cost, dist, s)
    ids = t.routers
    out_dist: dict[int, int] = {}
    out_path: dict[int, PathSeq] = {}
    for v in np.argsort(dist, kind="stable"):
        v = int(v)
        if dist[v] >= INF:
            break
        if v == s:
            routers: tuple[int, ...] = (src,)
        else:
            routers = out_path[ids[int(pred[v])]].routers + (ids[v],)
        out_dist[ids[v]] = int(dist[v])
        out_path[ids[v]] = PathSeq(routers, int(dist[v]))
    return SpfResult(src, out_dist, out_path)


def constraint_failure(sr: int, ar: int, mode: str) -> FailureSpec:
    if mode == "avoid_link":
        return FailureSpec.link(sr, ar)
    if mode == "avoid_router":
        return FailureSpec.router(ar)
    raise ValueError(f"unknown mode {mode!r}")


def constrained_graph(t: Topology, sr: int, ar: int, mode: str) -> Topology:
    if not t.has_link(sr, ar):
        raise ValueError(f"router {ar} is not adjacent to {sr}")
    return remove_component(t, constraint_failure(sr, ar, mode))


def constrained_spf(t: Topology, sr: int, ar: int, mode: str) -> SpfResult:
    """SPF from ``sr`` with link (sr, ar) or router ar removed, SRLG-expanded.

    ``avoid_link`` is the branch taken for the destination ar itself;
    ``avoid_router`` the branch for every other destination.
    """
    return spf(constrained_graph(t, sr, ar, mode), sr)


@dataclass(frozen=True)
class EqualCostPaths:
    paths: tuple[PathSeq, ...]
    exceeded: bool

    def __iter__(self):
        return iter(self.paths)

    def __len__(self):
        return len(self.paths)


class _TightDag:
    """Shortest-path DAG from one source, reused across destinations."""

    def __init__(self, t: Topology, src: int):
        self.t = t
        self.src = src
        self.cost = t.cost_matrix
        self.s = t.index[src]
        self.dist = _spfcore.dijkstra(self.cost, self.s)
        c = self.cost
        d = self.dist
        with np.errstate(over="ignore"):
            tight = (c > 0) & (d[:, None] < INF) & (d[:, None] + c == d[None, :])
        self.succ = [np.nonzero(row)[0] for row in tight]
        self.pred = [np.nonzero(col)[0] for col in tight.T]

    def reachable(self, dst: int) -> bool:
        return dst in self.t and self.dist[self.t.index[dst]] < INF

    def paths(self, dst: int, bound: int) -> EqualCostPaths:
        t = self.t
        if not self.reachable(dst):
            raise Unreachable(f"{dst} unreachable from {self.src}")
        d = t.index[dst]
        useful = np.zeros(len(t.routers), dtype=bool)
        useful[d] = True
        queue = deque([d])
        while queue:
            v = queue.popleft()
            for u in self.pred[v]:
                if not useful[u]:
                    useful[u] = True
                    queue.append(u)
        ids = t.routers
        total = int(self.dist[d])
        found: list[PathSeq] = []
        # iterative DFS in ascending successor order yields lexicographic order
        stack = [(self.s, 0)]
        trail = [self.s]
        while stack:
            v, i = stack[-1]
            if v == d:
                found.append(PathSeq(tuple(ids[x] for x in trail), total))
                if len(found) > bound:
                    break
                stack.pop()
                trail.pop()
                continue
            succ = self.succ[v]
            while i < len(succ) and not useful[succ[i]]:
                i += 1
            if i >= len(succ):
                stack.pop()
                trail.pop()
                continue
            stack[-1] = (v, i + 1)
            w = int(succ[i])
            stack.append((w, 0))
            trail.append(w)
        exceeded = len(found) > bound
        return EqualCostPaths(tuple(found[:bound]), exceeded)


def equal_cost_paths(t: Topology, src: int, dst: int, bound: int = 32) -> EqualCostPaths:
    """All minimal-cost simple paths src -> dst, up to ``bound``, lexicographic order."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    return _TightDag(t, src).paths(dst, bound)


class OspfView:
    """All-pairs OSPF distances and deterministic primary paths of a topology."""

    def __init__(self, t: Topology):
        self.t = t
        self.idx = t.index
        self.ids = t.routers
        self.D, self.NH = _spfcore.all_pairs(t.cost_matrix)
        self._paths: dict[tuple[int, int], tuple[int, ...]] = {}

    def _i(self, r: int) -> int:
        try:
            return self.idx[r]
        except KeyError:
            raise Unreachable(f"router {r} not in topology") from None

    def reachable(self, x: int, y: int) -> bool:
        return x in self.idx and y in self.idx and self.D[self.idx[x], self.idx[y]] < INF

    def dist(self, x: int, y: int) -> int:
        d = self.D[self._i(x), self._i(y)]
        if d >= INF:
            raise Unreachable(f"{y} unreachable from {x}")
        return int(d)

    def next_hop(self, x: int, y: int) -> int | None:
        """First router after x toward y; None when x == y."""
        if x == y:
            return None
        h = self.NH[self._i(x), self._i(y)]
        if h < 0:
            raise Unreachable(f"{y} unreachable from {x}")
        return self.ids[h]

    def routers_on(self, x: int, y: int) -> tuple[int, ...]:
        key = (x, y)
        p = self._paths.get(key)
        if p is None:
            i, j = self._i(x), self._i(y)
            if self.D[i, j] >= INF:
                raise Unreachable(f"{y} unreachable from {x}")
            seq = [i]
            while seq[-1] != j:
                seq.append(int(self.NH[seq[-1], j]))
            p = tuple(self.ids[k] for k in seq)
            self._paths[key] = p
        return p

    def path(self, x: int, y: int) -> PathSeq:
        return PathSeq(self.routers_on(x, y), self.dist(x, y))

    def num_routers(self, x: int, y: int) -> int:
        return len(self.routers_on(x, y))

    def router_set(self, x: int, y: int) -> frozenset[int]:
        return frozenset(self.routers_on(x, y))

    def link_set(self, x: int, y: int) -> frozenset[tuple[int, int]]:
        p = self.routers_on(x, y)
        return frozenset(zip(p, p[1:]))


def ospf_view(t: Topology) -> OspfView:
    """Cached :class:`OspfView` for ``t`` (topologies are immutable)."""
    view = t.__dict__.get("_ospf_view")
    if view is None:
        view = OspfView(t)
        t.__dict__["_ospf_view"] = view
    return view


def dist_ospf(t: Topology, x: int, y: int) -> int:
    return ospf_view(t).dist(x, y)


def num_routers_ospf(t: Topology, x: int, y: int) -> int:
    return ospf_view(t).num_routers(x, y)


def ospf_routers(t: Topology, x: int, y: int) -> frozenset[int]:
    return ospf_view(t).router_set(x, y)


def ospf_links(t: Topology, x: int, y: int) -> frozenset[tuple[int, int]]:
    return ospf_view(t).link_set(x, y)
