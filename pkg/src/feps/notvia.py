"""NotVia baseline: next-next-hop targets, recovery paths that tunnel to the
next-next-hop around the failed component, and not-via FIB sizes."""

from __future__ import annotations

from dataclasses import dataclass

from .spf import PathSeq, Unreachable, ospf_view, path_cost, spf
from .topology import FailureSpec, Topology, failed_elements, remove_component, undirected


@dataclass(frozen=True, order=True)
class NotViaAddress:
    owner: int
    # ("link", (a, b)) or ("srlg", gid)
    protected: tuple


class UnprotectedFailure(LookupError):
    pass


def next_next_hop(t: Topology, sr: int, dr: int) -> int:
    """Second router after ``sr`` on the primary path, or ``dr`` when adjacent."""
    if sr == dr:
        raise ValueError("source and destination coincide")
    p = ospf_view(t).routers_on(sr, dr)
    return p[2] if len(p) > 2 else p[-1]


def notvia_recovery_path(
    t: Topology, sr: int, dr: int, failed: FailureSpec, count_distinct: bool = False
) -> PathSeq:
    """Path sr -> nnh around ``failed`` followed by the primary path nnh -> dr.

    Routers visited twice are listed twice; ``count_distinct`` collapses
    revisits into a simple walk by keeping only the first visit of each router
    (the cost stays that of the full walk).
    """
    view = ospf_view(t)
    nnh = next_next_hop(t, sr, dr)
    g = remove_component(t, failed)
    if sr not in g or nnh not in g:
        raise UnprotectedFailure(f"{failed} removes router {sr if sr not in g else nnh}")
    detour = spf(g, sr)
    if nnh not in detour.dist:
        raise UnprotectedFailure(f"next-next-hop {nnh} unreachable from {sr} without {failed}")
    head = detour.primary_path[nnh].routers
    tail = view.routers_on(nnh, dr)
    walk = head + tail[1:]
    cost = path_cost(t, walk)
    if count_distinct:
        seen: list[int] = []
        for r in walk:
            if r not in seen:
                seen.append(r)
        walk = tuple(seen)
    return PathSeq(walk, cost)


def notvia_addresses(t: Topology, owner: int) -> list[NotViaAddress]:
    """Addresses ``owner`` publishes: one per adjacent link and per SRLG touching it."""
    out = [NotViaAddress(owner, ("link", undirected(owner, n))) for n in t.neighbors(owner)]
    groups = {g.group_id for n in t.neighbors(owner) for g in t.srlg_groups_of(undirected(owner, n))}
    out += [NotViaAddress(owner, ("srlg", gid)) for gid in sorted(groups)]
    return out


def notvia_fib_counts(t: Topology, owner: int) -> tuple[int, int]:
    """(nFIB, OFE): not-via addresses of all other routers, and OSPF entries
    that each gain a next-next-hop field."""
    if owner not in t:
        raise KeyError(f"router {owner} not in topology")
    nfib = sum(len(notvia_addresses(t, r)) for r in t.routers if r != owner)
    ofe = sum(1 for _, r in t.announced_prefixes() if r != owner)
    return nfib, ofe


def path_avoids(t: Topology, walk, failed: FailureSpec) -> bool:
    """True when ``walk`` touches no router or link taken down by ``failed``."""
    routers, links = failed_elements(t, failed)
    return not any(r in routers for r in walk) and not any(
        undirected(a, b) in links for a, b in zip(walk, walk[1:])
    )


def recovery_failures(t: Topology, sr: int, dr: int) -> list[FailureSpec]:
    """Single failures adjacent to ``sr`` on its primary path to ``dr``."""
    nh = ospf_view(t).next_hop(sr, dr)
    if nh is None:
        return []
    out = [FailureSpec.link(sr, nh)]
    if nh != dr:
        out.append(FailureSpec.router(nh))
    return out


__all__ = [
    "NotViaAddress",
    "UnprotectedFailure",
    "Unreachable",
    "next_next_hop",
    "notvia_recovery_path",
    "notvia_addresses",
    "notvia_fib_counts",
    "path_avoids",
    "recovery_failures",
]
