"""Emergency path calculation: alternative paths around an adjacent failure,
RF location by classification level, candidate scoring and selection.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Mapping, TextIO

from .spf import PathSeq, _TightDag, constrained_graph, ospf_view, path_cost
from .topology import Topology, undirected

ZPRIME_FACTOR = 1000


class Level(IntEnum):
    """Classification level; lower is better."""

    ECMP = 0
    LFA = 1
    SIG = 2


@dataclass(frozen=True)
class FepCandidate:
    sr: int
    dr: int
    ar: int
    alt_path: PathSeq
    fep: PathSeq
    level: Level
    num_fep: int
    cost_fep: int

    @property
    def rf(self) -> int:
        return self.fep.routers[-1]

    @property
    def nr(self) -> int:
        return self.fep.routers[1]

    @property
    def zprime(self) -> int:
        return ZPRIME_FACTOR * self.cost_fep + self.num_fep

    @property
    def intermediary_routers(self) -> tuple[int, ...]:
        inner = self.fep.routers[1:-1]
        if self.level is Level.SIG:
            inner = inner[1:]
        return inner


@dataclass(frozen=True)
class Rejection:
    """No router on ``alt`` qualified as RF; ``reason`` is the last failed check."""

    sr: int
    dr: int
    ar: int
    alt_path: PathSeq
    reason: str


@dataclass(frozen=True)
class FepVector:
    sr: int
    dr: int
    ar: int
    routers: tuple[int, ...]
    level: Level
    bypasses_router: bool = True

    @property
    def nr(self) -> int:
        return self.routers[1]

    @property
    def rf(self) -> int:
        return self.routers[-1]


@dataclass(frozen=True)
class Unprotected:
    sr: int
    ar: int
    dr: int
    reason: str


class UnprotectedDestination(LookupError):
    def __init__(self, sr: int, dr: int, ar: int, reason: str = "no candidate"):
        self.sr, self.dr, self.ar, self.reason = sr, dr, ar, reason
        super().__init__(f"unprotected destination {dr} from {sr} around {ar}: {reason}")


@dataclass(frozen=True)
class FepConfig:
    bound: int = 32
    # "sr": DistFEP summed from SR to RF; "nr": from NR to RF
    distfep_origin: str = "sr"
    # reject an RF whose OSPF path to DR re-enters the emergency prefix
    loop_filter: bool = True
    # DR unreachable without AR: fall back to the link-only alternative
    link_fallback: bool = True


DEFAULT_CONFIG = FepConfig()


@dataclass
class SourceFeps:
    """Everything computed for one source router."""

    sr: int
    vectors: dict[tuple[int, int], FepVector] = field(default_factory=dict)
    selected: dict[tuple[int, int], FepCandidate] = field(default_factory=dict)
    unprotected: list[Unprotected] = field(default_factory=list)
    candidates: dict[tuple[int, int], list[FepCandidate]] = field(default_factory=dict)

    def vector_for(self, dr: int) -> FepVector | None:
        for (_, d), v in self.vectors.items():
            if d == dr:
                return v
        return None


def affected_destinations(t: Topology, sr: int, ar: int) -> set[int]:
    """Destinations whose primary path from ``sr`` leaves through ``ar``."""
    if not t.has_link(sr, ar):
        raise ValueError(f"router {ar} is not adjacent to {sr}")
    view = ospf_view(t)
    return {
        dr for dr in t.routers
        if dr != sr and view.reachable(sr, dr) and view.next_hop(sr, dr) == ar
    }


def _srlg_set(t: Topology, sr: int, ar: int, bypass_router: bool) -> frozenset:
    """SRLG(SR,AR) or SRLG(AR,?): members of the groups touching those links."""
    if bypass_router:
        seeds = [undirected(ar, n) for n in t.neighbors(ar)]
    else:
        seeds = [undirected(sr, ar)]
    out = set()
    for uid in seeds:
        for g in t.srlg_groups_of(uid):
            out.update(g.members)
    return frozenset(out)


def locate_rf(
    t: Topology,
    sr: int,
    dr: int,
    ar: int,
    alt: PathSeq,
    bypass_router: bool | None = None,
    cfg: FepConfig = DEFAULT_CONFIG,
) -> FepCandidate | Rejection:
    """Walk ``alt`` from NR and return the first router that qualifies as RF.

    Distances are OSPF distances on the unconstrained topology ``t``.  NR is
    tested for ECMP then LFA; routers after NR for SIG.  A qualifying router
    must also pass the AR filter, the SRLG filter and (optionally) the
    re-entry filter, otherwise it joins the emergency prefix and the walk
    continues.
    """
    if bypass_router is None:
        bypass_router = dr != ar
    view = ospf_view(t)
    D = view.dist
    srlg = _srlg_set(t, sr, ar, bypass_router)
    seq = alt.routers
    if len(seq) < 2 or seq[0] != sr or seq[-1] != dr:
        raise ValueError(f"{seq} is not a path {sr} -> {dr}")
    d_sr_dr = D(sr, dr)
    d_orig = D(sr, ar) + D(ar, dr)
    reason = "path exhausted"
    for pos in range(1, len(seq)):
        k = seq[pos]
        d_k_dr = D(k, dr)
        loop_free = d_k_dr < D(k, sr) + d_sr_dr
        level = None
        if pos == 1:
            if D(sr, k) + d_k_dr == d_orig:
                level = Level.ECMP
            elif loop_free:
                level = Level.LFA
        elif loop_free:
            level = Level.SIG
        if level is None:
            continue
        on_path = view.routers_on(k, dr)
        if bypass_router and ar != dr and ar in on_path:
            reason = "filter-12"
            continue
        if srlg and any(undirected(a, b) in srlg for a, b in zip(on_path, on_path[1:])):
            reason = "filter-13"
            continue
        if cfg.loop_filter and set(on_path[1:]) & set(seq[:pos]):
            reason = "loop"
            continue
        fep_routers = seq[: pos + 1]
        fep = PathSeq(fep_routers, path_cost(t, fep_routers))
        if level is Level.ECMP:
            num, cost = 1, d_k_dr
        elif level is Level.LFA:
            num, cost = len(on_path), d_k_dr
        else:
            num = len(fep_routers)
            cost = fep.cost if cfg.distfep_origin == "sr" else path_cost(t, fep_routers[1:])
        return FepCandidate(sr, dr, ar, alt, fep, level, num, cost)
    return Rejection(sr, dr, ar, alt, reason)


def selection_key(c: FepCandidate):
    return (c.level, c.zprime, c.fep.routers)


def select_s_fep(candidates: Iterable[FepCandidate], sr=None, dr=None, ar=None) -> FepCandidate:
    """Best level first, then smallest 1000*cost + num, then smallest sequence."""
    cands = list(candidates)
    if not cands:
        raise UnprotectedDestination(sr, dr, ar)
    return min(cands, key=selection_key)


def compute_all_feps(t: Topology, sr: int, cfg: FepConfig = DEFAULT_CONFIG) -> SourceFeps:
    """Emergency vectors of ``sr`` for every neighbour and every affected destination."""
    out = SourceFeps(sr)
    view = ospf_view(t)
    by_ar: dict[int, list[int]] = {}
    for dr in t.routers:
        if dr != sr and view.reachable(sr, dr):
            by_ar.setdefault(view.next_hop(sr, dr), []).append(dr)

    for ar in t.neighbors(sr):
        affected = sorted(by_ar.get(ar, ()))
        if not affected:
            continue
        dags: dict[bool, _TightDag] = {}

        def dag(bypass: bool) -> _TightDag:
            if bypass not in dags:
                mode = "avoid_router" if bypass else "avoid_link"
                dags[bypass] = _TightDag(constrained_graph(t, sr, ar, mode), sr)
            return dags[bypass]

        for dr in affected:
            bypass = dr != ar
            if bypass and not dag(True).reachable(dr):
                if not cfg.link_fallback:
                    out.unprotected.append(Unprotected(sr, ar, dr, "unreachable"))
                    continue
                bypass = False
            g = dag(bypass)
            if not g.reachable(dr):
                out.unprotected.append(Unprotected(sr, ar, dr, "unreachable"))
                continue
            cands = []
            reasons = []
            for alt in g.paths(dr, cfg.bound):
                res = locate_rf(t, sr, dr, ar, alt, bypass, cfg)
                if isinstance(res, Rejection):
                    reasons.append(res.reason)
                else:
                    cands.append(res)
            out.candidates[(ar, dr)] = cands
            if not cands:
                out.unprotected.append(Unprotected(sr, ar, dr, reasons[-1] if reasons else "no candidate"))
                continue
            best = select_s_fep(cands, sr, dr, ar)
            out.selected[(ar, dr)] = best
            out.vectors[(ar, dr)] = FepVector(sr, dr, ar, best.fep.routers, best.level, bypass)
    return out


def compute_network_feps(
    t: Topology, routers: Iterable[int] | None = None, cfg: FepConfig = DEFAULT_CONFIG
) -> dict[int, SourceFeps]:
    return {sr: compute_all_feps(t, sr, cfg) for sr in (routers if routers is not None else t.routers)}


FEP_REPORT_HEADER = ("sr", "ar", "dr", "level", "fep", "cost_fep", "num_fep", "zprime")


def fep_report_rows(results: Mapping[int, SourceFeps] | Iterable[SourceFeps]):
    items = results.values() if isinstance(results, Mapping) else results
    for res in sorted(items, key=lambda r: r.sr):
        for (ar, dr), c in sorted(res.selected.items()):
            yield (res.sr, ar, dr, c.level.name, " ".join(map(str, c.fep.routers)),
                   c.cost_fep, c.num_fep, c.zprime)
        for u in sorted(res.unprotected, key=lambda u: (u.ar, u.dr)):
            yield (u.sr, u.ar, u.dr, "UNPROTECTED", "", "", "", "")


def write_fep_report(results, fh: TextIO | None = None) -> str:
    """CSV report: sr, ar, dr, level, fep (space separated), cost_fep, num_fep, zprime."""
    buf = fh or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FEP_REPORT_HEADER)
    w.writerows(fep_report_rows(results))
    return buf.getvalue() if fh is None else ""


def full_recovery_path(t: Topology, v: FepVector) -> tuple[int, ...]:
    """Emergency prefix followed by the OSPF path from RF to DR."""
    tail = ospf_view(t).routers_on(v.rf, v.dr)
    return v.routers + tail[1:]
