"""Router/link/SRLG topologies, the line-oriented topology file format,
failure application and the single-failure protectability check."""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAX_ROUTER_ID = 511
DEFAULT_CAPACITY = 10_000_000_000

UndirectedLink = tuple[int, int]


class TopologyError(ValueError):
    """Malformed topology document or violated topology invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def undirected(a: int, b: int) -> UndirectedLink:
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True, order=True)
class Link:
    src: int
    dst: int
    cost: int
    capacity: int = DEFAULT_CAPACITY

    @property
    def uid(self) -> UndirectedLink:
        return undirected(self.src, self.dst)


@dataclass(frozen=True, order=True)
class SrlgGroup:
    group_id: int
    members: frozenset[UndirectedLink]

    def __iter__(self) -> Iterator[UndirectedLink]:
        return iter(sorted(self.members))


@dataclass(frozen=True)
class FailureSpec:
    """A single failure: ``link`` (undirected pair), ``router`` or ``srlg`` group."""

    kind: str
    target: int | UndirectedLink

    def __post_init__(self):
        if self.kind not in ("link", "router", "srlg"):
            raise ValueError(f"unknown failure kind {self.kind!r}")
        if self.kind == "link":
            a, b = self.target  # type: ignore[misc]
            object.__setattr__(self, "target", undirected(int(a), int(b)))

    @classmethod
    def link(cls, a: int, b: int) -> "FailureSpec":
        return cls("link", (a, b))

    @classmethod
    def router(cls, r: int) -> "FailureSpec":
        return cls("router", int(r))

    @classmethod
    def srlg(cls, gid: int) -> "FailureSpec":
        return cls("srlg", int(gid))

    @classmethod
    def parse(cls, text: str) -> "FailureSpec":
        """Parse ``link 1-2``, ``router 3`` or ``srlg 7``."""
        parts = text.split()
        if len(parts) != 2:
            raise ValueError(f"malformed failure {text!r}")
        kind, arg = parts
        try:
            if kind == "link":
                a, b = arg.split("-")
                return cls.link(int(a), int(b))
            if kind in ("router", "srlg"):
                return cls(kind, int(arg))
        except ValueError as exc:
            raise ValueError(f"malformed failure {text!r}") from exc
        raise ValueError(f"malformed failure {text!r}")

    def __str__(self) -> str:
        if self.kind == "link":
            a, b = self.target  # type: ignore[misc]
            return f"link {a}-{b}"
        return f"{self.kind} {self.target}"


@dataclass(frozen=True)
class Topology:
    """Immutable network: routers, directed links and SRLG groups.

    Every physical link appears as two directed :class:`Link` records so that
    asymmetric costs are possible.  ``removed`` records the failures already
    applied by :func:`remove_component`.
    """

    routers: tuple[int, ...]
    links: tuple[Link, ...]
    srlgs: tuple[SrlgGroup, ...] = ()
    loopbacks: tuple[tuple[int, int], ...] = ()
    prefixes: tuple[tuple[str, int], ...] = ()
    removed: frozenset[str] = field(default=frozenset())

    def __post_init__(self):
        object.__setattr__(self, "routers", tuple(sorted(set(self.routers))))
        object.__setattr__(self, "links", tuple(sorted(self.links)))
        object.__setattr__(self, "srlgs", tuple(sorted(self.srlgs)))
        object.__setattr__(self, "loopbacks", tuple(sorted(self.loopbacks)))

    @classmethod
    def build(
        cls,
        edges: Iterable[tuple],
        routers: Iterable[int] | None = None,
        srlgs: Iterable[Iterable[UndirectedLink]] = (),
        capacity: int = DEFAULT_CAPACITY,
    ) -> "Topology":
        """Convenience constructor from ``(a, b, cost)`` or ``(a, b, cost_ab, cost_ba)``."""
        links = []
        seen = set() if routers is None else set(routers)
        for e in edges:
            a, b = e[0], e[1]
            c_ab = e[2] if len(e) > 2 else 1
            c_ba = e[3] if len(e) > 3 else c_ab
            links.append(Link(a, b, c_ab, capacity))
            links.append(Link(b, a, c_ba, capacity))
            seen.update((a, b))
        groups = tuple(
            SrlgGroup(i + 1, frozenset(undirected(*m) for m in members))
            for i, members in enumerate(srlgs)
        )
        return cls(tuple(seen), tuple(links), groups)

    # -- derived lookups -------------------------------------------------

    @cached_property
    def index(self) -> dict[int, int]:
        return {r: i for i, r in enumerate(self.routers)}

    @cached_property
    def _adj(self) -> dict[int, dict[int, Link]]:
        adj: dict[int, dict[int, Link]] = {r: {} for r in self.routers}
        for link in self.links:
            adj.setdefault(link.src, {})[link.dst] = link
        return adj

    @cached_property
    def _neighbors(self) -> dict[int, tuple[int, ...]]:
        return {r: tuple(sorted(nbrs)) for r, nbrs in self._adj.items()}

    @cached_property
    def cost_matrix(self) -> np.ndarray:
        """Dense int64 cost matrix indexed by router position; 0 means no link."""
        n = len(self.routers)
        m = np.zeros((n, n), dtype=np.int64)
        idx = self.index
        for link in self.links:
            m[idx[link.src], idx[link.dst]] = link.cost
        return m

    @cached_property
    def physical_links(self) -> tuple[UndirectedLink, ...]:
        return tuple(sorted({link.uid for link in self.links}))

    @cached_property
    def _srlg_by_link(self) -> dict[UndirectedLink, tuple[SrlgGroup, ...]]:
        out: dict[UndirectedLink, list[SrlgGroup]] = {}
        for g in self.srlgs:
            for m in g.members:
                out.setdefault(m, []).append(g)
        return {k: tuple(v) for k, v in out.items()}

    @cached_property
    def _srlg_by_id(self) -> dict[int, SrlgGroup]:
        return {g.group_id: g for g in self.srlgs}

    def __contains__(self, router: int) -> bool:
        return router in self.index

    def __len__(self) -> int:
        return len(self.routers)

    def neighbors(self, r: int) -> tuple[int, ...]:
        return self._neighbors.get(r, ())

    def link(self, a: int, b: int) -> Link | None:
        return self._adj.get(a, {}).get(b)

    def has_link(self, a: int, b: int) -> bool:
        return b in self._adj.get(a, {})

    def cost(self, a: int, b: int) -> int:
        return self._adj[a][b].cost

    def interface(self, owner: int, neighbor: int) -> int:
        """8-bit network interface index of ``owner`` facing ``neighbor``."""
        nbrs = self.neighbors(owner)
        try:
            return nbrs.index(neighbor)
        except ValueError:
            raise KeyError(f"router {owner} has no interface toward {neighbor}") from None

    def interface_neighbor(self, owner: int, ni: int) -> int:
        return self.neighbors(owner)[ni]

    def srlg_groups_of(self, uid: UndirectedLink) -> tuple[SrlgGroup, ...]:
        return self._srlg_by_link.get(undirected(*uid), ())

    def srlg_group(self, gid: int) -> SrlgGroup:
        return self._srlg_by_id[gid]

    def srlg_expand(self, uids: Iterable[UndirectedLink]) -> frozenset[UndirectedLink]:
        """The given links plus every member of every SRLG group containing one of them."""
        out = set()
        for uid in uids:
            uid = undirected(*uid)
            out.add(uid)
            for g in self.srlg_groups_of(uid):
                out.update(g.members)
        return frozenset(out)

    def sr_id(self, r: int) -> int:
        """9-bit source identifier: low bits of the loopback, else the router id."""
        lb = dict(self.loopbacks).get(r)
        return r if lb is None else lb & 0x1FF

    def announced_prefixes(self) -> list[tuple[str, int]]:
        """(prefix, announcing router) pairs; every router announces ``r<id>``."""
        out = [(default_prefix(r), r) for r in self.routers]
        out.extend(self.prefixes)
        return sorted(out, key=lambda p: (p[1], p[0]))

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def components(self) -> list[list[int]]:
        """Connected components (links are physical, hence symmetric), largest first."""
        seen: set[int] = set()
        comps = []
        for r in self.routers:
            if r in seen:
                continue
            comp = []
            queue = deque([r])
            seen.add(r)
            while queue:
                u = queue.popleft()
                comp.append(u)
                for v in self.neighbors(u):
                    if v not in seen:
                        seen.add(v)
                        queue.append(v)
            comps.append(sorted(comp))
        comps.sort(key=lambda c: (-len(c), c[0]))
        return comps

    def validate(self, require_connected: bool = True) -> None:
        """Raise :class:`TopologyError` naming the first violated invariant."""
        rset = set(self.routers)
        for r in self.routers:
            if r < 0 or r > MAX_ROUTER_ID:
                raise TopologyError(f"router id {r}: router id exceeds 9-bit range")
        pairs = set()
        for link in self.links:
            if link.src == link.dst:
                raise TopologyError(f"link {link.src}-{link.dst}: self loop")
            if link.src not in rset or link.dst not in rset:
                raise TopologyError(f"link {link.src}-{link.dst}: dangling endpoint")
            if link.cost < 1:
                raise TopologyError(f"link {link.src}-{link.dst}: cost < 1")
            if (link.src, link.dst) in pairs:
                raise TopologyError(f"link {link.src}-{link.dst}: duplicate link")
            pairs.add((link.src, link.dst))
        for a, b in pairs:
            if (b, a) not in pairs:
                raise TopologyError(f"link {a}-{b}: missing reverse direction")
        uids = set(self.physical_links)
        for g in self.srlgs:
            if len(g.members) < 2:
                raise TopologyError(f"srlg {g.group_id}: fewer than 2 members")
            for m in g.members:
                if m not in uids:
                    raise TopologyError(f"srlg {g.group_id}: unknown link {m[0]}-{m[1]}")
        ids: dict[int, int] = {}
        for r in self.routers:
            s = self.sr_id(r)
            if s in ids:
                raise TopologyError(f"routers {ids[s]} and {r}: sr_id collision ({s})")
            ids[s] = r
        if require_connected and not self.is_connected():
            raise TopologyError("topology is not strongly connected")


def default_prefix(router: int) -> str:
    return f"r{router}"


# -- failures -------------------------------------------------------------


def failed_elements(t: Topology, f: FailureSpec) -> tuple[frozenset[int], frozenset[UndirectedLink]]:
    """Routers and physical links taken down by ``f``, SRLG expansion included."""
    if f.kind == "link":
        uid = f.target  # type: ignore[assignment]
        if not t.has_link(*uid) and not t.srlg_groups_of(uid):
            raise KeyError(f"unknown component: {f}")
        return frozenset(), t.srlg_expand([uid])
    if f.kind == "router":
        r = f.target
        if r not in t:
            raise KeyError(f"unknown component: {f}")
        incident = [undirected(r, n) for n in t.neighbors(r)]  # type: ignore[arg-type]
        return frozenset([r]), t.srlg_expand(incident)  # type: ignore[list-item]
    try:
        g = t.srlg_group(f.target)  # type: ignore[arg-type]
    except KeyError:
        raise KeyError(f"unknown component: {f}") from None
    return frozenset(), t.srlg_expand(g.members)


def remove_component(t: Topology, f: FailureSpec) -> Topology:
    """A new topology with the failed component, and its SRLG siblings, removed."""
    label = str(f)
    if label in t.removed:
        return t
    dead_routers, dead_links = failed_elements(t, f)
    return without(t, dead_routers, dead_links, label)


def without(
    t: Topology,
    routers: Iterable[int] = (),
    links: Iterable[UndirectedLink] = (),
    label: str | None = None,
) -> Topology:
    dead_r = set(routers)
    dead_l = {undirected(*l) for l in links}
    keep = tuple(
        l for l in t.links
        if l.uid not in dead_l and l.src not in dead_r and l.dst not in dead_r
    )
    removed = t.removed | {label} if label else t.removed
    return Topology(
        tuple(r for r in t.routers if r not in dead_r),
        keep,
        t.srlgs,
        tuple(lb for lb in t.loopbacks if lb[0] not in dead_r),
        tuple(p for p in t.prefixes if p[1] not in dead_r),
        removed,
    )


def single_failures(t: Topology) -> list[FailureSpec]:
    """Every single link, router and SRLG failure of ``t``, in that order."""
    out = [FailureSpec.link(*uid) for uid in t.physical_links]
    out += [FailureSpec.router(r) for r in t.routers]
    out += [FailureSpec.srlg(g.group_id) for g in t.srlgs]
    return out


@dataclass
class ProtectabilityReport:
    """Destinations cut off from the surviving core, per single failure."""

    entries: list[tuple[FailureSpec, int]]

    def __bool__(self) -> bool:
        return bool(self.entries)

    def of_kind(self, kind: str) -> list[tuple[FailureSpec, int]]:
        return [e for e in self.entries if e[0].kind == kind]

    def protectable(self, kind: str | None = None) -> bool:
        return not (self.of_kind(kind) if kind else self.entries)


def validate_protectable(t: Topology, kinds: Iterable[str] = ("link", "router", "srlg")) -> ProtectabilityReport:
    """List routers left outside the largest surviving component for every single failure."""
    entries = []
    kinds = set(kinds)
    for f in single_failures(t):
        if f.kind not in kinds:
            continue
        comps = remove_component(t, f).components()
        for comp in comps[1:]:
            entries.extend((f, r) for r in comp)
    return ProtectabilityReport(entries)


# -- file format ----------------------------------------------------------


def _parse_link_id(tok: str, lineno: int) -> UndirectedLink:
    try:
        a, b = tok.split("-")
        return undirected(int(a), int(b))
    except ValueError:
        raise TopologyError(f"malformed link identifier {tok!r}", lineno) from None


def _kv(tokens: list[str], lineno: int) -> dict[str, str]:
    if len(tokens) % 2:
        raise TopologyError("expected key/value pairs", lineno)
    return dict(zip(tokens[::2], tokens[1::2]))


def load_topology(source: str | bytes | io.IOBase | Path, validate: bool = True) -> Topology:
    """Parse a topology document (text, bytes, path or open file)."""
    if isinstance(source, Path):
        text = source.read_text()
    elif isinstance(source, bytes):
        text = source.decode()
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode() if isinstance(data, bytes) else data

    declared = None
    routers: dict[int, int] = {}
    loopbacks: list[tuple[int, int]] = []
    links: list[Link] = []
    link_line: dict[tuple[int, int], int] = {}
    srlgs: list[SrlgGroup] = []
    prefixes: list[tuple[str, int]] = []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        kw = tok[0]
        try:
            if kw == "routers":
                if len(tok) != 2:
                    raise TopologyError("expected 'routers N'", lineno)
                declared = int(tok[1])
            elif kw == "router":
                r = int(tok[1])
                if r < 0 or r > MAX_ROUTER_ID:
                    raise TopologyError(f"router id {r}: router id exceeds 9-bit range", lineno)
                if r in routers:
                    raise TopologyError(f"router {r}: duplicate router", lineno)
                routers[r] = lineno
                opts = _kv(tok[2:], lineno)
                if "loopback" in opts:
                    lb = int(opts.pop("loopback"), 0)
                    if not 0 <= lb < 2**32:
                        raise TopologyError("loopback outside 32-bit range", lineno)
                    loopbacks.append((r, lb))
                if opts:
                    raise TopologyError(f"unknown router option {next(iter(opts))!r}", lineno)
            elif kw == "link":
                a, b = int(tok[1]), int(tok[2])
                opts = _kv(tok[3:], lineno)
                if "cost" in opts:
                    c_ab = c_ba = int(opts.pop("cost"))
                else:
                    c_ab = int(opts.pop("cost_ab"))
                    c_ba = int(opts.pop("cost_ba"))
                cap = int(float(opts.pop("capacity", DEFAULT_CAPACITY)))
                if opts:
                    raise TopologyError(f"unknown link option {next(iter(opts))!r}", lineno)
                if a == b:
                    raise TopologyError(f"link {a}-{b}: self loop", lineno)
                if c_ab < 1 or c_ba < 1:
                    raise TopologyError(f"link {a}-{b}: cost < 1", lineno)
                for s, d, c in ((a, b, c_ab), (b, a, c_ba)):
                    if (s, d) in link_line:
                        raise TopologyError(f"link {a}-{b}: duplicate link", lineno)
                    link_line[(s, d)] = lineno
                    links.append(Link(s, d, c, cap))
            elif kw == "srlg":
                gid = int(tok[1])
                members = frozenset(_parse_link_id(x, lineno) for x in tok[2:])
                if len(members) < 2:
                    raise TopologyError(f"srlg {gid}: fewer than 2 members", lineno)
                srlgs.append(SrlgGroup(gid, members))
            elif kw == "prefix":
                if len(tok) != 3:
                    raise TopologyError("expected 'prefix <name> <router>'", lineno)
                prefixes.append((tok[1], int(tok[2])))
            else:
                raise TopologyError(f"unknown keyword {kw!r}", lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, TopologyError):
                raise
            raise TopologyError(f"cannot parse {line!r}", lineno) from None

    for (s, d), lineno in link_line.items():
        for r in (s, d):
            if r not in routers:
                raise TopologyError(f"link {s}-{d}: dangling endpoint {r}", lineno)
    if declared is not None and declared != len(routers):
        raise TopologyError(f"header declares {declared} routers, found {len(routers)}")

    t = Topology(tuple(routers), tuple(links), tuple(srlgs), tuple(loopbacks), tuple(prefixes))
    if validate:
        t.validate()
    return t


def dump_topology(t: Topology) -> str:
    """Serialize ``t``; :func:`load_topology` inverts it exactly."""
    lb = dict(t.loopbacks)
    out = [f"routers {len(t.routers)}"]
    for r in t.routers:
        out.append(f"router {r}" + (f" loopback {lb[r]}" if r in lb else ""))
    for a, b in t.physical_links:
        ab, ba = t.link(a, b), t.link(b, a)
        out.append(f"link {a} {b} cost_ab {ab.cost} cost_ba {ba.cost} capacity {ab.capacity}")
    for g in t.srlgs:
        out.append(f"srlg {g.group_id} " + " ".join(f"{a}-{b}" for a, b in g))
    for name, r in t.prefixes:
        out.append(f"prefix {name} {r}")
    return "\n".join(out) + "\n"


DATA_DIR = Path(__file__).parent / "data"


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture (``T1``..``T4``, ``G2``, ...)."""
    p = DATA_DIR / f"{name.lower()}.topo"
    if not p.exists():
        raise FileNotFoundError(f"no shipped topology named {name!r}")
    return p


def load_fixture(name: str) -> Topology:
    return load_topology(fixture_path(name))


def resolve_topology(arg: str) -> Topology:
    """Load from a path, falling back to a shipped fixture name."""
    p = Path(arg)
    if p.exists():
        return load_topology(p)
    return load_fixture(arg)
