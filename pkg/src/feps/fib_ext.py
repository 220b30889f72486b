"""FIB extension: 16-bit packet marks, mark/interface pair tables with Ref
wiring, and byte accounting against the NotVia baseline."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, TextIO

from .fep_calc import FepVector, Level
from .spf import Unreachable, ospf_view
from .topology import Topology

SR_ID_BITS = 9
FEP_ID_BITS = 7
MAX_SR_ID = (1 << SR_ID_BITS) - 1
MAX_FEP_ID = (1 << FEP_ID_BITS) - 1
MAX_NI = 255
# Ref is 8 bits and 0xFF is reserved for "no pair"
MAX_REF_PAIRS = 255

REF_BYTES = 1
PAIR_BYTES = 3
NOTVIA_ENTRY_BYTES = 12
NNH_BYTES = 4


class FibError(RuntimeError):
    pass


class ProtocolError(FibError):
    pass


def encode_mark(sr_id: int, fep_id: int) -> int:
    if not 0 <= sr_id <= MAX_SR_ID:
        raise ValueError(f"sr_id {sr_id} outside 9-bit range")
    if not 0 <= fep_id <= MAX_FEP_ID:
        raise ValueError(f"fep_id {fep_id} outside 7-bit range")
    return (sr_id << FEP_ID_BITS) | fep_id


def decode_mark(value: int) -> tuple[int, int]:
    if not 0 <= value <= 0xFFFF:
        raise ValueError(f"mark {value} outside 16-bit range")
    return value >> FEP_ID_BITS, value & MAX_FEP_ID


@dataclass(frozen=True, order=True)
class FepMark:
    sr_id: int
    fep_id: int

    def __post_init__(self):
        encode_mark(self.sr_id, self.fep_id)

    @property
    def value(self) -> int:
        return encode_mark(self.sr_id, self.fep_id)

    @classmethod
    def from_value(cls, value: int) -> "FepMark":
        return cls(*decode_mark(value))

    def __str__(self) -> str:
        return f"0x{self.value:04X}"


@dataclass(frozen=True)
class MarkNiPair:
    mark: FepMark
    ni: int
    # router sequence the pair steers along; bookkeeping, not on the wire
    routers: tuple[int, ...] = field(default=(), compare=False)
    confirmed: bool = field(default=True, compare=False)

    def __post_init__(self):
        if not 0 <= self.ni <= MAX_NI:
            raise ValueError(f"interface index {self.ni} outside 8-bit range")


@dataclass(frozen=True)
class FibEntry:
    prefix: str
    announced_by: int
    next_hop: int | None
    ref: int | None = None


@dataclass
class RouterFib:
    """OSPF FIB of one router plus its mark/interface pair table.

    ``sr_pairs`` are generated for the router's own vectors and are the only
    pairs a ``ref`` may point at; ``transit_pairs`` are installed for other
    routers' signalled vectors.  ``pairs`` lists the former first.
    """

    owner: int
    entries: list[FibEntry] = field(default_factory=list)
    sr_pairs: list[MarkNiPair] = field(default_factory=list)
    transit_pairs: list[MarkNiPair] = field(default_factory=list)
    terminate: set[int] = field(default_factory=set)

    @property
    def pairs(self) -> list[MarkNiPair]:
        return self.sr_pairs + self.transit_pairs

    def entry(self, prefix: str) -> FibEntry:
        for e in self.entries:
            if e.prefix == prefix:
                return e
        raise KeyError(f"router {self.owner} has no entry for {prefix!r}")

    def transit_pair(self, mark: int) -> MarkNiPair | None:
        for p in self.transit_pairs:
            if p.mark.value == mark:
                return p
        return None

    def copy(self) -> "RouterFib":
        return RouterFib(self.owner, list(self.entries), list(self.sr_pairs),
                         list(self.transit_pairs), set(self.terminate))

    @property
    def ofe(self) -> int:
        """OSPF FIB entries for prefixes announced by other routers."""
        return sum(1 for e in self.entries if e.announced_by != self.owner)


def ospf_fib(t: Topology, owner: int) -> RouterFib:
    """Plain OSPF FIB: one entry per announced prefix, next hop from the primary path."""
    view = ospf_view(t)
    entries = []
    for prefix, dr in t.announced_prefixes():
        if dr == owner:
            nh = owner
        else:
            try:
                nh = view.next_hop(owner, dr)
            except Unreachable:
                nh = None
        entries.append(FibEntry(prefix, dr, nh))
    return RouterFib(owner, entries)


def _ordered(vectors) -> list[FepVector]:
    if isinstance(vectors, Mapping):
        vectors = vectors.values()
    return sorted(vectors, key=lambda v: (v.ar, v.dr))


def build_sr_marks(
    t: Topology,
    owner: int,
    vectors: Iterable[FepVector] | Mapping,
    fib: RouterFib | None = None,
    announcements: Mapping[str, int] | None = None,
) -> RouterFib:
    """Generate the router's own pairs and point FIB entries at them.

    One pair per distinct router sequence; every entry whose prefix is
    announced by a covered DR, and whose next hop is that vector's AR, refers
    to it.  SIG sequences get fep ids 1, 2, ... in (AR, DR) order.
    """
    fib = (fib or ospf_fib(t, owner)).copy()
    if announcements is None:
        announcements = {e.prefix: e.announced_by for e in fib.entries}
    sr_id = t.sr_id(owner)
    by_seq: dict[tuple[int, ...], int] = {}
    ref_of: dict[tuple[int, int], int] = {}
    sr_pairs: list[MarkNiPair] = []
    next_fep = 1
    for v in _ordered(vectors):
        if v.sr != owner:
            raise FibError(f"vector {v.routers} does not originate at router {owner}")
        idx = by_seq.get(v.routers)
        if idx is None:
            if v.level is Level.SIG:
                if next_fep > MAX_FEP_ID:
                    raise FibError(f"router {owner}: more than {MAX_FEP_ID} SIG vectors, fep_id exhausted")
                fep_id = next_fep
                next_fep += 1
            else:
                fep_id = 0
            if len(sr_pairs) >= MAX_REF_PAIRS:
                raise FibError(f"router {owner}: more than {MAX_REF_PAIRS} pairs, Ref exhausted")
            idx = len(sr_pairs)
            by_seq[v.routers] = idx
            sr_pairs.append(MarkNiPair(
                FepMark(sr_id, fep_id), t.interface(owner, v.nr), v.routers,
                confirmed=v.level is not Level.SIG,
            ))
        ref_of[(v.ar, v.dr)] = idx

    entries = []
    for e in fib.entries:
        dr = announcements.get(e.prefix, e.announced_by)
        ref = ref_of.get((e.next_hop, dr)) if e.next_hop is not None else None
        entries.append(replace(e, ref=ref))
    fib.entries = entries
    fib.sr_pairs = sr_pairs
    return fib


def install_not_sr_mark(t: Topology, owner: int, vector: FepVector, mark: FepMark | int, fib: RouterFib) -> RouterFib:
    """Install transit state for another router's signalled vector.

    NR and intermediary routers get an unreferenced pair toward their
    successor; RF records the mark as the end of the deviation.
    """
    if isinstance(mark, int):
        mark = FepMark.from_value(mark)
    seq = vector.routers
    if owner not in seq or owner == seq[0]:
        raise FibError(f"router {owner} is not a downstream member of vector {seq}")
    fib = fib.copy()
    pos = seq.index(owner)
    if pos == len(seq) - 1:
        fib.terminate.add(mark.value)
        return fib
    pair = MarkNiPair(mark, t.interface(owner, seq[pos + 1]), seq)
    existing = fib.transit_pair(mark.value)
    if existing is not None:
        if existing.ni != pair.ni:
            raise ProtocolError(
                f"router {owner}: mark {mark} already bound to interface {existing.ni}, not {pair.ni}")
        return fib
    fib.transit_pairs.append(pair)
    return fib


def fep_overhead_from_counts(fni: int, ofe: int) -> int:
    if fni < 0 or ofe < 0:
        raise ValueError("counts must be non-negative")
    return PAIR_BYTES * fni + REF_BYTES * ofe


def fep_overhead_bytes(fib: RouterFib, ref_accounting: str = "all") -> int:
    """3 bytes per mark/interface pair plus the 1-byte Ref column.

    ``ref_accounting="all"`` charges Ref on every OSPF entry for another
    router's prefix (the field exists whether or not it is set);
    ``"referenced"`` charges only entries that actually carry a Ref.
    """
    if ref_accounting == "all":
        refs = fib.ofe
    elif ref_accounting == "referenced":
        refs = sum(1 for e in fib.entries if e.ref is not None)
    else:
        raise ValueError(f"unknown ref accounting {ref_accounting!r}")
    return fep_overhead_from_counts(len(fib.pairs), refs)


def notvia_overhead_bytes(nfib: int, ofe: int) -> int:
    """12 bytes per not-via FIB entry plus a 4-byte next-next-hop per OSPF entry."""
    if nfib < 0 or ofe < 0:
        raise ValueError("counts must be non-negative")
    return NOTVIA_ENTRY_BYTES * nfib + NNH_BYTES * ofe


def write_fib_dump(fib: RouterFib, fh: TextIO | None = None) -> str:
    buf = fh or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("owner", "prefix", "announced_by", "next_hop", "ref"))
    for e in fib.entries:
        w.writerow((fib.owner, e.prefix, e.announced_by,
                    "" if e.next_hop is None else e.next_hop, "" if e.ref is None else e.ref))
    return buf.getvalue() if fh is None else ""


def write_pair_table(fib: RouterFib, fh: TextIO | None = None) -> str:
    buf = fh or io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("owner", "index", "mark", "ni", "case", "routers"))
    n_sr = len(fib.sr_pairs)
    for i, p in enumerate(fib.pairs):
        w.writerow((fib.owner, i, str(p.mark), p.ni, "SR" if i < n_sr else "Not_SR",
                    " ".join(map(str, p.routers))))
    for m in sorted(fib.terminate):
        w.writerow((fib.owner, "", f"0x{m:04X}", "", "RF", ""))
    return buf.getvalue() if fh is None else ""
