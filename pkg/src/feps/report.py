"""CSV reports: recovery-path lengths of FEP-S against NotVia, extra FIB bytes
per router, and loss tables from simulation sweeps."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

from .dataplane import build_network_state
from .fep_calc import FepConfig, compute_network_feps, full_recovery_path
from .fib_ext import fep_overhead_from_counts, notvia_overhead_bytes
from .notvia import UnprotectedFailure, notvia_fib_counts, notvia_recovery_path, recovery_failures
from .sim import REASONS, SweepRow
from .spf import ospf_view
from .topology import FailureSpec, Topology

MECHANISMS = ("feps", "notvia")


@dataclass(frozen=True)
class PathLengthRow:
    sr: int
    dr: int
    failure: FailureSpec
    feps_len: int | None
    notvia_len: int | None

    @property
    def status(self) -> str:
        if self.feps_len is None and self.notvia_len is None:
            return "unprotected"
        if self.feps_len is None:
            return "unprotected-feps"
        if self.notvia_len is None:
            return "unprotected-notvia"
        return "ok"


@dataclass
class PathLengthReport:
    rows: list[PathLengthRow] = field(default_factory=list)

    @property
    def protected(self) -> list[PathLengthRow]:
        return [r for r in self.rows if r.status == "ok"]

    @property
    def unprotected(self) -> list[PathLengthRow]:
        return [r for r in self.rows if r.status != "ok"]

    def histogram(self, mechanism: str) -> Counter:
        key = {"feps": "feps_len", "notvia": "notvia_len"}[mechanism]
        return Counter(getattr(r, key) for r in self.protected)

    def mean(self, mechanism: str) -> float:
        h = self.histogram(mechanism)
        total = sum(h.values())
        return sum(k * v for k, v in h.items()) / total if total else 0.0


def path_length_report(
    t: Topology, count_distinct: bool = False, cfg: FepConfig = FepConfig()
) -> PathLengthReport:
    """Both mechanisms' recovery lengths, in routers visited, for every
    (sr, dr, failure adjacent to sr on the primary path)."""
    view = ospf_view(t)
    feps = compute_network_feps(t, cfg=cfg)
    rep = PathLengthReport()
    for sr in t.routers:
        for dr in t.routers:
            if sr == dr or not view.reachable(sr, dr):
                continue
            ar = view.next_hop(sr, dr)
            vec = feps[sr].vectors.get((ar, dr))
            for f in recovery_failures(t, sr, dr):
                flen = None
                if vec is not None and (f.kind != "router" or vec.bypasses_router):
                    flen = len(full_recovery_path(t, vec))
                try:
                    nlen = len(notvia_recovery_path(t, sr, dr, f, count_distinct))
                except UnprotectedFailure:
                    nlen = None
                rep.rows.append(PathLengthRow(sr, dr, f, flen, nlen))
    return rep


def _out(fh: TextIO | None):
    return fh if fh is not None else io.StringIO()


def write_pathlen_csv(rep: PathLengthReport, fh: TextIO | None = None) -> str:
    buf = _out(fh)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("sr", "dr", "failure", "notvia_len", "feps_len", "status"))
    for r in rep.rows:
        w.writerow((r.sr, r.dr, str(r.failure),
                    "" if r.notvia_len is None else r.notvia_len,
                    "" if r.feps_len is None else r.feps_len, r.status))
    return buf.getvalue() if fh is None else ""


def write_pathlen_histogram(rep: PathLengthReport, fh: TextIO | None = None) -> str:
    """Whitespace-free columns: routers, feps_count, notvia_count."""
    buf = _out(fh)
    w = csv.writer(buf, lineterminator="\n")
    hf, hn = rep.histogram("feps"), rep.histogram("notvia")
    w.writerow(("routers", "feps_count", "notvia_count"))
    for k in sorted(set(hf) | set(hn)):
        w.writerow((k, hf.get(k, 0), hn.get(k, 0)))
    w.writerow(("mean", f"{rep.mean('feps'):.4f}", f"{rep.mean('notvia'):.4f}"))
    return buf.getvalue() if fh is None else ""


@dataclass(frozen=True)
class OverheadRow:
    router: int
    fni: int
    refs: int
    ofe: int
    nfib: int

    @property
    def feps_bytes(self) -> int:
        return fep_overhead_from_counts(self.fni, self.ofe)

    @property
    def notvia_bytes(self) -> int:
        return notvia_overhead_bytes(self.nfib, self.ofe)


def overhead_report(t: Topology, cfg: FepConfig = FepConfig()) -> list[OverheadRow]:
    """Per-router pair counts after signalling, and the NotVia entry counts."""
    feps = compute_network_feps(t, cfg=cfg)
    states, _ = build_network_state(t, feps)
    rows = []
    for r in t.routers:
        fib = states[r].fib
        nfib, ofe = notvia_fib_counts(t, r)
        refs = sum(1 for e in fib.entries if e.ref is not None)
        rows.append(OverheadRow(r, len(fib.pairs), refs, ofe, nfib))
    return rows


OVERHEAD_HEADER = ("router", "fni", "refs", "ofe", "feps_fixed", "feps_bytes", "nfib", "notvia_fixed", "notvia_bytes")


def write_overhead_csv(rows: Sequence[OverheadRow], fh: TextIO | None = None) -> str:
    """One row per router, then ``max`` and ``avg`` rows.  The ``*_fixed``
    columns are the parts that do not scale with OFE (3·FNI and 12·nFIB)."""
    buf = _out(fh)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OVERHEAD_HEADER)
    for r in rows:
        w.writerow((r.router, r.fni, r.refs, r.ofe, 3 * r.fni, r.feps_bytes, r.nfib, 12 * r.nfib, r.notvia_bytes))
    if rows:
        cols = [(r.fni, r.refs, r.ofe, 3 * r.fni, r.feps_bytes, r.nfib, 12 * r.nfib, r.notvia_bytes) for r in rows]
        w.writerow(("max", *(max(c) for c in zip(*cols))))
        w.writerow(("avg", *(f"{sum(c) / len(c):.2f}" for c in zip(*cols))))
    return buf.getvalue() if fh is None else ""


LOSS_HEADER = ("flow", "failure", "mode", "sent", "delivered", "loss_percent") + REASONS + ("error",)


def loss_rows(rows: Iterable[SweepRow]):
    for r in rows:
        if r.loss is None:
            yield (r.flow.label(), str(r.failure), r.mode, "", "", "", *([""] * len(REASONS)), r.error or "")
            continue
        l = r.loss
        yield (r.flow.label(), str(r.failure), r.mode, l.sent, l.delivered, f"{l.loss_percent:.4f}",
               *(l.dropped[k] for k in REASONS), "")


def write_loss_csv(rows: Iterable[SweepRow], seed: int, fh: TextIO | None = None, extra: str = "") -> str:
    """Loss table, one row per (flow, failure, mode), in sweep order."""
    buf = _out(fh)
    buf.write(f"# seed={seed}{(' ' + extra) if extra else ''}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOSS_HEADER)
    w.writerows(loss_rows(rows))
    return buf.getvalue() if fh is None else ""


def loss_matrix(rows: Iterable[SweepRow]) -> dict[tuple[str, str, str], float]:
    """{(flow, failure, mode): loss_percent} for quick lookups."""
    return {(r.flow.label(), str(r.failure), r.mode): r.loss.loss_percent for r in rows if r.loss is not None}
