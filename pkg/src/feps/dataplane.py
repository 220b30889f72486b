"""Per-router forwarding during a failure: the differentiated forwarding state
machine, mark application and removal, the congestion guard, deviation
timers and the hop-by-hop signalling protocol that installs transit marks.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

from .fep_calc import FepVector, Level, SourceFeps, compute_network_feps
from .fib_ext import FibError, RouterFib, build_sr_marks, install_not_sr_mark
from .topology import FailureSpec, Topology, failed_elements

GUARD_THRESHOLD = 0.80


class DropReason(enum.IntEnum):
    DETECTION_WINDOW = 0
    SECOND_FAILURE = 1
    QUEUE_GUARD = 2
    UNREACHABLE = 3
    # tail drop on a full queue; not a forwarding decision
    OVERFLOW = 4

    @property
    def label(self) -> str:
        return self.name.lower().replace("_", "-")


@dataclass(frozen=True)
class Packet:
    dst_prefix: str
    size_bytes: int = 256
    mark: int | None = None
    deviated_flag: bool = False
    field_in_use: bool = False
    encapsulated_to: int | None = None
    hops: int = 0
    # first mark ever applied; lets tests check marks are never rewritten
    original_mark: int | None = None
    flow: int = -1

    def __post_init__(self):
        if self.mark is not None and not self.deviated_flag:
            raise ValueError("a marked packet must carry the deviated flag")
        if self.encapsulated_to is not None and self.mark is None:
            raise ValueError("encapsulation without a mark")


@dataclass(frozen=True)
class Forward:
    ni: int
    neighbor: int


@dataclass(frozen=True)
class Deliver:
    pass


@dataclass(frozen=True)
class Drop:
    reason: DropReason


Decision = Forward | Deliver | Drop


@dataclass
class RouterState:
    owner: int
    fib: RouterFib
    interfaces: dict[int, int]  # ni -> neighbour
    adjacent_up: dict[int, bool] = field(default_factory=dict)
    deviation_start: int | None = None
    deviation_deadline: int | None = None
    queue_occupancy: dict[int, float] = field(default_factory=dict)
    congestion_guard_enabled: bool = False
    recompute_requests: list[int] = field(default_factory=list)

    def __post_init__(self):
        for n in self.interfaces.values():
            self.adjacent_up.setdefault(n, True)

    def ni_of(self, neighbor: int) -> int:
        for ni, n in self.interfaces.items():
            if n == neighbor:
                return ni
        raise KeyError(f"router {self.owner} has no interface to {neighbor}")

    def deviation_active(self, now: int) -> bool:
        if self.deviation_deadline is None or self.deviation_start is None:
            return False
        return self.deviation_start <= now < self.deviation_deadline

    def up(self, neighbor: int) -> bool:
        return self.adjacent_up.get(neighbor, False)


def _guard_blocks(state: RouterState, ni: int) -> bool:
    return state.congestion_guard_enabled and state.queue_occupancy.get(ni, 0.0) >= GUARD_THRESHOLD


def fep_diffor_forward(state: RouterState, p: Packet, now: int) -> tuple[Decision, Packet]:
    """One forwarding decision; returns the decision and the packet as it leaves."""
    entry = state.fib.entry(p.dst_prefix)
    local = entry.next_hop == state.owner
    if local:
        if p.mark is not None:
            p = replace(p, mark=None, deviated_flag=False, encapsulated_to=None)
        return Deliver(), p

    if p.mark is not None:
        pair = state.fib.transit_pair(p.mark)
        if pair is not None:
            nbr = state.interfaces[pair.ni]
            if not state.up(nbr):
                return Drop(DropReason.SECOND_FAILURE), p
            if _guard_blocks(state, pair.ni):
                return Drop(DropReason.QUEUE_GUARD), p
            return Forward(pair.ni, nbr), p
        nh = entry.next_hop
        if nh is None or not state.up(nh):
            return Drop(DropReason.SECOND_FAILURE), p
        return Forward(state.ni_of(nh), nh), p

    nh = entry.next_hop
    if nh is None:
        return Drop(DropReason.UNREACHABLE), p
    if state.up(nh):
        return Forward(state.ni_of(nh), nh), p
    if not state.deviation_active(now) or entry.ref is None:
        return Drop(DropReason.UNREACHABLE), p
    pair = state.fib.sr_pairs[entry.ref]
    if not pair.confirmed:
        return Drop(DropReason.UNREACHABLE), p
    nbr = state.interfaces[pair.ni]
    if not state.up(nbr):
        return Drop(DropReason.UNREACHABLE), p
    if _guard_blocks(state, pair.ni):
        return Drop(DropReason.QUEUE_GUARD), p
    mark = pair.mark.value
    p = replace(
        p,
        mark=mark,
        deviated_flag=True,
        encapsulated_to=entry.announced_by if p.field_in_use else None,
        original_mark=mark if p.original_mark is None else p.original_mark,
    )
    return Forward(pair.ni, nbr), p


def activate_deviation(state: RouterState, failed_neighbor: int, now: int, hold: int) -> RouterState:
    """Mark the neighbour down and keep deviating until ``now + hold``.

    A second activation inside an open window extends it; ``hold <= 0`` leaves
    deviation off, which degenerates to plain OSPF behaviour.
    """
    state.adjacent_up[failed_neighbor] = False
    if hold <= 0:
        return state
    deadline = now + hold
    if state.deviation_active(now):
        state.deviation_deadline = max(state.deviation_deadline, deadline)
    else:
        state.deviation_start = now
        state.deviation_deadline = deadline
    return state


def expire_deviation(state: RouterState, now: int) -> bool:
    """Close an elapsed window and queue a recomputation; True if it closed."""
    if state.deviation_deadline is not None and now >= state.deviation_deadline:
        state.deviation_start = state.deviation_deadline = None
        state.recompute_requests.append(now)
        return True
    return False


def make_router_states(
    t: Topology,
    feps: Mapping[int, SourceFeps] | None = None,
    guard: bool = False,
) -> dict[int, RouterState]:
    """Router states with each router's own pairs built; nothing signalled yet."""
    if feps is None:
        feps = compute_network_feps(t)
    states = {}
    for r in t.routers:
        vectors = feps[r].vectors if r in feps else {}
        fib = build_sr_marks(t, r, vectors)
        interfaces = {t.interface(r, n): n for n in t.neighbors(r)}
        states[r] = RouterState(r, fib, interfaces, congestion_guard_enabled=guard)
    return states


@dataclass
class SignalResult:
    sr: int
    ack_logs: dict[tuple[int, ...], list[int]] = field(default_factory=dict)
    confirmed: set[tuple[int, ...]] = field(default_factory=set)
    unconfirmed: set[tuple[int, ...]] = field(default_factory=set)


def fep_signal_run(
    t: Topology,
    sr: int,
    vectors: Iterable[FepVector] | Mapping,
    states: dict[int, RouterState],
) -> SignalResult:
    """Push each SIG vector hop by hop, then acknowledge it back to ``sr``.

    Every recipient installs its transit record.  A hop whose link is down in
    the sender's state stops the message and leaves the vector unconfirmed.
    """
    if isinstance(vectors, Mapping):
        vectors = vectors.values()
    res = SignalResult(sr)
    src_state = states[sr]
    seqs = sorted({v.routers: v for v in vectors if v.level is Level.SIG}.items())
    for seq, v in seqs:
        idx = next((i for i, p in enumerate(src_state.fib.sr_pairs) if p.routers == seq), None)
        if idx is None:
            raise FibError(f"router {sr} holds no pair for vector {seq}")
        mark = src_state.fib.sr_pairs[idx].mark
        ok = True
        for a, b in zip(seq, seq[1:]):
            if not states[a].up(b):
                ok = False
                break
            states[b].fib = install_not_sr_mark(t, b, v, mark, states[b].fib)
        log: list[int] = []
        if ok:
            for a, b in zip(reversed(seq), list(reversed(seq))[1:]):
                log.append(a)
                if not states[a].up(b):
                    ok = False
                    break
            else:
                log.append(seq[0])
        res.ack_logs[seq] = log
        pairs = list(src_state.fib.sr_pairs)
        pairs[idx] = replace(pairs[idx], confirmed=ok)
        src_state.fib.sr_pairs = pairs
        (res.confirmed if ok else res.unconfirmed).add(seq)
    return res


def build_network_state(
    t: Topology,
    feps: Mapping[int, SourceFeps] | None = None,
    guard: bool = False,
) -> tuple[dict[int, RouterState], dict[int, SignalResult]]:
    """Router states for ``t`` with every router's SIG vectors signalled."""
    if feps is None:
        feps = compute_network_feps(t)
    states = make_router_states(t, feps, guard)
    signals = {r: fep_signal_run(t, r, feps[r].vectors, states) for r in t.routers if r in feps}
    return states, signals


def apply_failure(t: Topology, states: dict[int, RouterState], failure: FailureSpec) -> set[int]:
    """Take the failed links down in every surviving router's adjacency map.

    Returns the routers adjacent to the failure (those that detect it).
    """
    dead_r, dead_l = failed_elements(t, failure)
    detecting = set()
    for a, b in dead_l:
        for x, y in ((a, b), (b, a)):
            if x in states and x not in dead_r:
                states[x].adjacent_up[y] = False
                detecting.add(x)
    return detecting


@dataclass(frozen=True)
class WalkResult:
    routers: tuple[int, ...]
    outcome: Decision
    packet: Packet
    ttl_expired: bool = False


def walk_packet(
    t: Topology,
    states: Mapping[int, RouterState],
    src: int,
    dst_prefix: str,
    now: int = 0,
    budget: int | None = None,
    packet: Packet | None = None,
) -> WalkResult:
    """Follow a single packet hop by hop with zero queueing until it is
    delivered, dropped or runs out of its 2·|routers| hop budget."""
    if budget is None:
        budget = 2 * len(t.routers)
    p = packet or Packet(dst_prefix)
    here = src
    trail = [src]
    while True:
        decision, p = fep_diffor_forward(states[here], p, now)
        if not isinstance(decision, Forward):
            return WalkResult(tuple(trail), decision, p)
        if p.hops + 1 > budget:
            return WalkResult(tuple(trail), Drop(DropReason.UNREACHABLE), p, ttl_expired=True)
        p = replace(p, hops=p.hops + 1)
        here = decision.neighbor
        trail.append(here)


def vector_failure(v: FepVector) -> FailureSpec:
    """The single failure a vector was computed against."""
    return FailureSpec.router(v.ar) if v.bypasses_router else FailureSpec.link(v.sr, v.ar)


def check_vector_delivery(
    t: Topology, states: dict[int, RouterState], v: FepVector, failure: FailureSpec | None = None
) -> WalkResult:
    """Send one packet for ``v.dr`` from ``v.sr`` with the vector's failure
    applied and deviation active at the detecting routers.

    ``states`` is modified: adjacency flags are lowered for the failure, so
    pass a fresh copy per call (see :func:`clone_states`).
    """
    failure = failure or vector_failure(v)
    for r in apply_failure(t, states, failure):
        states[r].deviation_start, states[r].deviation_deadline = 0, 1
    prefix = next(p for p, r in t.announced_prefixes() if r == v.dr)
    return walk_packet(t, states, v.sr, prefix, now=0)


def clone_states(states: Mapping[int, RouterState]) -> dict[int, RouterState]:
    return {
        r: replace(s, fib=s.fib.copy(), adjacent_up=dict(s.adjacent_up),
                   queue_occupancy=dict(s.queue_occupancy), recompute_requests=[])
        for r, s in states.items()
    }


__all__ = [
    "GUARD_THRESHOLD",
    "Deliver",
    "Drop",
    "DropReason",
    "Forward",
    "Packet",
    "RouterState",
    "SignalResult",
    "WalkResult",
    "activate_deviation",
    "apply_failure",
    "build_network_state",
    "check_vector_delivery",
    "clone_states",
    "expire_deviation",
    "fep_diffor_forward",
    "fep_signal_run",
    "make_router_states",
    "vector_failure",
    "walk_packet",
]
