"""Deterministic packet-level simulation of a single failure: constant bit-rate
flows, FIFO link queues, failure detection delay, per-router convergence and
FEP-S deviation, with per-flow loss accounting.
"""

from __future__ import annotations

import hashlib
import logging
import shlex
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _simcore
from ._simcore import INF_NS
from .dataplane import DropReason, build_network_state
from .fep_calc import FepConfig, compute_network_feps
from .spf import ospf_view
from .topology import (
    DATA_DIR,
    FailureSpec,
    Topology,
    TopologyError,
    failed_elements,
    load_topology,
    remove_component,
    resolve_topology,
)

log = logging.getLogger(__name__)

MS = 1_000_000
MODES = ("ospf_only", "fep_s")
REASONS = tuple(r.label for r in DropReason)


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Flow:
    src: int
    dst: int
    rate: int  # bits per second
    packet_size: int = 256  # bytes
    start: int = 0  # ns
    stop: int = 0  # ns

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError("flow rate must be positive")
        if self.packet_size <= 0:
            raise ValueError("packet size must be positive")
        if self.stop < self.start:
            raise ValueError("flow stops before it starts")

    @property
    def gap_ns(self) -> float:
        return self.packet_size * 8 * 1e9 / self.rate

    def label(self) -> str:
        return f"({self.src},{self.dst})"


@dataclass(frozen=True)
class SimConfig:
    detection_delay: int = 20 * MS
    convergence_time: int = 200 * MS
    # None: same as convergence_time
    deviation_hold: int | None = None
    mode: str = "fep_s"
    congestion_guard: bool = False
    queue_capacity: int = 1000
    propagation_delay: int = 1 * MS
    # None: detection_delay + convergence_time + 800 ms
    measurement_window: int | None = None
    # None: 2 * number of routers
    hop_budget: int | None = None
    # "random" (seeded) or "ofib"; None picks random for ospf_only, ofib for fep_s
    ordering: str | None = None
    trace_limit: int = 2_000_000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.detection_delay < 0 or self.convergence_time < 0:
            raise ValueError("delays must be non-negative")
        if self.queue_capacity < 1:
            raise ValueError("queue capacity must be >= 1")
        if self.ordering not in (None, "random", "ofib"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @property
    def hold(self) -> int:
        return self.convergence_time if self.deviation_hold is None else self.deviation_hold

    @property
    def window(self) -> int:
        if self.measurement_window is not None:
            return self.measurement_window
        return self.detection_delay + self.convergence_time + 800 * MS

    @property
    def convergence_order(self) -> str:
        if self.ordering is not None:
            return self.ordering
        return "random" if self.mode == "ospf_only" else "ofib"


@dataclass(frozen=True)
class FlowLoss:
    flow: Flow
    sent: int
    delivered: int
    dropped: dict[str, int]
    ttl_expired: int = 0

    @property
    def lost(self) -> int:
        return sum(self.dropped.values())

    @property
    def loss_percent(self) -> float:
        return 100.0 * self.lost / self.sent if self.sent else 0.0


@dataclass
class LossReport:
    failure: FailureSpec | None
    mode: str
    seed: int
    window: tuple[int, int]
    flows: list[FlowLoss]
    totals: list[FlowLoss]
    marked_delivered: list[int]
    max_queue: np.ndarray
    trace: np.ndarray  # (k, 4): time_ns, router id, flow index, reason code
    trace_total: int
    control: list[tuple[int, str, int]]  # (time_ns, event, router id)
    warnings: list[str] = field(default_factory=list)

    @property
    def ttl_expiries(self) -> int:
        return sum(f.ttl_expired for f in self.totals)

    def digest(self) -> str:
        h = hashlib.sha256()
        for fl in self.totals + self.flows:
            h.update(repr((fl.sent, fl.delivered, sorted(fl.dropped.items()), fl.ttl_expired)).encode())
        h.update(np.ascontiguousarray(self.trace).tobytes())
        h.update(repr(self.control).encode())
        return h.hexdigest()


# -- table construction ---------------------------------------------------


@dataclass
class _Tables:
    link_index: np.ndarray
    link_dst: np.ndarray
    link_cap: np.ndarray
    link_prop: np.ndarray
    ref: np.ndarray
    vec_nr: np.ndarray
    transit: np.ndarray
    nh_old: np.ndarray


def _base_tables(t: Topology, cfg: SimConfig, with_feps: bool, fep_cfg: FepConfig) -> _Tables:
    n = len(t.routers)
    idx = t.index
    link_index = np.full((n, n), -1, dtype=np.int64)
    dst, cap = [], []
    for l in t.links:
        link_index[idx[l.src], idx[l.dst]] = len(dst)
        dst.append(idx[l.dst])
        cap.append(l.capacity)
    link_dst = np.array(dst, dtype=np.int64)
    link_cap = np.array(cap, dtype=np.int64)
    link_prop = np.full(len(dst), cfg.propagation_delay, dtype=np.int64)
    nh_old = ospf_view(t).NH.astype(np.int64).copy()

    vids: dict[tuple[int, int], int] = {}
    vec_nr: list[int] = []
    ref = np.full((n, n), -1, dtype=np.int64)
    transit_rows: list[tuple[int, int, int]] = []
    if with_feps:
        feps = compute_network_feps(t, cfg=fep_cfg)
        states, _ = build_network_state(t, feps)
        by_mark: dict[int, int] = {}
        for r in t.routers:
            fib = states[r].fib
            for i, pair in enumerate(fib.sr_pairs):
                vid = len(vec_nr)
                vids[(r, i)] = vid
                vec_nr.append(idx[states[r].interfaces[pair.ni]])
                if pair.mark.fep_id:
                    if pair.mark.value in by_mark:
                        raise ScenarioError(f"mark {pair.mark} is not unique; loopback ids collide")
                    by_mark[pair.mark.value] = vid
            for e in fib.entries:
                if e.ref is not None and fib.sr_pairs[e.ref].confirmed:
                    ref[idx[r], idx[e.announced_by]] = vids[(r, e.ref)]
        for r in t.routers:
            for pair in states[r].fib.transit_pairs:
                transit_rows.append((idx[r], by_mark[pair.mark.value], idx[states[r].interfaces[pair.ni]]))
    transit = np.full((n, max(1, len(vec_nr))), -1, dtype=np.int64)
    for r, v, y in transit_rows:
        transit[r, v] = y
    return _Tables(link_index, link_dst, link_cap, link_prop, ref,
                   np.array(vec_nr or [0], dtype=np.int64), transit, nh_old)


def _post_failure_nh(t: Topology, failure: FailureSpec) -> np.ndarray:
    n = len(t.routers)
    g = remove_component(t, failure)
    view = ospf_view(g)
    out = np.full((n, n), -1, dtype=np.int64)
    gi = [t.index[r] for r in g.routers]
    sub = view.NH
    for a, ia in enumerate(gi):
        for b, ib in enumerate(gi):
            h = sub[a, b]
            if h >= 0:
                out[ia, ib] = gi[h]
    return out


def _ranks(t: Topology, nh_old: np.ndarray, dead_r: set[int], dead_l: set[tuple[int, int]]) -> np.ndarray:
    """Hops from each router, along its old path to each destination, to the
    router that detects the failure; -1 where the old path is untouched."""
    n = len(t.routers)
    ids = t.routers
    rank = np.full((n, n), -1, dtype=np.int64)
    for d in range(n):
        for r in range(n):
            if r == d or ids[r] in dead_r:
                continue
            x, hops = r, 0
            while x != d and x >= 0:
                y = int(nh_old[x, d])
                if y < 0:
                    break
                a, b = ids[x], ids[y]
                if b in dead_r or (min(a, b), max(a, b)) in dead_l:
                    rank[r, d] = hops
                    break
                x = y
                hops += 1
    return rank


def convergence_times(
    t: Topology, nh_old: np.ndarray, failure: FailureSpec, t_f: int, cfg: SimConfig, seed: int
) -> np.ndarray:
    """Per (router, destination) time at which the post-failure route is used.

    Routers that detect the failure switch last, at t_f + detection + convergence.
    ``random`` draws one seeded uniform time per other router in the window;
    ``ofib`` orders per destination by rank, farthest from the failure first.
    """
    n = len(t.routers)
    dead_r, dead_l = failed_elements(t, failure)
    det_at = t_f + cfg.detection_delay
    end = det_at + cfg.convergence_time
    adjacent = np.zeros(n, dtype=bool)
    for a, b in dead_l:
        for x in (a, b):
            if x not in dead_r and x in t.index:
                adjacent[t.index[x]] = True
    conv = np.full((n, n), det_at, dtype=np.int64)
    if cfg.convergence_order == "random":
        rng = np.random.default_rng(seed)
        per_router = rng.integers(det_at, end, size=n, endpoint=True)
        per_router[adjacent] = end
        conv[:] = per_router[:, None]
    else:
        rank = _ranks(t, nh_old, set(dead_r), set(dead_l))
        top = int(rank.max()) if rank.size else 0
        affected = rank >= 0
        times = end - (cfg.convergence_time * rank) // (top + 1)
        conv[affected] = times[affected]
        conv[adjacent, :] = end
    return conv


def _failure_times(t: Topology, failure: FailureSpec | None, t_f: int):
    n = len(t.routers)
    link_fail = np.full(len(t.links), INF_NS, dtype=np.int64)
    router_fail = np.full(n, INF_NS, dtype=np.int64)
    if failure is None:
        return link_fail, router_fail, set(), set()
    dead_r, dead_l = failed_elements(t, failure)
    for i, l in enumerate(t.links):
        if l.uid in dead_l or l.src in dead_r or l.dst in dead_r:
            link_fail[i] = t_f
    for r in dead_r:
        router_fail[t.index[r]] = t_f
    return link_fail, router_fail, set(dead_r), set(dead_l)


def load_warnings(t: Topology, flows: Sequence[Flow], limit: float = 0.5) -> list[str]:
    """Links whose pre-failure offered load exceeds ``limit`` of capacity."""
    view = ospf_view(t)
    load: dict[tuple[int, int], int] = {}
    for f in flows:
        p = view.routers_on(f.src, f.dst)
        for a, b in zip(p, p[1:]):
            load[(a, b)] = load.get((a, b), 0) + f.rate
    out = []
    for (a, b), bps in sorted(load.items()):
        cap = t.link(a, b).capacity
        if bps > limit * cap:
            out.append(f"link {a}->{b} carries {bps / cap:.0%} of capacity before the failure")
    return out


def _pool_size(tab: _Tables, flows: Sequence[Flow], qcap: int) -> int:
    smallest = min(f.packet_size for f in flows)
    in_prop = (tab.link_prop * tab.link_cap) // (smallest * 8 * 1_000_000_000) + 2
    return int(np.sum(in_prop) + len(tab.link_dst) * qcap + len(flows) + 16)


def run_scenario(
    t: Topology,
    flows: Sequence[Flow],
    failure: FailureSpec | None,
    fail_at: int,
    cfg: SimConfig = SimConfig(),
    seed: int = 0,
    fep_cfg: FepConfig = FepConfig(),
) -> LossReport:
    """Simulate ``flows`` with ``failure`` injected at ``fail_at`` ns.

    Loss is counted over packets emitted in [fail_at, fail_at + window).
    """
    if not flows:
        raise ScenarioError("no flows")
    view = ospf_view(t)
    for f in flows:
        if f.src not in t or f.dst not in t or not view.reachable(f.src, f.dst) or f.src == f.dst:
            raise ScenarioError(f"flow {f.label()} is not routable before the failure")
    notes = load_warnings(t, flows)
    for msg in notes:
        warnings.warn(msg, stacklevel=2)

    n = len(t.routers)
    tab = _base_tables(t, cfg, cfg.mode == "fep_s", fep_cfg)
    link_fail, router_fail, dead_r, dead_l = _failure_times(t, failure, fail_at)
    control: list[tuple[int, str, int]] = []
    if failure is None:
        nh_new = tab.nh_old
        conv = np.full((n, n), INF_NS, dtype=np.int64)
        dev_start = np.full(n, INF_NS, dtype=np.int64)
        dev_end = np.full(n, INF_NS, dtype=np.int64)
    else:
        nh_new = _post_failure_nh(t, failure)
        conv = convergence_times(t, tab.nh_old, failure, fail_at, cfg, seed)
        dev_start = np.full(n, INF_NS, dtype=np.int64)
        dev_end = np.full(n, INF_NS, dtype=np.int64)
        det_at = fail_at + cfg.detection_delay
        control.append((fail_at, f"fail {failure}", -1))
        detecting = sorted({x for l in dead_l for x in l if x not in dead_r and x in t.index})
        for r in detecting:
            control.append((det_at, "detect", r))
            if cfg.mode == "fep_s" and cfg.hold > 0:
                dev_start[t.index[r]] = det_at
                dev_end[t.index[r]] = det_at + cfg.hold
                control.append((det_at, "deviation-on", r))
                control.append((det_at + cfg.hold, "deviation-off", r))
        for i, r in enumerate(t.routers):
            if r in dead_r:
                continue
            changed = tab.nh_old[i] != nh_new[i]
            if changed.any():
                control.append((int(conv[i][changed].min()), "converge", r))
        control.sort()

    budget = cfg.hop_budget if cfg.hop_budget is not None else 2 * n
    idx = t.index
    f_src = np.array([idx[f.src] for f in flows], dtype=np.int64)
    f_dst = np.array([idx[f.dst] for f in flows], dtype=np.int64)
    f_size = np.array([f.packet_size for f in flows], dtype=np.int64)
    f_rate = np.array([f.rate for f in flows], dtype=np.int64)
    f_start = np.array([f.start for f in flows], dtype=np.int64)
    f_stop = np.array([f.stop for f in flows], dtype=np.int64)
    win = (fail_at, fail_at + cfg.window)

    out = _simcore.simulate(
        tab.link_index, tab.link_dst, tab.link_cap, tab.link_prop, link_fail, router_fail,
        np.int64(cfg.detection_delay), tab.nh_old, nh_new, conv, dev_start, dev_end,
        tab.ref, tab.vec_nr, tab.transit, bool(cfg.congestion_guard), int(cfg.queue_capacity),
        f_src, f_dst, f_size, f_rate, f_start, f_stop, np.int64(win[0]), np.int64(win[1]),
        int(budget), _pool_size(tab, flows, cfg.queue_capacity), int(cfg.trace_limit),
    )
    (error, sent, delivered, dropped, ttl, marked, max_occ,
     tr_time, tr_router, tr_flow, tr_reason, tr_total) = out
    if error:
        raise RuntimeError("packet pool exhausted")

    def losses(col: int) -> list[FlowLoss]:
        return [
            FlowLoss(f, int(sent[i, col]), int(delivered[i, col]),
                     {REASONS[k]: int(dropped[i, col, k]) for k in range(len(REASONS))},
                     int(ttl[i]) if col == 1 else 0)
            for i, f in enumerate(flows)
        ]

    ids = np.array(t.routers, dtype=np.int64)
    trace = np.stack([tr_time, ids[tr_router] if len(tr_router) else tr_router, tr_flow, tr_reason], axis=1)
    return LossReport(
        failure, cfg.mode, seed, win, losses(0), losses(1), [int(x) for x in marked],
        max_occ, trace, int(tr_total), control, notes,
    )


def write_trace(report: LossReport, fh) -> None:
    """Event CSV: time_ns, event, router, flow, reason.  Control events carry
    an empty flow; drops carry the flow index and reason."""
    fh.write(f"# seed={report.seed} mode={report.mode} failure={report.failure}\n")
    fh.write("time_ns,event,router,flow,reason\n")
    rows = [(t, 0, ev, "" if r < 0 else str(r), "", "") for t, ev, r in report.control]
    rows += [(int(a), 1, "drop", str(int(b)), str(int(c)), REASONS[int(d)]) for a, b, c, d in report.trace]
    rows.sort(key=lambda x: (x[0], x[1]))
    for t, _, ev, r, f, why in rows:
        fh.write(f"{t},{ev},{r},{f},{why}\n")
    if report.trace_total > len(report.trace):
        fh.write(f"# trace truncated: {report.trace_total - len(report.trace)} drops not listed\n")


# -- scenarios ------------------------------------------------------------

_CONFIG_KEYS = {
    "detection_delay": ("detection_delay", MS),
    "convergence_time": ("convergence_time", MS),
    "deviation_hold": ("deviation_hold", MS),
    "queue_capacity": ("queue_capacity", 1),
    "propagation_delay": ("propagation_delay", MS),
    "measurement_window": ("measurement_window", MS),
    "hop_budget": ("hop_budget", 1),
}


@dataclass
class Scenario:
    topology: Topology
    flows: list[Flow]
    failures: list[tuple[FailureSpec, int]]
    overrides: dict = field(default_factory=dict)
    name: str = "scenario"

    def config(self, **kw) -> SimConfig:
        return SimConfig(**{**self.overrides, **kw})


def _ms(tok: str, lineno: int) -> int:
    try:
        return round(float(tok) * MS)
    except ValueError:
        raise ScenarioError(f"line {lineno}: expected milliseconds, got {tok!r}") from None


def parse_scenario(text: str, base: Path | None = None, name: str = "scenario") -> Scenario:
    """Parse a scenario document.

    ``topology <file or fixture>``, ``flow <src> <dst> rate <bps> size <bytes>
    start <ms> stop <ms>``, ``fail link <a>-<b> at <ms>`` (or ``router <id>``,
    ``srlg <gid>``), ``set <key> <value>`` (times in ms, ``guard on|off``).
    """
    topo = None
    flows: list[Flow] = []
    failures: list[tuple[FailureSpec, int]] = []
    overrides: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = shlex.split(line)
        head = tok[0]
        if head == "topology":
            if len(tok) != 2:
                raise ScenarioError(f"line {lineno}: topology takes one argument")
            ref = tok[1]
            cand = (base / ref) if base is not None else Path(ref)
            try:
                topo = load_topology(cand) if cand.exists() else resolve_topology(ref)
            except (OSError, TopologyError, KeyError) as exc:
                raise ScenarioError(f"line {lineno}: cannot load topology {ref!r}: {exc}") from exc
        elif head == "flow":
            if len(tok) != 11:
                raise ScenarioError(f"line {lineno}: malformed flow line")
            kv = dict(zip(tok[3::2], tok[4::2]))
            try:
                flows.append(Flow(int(tok[1]), int(tok[2]), int(float(kv["rate"])), int(kv["size"]),
                                  _ms(kv["start"], lineno), _ms(kv["stop"], lineno)))
            except (KeyError, ValueError) as exc:
                raise ScenarioError(f"line {lineno}: malformed flow line ({exc})") from None
        elif head == "fail":
            if len(tok) != 5 or tok[3] != "at":
                raise ScenarioError(f"line {lineno}: expected 'fail <kind> <target> at <ms>'")
            try:
                spec = FailureSpec.parse(f"{tok[1]} {tok[2]}")
            except ValueError as exc:
                raise ScenarioError(f"line {lineno}: {exc}") from None
            failures.append((spec, _ms(tok[4], lineno)))
        elif head == "set":
            if len(tok) != 3:
                raise ScenarioError(f"line {lineno}: expected 'set <key> <value>'")
            key, val = tok[1], tok[2]
            if key == "guard":
                if val not in ("on", "off"):
                    raise ScenarioError(f"line {lineno}: guard must be on or off")
                overrides["congestion_guard"] = val == "on"
            elif key in _CONFIG_KEYS:
                attr, scale = _CONFIG_KEYS[key]
                overrides[attr] = _ms(val, lineno) if scale == MS else int(val)
            else:
                raise ScenarioError(f"line {lineno}: unknown setting {key!r}")
        else:
            raise ScenarioError(f"line {lineno}: unknown directive {head!r}")
    if topo is None:
        raise ScenarioError("scenario names no topology")
    for f in flows:
        if f.src not in topo or f.dst not in topo:
            raise ScenarioError(f"flow {f.label()} references an unknown router")
    for spec, _ in failures:
        try:
            failed_elements(topo, spec)
        except KeyError as exc:
            raise ScenarioError(str(exc)) from None
    return Scenario(topo, flows, failures, overrides, name)


def load_scenario(arg: str | Path) -> Scenario:
    """Load a scenario file; a bare name like ``g2_link68`` resolves to the
    bundled copy."""
    p = Path(arg)
    if not p.exists():
        bundled = DATA_DIR / (p.name if p.suffix else f"{p.name}.scenario")
        if not bundled.exists():
            raise FileNotFoundError(f"no scenario {arg!r}")
        p = bundled
    return parse_scenario(p.read_text(), base=p.parent, name=p.stem)


# -- sweeps ---------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    flow: Flow
    failure: FailureSpec
    mode: str
    loss: FlowLoss | None
    error: str | None = None


def _one(args):
    t, flows, failure, at, cfg, seed = args
    try:
        rep = run_scenario(t, flows, failure, at, cfg, seed)
    except Exception as exc:  # noqa: BLE001 - a failed cell must not stop the sweep
        return None, f"{type(exc).__name__}: {exc}"
    return rep.flows, None


def sweep(
    t: Topology,
    flows: Sequence[Flow],
    failures: Iterable[tuple[FailureSpec, int]],
    cfg: SimConfig = SimConfig(),
    modes: Sequence[str] = MODES,
    seed: int = 0,
    jobs: int = 1,
) -> list[SweepRow]:
    """One run per (failure, mode); rows keyed (flow, failure, mode)."""
    cells = [(f, at, m) for f, at in failures for m in modes]
    args = [(t, list(flows), f, at, replace(cfg, mode=m), seed) for f, at, m in cells]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_one, args))
    else:
        results = [_one(a) for a in args]
    rows = []
    for (failure, _, mode), (losses, err) in zip(cells, results):
        for i, fl in enumerate(flows):
            rows.append(SweepRow(fl, failure, mode, losses[i] if losses else None, err))
    return rows
