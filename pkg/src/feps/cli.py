"""``feps`` command line: validate, compute-feps, build-fib, compare-notvia,
simulate and sweep.

Exit codes: 0 ok, 1 usage, 2 validation failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import contextlib
import logging
import os
import sys
import tempfile
import warnings
from pathlib import Path

from . import __version__
from .dataplane import build_network_state
from .fep_calc import FepConfig, compute_all_feps, compute_network_feps, write_fep_report
from .fib_ext import write_fib_dump, write_pair_table
from .report import (
    overhead_report,
    path_length_report,
    write_loss_csv,
    write_overhead_csv,
    write_pathlen_csv,
    write_pathlen_histogram,
)
from .sim import MODES, MS, SimConfig, SweepRow, load_scenario, run_scenario, sweep, write_trace
from .topology import TopologyError, resolve_topology, validate_protectable

log = logging.getLogger("feps")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class ValidationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class Outputs:
    """Collects output files; writes go to temporaries that are renamed into
    place only when the command succeeds, and deleted otherwise."""

    def __init__(self):
        self._pending: list[tuple[Path, Path]] = []

    @contextlib.contextmanager
    def open(self, path: str | Path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
        self._pending.append((Path(tmp), path))
        with os.fdopen(fd, "w", newline="") as fh:
            yield fh

    def commit(self):
        for tmp, final in self._pending:
            os.replace(tmp, final)
        self._pending.clear()

    def discard(self):
        for tmp, _ in self._pending:
            with contextlib.suppress(FileNotFoundError):
                tmp.unlink()
        self._pending.clear()


def _topology(arg: str):
    try:
        return resolve_topology(arg)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except TopologyError as exc:
        raise ValidationFailure(f"{arg}: {exc}") from None


def _fep_cfg(args) -> FepConfig:
    return FepConfig(distfep_origin=args.distfep)


def cmd_validate(args, out: Outputs) -> int:
    t = _topology(args.topology)
    kinds = args.kinds.split(",")
    rep = validate_protectable(t, kinds)
    by_failure: dict[str, list[int]] = {}
    for f, r in rep.entries:
        by_failure.setdefault(str(f), []).append(r)
    for f, rs in by_failure.items():
        print(f"{f}: cuts off {' '.join(map(str, sorted(rs)))}")
    if rep.entries:
        print(f"not protectable: {len(by_failure)} single failure(s) disconnect routers")
        return EXIT_INVALID
    print(f"protectable against every single {'/'.join(kinds)} failure")
    return EXIT_OK


def cmd_compute_feps(args, out: Outputs) -> int:
    t = _topology(args.topology)
    cfg = _fep_cfg(args)
    if args.sr is not None:
        if args.sr not in t:
            raise UsageError(f"router {args.sr} not in topology")
        results = {args.sr: compute_all_feps(t, args.sr, cfg)}
    else:
        results = compute_network_feps(t, cfg=cfg)
    if args.out:
        with out.open(args.out) as fh:
            write_fep_report(results, fh)
    else:
        sys.stdout.write(write_fep_report(results))
    return EXIT_OK


def cmd_build_fib(args, out: Outputs) -> int:
    t = _topology(args.topology)
    feps = compute_network_feps(t, cfg=_fep_cfg(args))
    states, signals = build_network_state(t, feps)
    pending = sorted((sr, seq) for sr, res in signals.items() for seq in res.unconfirmed)
    if pending:
        for sr, seq in pending:
            print(f"router {sr}: vector {' '.join(map(str, seq))} not confirmed", file=sys.stderr)
        raise RuntimeError(f"{len(pending)} signalled vector(s) left unconfirmed")
    if args.out_dir:
        d = Path(args.out_dir)
        for r in t.routers:
            with out.open(d / f"fib_{r}.csv") as fh:
                write_fib_dump(states[r].fib, fh)
            with out.open(d / f"pairs_{r}.csv") as fh:
                write_pair_table(states[r].fib, fh)
    else:
        for r in t.routers:
            sys.stdout.write(write_fib_dump(states[r].fib))
            sys.stdout.write(write_pair_table(states[r].fib))
    n_sig = sum(len(s.confirmed) for s in signals.values())
    print(f"{len(t.routers)} routers, {n_sig} signalled vectors confirmed", file=sys.stderr)
    return EXIT_OK


def cmd_compare_notvia(args, out: Outputs) -> int:
    t = _topology(args.topology)
    cfg = _fep_cfg(args)
    rep = path_length_report(t, count_distinct=args.count_distinct, cfg=cfg)
    over = overhead_report(t, cfg=cfg)
    wrote = False
    if args.pathlen:
        with out.open(args.pathlen) as fh:
            write_pathlen_csv(rep, fh)
        wrote = True
    if args.hist:
        with out.open(args.hist) as fh:
            write_pathlen_histogram(rep, fh)
        wrote = True
    if args.overhead:
        with out.open(args.overhead) as fh:
            write_overhead_csv(over, fh)
        wrote = True
    if not wrote:
        sys.stdout.write(write_pathlen_histogram(rep))
        sys.stdout.write(write_overhead_csv(over))
    print(f"mean routers: feps {rep.mean('feps'):.3f}, notvia {rep.mean('notvia'):.3f}; "
          f"{len(rep.unprotected)} unprotected triple(s)", file=sys.stderr)
    return EXIT_OK


def _sim_config(args, scenario) -> SimConfig:
    kw = {}
    if getattr(args, "mode", None):
        kw["mode"] = "fep_s" if args.mode == "feps" else "ospf_only"
    if args.window is not None:
        kw["measurement_window"] = round(args.window * MS)
    if args.guard is not None:
        kw["congestion_guard"] = args.guard == "on"
    try:
        return scenario.config(**kw)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None


def _scenario(arg: str):
    try:
        return load_scenario(arg)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None
    except ValueError as exc:
        raise ValidationFailure(str(exc)) from None


def cmd_simulate(args, out: Outputs) -> int:
    sc = _scenario(args.scenario)
    cfg = _sim_config(args, sc)
    if not sc.failures:
        failure, at = None, 0
    else:
        if not 0 <= args.failure < len(sc.failures):
            raise UsageError(f"scenario has {len(sc.failures)} failure line(s)")
        failure, at = sc.failures[args.failure]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = run_scenario(sc.topology, sc.flows, failure, at, cfg, seed=args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = [SweepRow(fl.flow, failure, cfg.mode, fl) for fl in rep.flows]
    extra = f"scenario={sc.name} window_ms={cfg.window / MS:g} digest={rep.digest()[:16]}"
    if args.loss:
        with out.open(args.loss) as fh:
            write_loss_csv(rows, args.seed, fh, extra)
    else:
        sys.stdout.write(write_loss_csv(rows, args.seed, extra=extra))
    if args.trace:
        with out.open(args.trace) as fh:
            write_trace(rep, fh)
    if rep.ttl_expiries:
        print(f"warning: {rep.ttl_expiries} packet(s) exceeded the hop budget", file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args, out: Outputs) -> int:
    sc = _scenario(args.scenario)
    cfg = _sim_config(args, sc)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rows = sweep(sc.topology, sc.flows, sc.failures, cfg, MODES, seed=args.seed, jobs=args.jobs)
    extra = f"scenario={sc.name} window_ms={cfg.window / MS:g}"
    if args.loss:
        with out.open(args.loss) as fh:
            write_loss_csv(rows, args.seed, fh, extra)
    else:
        sys.stdout.write(write_loss_csv(rows, args.seed, extra=extra))
    failed = [r for r in rows if r.error]
    if failed:
        print(f"{len({(str(r.failure), r.mode) for r in failed})} cell(s) failed: {failed[0].error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="feps", description="Fast emergency paths: computation, FIB state, NotVia comparison and loss simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def topo_cmd(name, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("topology", help="topology file or shipped fixture name (T1..T4, G2, square)")
        return s

    s = topo_cmd("validate", "report single failures that disconnect routers")
    s.add_argument("--kinds", default="link,router,srlg", help="comma-separated failure classes")
    s.set_defaults(func=cmd_validate)

    for name, func, help_ in (
        ("compute-feps", cmd_compute_feps, "emergency path report (CSV)"),
        ("build-fib", cmd_build_fib, "FIB dumps and mark/interface pair tables"),
        ("compare-notvia", cmd_compare_notvia, "path lengths and FIB overhead against NotVia"),
    ):
        s = topo_cmd(name, help_)
        s.add_argument("--distfep", choices=("sr", "nr"), default="sr",
                       help="origin of the SIG path cost in Z' (default: sr)")
        s.set_defaults(func=func)
        if name == "compute-feps":
            s.add_argument("--sr", type=int, help="only this source router")
            s.add_argument("--out", help="write the CSV here instead of stdout")
        elif name == "build-fib":
            s.add_argument("--out-dir", help="write fib_<r>.csv and pairs_<r>.csv here")
        else:
            s.add_argument("--pathlen", help="per-triple path lengths (pathlen.csv)")
            s.add_argument("--hist", help="router-count histogram per mechanism")
            s.add_argument("--overhead", help="per-router FIB bytes (overhead.csv)")
            s.add_argument("--count-distinct", action="store_true",
                           help="count NotVia revisits once")

    for name, func in (("simulate", cmd_simulate), ("sweep", cmd_sweep)):
        s = sub.add_parser(name, help="loss simulation" if name == "simulate" else "every failure x both modes")
        s.add_argument("scenario", help="scenario file or shipped scenario name")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--window", type=float, help="measurement window in ms")
        s.add_argument("--guard", choices=("on", "off"))
        s.add_argument("--loss", help="write loss.csv here instead of stdout")
        if name == "simulate":
            s.add_argument("--mode", choices=("ospf", "feps"), default="feps")
            s.add_argument("--failure", type=int, default=0, help="index of the scenario's failure line")
            s.add_argument("--trace", help="event trace CSV")
        else:
            s.add_argument("--jobs", type=int, default=1, help="parallel scenario runs")
        s.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs()
    try:
        code = args.func(args, out)
    except UsageError as exc:
        out.discard()
        print(f"feps: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValidationFailure as exc:
        out.discard()
        print(f"feps: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - surface as a runtime failure
        out.discard()
        if args.verbose:
            log.exception("command failed")
        print(f"feps: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if code in (EXIT_OK, EXIT_INVALID):
        out.commit()
    else:
        out.discard()
    return code


if __name__ == "__main__":
    sys.exit(main())
