"""Command-line interface: ``dam compile | run | check | gen``.

Exit codes for ``run``: 0 halted, 2 out of fuel, 3 stuck, 4 the program could
not be loaded, compiled or placed.  ``check`` exits 1 when any report fails.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import bisim, ces, cesh, dcesh, dcesh1
from .bytecode import CodeTable, compile, deserialize, serialize
from .machine import Halted, Nat, Stuck
from .network import format_async_event, format_sync_event, random_policy, fifo_policy
from .syntax import ParseError, UnboundVariable, gen_term, parse_program, pretty

EXIT_CODES = {"halted": 0, "fuel": 2, "stuck": 3}
LOAD_ERROR = 4

MACHINES = ("ces", "cesh", "dcesh1", "dcesh")


class LoadError(Exception):
    pass


def load_source(path: str):
    """Core term of a ``.lam`` file."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise LoadError(f"{path}: {e.strerror or e}") from None
    try:
        return parse_program(text)
    except (ParseError, UnboundVariable, ValueError) as e:
        raise LoadError(f"{path}: {e}") from None


def load_table(path: str) -> CodeTable:
    """Code table of a ``.dam`` file, or of a ``.lam`` file compiled in memory."""
    if not path.endswith(".dam"):
        return _compile(load_source(path), path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise LoadError(f"{path}: {e.strerror or e}") from None
    try:
        return deserialize(text)
    except ValueError as e:
        raise LoadError(f"{path}: {e}") from None


def _compile(t, path: str) -> CodeTable:
    try:
        return compile(t)
    except ValueError as e:
        raise LoadError(f"{path}: {e}") from None


def parse_nodes(text: str) -> list:
    nodes = [n.strip() for n in text.split(",") if n.strip()]
    if not nodes:
        raise argparse.ArgumentTypeError("empty node list")
    return nodes


def parse_range(text: str) -> range:
    lo, sep, hi = text.partition("..")
    try:
        return range(int(lo), int(hi) + 1) if sep else range(int(lo), int(lo) + 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B, got {text!r}") from None


# -- compile --------------------------------------------------------------------

def cmd_compile(args) -> int:
    try:
        table = _compile(load_source(args.input), args.input)
    except LoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return LOAD_ERROR
    out = args.output or str(Path(args.input).with_suffix(".dam"))
    Path(out).write_text(serialize(table))
    print(f"wrote {out}: {table.instruction_count()} instructions in {len(table)} table entries")
    return 0


# -- run ------------------------------------------------------------------------

def _print_value(v, final, machine: str) -> None:
    if isinstance(v, Nat):
        print(f"value: nat {v.n}")
    elif machine == "ces":
        print(f"value: clos code={v.code} env={len(v.env)}")
    elif machine == "cesh":
        code, env = final.heap.deref(v.ptr)
        print(f"value: clos code={code} env={len(env)}")
    elif machine == "dcesh1":
        (m,) = final.nodes.values()
        code, env = m.clos_heap.deref(v.ptr)
        print(f"value: clos code={code} env={len(env)}")
    else:
        nodes = final if isinstance(final, dict) else final.nodes
        print(f"value: {dcesh.closure_summary(v, nodes)}")


def cmd_run(args) -> int:
    try:
        table = load_table(args.program)
    except LoadError as e:
        print(f"error: {e}", file=sys.stderr)
        return LOAD_ERROR
    policy = random_policy(args.seed) if args.seed is not None else fifo_policy
    tr = args.trace
    try:
        if args.machine in ("ces", "cesh"):
            run = ces.run_ces if args.machine == "ces" else cesh.run_cesh
            hook = (lambda t, rule, cfg: print(f"t={t} machine={args.machine} rule={rule}")) if tr else None
            out = run(table, args.fuel, hook)
        elif args.machine == "dcesh1":
            hook = (lambda t, ev, net: print(format_async_event(t, ev, len(net.msgs)))) if tr else None
            out = dcesh1.run_dcesh1(table, args.fuel, policy, args.root, hook)
        elif args.net == "sync":
            hook = (lambda t, ev, nodes: print(format_sync_event(t, ev))) if tr else None
            out = dcesh.run_dcesh_sync(table, args.root, args.nodes, args.fuel, hook)
        else:
            hook = (lambda t, ev, net: print(format_async_event(t, ev, len(net.msgs)))) if tr else None
            out = dcesh.run_dcesh_async(table, args.root, args.nodes, args.fuel, policy, hook)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return LOAD_ERROR

    if isinstance(out, Halted):
        _print_value(out.value, out.final, args.machine)
    elif isinstance(out, Stuck):
        print(f"stuck: {out.reason}")
    else:
        print("fuel exhausted")
    summary = f"steps: {out.steps}"
    if args.machine in ("dcesh", "dcesh1"):
        summary += f" messages: {out.stats.get('messages', 0)}"
    print(summary)
    if args.dump_heap:
        for line in _heap_lines(out, args.machine):
            print(line)
    return EXIT_CODES[out.verdict]


def _heap_lines(out, machine: str) -> list:
    final = out.final
    if machine == "cesh":
        return cesh.format_heap(final.heap)
    if machine == "dcesh1":
        (m,) = final.nodes.values()
        return cesh.format_heap(m.clos_heap)
    if machine == "dcesh":
        return dcesh.format_heaps(final if isinstance(final, dict) else final.nodes)
    return []


# -- check ----------------------------------------------------------------------

def _check_one(label: str, t, args) -> tuple[bool, str, str]:
    try:
        table = compile(t)
        mutate = bisim.corrupt_heap(args.inject_fault) if args.inject_fault is not None else None
        rep = bisim.lockstep(t, args.fuel, args.rank, args.nodes, args.root, mutate, table)
        eq = bisim.async_equiv(t, args.fuel, args.nodes, args.root, table=table)
    except ValueError as e:
        return False, f"{label} verdict=LoadError steps=0 value=-", str(e)
    v = rep.verdict
    if not isinstance(v, bisim.AllAgree):
        name, detail = v.name, str(v)
    elif rep.violations:
        name, detail = "InvariantViolation", "; ".join(f"{k}: {d}" for k, d in rep.violations[:5])
    elif not eq.ok:
        name, detail = "AsyncMismatch", "; ".join(eq.problems)
    else:
        name, detail = "AllAgree", ""
    value = "-"
    if isinstance(v, bisim.AllAgree) and v.final == "halted":
        value = str(v.value.n) if isinstance(v.value, Nat) else "clos"
    elif isinstance(v, bisim.AllAgree):
        value = v.final
    return name == "AllAgree", f"{label} verdict={name} steps={rep.steps} value={value}", detail


def cmd_check(args) -> int:
    if args.file is None and args.seeds is None:
        print("error: give a program file or --seeds A..B", file=sys.stderr)
        return LOAD_ERROR
    if args.file is not None:
        try:
            jobs = [(f"file={args.file}", load_source(args.file))]
        except LoadError as e:
            print(f"error: {e}", file=sys.stderr)
            return LOAD_ERROR
    else:
        jobs = [(f"seed={s}", gen_term(s, args.size, args.nodes)) for s in args.seeds]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(lambda job: _check_one(job[0], job[1], args), jobs))
    first_failure = None
    for ok, line, detail in results:
        print(line)
        if not ok and first_failure is None:
            first_failure = (line, detail)
    if first_failure is not None:
        print(f"first failure: {first_failure[0]}: {first_failure[1]}", file=sys.stderr)
        return 1
    return 0


# -- gen ------------------------------------------------------------------------

def cmd_gen(args) -> int:
    print(pretty(gen_term(args.seed, args.size, args.nodes or ())))
    return 0


# -- entry point ----------------------------------------------------------------

def _add_placement(p, nodes_default=("A",)) -> None:
    p.add_argument("--nodes", type=parse_nodes, default=list(nodes_default),
                   help="comma-separated node names (default: A)")
    p.add_argument("--root", default="A", help="node that starts the program (default: A)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dam", description="Compile and run located lambda programs "
                                 "on the CES, CESH, DCESH1 and DCESH machines.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compile", help="compile a .lam program to .dam bytecode")
    p.add_argument("input")
    p.add_argument("-o", "--output", help="output path (default: input with .dam suffix)")
    p.set_defaults(func=cmd_compile)

    p = sub.add_parser("run", help="run a .lam or .dam program on one machine")
    p.add_argument("program")
    p.add_argument("--machine", choices=MACHINES, default="ces")
    p.add_argument("--net", choices=("sync", "async"), default="sync",
                   help="network semantics for dcesh (dcesh1 is always async)")
    p.add_argument("--fuel", type=int, default=100000)
    _add_placement(p)
    p.add_argument("--trace", action="store_true", help="print one line per step")
    p.add_argument("--seed", type=int, help="seed for random async scheduling")
    p.add_argument("--dump-heap", action="store_true", help="print the heap(s) at the end")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="lockstep bisimulation and sync/async checks")
    p.add_argument("file", nargs="?")
    p.add_argument("--seeds", type=parse_range, help="inclusive seed range A..B")
    p.add_argument("--size", type=int, default=30)
    p.add_argument("--fuel", type=int, default=100000)
    p.add_argument("--rank", type=int, default=3)
    _add_placement(p)
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.add_argument("--inject-fault", type=int, metavar="STEP",
                   help="corrupt the CESH heap at STEP (the check must then fail)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("gen", help="print a random closed program")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--nodes", type=parse_nodes, default=None)
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
