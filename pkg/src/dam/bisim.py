"""Executable bisimulation checks between CES, CESH and DCESH.

* :func:`eval_reference` is an independent big-step evaluator on core terms.
* :func:`r_cfg` relates CES and CESH configurations.
* :func:`r_sync` relates a CESH configuration and a synchronous DCESH network,
  checking the rank-indexed relation up to a rank bound ``k``.
* :func:`lockstep` runs the three machines side by side and checks both
  relations, determinism and the network invariants after every step.
* :func:`async_equiv` compares synchronous and asynchronous DCESH runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from . import heap as heaps
from .bytecode import CodeTable, compile
from .ces import Clos, enumerate_ces_successors, step_ces
from .ces import initial as ces_initial
from .cesh import CeshConfig, ClosPtr, enumerate_cesh_successors, step_cesh
from .cesh import initial as cesh_initial
from .dcesh import (RClos, active_nodes, halted_value, initial_network, is_active, local,
                    route, run_dcesh_async, run_dcesh_sync)
from .machine import Cont, FuelExhausted, Halt, Halted, Nat, Stuck, Val
from .network import (AsyncNet, InvalidTrace, NetworkError, Trace, enumerate_sync_steps,
                      random_policy, replay_async, sync_step, sync_trace_to_async,
                      async_trace_to_sync)
from .prim import ArithmeticOverflow, apply_prim
from .syntax import App, At, CoreTerm, If0, Lam, Lit, Op, Var


# -- reference evaluator ------------------------------------------------------

@dataclass(frozen=True)
class RefClos:
    body: CoreTerm
    env: tuple


class _OutOfFuel(Exception):
    pass


class _EvalError(Exception):
    pass


def eval_reference(t: CoreTerm, fuel: int = 100000):
    """Call-by-value evaluation with environments; ``At`` runs its body in the empty one."""
    budget = [fuel]
    try:
        v = _eval(t, (), budget)
    except _OutOfFuel:
        return FuelExhausted(None, fuel)
    except _EvalError as e:
        return Stuck(str(e), fuel - budget[0])
    except RecursionError:
        return Stuck("evaluation too deep for the reference evaluator", fuel - budget[0])
    return Halted(v, fuel - budget[0])


def _eval(t: CoreTerm, env: tuple, budget: list):
    while True:  # loop on tail positions
        budget[0] -= 1
        if budget[0] < 0:
            raise _OutOfFuel()
        if isinstance(t, Var):
            if t.index >= len(env):
                raise _EvalError(f"unbound variable {t.index}")
            return env[t.index]
        if isinstance(t, Lit):
            return Nat(t.n)
        if isinstance(t, Lam):
            return RefClos(t.body, env)
        if isinstance(t, Op):
            a = _eval(t.lhs, env, budget)
            b = _eval(t.rhs, env, budget)
            if not (isinstance(a, Nat) and isinstance(b, Nat)):
                raise _EvalError(f"{t.op.value} applied to a non-natural")
            try:
                return Nat(apply_prim(t.op, a.n, b.n))
            except ArithmeticOverflow as e:
                raise _EvalError(str(e)) from None
        if isinstance(t, If0):
            c = _eval(t.cond, env, budget)
            if not isinstance(c, Nat):
                raise _EvalError("if0 on a non-natural")
            t = t.then if c.n == 0 else t.else_
            continue
        if isinstance(t, App):
            f = _eval(t.fn, env, budget)
            a = _eval(t.arg, env, budget)
            if not isinstance(f, RefClos):
                raise _EvalError("application of a non-function")
            t, env = f.body, (a,) + f.env
            continue
        if isinstance(t, At):
            t, env = t.body, ()
            continue
        raise TypeError(f"not a core term: {t!r}")


# -- CES ~ CESH -----------------------------------------------------------------

def r_cfg(ces, cesh: CeshConfig) -> bool:
    """CES and CESH configurations agree, reading closures through the heap."""
    if ces.pos != cesh.pos:
        return False
    memo: dict = {}
    h = cesh.heap

    def val(v1, v2) -> bool:
        if isinstance(v1, Nat) or isinstance(v2, Nat):
            return v1 == v2
        if not (isinstance(v1, Clos) and isinstance(v2, ClosPtr)):
            return False
        key = (id(v1), v2.ptr)
        if key not in memo:
            memo[key] = False  # a cycle can only come from a corrupted heap
            cell = h.deref(v2.ptr)
            memo[key] = cell is not None and cell[0] == v1.code and env(v1.env, cell[1])
        return memo[key]

    def env(e1, e2) -> bool:
        return len(e1) == len(e2) and all(val(a, b) for a, b in zip(e1, e2))

    def elem(x, y) -> bool:
        if isinstance(x, Val) and isinstance(y, Val):
            return val(x.v, y.v)
        if isinstance(x, Cont) and isinstance(y, Cont):
            return x.pos == y.pos and env(x.env, y.env)
        return False

    return (env(ces.env, cesh.env) and len(ces.stack) == len(cesh.stack)
            and all(elem(x, y) for x, y in zip(ces.stack, cesh.stack)))


# -- CESH ~ DCESH -------------------------------------------------------------

class _SyncRel:
    """The rank-indexed relation for one (CESH heap, network) pair."""

    def __init__(self, heap, nodes: dict):
        self.heap = heap
        self.nodes = nodes
        self.memo: dict = {}

    def val(self, rank: int, v1, v2) -> bool:
        if isinstance(v1, Nat) or isinstance(v2, Nat):
            return v1 == v2
        if not (isinstance(v1, ClosPtr) and isinstance(v2, RClos)):
            return False
        return self.rptr(rank, v1.ptr, v2.rp)

    def rptr(self, rank: int, p: int, rp) -> bool:
        if rank == 0:
            return True
        key = (rank, p, rp)
        if key in self.memo:
            return self.memo[key]
        m = self.nodes.get(rp.node)
        c1 = self.heap.deref(p)
        c2 = m.clos_heap.deref(rp.ptr) if m is not None else None
        ok = (c1 is not None and c2 is not None and c1[0] == c2[0]
              and self.env(rank - 1, c1[1], c2[1]))
        self.memo[key] = ok
        return ok

    def env(self, rank: int, e1, e2) -> bool:
        return len(e1) == len(e2) and all(self.val(rank, a, b) for a, b in zip(e1, e2))

    def elem(self, rank: int, x, y) -> bool:
        if isinstance(x, Val) and isinstance(y, Val):
            return self.val(rank, x.v, y.v)
        if isinstance(x, Cont) and isinstance(y, Cont):
            return x.pos == y.pos and self.env(rank, x.env, y.env)
        return False

    def stack(self, rank: int, s1: tuple, s2) -> bool:
        elems, bottom = s2.elems, s2.bottom
        seen = set()
        while True:
            if not s1:
                return not elems and bottom is None
            if elems:
                if not self.elem(rank, s1[0], elems[0]):
                    return False
                s1, elems = s1[1:], elems[1:]
                continue
            # the CESH continuation lives on another node behind the bottom pointer
            if bottom is None or bottom in seen or bottom.node not in self.nodes:
                return False
            seen.add(bottom)
            cell = self.nodes[bottom.node].cont_heap.deref(bottom.ptr)
            if cell is None:
                return False
            k, rest = cell
            if not self.elem(rank, s1[0], k):
                return False
            s1, elems, bottom = s1[1:], rest.elems, rest.bottom


def r_sync(cesh: CeshConfig, nodes: dict, k: int = 3) -> bool:
    """Exactly one node runs, and its thread is related to ``cesh`` at rank ``k``.

    Level 0 of the pointer relation is trivially true and each level implies
    the ones below, so checking rank ``k`` covers every rank up to ``k``.
    """
    act = active_nodes(nodes)
    if len(act) != 1:
        return False
    th = nodes[act[0]].thread
    rel = _SyncRel(cesh.heap, nodes)
    return (th.pos == cesh.pos and rel.env(k, cesh.env, th.env)
            and rel.stack(k, cesh.stack, th.stack))


# -- lockstep -----------------------------------------------------------------

@dataclass(frozen=True)
class AllAgree:
    final: str  # halted | fuel | stuck
    value: Any = None

    name = "AllAgree"


@dataclass(frozen=True)
class RelationBroken:
    step: int
    relation: str
    witness: str

    name = "RelationBroken"


@dataclass(frozen=True)
class OutcomeMismatch:
    details: str

    name = "OutcomeMismatch"


@dataclass
class LockstepReport:
    program: Any
    steps: int
    verdict: Any
    traces: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)  # (kind, description)
    comm_steps: int = 0
    sync_trace: Optional[Trace] = None

    @property
    def ok(self) -> bool:
        return isinstance(self.verdict, AllAgree) and not self.violations

    def violations_of(self, kind: str) -> list:
        return [text for k, text in self.violations if k == kind]


def _nat_or_none(v):
    return v.n if isinstance(v, Nat) else None


def _state(r) -> str:
    if isinstance(r, Halt):
        return "halted"
    if isinstance(r, Stuck):
        return f"stuck ({r.reason})"
    return "running"


def lockstep(t: CoreTerm, fuel: int = 10000, k: int = 3, nodes=("A",), root: str = "A",
             mutate: Optional[Callable] = None, table: Optional[CodeTable] = None,
             oracle: bool = True) -> LockstepReport:
    """Step CES, CESH and synchronous DCESH one-for-one from related initial states.

    ``mutate(step, cesh_cfg) -> cesh_cfg`` lets tests corrupt the CESH side.
    """
    table = table if table is not None else compile(t)
    ces, cesh = ces_initial(table), cesh_initial(table)
    net = initial_network(table, root, nodes)
    loc = local(table)
    traces = {"ces": [], "cesh": [], "dcesh": []}
    violations: list = []
    sync = Trace(net)
    comm = 0

    def report(steps, verdict):
        return LockstepReport(t, steps, verdict, traces, violations, comm, sync)

    if not r_cfg(ces, cesh):
        return report(0, RelationBroken(0, "r_cfg", "initial configurations"))
    if not r_sync(cesh, net, k):
        return report(0, RelationBroken(0, "r_sync", "initial configurations"))

    step = 0
    while True:
        _check_invariants(step, ces, cesh, net, table, loc, violations)
        r1, r2 = step_ces(ces, table), step_cesh(cesh, table)
        v3 = halted_value(net, table)
        r3 = None
        if v3 is None:
            try:
                r3 = sync_step(net, loc, route)
            except NetworkError as e:
                r3 = Stuck(str(e))
            if r3 is None:
                r3 = Stuck("no enabled step")
        halts = [isinstance(r1, Halt), isinstance(r2, Halt), v3 is not None]
        stucks = [isinstance(r1, Stuck), isinstance(r2, Stuck), isinstance(r3, Stuck)]

        if any(halts) or any(stucks):
            states = f"ces={_state(r1)} cesh={_state(r2)} dcesh=" + (
                "halted" if v3 is not None else _state(r3))
            if all(halts):
                n1, n2, n3 = _nat_or_none(r1.value), _nat_or_none(r2.value), _nat_or_none(v3)
                if not n1 == n2 == n3:
                    return report(step, OutcomeMismatch(f"results differ: {r1.value} {r2.value} {v3}"))
                if oracle and n1 is not None:
                    ref = eval_reference(t, 10 * fuel + 1000)
                    if isinstance(ref, Halted) and ref.value != r1.value:
                        return report(step, OutcomeMismatch(f"reference evaluator gives {ref.value}, machines {r1.value}"))
                return report(step, AllAgree("halted", r1.value))
            if all(stucks):
                return report(step, AllAgree("stuck", r1.reason))
            return report(step, OutcomeMismatch(states))

        if step >= fuel:
            return report(step, AllAgree("fuel"))
        step += 1
        ev, net2 = r3
        if ev.kind == "comm":
            comm += 1
            receivers = [i for i, m in ev.mid.items() if loc(i, m, ev.msg)]
            if len(receivers) != 1:
                violations.append(("point-to-point", f"step {step}: {len(receivers)} nodes can receive {ev.msg}"))
        ces, cesh2 = r1.cfg, r2.cfg
        if mutate is not None:
            cesh2 = mutate(step, cesh2)
        if not heaps.is_prefix(cesh.heap, cesh2.heap):
            violations.append(("heap", f"step {step}: CESH heap shrank or changed"))
        for i in net:
            a, b = net[i], net2[i]
            if not (heaps.is_prefix(a.clos_heap, b.clos_heap) and heaps.is_prefix(a.cont_heap, b.cont_heap)):
                violations.append(("heap", f"step {step}: heaps of node {i} shrank or changed"))
        cesh, net = cesh2, net2
        traces["ces"].append(r1.rule)
        traces["cesh"].append(r2.rule)
        traces["dcesh"].append(",".join(ev.rules))
        sync.steps.append((ev, net))
        if not r_cfg(ces, cesh):
            return report(step, RelationBroken(step, "r_cfg", f"after {r1.rule}/{r2.rule}"))
        if not r_sync(cesh, net, k):
            return report(step, RelationBroken(step, "r_sync", f"after {r2.rule}/{','.join(ev.rules)}"))


def _check_invariants(step, ces, cesh, net, table, loc, violations) -> None:
    n1 = len(enumerate_ces_successors(ces, table))
    n2 = len(enumerate_cesh_successors(cesh, table))
    n3 = len(enumerate_sync_steps(net, loc))
    act = sum(1 for m in net.values() if is_active(m))
    if n1 > 1:
        violations.append(("determinism", f"step {step}: CES has {n1} successors"))
    if n2 > 1:
        violations.append(("determinism", f"step {step}: CESH has {n2} successors"))
    if n3 > 1:
        violations.append(("determinism", f"step {step}: network has {n3} enabled sync steps"))
    if act > 1:
        violations.append(("one-active", f"step {step}: {act} active nodes"))


def corrupt_heap(at_step: int) -> Callable:
    """A ``mutate`` hook that damages the first reachable closure cell from ``at_step`` on.

    The cell gets an extra environment entry, which no related CES closure has.
    """
    done = [False]

    def mutate(step: int, cfg: CeshConfig) -> CeshConfig:
        if done[0] or step < at_step:
            return cfg
        ptrs = [e.v.ptr for e in cfg.stack if isinstance(e, Val) and isinstance(e.v, ClosPtr)]
        ptrs += [v.ptr for v in cfg.env if isinstance(v, ClosPtr)]
        if not ptrs:
            return cfg
        done[0] = True
        cells = list(cfg.heap)
        code, env = cells[ptrs[0]]
        cells[ptrs[0]] = (code, env + (Nat(0),))
        return CeshConfig(cfg.pos, cfg.env, cfg.stack, heaps.from_cells(cells))

    return mutate


# -- sync vs async ------------------------------------------------------------

@dataclass
class EquivReport:
    problems: list = field(default_factory=list)
    sync_steps: int = 0
    async_steps: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems


def _same_event(a, b) -> bool:
    return (a.kind, a.node, a.rules, a.receiver, a.msg) == (b.kind, b.node, b.rules, b.receiver, b.msg)


def async_equiv(t: CoreTerm, fuel: int = 10000, nodes=("A",), root: str = "A", seed: int = 0,
                table: Optional[CodeTable] = None) -> EquivReport:
    table = table if table is not None else compile(t)
    rep = EquivReport()
    bad = rep.problems.append
    loc = local(table)
    start = initial_network(table, root, nodes)
    s = run_dcesh_sync(table, root, nodes, fuel)
    a = run_dcesh_async(table, root, nodes, 2 * fuel + 1)
    rep.sync_steps, rep.async_steps = s.steps, a.steps
    silent, comm = s.stats["silent"], s.stats["comm"]

    # verdicts and values
    if isinstance(s, Halted):
        if not isinstance(a, Halted):
            bad(f"sync halted, async {a.verdict}")
        elif a.value != s.value or a.final.nodes != s.final:
            bad("async halts in a different state")
        elif a.steps != silent + 2 * comm:
            bad(f"async took {a.steps} steps, expected {silent} + 2*{comm}")
    elif isinstance(s, FuelExhausted):
        if isinstance(a, Stuck) or (isinstance(a, Halted) and a.steps <= fuel):
            bad(f"sync ran out of fuel, async {a.verdict} after {a.steps} steps")
    elif not isinstance(a, Stuck):
        bad(f"sync stuck, async {a.verdict}")

    # sync -> async embedding
    sync_trace = Trace(start, s.trace)
    emb = sync_trace_to_async(sync_trace)
    if len(emb) != silent + 2 * comm:
        bad(f"embedding has {len(emb)} steps, expected {silent + 2 * comm}")
    try:
        replay_async(emb, loc)
    except InvalidTrace as e:
        bad(f"embedded trace does not replay: {e}")
    if emb.end.nodes != sync_trace.end:
        bad("embedded trace ends elsewhere")

    # async -> sync compression
    if isinstance(a, Halted):
        try:
            comp = async_trace_to_sync(Trace(AsyncNet(start, ()), a.trace), is_active)
            if comp.end != s.final or len(comp) != len(sync_trace) or not all(
                    _same_event(x, y) for (x, _), (y, _) in zip(comp.steps, sync_trace.steps)):
                bad("compressed async trace differs from the sync trace")
        except InvalidTrace as e:
            bad(f"async trace does not compress: {e}")

    # with at most one message in flight, scheduling cannot matter
    r = run_dcesh_async(table, root, nodes, 2 * fuel + 1, random_policy(seed))
    if [ev for ev, _ in r.trace] != [ev for ev, _ in a.trace] or r.verdict != a.verdict:
        bad("random scheduling changed the async run")
    if any(len(st.msgs) > 1 for _, st in a.trace):
        bad("more than one message in transit")
    return rep


def check_async_equiv(t: CoreTerm, fuel: int = 10000, nodes=("A",), root: str = "A") -> bool:
    return async_equiv(t, fuel, nodes, root).ok
