"""DCESH: the distributed CESH machine.

Every node runs a copy of the machine over the same code table.  Closure
values are remote pointers ``(ptr, node)``; a stack may end in a remote
pointer to a continuation stored on another node.  Work stays local (silent
steps) until a REMOTE instruction or an application of a closure owned by
another node forces a message.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import heap as heaps
from .bytecode import APPL, CLOS, COND, END, LIT, OP, REMOTE, RET, VAR, CodeTable
from .ces import stuck_reason
from .heap import Heap
from .machine import Cont, FuelExhausted, Halted, Nat, Stuck, Val, fetch, lookup
from .network import (SILENT, AsyncNet, NetworkError, Receive, Send, Trace, Transition,
                      async_step, fifo_policy, sync_step)
from .prim import ArithmeticOverflow, apply_prim


@dataclass(frozen=True)
class RemotePtr:
    ptr: int
    node: str

    def __str__(self):
        return f"({self.ptr},{self.node})"


@dataclass(frozen=True)
class RClos:
    rp: RemotePtr


@dataclass(frozen=True)
class DStack:
    elems: tuple = ()  # Val / Cont, top first
    bottom: Optional[RemotePtr] = None


@dataclass(frozen=True)
class DThread:
    pos: tuple
    env: tuple
    stack: DStack


@dataclass(frozen=True)
class DMachine:
    thread: Optional[DThread]
    clos_heap: Heap  # (code ref, env)
    cont_heap: Heap  # (Cont(pos, env), DStack)


def fmt_value(v) -> str:
    return f"nat:{v.n}" if isinstance(v, Nat) else f"clos:{v.rp}"


@dataclass(frozen=True)
class RemoteMsg:
    code: int
    target: str
    cont: RemotePtr

    def __str__(self):
        return f"REMOTE({self.code},{self.target},{self.cont})"


@dataclass(frozen=True)
class ApplMsg:
    clos: RemotePtr
    arg: object
    cont: RemotePtr

    def __str__(self):
        return f"APPL({self.clos},{fmt_value(self.arg)},{self.cont})"


@dataclass(frozen=True)
class RetMsg:
    cont: RemotePtr
    value: object

    def __str__(self):
        return f"RET({self.cont},{fmt_value(self.value)})"


def route(msg) -> str:
    if isinstance(msg, RemoteMsg):
        return msg.target
    if isinstance(msg, ApplMsg):
        return msg.clos.node
    return msg.cont.node


class NetworkConfigError(ValueError):
    pass


INACTIVE = DMachine(None, heaps.empty(), heaps.empty())


def initial_network(table: CodeTable, root: str, nodes) -> dict:
    nodes = list(dict.fromkeys(nodes))
    if root not in nodes:
        raise NetworkConfigError(f"root {root} is not among the nodes {','.join(nodes)}")
    missing = sorted(table.remote_nodes() - set(nodes))
    if missing:
        raise NetworkConfigError(f"program places code on undeclared node(s): {','.join(missing)}")
    return {n: (DMachine(DThread((table.root, 0), (), DStack()), heaps.empty(), heaps.empty())
                if n == root else INACTIVE) for n in nodes}


# -- local transitions ------------------------------------------------------

def _silent(rule, m, thread, clos_heap=None):
    return Transition(rule, SILENT, DMachine(thread, clos_heap or m.clos_heap, m.cont_heap))


def _push(th: DThread, nxt, v) -> DThread:
    return DThread(nxt, th.env, DStack((Val(v),) + th.stack.elems, th.stack.bottom))


def _send(rule, m, msg, cont_heap=None):
    return Transition(rule, Send(msg), DMachine(None, m.clos_heap, cont_heap or m.cont_heap))


def _running(i: str, m: DMachine, table: CodeTable) -> list:
    th = m.thread
    ins, nxt = fetch(table, th.pos)
    s, bottom = th.stack.elems, th.stack.bottom
    if isinstance(ins, VAR):
        v = lookup(th.env, ins.n)
        if v is not None:
            return [_silent("VAR", m, _push(th, nxt, v))]
    elif isinstance(ins, CLOS):
        h, p = m.clos_heap.alloc((ins.code, th.env))
        return [_silent("CLOS", m, _push(th, nxt, RClos(RemotePtr(p, i))), h)]
    elif isinstance(ins, LIT):
        return [_silent("LIT", m, _push(th, nxt, Nat(ins.n)))]
    elif isinstance(ins, OP):
        if (len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Val)
                and isinstance(s[0].v, Nat) and isinstance(s[1].v, Nat)):
            try:
                n = apply_prim(ins.op, s[0].v.n, s[1].v.n)
            except ArithmeticOverflow:
                return []
            return [_silent("OP", m, DThread(nxt, th.env, DStack((Val(Nat(n)),) + s[2:], bottom)))]
    elif isinstance(ins, COND):
        if s and isinstance(s[0], Val) and isinstance(s[0].v, Nat):
            zero = s[0].v.n == 0
            target = ins.then if zero else ins.else_
            return [_silent("COND-0" if zero else "COND-1+n", m,
                            DThread((target, 0), th.env, DStack(s[1:], bottom)))]
    elif isinstance(ins, APPL):
        if (len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Val)
                and isinstance(s[1].v, RClos)):
            rp, v = s[1].v.rp, s[0].v
            if rp.node == i:
                cell = m.clos_heap.deref(rp.ptr)
                if cell is None:
                    return []
                code, env = cell
                stack = DStack((Cont(nxt, th.env),) + s[2:], bottom)
                return [_silent("APPL", m, DThread((code, 0), (v,) + env, stack))]
            h, q = m.cont_heap.alloc((Cont(nxt, th.env), DStack(s[2:], bottom)))
            return [_send("APPL-send", m, ApplMsg(rp, v, RemotePtr(q, i)), h)]
    elif isinstance(ins, RET):
        if len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Cont):
            return [_silent("RET", m, DThread(s[1].pos, s[1].env, DStack((s[0],) + s[2:], bottom)))]
        if len(s) == 1 and isinstance(s[0], Val) and bottom is not None:
            return [_send("RET-send", m, RetMsg(bottom, s[0].v))]
    elif isinstance(ins, REMOTE):
        h, q = m.cont_heap.alloc((Cont(nxt, th.env), th.stack))
        return [_send("REMOTE-send", m, RemoteMsg(ins.code, ins.node, RemotePtr(q, i)), h)]
    return []


def _receive(i: str, m: DMachine, msg) -> list:
    if m.thread is not None or route(msg) != i:
        return []
    if isinstance(msg, RemoteMsg):
        th = DThread((msg.code, 0), (), DStack((), msg.cont))
        return [Transition("REMOTE-receive", Receive(msg), DMachine(th, m.clos_heap, m.cont_heap))]
    if isinstance(msg, ApplMsg):
        cell = m.clos_heap.deref(msg.clos.ptr)
        if cell is None:
            return []
        code, env = cell
        th = DThread((code, 0), (msg.arg,) + env, DStack((), msg.cont))
        return [Transition("APPL-receive", Receive(msg), DMachine(th, m.clos_heap, m.cont_heap))]
    cell = m.cont_heap.deref(msg.cont.ptr)
    if cell is None:
        return []
    k, s = cell
    th = DThread(k.pos, k.env, DStack((Val(msg.value),) + s.elems, s.bottom))
    return [Transition("RET-receive", Receive(msg), DMachine(th, m.clos_heap, m.cont_heap))]


def step_dcesh(i: str, m: DMachine, table: CodeTable, msg=None) -> list:
    """Transitions of node ``i``: silent and send ones, or those receiving ``msg``."""
    if msg is not None:
        return _receive(i, m, msg)
    if m.thread is None:
        return []
    return _running(i, m, table)


def local(table: CodeTable):
    return lambda i, m, msg=None: step_dcesh(i, m, table, msg)


# -- runs ---------------------------------------------------------------------

def is_active(m: DMachine) -> bool:
    return m.thread is not None


def active_nodes(nodes: dict) -> list:
    return [i for i, m in nodes.items() if is_active(m)]


def halted_value(nodes: dict, table: CodeTable):
    """The result if the unique active node is at END with a single value."""
    act = active_nodes(nodes)
    if len(act) != 1:
        return None
    th = nodes[act[0]].thread
    if (isinstance(fetch(table, th.pos)[0], END) and not th.env and th.stack.bottom is None
            and len(th.stack.elems) == 1 and isinstance(th.stack.elems[0], Val)):
        return th.stack.elems[0].v
    return None


def diagnose(nodes: dict, msgs: tuple, table: CodeTable) -> str:
    act = active_nodes(nodes)
    if len(act) > 1:
        return f"more than one active node: {','.join(act)}"
    if act:
        i = act[0]
        th = nodes[i].thread
        ins, _ = fetch(table, th.pos)
        s = th.stack.elems
        if (isinstance(ins, APPL) and len(s) >= 2 and isinstance(s[1], Val)
                and isinstance(s[1].v, RClos)):
            return f"APPL: dangling closure pointer {s[1].v.rp} on node {i}"
        if isinstance(ins, RET) and len(s) == 1 and th.stack.bottom is None:
            return "RET: no continuation under the value"
        return f"node {i}: " + stuck_reason(ins, th.env, s)
    if msgs:
        msg = msgs[0]
        r = route(msg)
        if r not in nodes:
            return f"{msg} is routed to unknown node {r}"
        if isinstance(msg, RemoteMsg):
            return f"node {r} cannot receive {msg}"
        ptr = msg.clos if isinstance(msg, ApplMsg) else msg.cont
        return f"dangling pointer {ptr} in {msg}"
    return "no running thread and no message in transit"


def _heap_sizes(nodes: dict) -> dict:
    return {i: (len(m.clos_heap), len(m.cont_heap)) for i, m in nodes.items()}


def _stats(nodes: dict, events) -> dict:
    kinds = [ev.kind for ev in events]
    comm = kinds.count("comm") + kinds.count("async-send")
    return {"silent": kinds.count("silent"), "comm": comm, "messages": comm,
            "heaps": _heap_sizes(nodes)}


def run_dcesh_sync(table: CodeTable, root: str = "A", nodes=("A",), fuel: int = 100000,
                   on_step=None):
    nodes = initial_network(table, root, nodes)
    trace = Trace(nodes)
    loc = local(table)
    steps = 0

    def done(cls, *args):
        return cls(*args, trace.steps, _stats(nodes, [ev for ev, _ in trace.steps]))

    while True:
        v = halted_value(nodes, table)
        if v is not None:
            return done(Halted, v, steps, nodes)
        try:
            r = sync_step(nodes, loc, route)
        except NetworkError as e:
            return done(Stuck, str(e), steps, nodes)
        if r is None:
            return done(Stuck, diagnose(nodes, (), table), steps, nodes)
        if steps >= fuel:
            return done(FuelExhausted, nodes, steps)
        steps += 1
        ev, nodes = r
        trace.steps.append((ev, nodes))
        if on_step is not None:
            on_step(steps, ev, nodes)


def run_dcesh_async(table: CodeTable, root: str = "A", nodes=("A",), fuel: int = 100000,
                    policy=fifo_policy, on_step=None):
    net = AsyncNet(initial_network(table, root, nodes), ())
    trace = Trace(net)
    loc = local(table)
    steps = 0

    def done(cls, *args):
        return cls(*args, trace.steps, _stats(net.nodes, [ev for ev, _ in trace.steps]))

    while True:
        v = None if net.msgs else halted_value(net.nodes, table)
        if v is not None:
            return done(Halted, v, steps, net)
        r = async_step(net, loc, policy)
        if r is None:
            return done(Stuck, diagnose(net.nodes, net.msgs, table), steps, net)
        if steps >= fuel:
            return done(FuelExhausted, net, steps)
        steps += 1
        ev, net = r
        trace.steps.append((ev, net))
        if on_step is not None:
            on_step(steps, ev, net)


def closure_summary(v: RClos, nodes: dict) -> str:
    cell = nodes[v.rp.node].clos_heap.deref(v.rp.ptr) if v.rp.node in nodes else None
    if cell is None:
        return f"clos dangling={v.rp}"
    return f"clos code={cell[0]} env={len(cell[1])}"


def format_heaps(nodes: dict) -> list[str]:
    """One s-expression per heap cell, for ``--dump-heap``."""
    out = []
    for i, m in nodes.items():
        for p, (code, env) in enumerate(m.clos_heap):
            out.append(f"({i} clos {p} (code {code}) (env {' '.join(map(fmt_value, env))}))")
        for p, (k, s) in enumerate(m.cont_heap):
            bottom = f" (bottom {s.bottom})" if s.bottom is not None else ""
            out.append(f"({i} cont {p} (pos {k.pos[0]} {k.pos[1]}) (depth {len(s.elems)}){bottom})")
    return out
