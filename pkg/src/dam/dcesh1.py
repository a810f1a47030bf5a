"""DCESH1: a one-node machine that turns every APPL and RET into messages.

It runs as the only node of an asynchronous network and talks to itself.
Stacks hold plain values with an optional continuation pointer at the
bottom; continuations live in a second heap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from . import heap as heaps
from .bytecode import APPL, CLOS, COND, END, LIT, OP, REMOTE, RET, VAR, CodeTable
from .ces import stuck_reason
from .cesh import ClosPtr
from .heap import Heap
from .machine import FuelExhausted, Halted, Nat, Stuck, Val, fetch, lookup
from .network import (SILENT, AsyncNet, Receive, Send, Trace, Transition, async_step,
                      fifo_policy)
from .prim import ArithmeticOverflow, apply_prim


@dataclass(frozen=True)
class Thread:
    pos: tuple
    env: tuple
    stack: tuple  # values, top first
    ret: Optional[int] = None  # continuation pointer under the stack


@dataclass(frozen=True)
class D1Machine:
    thread: Optional[Thread]
    clos_heap: Heap  # (code ref, env)
    cont_heap: Heap  # ((pos, env), stack, ret)


@dataclass(frozen=True)
class Appl:
    clos: int
    arg: object
    cont: int

    def __str__(self):
        return f"APPL({self.clos},{_v(self.arg)},{self.cont})"


@dataclass(frozen=True)
class Ret:
    cont: int
    value: object

    def __str__(self):
        return f"RET({self.cont},{_v(self.value)})"


def _v(v) -> str:
    return f"nat:{v.n}" if isinstance(v, Nat) else f"clos:{v.ptr}"


class CompileTargetError(ValueError):
    pass


def initial(table: CodeTable) -> D1Machine:
    return D1Machine(Thread((table.root, 0), (), ()), heaps.empty(), heaps.empty())


def _silent(rule, m: D1Machine, thread, clos_heap=None):
    return Transition(rule, SILENT, D1Machine(thread, clos_heap or m.clos_heap, m.cont_heap))


def _running(m: D1Machine, table: CodeTable) -> list:
    th = m.thread
    i, nxt = fetch(table, th.pos)
    s = th.stack
    if isinstance(i, VAR):
        v = lookup(th.env, i.n)
        if v is not None:
            return [_silent("VAR", m, Thread(nxt, th.env, (v,) + s, th.ret))]
    elif isinstance(i, CLOS):
        h, p = m.clos_heap.alloc((i.code, th.env))
        return [_silent("CLOS", m, Thread(nxt, th.env, (ClosPtr(p),) + s, th.ret), h)]
    elif isinstance(i, LIT):
        return [_silent("LIT", m, Thread(nxt, th.env, (Nat(i.n),) + s, th.ret))]
    elif isinstance(i, OP):
        if len(s) >= 2 and isinstance(s[0], Nat) and isinstance(s[1], Nat):
            try:
                n = apply_prim(i.op, s[0].n, s[1].n)
            except ArithmeticOverflow:
                return []
            return [_silent("OP", m, Thread(nxt, th.env, (Nat(n),) + s[2:], th.ret))]
    elif isinstance(i, COND):
        if s and isinstance(s[0], Nat):
            target = i.then if s[0].n == 0 else i.else_
            rule = "COND-0" if s[0].n == 0 else "COND-1+n"
            return [_silent(rule, m, Thread((target, 0), th.env, s[1:], th.ret))]
    elif isinstance(i, APPL):
        if len(s) >= 2 and isinstance(s[1], ClosPtr):
            h, q = m.cont_heap.alloc(((nxt, th.env), s[2:], th.ret))
            msg = Appl(s[1].ptr, s[0], q)
            return [Transition("APPL-send", Send(msg), D1Machine(None, m.clos_heap, h))]
    elif isinstance(i, RET):
        if len(s) == 1 and th.ret is not None:
            msg = Ret(th.ret, s[0])
            return [Transition("RET-send", Send(msg), D1Machine(None, m.clos_heap, m.cont_heap))]
    return []


def _receive(m: D1Machine, msg) -> list:
    if m.thread is not None:
        return []
    if isinstance(msg, Appl):
        cell = m.clos_heap.deref(msg.clos)
        if cell is not None:
            code, env = cell
            th = Thread((code, 0), (msg.arg,) + env, (), msg.cont)
            return [Transition("APPL-receive", Receive(msg), D1Machine(th, m.clos_heap, m.cont_heap))]
    elif isinstance(msg, Ret):
        cell = m.cont_heap.deref(msg.cont)
        if cell is not None:
            (pos, env), s, r = cell
            th = Thread(pos, env, (msg.value,) + s, r)
            return [Transition("RET-receive", Receive(msg), D1Machine(th, m.clos_heap, m.cont_heap))]
    return []


def step_dcesh1(m: D1Machine, table: CodeTable, msg=None) -> list:
    """Transitions of ``m``: silent and send ones, or those receiving ``msg``."""
    if msg is not None:
        return _receive(m, msg)
    if m.thread is None:
        return []
    return _running(m, table)


def local(table: CodeTable):
    """Local step function for the network engine; the node name is ignored."""
    return lambda node, m, msg=None: step_dcesh1(m, table, msg)


def halted_value(net: AsyncNet):
    if net.msgs:
        return None
    (m,) = net.nodes.values()
    th = m.thread
    if (th is not None and th.ret is None and not th.env and len(th.stack) == 1):
        return th.stack[0]
    return None


def _at_end(m: D1Machine, table: CodeTable) -> bool:
    return m.thread is not None and isinstance(fetch(table, m.thread.pos)[0], END)


def diagnose(net: AsyncNet, table: CodeTable) -> str:
    (m,) = net.nodes.values()
    th = m.thread
    if th is not None:
        i, _ = fetch(table, th.pos)
        if isinstance(i, REMOTE):
            return "REMOTE: not supported on this machine"
        if isinstance(i, RET) and th.ret is None:
            return "RET: no continuation pointer under the stack"
        if isinstance(i, RET):
            return f"RET: expected exactly one value, got {len(th.stack)}"
        return stuck_reason(i, th.env, tuple(Val(v) for v in th.stack))
    if not net.msgs:
        return "no running thread and no message in transit"
    msg = net.msgs[0]
    if isinstance(msg, Appl):
        return f"dangling closure pointer {msg.clos} in {msg}"
    return f"dangling continuation pointer {msg.cont} in {msg}"


def run_dcesh1(table: CodeTable, fuel: int, policy=fifo_policy, node: str = "A",
               on_step=None):
    if table.remote_nodes():
        raise CompileTargetError("program uses REMOTE, which this machine does not support")
    net = AsyncNet({node: initial(table)}, ())
    trace = Trace(net)
    steps = 0
    while True:
        v = halted_value(net)
        if v is not None and _at_end(net.nodes[node], table):
            return Halted(v, steps, net, trace.steps, _stats(net, trace))
        r = async_step(net, local(table), policy)
        if r is None:
            return Stuck(diagnose(net, table), steps, net, trace.steps, _stats(net, trace))
        if steps >= fuel:
            return FuelExhausted(net, steps, trace.steps, _stats(net, trace))
        steps += 1
        ev, net = r
        trace.steps.append((ev, net))
        if on_step is not None:
            on_step(steps, ev, net)


def _stats(net: AsyncNet, trace: Trace) -> dict:
    m = next(iter(net.nodes.values()))
    sends = sum(1 for ev, _ in trace.steps if ev.kind == "async-send")
    return {"messages": sends, "clos_heap": len(m.clos_heap), "cont_heap": len(m.cont_heap)}
