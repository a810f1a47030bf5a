"""The CESH machine: CES with closures allocated in a heap.

Closure values are heap pointers.  Continuations stay on the stack as
(code position, environment) pairs, exactly as in CES.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import heap as heaps
from .bytecode import APPL, CLOS, COND, END, LIT, OP, REMOTE, RET, VAR, CodeTable
from .ces import stuck_reason
from .heap import Heap
from .machine import Cont, Halt, Nat, Next, Stuck, Val, fetch, lookup, run_machine
from .prim import ArithmeticOverflow, apply_prim


@dataclass(frozen=True)
class ClosPtr:
    ptr: int


@dataclass(frozen=True)
class CeshConfig:
    pos: tuple
    env: tuple
    stack: tuple
    heap: Heap  # cells are (code ref, env)


def initial(table: CodeTable) -> CeshConfig:
    return CeshConfig((table.root, 0), (), (), heaps.empty())


def _var(cfg, i, nxt):
    if isinstance(i, VAR):
        v = lookup(cfg.env, i.n)
        if v is not None:
            return CeshConfig(nxt, cfg.env, (Val(v),) + cfg.stack, cfg.heap)


def _clos(cfg, i, nxt):
    if isinstance(i, CLOS):
        h, p = cfg.heap.alloc((i.code, cfg.env))
        return CeshConfig(nxt, cfg.env, (Val(ClosPtr(p)),) + cfg.stack, h)


def _appl(cfg, i, nxt):
    s = cfg.stack
    if (isinstance(i, APPL) and len(s) >= 2 and isinstance(s[0], Val)
            and isinstance(s[1], Val) and isinstance(s[1].v, ClosPtr)):
        cell = cfg.heap.deref(s[1].v.ptr)
        if cell is not None:
            code, env = cell
            return CeshConfig((code, 0), (s[0].v,) + env, (Cont(nxt, cfg.env),) + s[2:], cfg.heap)


def _ret(cfg, i, nxt):
    s = cfg.stack
    if isinstance(i, RET) and len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Cont):
        return CeshConfig(s[1].pos, s[1].env, (s[0],) + s[2:], cfg.heap)


def _lit(cfg, i, nxt):
    if isinstance(i, LIT):
        return CeshConfig(nxt, cfg.env, (Val(Nat(i.n)),) + cfg.stack, cfg.heap)


def _op(cfg, i, nxt):
    s = cfg.stack
    if (isinstance(i, OP) and len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Val)
            and isinstance(s[0].v, Nat) and isinstance(s[1].v, Nat)):
        try:
            n = apply_prim(i.op, s[0].v.n, s[1].v.n)
        except ArithmeticOverflow:
            return None
        return CeshConfig(nxt, cfg.env, (Val(Nat(n)),) + s[2:], cfg.heap)


def _top_nat(s):
    if s and isinstance(s[0], Val) and isinstance(s[0].v, Nat):
        return s[0].v.n
    return None


def _cond0(cfg, i, nxt):
    if isinstance(i, COND) and _top_nat(cfg.stack) == 0:
        return CeshConfig((i.then, 0), cfg.env, cfg.stack[1:], cfg.heap)


def _cond1(cfg, i, nxt):
    n = _top_nat(cfg.stack)
    if isinstance(i, COND) and n is not None and n > 0:
        return CeshConfig((i.else_, 0), cfg.env, cfg.stack[1:], cfg.heap)


def _remote(cfg, i, nxt):
    if isinstance(i, REMOTE):
        return CeshConfig((i.code, 0), (), (Cont(nxt, cfg.env),) + cfg.stack, cfg.heap)


RULES = (
    ("VAR", _var), ("CLOS", _clos), ("APPL", _appl), ("RET", _ret), ("LIT", _lit),
    ("OP", _op), ("COND-0", _cond0), ("COND-1+n", _cond1), ("REMOTE", _remote),
)


def enumerate_cesh_successors(cfg: CeshConfig, table: CodeTable) -> list:
    i, nxt = fetch(table, cfg.pos)
    out = []
    for name, rule in RULES:
        c = rule(cfg, i, nxt)
        if c is not None:
            out.append((name, c))
    return out


def step_cesh(cfg: CeshConfig, table: CodeTable):
    i, nxt = fetch(table, cfg.pos)
    if isinstance(i, END):
        # any final heap is fine
        if not cfg.env and len(cfg.stack) == 1 and isinstance(cfg.stack[0], Val):
            return Halt(cfg.stack[0].v)
        return Stuck(stuck_reason(i, cfg.env, cfg.stack))
    for name, rule in RULES:
        c = rule(cfg, i, nxt)
        if c is not None:
            return Next(c, name)
    s = cfg.stack
    if (isinstance(i, APPL) and len(s) >= 2 and isinstance(s[1], Val)
            and isinstance(s[1].v, ClosPtr)):
        return Stuck(f"APPL: dangling closure pointer {s[1].v.ptr}")
    return Stuck(stuck_reason(i, cfg.env, cfg.stack))


def run_cesh(table: CodeTable, fuel: int, on_step=None):
    return run_machine(step_cesh, initial(table), table, fuel, on_step)


def format_heap(h: Heap) -> list[str]:
    """One s-expression per cell, for ``--dump-heap``."""
    return [f"({p} (clos {code} (env {' '.join(format_value(v) for v in env)})))"
            for p, (code, env) in enumerate(h)]


def format_value(v) -> str:
    if isinstance(v, Nat):
        return f"(nat {v.n})"
    return f"(ptr {v.ptr})"
