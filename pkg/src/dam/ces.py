"""The CES machine: code, environment, stack.

Every later machine is checked against this one.  Closures are trees here
(code ref plus environment); there is no heap.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bytecode import APPL, CLOS, COND, END, LIT, OP, REMOTE, RET, VAR, CodeTable
from .machine import Cont, Halt, Nat, Next, Stuck, Val, fetch, lookup, run_machine
from .prim import ArithmeticOverflow, apply_prim


@dataclass(frozen=True)
class Clos:
    code: int
    env: tuple


@dataclass(frozen=True)
class CesConfig:
    pos: tuple
    env: tuple
    stack: tuple  # top first


def initial(table: CodeTable) -> CesConfig:
    return CesConfig((table.root, 0), (), ())


# Each rule returns the successor configuration or None when it does not apply.

def _var(cfg, i, nxt, table):
    if isinstance(i, VAR):
        v = lookup(cfg.env, i.n)
        if v is not None:
            return CesConfig(nxt, cfg.env, (Val(v),) + cfg.stack)


def _clos(cfg, i, nxt, table):
    if isinstance(i, CLOS):
        return CesConfig(nxt, cfg.env, (Val(Clos(i.code, cfg.env)),) + cfg.stack)


def _appl(cfg, i, nxt, table):
    s = cfg.stack
    if (isinstance(i, APPL) and len(s) >= 2 and isinstance(s[0], Val)
            and isinstance(s[1], Val) and isinstance(s[1].v, Clos)):
        f = s[1].v
        return CesConfig((f.code, 0), (s[0].v,) + f.env, (Cont(nxt, cfg.env),) + s[2:])


def _ret(cfg, i, nxt, table):
    s = cfg.stack
    if isinstance(i, RET) and len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Cont):
        return CesConfig(s[1].pos, s[1].env, (s[0],) + s[2:])


def _lit(cfg, i, nxt, table):
    if isinstance(i, LIT):
        return CesConfig(nxt, cfg.env, (Val(Nat(i.n)),) + cfg.stack)


def _op(cfg, i, nxt, table):
    s = cfg.stack
    if (isinstance(i, OP) and len(s) >= 2 and isinstance(s[0], Val) and isinstance(s[1], Val)
            and isinstance(s[0].v, Nat) and isinstance(s[1].v, Nat)):
        try:
            n = apply_prim(i.op, s[0].v.n, s[1].v.n)
        except ArithmeticOverflow:
            return None
        return CesConfig(nxt, cfg.env, (Val(Nat(n)),) + s[2:])


def _nat_on_top(s, zero: bool):
    return (len(s) >= 1 and isinstance(s[0], Val) and isinstance(s[0].v, Nat)
            and (s[0].v.n == 0) == zero)


def _cond0(cfg, i, nxt, table):
    if isinstance(i, COND) and _nat_on_top(cfg.stack, True):
        return CesConfig((i.then, 0), cfg.env, cfg.stack[1:])


def _cond1(cfg, i, nxt, table):
    if isinstance(i, COND) and _nat_on_top(cfg.stack, False):
        return CesConfig((i.else_, 0), cfg.env, cfg.stack[1:])


def _remote(cfg, i, nxt, table):
    if isinstance(i, REMOTE):
        return CesConfig((i.code, 0), (), (Cont(nxt, cfg.env),) + cfg.stack)


RULES = (
    ("VAR", _var), ("CLOS", _clos), ("APPL", _appl), ("RET", _ret), ("LIT", _lit),
    ("OP", _op), ("COND-0", _cond0), ("COND-1+n", _cond1), ("REMOTE", _remote),
)


def enumerate_ces_successors(cfg: CesConfig, table: CodeTable) -> list:
    """Every (rule, successor) pair whose premises hold at ``cfg``."""
    i, nxt = fetch(table, cfg.pos)
    out = []
    for name, rule in RULES:
        c = rule(cfg, i, nxt, table)
        if c is not None:
            out.append((name, c))
    return out


def stuck_reason(instr, env: tuple, stack: tuple, value_type=None) -> str:
    """Explain why no rule applies to ``instr`` (shared by the heap machines)."""
    name = type(instr).__name__
    if isinstance(instr, VAR):
        return f"VAR {instr.n}: unbound (environment has {len(env)} entries)"
    if isinstance(instr, APPL):
        if len(stack) < 2:
            return "APPL: fewer than two stack elements"
        return "APPL: expected an argument over a closure value"
    if isinstance(instr, RET):
        return "RET: expected a value over a continuation"
    if isinstance(instr, OP):
        if (len(stack) >= 2 and all(isinstance(e, Val) and isinstance(e.v, Nat) for e in stack[:2])):
            return f"OP {instr.op.value}: arithmetic overflow"
        return f"OP {instr.op.value}: expected two naturals"
    if isinstance(instr, COND):
        return "COND: expected a natural on top of the stack"
    if isinstance(instr, END):
        return f"END: expected empty environment and one value, got {len(env)} and {len(stack)}"
    return f"{name}: no rule applies"


def step_ces(cfg: CesConfig, table: CodeTable):
    i, nxt = fetch(table, cfg.pos)
    if isinstance(i, END):
        if not cfg.env and len(cfg.stack) == 1 and isinstance(cfg.stack[0], Val):
            return Halt(cfg.stack[0].v)
        return Stuck(stuck_reason(i, cfg.env, cfg.stack))
    for name, rule in RULES:
        c = rule(cfg, i, nxt, table)
        if c is not None:
            return Next(c, name)
    return Stuck(stuck_reason(i, cfg.env, cfg.stack))


def run_ces(table: CodeTable, fuel: int, on_step=None):
    return run_machine(step_ces, initial(table), table, fuel, on_step)
