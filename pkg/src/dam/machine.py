"""Pieces shared by every machine: code positions, stack elements, results."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Optional

from .bytecode import CodeTable

# (code ref, offset into its body); offset == len(body) is the terminator
Pos = tuple


def fetch(table: CodeTable, pos: Pos):
    """Instruction or terminator at ``pos``, and the position after it."""
    ref, off = pos
    code = table[ref]
    if off < len(code.body):
        return code.body[off], (ref, off + 1)
    return code.term, None


@dataclass(frozen=True)
class Nat:
    n: int


@dataclass(frozen=True)
class Val:
    v: Any


@dataclass(frozen=True)
class Cont:
    pos: Pos
    env: tuple


# -- single step results ----------------------------------------------------

@dataclass(frozen=True)
class Next:
    cfg: Any
    rule: str


@dataclass(frozen=True)
class Halt:
    value: Any


# -- run outcomes -----------------------------------------------------------

@dataclass
class Halted:
    value: Any
    steps: int
    final: Any = None
    trace: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    verdict = "halted"


@dataclass
class FuelExhausted:
    final: Any
    steps: int
    trace: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    verdict = "fuel"


@dataclass
class Stuck:
    """No rule applies.  Also used as the single-step result."""
    reason: str
    steps: int = 0
    final: Any = None
    trace: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    verdict = "stuck"


Outcome = Halted | FuelExhausted | Stuck


def run_machine(step: Callable, cfg, table: CodeTable, fuel: int,
                on_step: Optional[Callable] = None):
    """Drive a single-configuration machine until halt, stuck or out of fuel."""
    trace = []
    steps = 0
    while True:
        r = step(cfg, table)
        if isinstance(r, Halt):
            return Halted(r.value, steps, cfg, trace)
        if isinstance(r, Stuck):
            return Stuck(r.reason, steps, cfg, trace)
        if steps >= fuel:
            return FuelExhausted(cfg, steps, trace)
        steps += 1
        trace.append(r.rule)
        cfg = r.cfg
        if on_step is not None:
            on_step(steps, r.rule, cfg)


def lookup(env: tuple, n: int):
    return env[n] if 0 <= n < len(env) else None
