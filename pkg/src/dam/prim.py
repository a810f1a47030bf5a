"""Primitive arithmetic on 64-bit unsigned naturals."""

from __future__ import annotations

import enum

NAT_MAX = 2**64 - 1


class ArithmeticOverflow(ArithmeticError):
    pass


class PrimOp(enum.Enum):
    ADD = "+"
    MONUS = "-"
    MUL = "*"

    @classmethod
    def from_symbol(cls, sym: str) -> "PrimOp":
        for op in cls:
            if op.value == sym:
                return op
        raise ValueError(f"unknown operator {sym!r}")


def apply_prim(op: PrimOp, n1: int, n2: int) -> int:
    """Apply ``op`` with ``n1`` as the value nearer the stack top.

    ``n1`` is the left operand of the surface expression, so
    ``apply_prim(MONUS, a, b)`` computes ``a ∸ b``.
    """
    if op is PrimOp.ADD:
        r = n1 + n2
    elif op is PrimOp.MUL:
        r = n1 * n2
    elif op is PrimOp.MONUS:
        return max(n1 - n2, 0)
    else:
        raise ValueError(f"unknown operator {op!r}")
    if r > NAT_MAX:
        raise ArithmeticOverflow(f"{n1} {op.value} {n2} overflows 64 bits")
    return r
