"""Instruction set, code tables and the compiler.

Code fragments live in a :class:`CodeTable` and refer to each other by
index (a *code ref*).  Fragments are hash-consed while compiling, and
:func:`compile` prunes the table to the fragments reachable from the root.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .prim import PrimOp
from .syntax import App, At, CoreTerm, If0, Lam, Lit, Op, Var, check_closed_at


# -- instructions -----------------------------------------------------------

@dataclass(frozen=True)
class VAR:
    n: int


@dataclass(frozen=True)
class CLOS:
    code: int


@dataclass(frozen=True)
class APPL:
    pass


@dataclass(frozen=True)
class LIT:
    n: int


@dataclass(frozen=True)
class OP:
    op: PrimOp


@dataclass(frozen=True)
class REMOTE:
    code: int
    node: str


Instr = Union[VAR, CLOS, APPL, LIT, OP, REMOTE]


@dataclass(frozen=True)
class END:
    pass


@dataclass(frozen=True)
class RET:
    pass


@dataclass(frozen=True)
class COND:
    then: int
    else_: int


Terminator = Union[END, RET, COND]


@dataclass(frozen=True)
class Code:
    body: tuple
    term: Terminator


@dataclass(frozen=True)
class CodeTable:
    entries: tuple
    root: int

    def __getitem__(self, ref: int) -> Code:
        return self.entries[ref]

    def __len__(self) -> int:
        return len(self.entries)

    def refs(self, ref: int) -> list[int]:
        """Code refs mentioned by fragment ``ref``."""
        code = self.entries[ref]
        out = [i.code for i in code.body if isinstance(i, (CLOS, REMOTE))]
        if isinstance(code.term, COND):
            out += [code.term.then, code.term.else_]
        return out

    def instruction_count(self) -> int:
        return sum(len(c.body) + 1 for c in self.entries)

    def remote_nodes(self) -> set:
        return {i.node for c in self.entries for i in c.body if isinstance(i, REMOTE)}


class CompileError(ValueError):
    pass


class BytecodeSyntaxError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"offset {offset}: {message}")
        self.offset = offset


# -- compiler ---------------------------------------------------------------

class _Builder:
    def __init__(self, entries=()):
        self.entries = list(entries)
        self.index = {c: i for i, c in enumerate(self.entries)}

    def intern(self, code: Code) -> int:
        ref = self.index.get(code)
        if ref is None:
            ref = len(self.entries)
            self.entries.append(code)
            self.index[code] = ref
        return ref

    def prefix(self, instr: Instr, k: int) -> int:
        c = self.entries[k]
        return self.intern(Code((instr,) + c.body, c.term))

    def compile(self, t: CoreTerm, k: int) -> int:
        if isinstance(t, Lam):
            body = self.compile(t.body, self.intern(Code((), RET())))
            return self.prefix(CLOS(body), k)
        if isinstance(t, App):
            return self.compile(t.fn, self.compile(t.arg, self.prefix(APPL(), k)))
        if isinstance(t, Var):
            return self.prefix(VAR(t.index), k)
        if isinstance(t, Lit):
            return self.prefix(LIT(t.n), k)
        if isinstance(t, Op):
            # right operand first, so the left one ends up on top
            return self.compile(t.rhs, self.compile(t.lhs, self.prefix(OP(t.op), k)))
        if isinstance(t, If0):
            then = self.compile(t.then, k)
            else_ = self.compile(t.else_, k)
            return self.compile(t.cond, self.intern(Code((), COND(then, else_))))
        if isinstance(t, At):
            body = self.compile(t.body, self.intern(Code((), RET())))
            return self.prefix(REMOTE(body, t.node), k)
        raise TypeError(f"not a core term: {t!r}")


def compile_tail(t: CoreTerm, k: int, table: CodeTable) -> tuple[int, CodeTable]:
    """Compile ``t`` followed by fragment ``k``; returns the head ref and the grown table."""
    b = _Builder(table.entries)
    ref = b.compile(t, k)
    return ref, CodeTable(tuple(b.entries), table.root)


def reachable(table: CodeTable, root: int | None = None) -> list[int]:
    """Refs reachable from ``root`` in breadth-first order, root first."""
    root = table.root if root is None else root
    seen, order, queue = {root}, [root], [root]
    while queue:
        nxt = []
        for r in queue:
            for s in table.refs(r):
                if s not in seen:
                    seen.add(s)
                    order.append(s)
                    nxt.append(s)
        queue = nxt
    return order


def _renumber(code: Code, m: dict) -> Code:
    body = []
    for i in code.body:
        if isinstance(i, CLOS):
            i = CLOS(m[i.code])
        elif isinstance(i, REMOTE):
            i = REMOTE(m[i.code], i.node)
        body.append(i)
    term = code.term
    if isinstance(term, COND):
        term = COND(m[term.then], m[term.else_])
    return Code(tuple(body), term)


def prune(table: CodeTable) -> CodeTable:
    """Drop unreachable fragments and renumber so the root is 0."""
    order = reachable(table)
    m = {old: new for new, old in enumerate(order)}
    return CodeTable(tuple(_renumber(table[o], m) for o in order), 0)


def compile(t: CoreTerm) -> CodeTable:
    bad = check_closed_at(t)
    if bad:
        raise CompileError("; ".join(str(v) for v in bad))
    b = _Builder()
    root = b.compile(t, b.intern(Code((), END())))
    return prune(CodeTable(tuple(b.entries), root))


# -- pretty form --------------------------------------------------------------

def format_code(table: CodeTable, ref: int) -> str:
    """Nested rendering in the usual notation, e.g. ``CLOS (VAR 0 ; RET) ; END``."""
    code = table[ref]
    parts = []
    for i in code.body:
        if isinstance(i, VAR):
            parts.append(f"VAR {i.n}")
        elif isinstance(i, CLOS):
            parts.append(f"CLOS ({format_code(table, i.code)})")
        elif isinstance(i, APPL):
            parts.append("APPL")
        elif isinstance(i, LIT):
            parts.append(f"LIT {i.n}")
        elif isinstance(i, OP):
            parts.append(f"OP {i.op.value}")
        elif isinstance(i, REMOTE):
            parts.append(f"REMOTE ({format_code(table, i.code)}) {i.node}")
    t = code.term
    if isinstance(t, END):
        parts.append("END")
    elif isinstance(t, RET):
        parts.append("RET")
    else:
        parts.append(f"COND ({format_code(table, t.then)}) ({format_code(table, t.else_)})")
    return " ; ".join(parts)


# -- .dam serialization -----------------------------------------------------

def _instr_text(i: Instr) -> str:
    if isinstance(i, VAR):
        return f"(var {i.n})"
    if isinstance(i, CLOS):
        return f"(clos {i.code})"
    if isinstance(i, APPL):
        return "appl"
    if isinstance(i, LIT):
        return f"(lit {i.n})"
    if isinstance(i, OP):
        return f"(op {i.op.value})"
    return f"(remote {i.code} {i.node})"


def _term_text(t: Terminator) -> str:
    if isinstance(t, END):
        return "end"
    if isinstance(t, RET):
        return "ret"
    return f"(cond {t.then} {t.else_})"


def serialize(table: CodeTable) -> str:
    lines = [f"(table root {table.root}"]
    for code in table.entries:
        items = [_instr_text(i) for i in code.body] + [_term_text(code.term)]
        lines.append("  (code " + " ".join(items) + ")")
    return "\n".join(lines) + ")\n"


_TOKEN = re.compile(r"\s*(?:(\()|(\))|([^\s()]+))")


def _sexp_tokens(text: str):
    """Yield (kind, text, offset) with 1-based offsets."""
    pos = 0
    while True:
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        kind = "(" if m.group(1) else ")" if m.group(2) else "atom"
        start = m.start(m.lastindex)
        yield kind, m.group(m.lastindex), start + 1
        pos = m.end()


def _read_sexp(text: str):
    """Read one s-expression; atoms carry their offsets."""
    toks = list(_sexp_tokens(text))
    eof = len(text) + 1
    pos = 0

    def read():
        nonlocal pos
        if pos >= len(toks):
            raise BytecodeSyntaxError("unexpected end of input", eof)
        kind, s, off = toks[pos]
        pos += 1
        if kind == "atom":
            return (s, off)
        if kind == ")":
            raise BytecodeSyntaxError("unexpected ')'", off)
        items = []
        while True:
            if pos >= len(toks):
                raise BytecodeSyntaxError("unbalanced parentheses: missing ')'", eof)
            if toks[pos][0] == ")":
                pos += 1
                return (items, off)
            items.append(read())

    value = read()
    if pos < len(toks):
        raise BytecodeSyntaxError("trailing input", toks[pos][2])
    return value


def _nat(node) -> int:
    s, off = node
    if not isinstance(s, str) or not s.isdigit():
        raise BytecodeSyntaxError("expected a natural number", off)
    return int(s)


def _head(node) -> tuple[str, list, int]:
    v, off = node
    if isinstance(v, str):
        return v, [], off
    if not v or not isinstance(v[0][0], str):
        raise BytecodeSyntaxError("expected a keyword", off)
    return v[0][0], v[1:], off


def _parse_code(node) -> Code:
    head, args, off = _head(node)
    if head != "code" or isinstance(node[0], str):
        raise BytecodeSyntaxError("expected (code ...)", off)
    if not args:
        raise BytecodeSyntaxError("code fragment without terminator", off)
    body = []
    for item in args[:-1]:
        h, a, o = _head(item)
        if h == "appl" and isinstance(item[0], str):
            body.append(APPL())
        elif h == "var" and len(a) == 1:
            body.append(VAR(_nat(a[0])))
        elif h == "clos" and len(a) == 1:
            body.append(CLOS(_nat(a[0])))
        elif h == "lit" and len(a) == 1:
            body.append(LIT(_nat(a[0])))
        elif h == "op" and len(a) == 1 and a[0][0] in ("+", "-", "*"):
            body.append(OP(PrimOp.from_symbol(a[0][0])))
        elif h == "remote" and len(a) == 2 and isinstance(a[1][0], str) and a[1][0][:1].isupper():
            body.append(REMOTE(_nat(a[0]), a[1][0]))
        else:
            raise BytecodeSyntaxError(f"bad instruction {h!r}", o)
    h, a, o = _head(args[-1])
    if h == "end" and isinstance(args[-1][0], str):
        term = END()
    elif h == "ret" and isinstance(args[-1][0], str):
        term = RET()
    elif h == "cond" and len(a) == 2:
        term = COND(_nat(a[0]), _nat(a[1]))
    else:
        raise BytecodeSyntaxError(f"bad terminator {h!r}", o)
    return Code(tuple(body), term)


def deserialize(text: str) -> CodeTable:
    """Inverse of :func:`serialize`; a bare ``(code ...)`` is a one-fragment table."""
    tree = _read_sexp(text)
    head, args, off = _head(tree)
    if head == "code":
        table = CodeTable((_parse_code(tree),), 0)
    elif head == "table":
        if len(args) < 2 or args[0][0] != "root":
            raise BytecodeSyntaxError("expected (table root N ...)", off)
        root = _nat(args[1])
        table = CodeTable(tuple(_parse_code(c) for c in args[2:]), root)
    else:
        raise BytecodeSyntaxError(f"unknown form {head!r}", off)
    validate(table)
    return table


def validate(table: CodeTable) -> None:
    n = len(table)
    if not 0 <= table.root < n:
        raise ValueError(f"root {table.root} out of range")
    for r in range(n):
        for s in table.refs(r):
            if not 0 <= s < n:
                raise ValueError(f"fragment {r} refers to missing fragment {s}")
    # reference graph must be acyclic
    state = {}
    for start in range(n):
        if start in state:
            continue
        stack = [(start, iter(table.refs(start)))]
        state[start] = 1
        while stack:
            r, it = stack[-1]
            s = next(it, None)
            if s is None:
                state[r] = 2
                stack.pop()
            elif state.get(s) == 1:
                raise ValueError(f"cyclic code reference through fragment {s}")
            elif s not in state:
                state[s] = 1
                stack.append((s, iter(table.refs(s))))
