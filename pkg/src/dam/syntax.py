"""Surface language: parser, de Bruijn resolution, closedness of located terms.

Concrete syntax::

    term    := 'fn' ident '.' term
             | 'let' ident '=' term 'in' term
             | 'if0' term 'then' term 'else' term
             | located
    located := sum ('@' Node)*
    sum     := prod (('+' | '-') prod)*
    prod    := app ('*' app)*
    app     := atom+ [keyword-term]
    atom    := ident | nat | '(' term ')'

``-`` is truncated subtraction.  ``--`` starts a comment running to the end
of the line.  Identifiers start with a lowercase letter, node names with an
uppercase letter.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Union

from .prim import NAT_MAX, PrimOp

KEYWORDS = frozenset({"fn", "let", "in", "if0", "then", "else"})


# -- surface terms ----------------------------------------------------------

@dataclass(frozen=True)
class SVar:
    name: str


@dataclass(frozen=True)
class SLam:
    param: str
    body: "SurfaceTerm"


@dataclass(frozen=True)
class SApp:
    fn: "SurfaceTerm"
    arg: "SurfaceTerm"


@dataclass(frozen=True)
class SLit:
    n: int


@dataclass(frozen=True)
class SBinOp:
    op: PrimOp
    lhs: "SurfaceTerm"
    rhs: "SurfaceTerm"


@dataclass(frozen=True)
class SIf0:
    cond: "SurfaceTerm"
    then: "SurfaceTerm"
    else_: "SurfaceTerm"


@dataclass(frozen=True)
class SAt:
    body: "SurfaceTerm"
    node: str


@dataclass(frozen=True)
class SLet:
    name: str
    bound: "SurfaceTerm"
    body: "SurfaceTerm"


SurfaceTerm = Union[SVar, SLam, SApp, SLit, SBinOp, SIf0, SAt, SLet]


# -- core terms (de Bruijn) -------------------------------------------------

@dataclass(frozen=True)
class Lam:
    body: "CoreTerm"


@dataclass(frozen=True)
class App:
    fn: "CoreTerm"
    arg: "CoreTerm"


@dataclass(frozen=True)
class Var:
    index: int


@dataclass(frozen=True)
class Lit:
    n: int


@dataclass(frozen=True)
class Op:
    op: PrimOp
    lhs: "CoreTerm"
    rhs: "CoreTerm"


@dataclass(frozen=True)
class If0:
    cond: "CoreTerm"
    then: "CoreTerm"
    else_: "CoreTerm"


@dataclass(frozen=True)
class At:
    body: "CoreTerm"
    node: str


CoreTerm = Union[Lam, App, Var, Lit, Op, If0, At]


def children(t: CoreTerm) -> tuple:
    if isinstance(t, (Lam, At)):
        return (t.body,)
    if isinstance(t, App):
        return (t.fn, t.arg)
    if isinstance(t, Op):
        return (t.lhs, t.rhs)
    if isinstance(t, If0):
        return (t.cond, t.then, t.else_)
    return ()


def size(t: CoreTerm) -> int:
    """Number of AST nodes."""
    return 1 + sum(size(c) for c in children(t))


def nodes_of(t: CoreTerm) -> frozenset:
    found = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, At):
            found.add(u.node)
        stack.extend(children(u))
    return frozenset(found)


# -- errors -----------------------------------------------------------------

class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


class UnboundVariable(Exception):
    def __init__(self, name: str):
        super().__init__(f"unbound variable {name!r}")
        self.name = name


@dataclass(frozen=True)
class Violation:
    """An ``@`` body at ``path`` refers to the enclosing binder ``index``."""
    path: tuple
    index: int

    def __str__(self) -> str:
        return f"open located term at path {list(self.path)}: escaping index {self.index}"


# -- lexer ------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # ident, node, nat, kw, sym, eof
    text: str
    line: int
    col: int


_SYMBOLS = "().+-*@="


def tokenize(text: str) -> list[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        start = col
        if ch in _SYMBOLS:
            toks.append(Token("sym", ch, line, start))
            i, col = i + 1, col + 1
            continue
        if ch.isascii() and ch.isdigit():
            j = i
            while j < n and text[j].isascii() and text[j].isdigit():
                j += 1
            toks.append(Token("nat", text[i:j], line, start))
            col += j - i
            i = j
            continue
        if ch.isascii() and ch.isalpha():
            j = i
            while j < n and text[j].isascii() and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            if word in KEYWORDS:
                kind = "kw"
            elif word[0].isupper():
                kind = "node"
            elif word[0].islower():
                kind = "ident"
            else:  # pragma: no cover - isalpha guarantees a cased letter
                raise ParseError(f"bad identifier {word!r}", line, start)
            toks.append(Token(kind, word, line, start))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


# -- parser -----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.pos = 0
        self.open_parens: list[Token] = []

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def describe(self, tok: Token) -> str:
        return "end of input" if tok.kind == "eof" else repr(tok.text)

    def expect_sym(self, sym: str) -> Token:
        t = self.tok
        if t.kind == "sym" and t.text == sym:
            return self.advance()
        if sym == ")" and self.open_parens:
            o = self.open_parens[-1]
            raise self.error(
                f"unbalanced parentheses: '(' at {o.line}:{o.col} is not closed "
                f"(found {self.describe(t)})")
        raise self.error(f"expected {sym!r}, found {self.describe(t)}")

    def expect_kw(self, kw: str) -> Token:
        t = self.tok
        if t.kind == "kw" and t.text == kw:
            return self.advance()
        raise self.error(f"expected {kw!r}, found {self.describe(t)}")

    def ident(self) -> str:
        t = self.tok
        if t.kind == "ident":
            return self.advance().text
        if t.kind == "kw":
            raise self.error(f"reserved word {t.text!r} cannot be used as an identifier")
        raise self.error(f"expected identifier, found {self.describe(t)}")

    def at_kw_term(self) -> bool:
        return self.tok.kind == "kw" and self.tok.text in ("fn", "let", "if0")

    def parse(self) -> SurfaceTerm:
        t = self.term()
        if self.tok.kind != "eof":
            if self.tok.kind == "sym" and self.tok.text == ")":
                raise self.error("unbalanced parentheses: unexpected ')'")
            raise self.error(f"unexpected {self.describe(self.tok)}")
        return t

    def term(self) -> SurfaceTerm:
        t = self.tok
        if t.kind == "kw":
            if t.text == "fn":
                self.advance()
                name = self.ident()
                self.expect_sym(".")
                return SLam(name, self.term())
            if t.text == "let":
                self.advance()
                name = self.ident()
                self.expect_sym("=")
                bound = self.term()
                self.expect_kw("in")
                return SLet(name, bound, self.term())
            if t.text == "if0":
                self.advance()
                c = self.term()
                self.expect_kw("then")
                a = self.term()
                self.expect_kw("else")
                return SIf0(c, a, self.term())
        return self.located()

    def located(self) -> SurfaceTerm:
        t = self.sum()
        while self.tok.kind == "sym" and self.tok.text == "@":
            self.advance()
            nt = self.tok
            if nt.kind != "node":
                raise self.error(f"expected node name after '@', found {self.describe(nt)}")
            self.advance()
            t = SAt(t, nt.text)
        return t

    def sum(self) -> SurfaceTerm:
        t = self.prod()
        while self.tok.kind == "sym" and self.tok.text in "+-":
            op = PrimOp.from_symbol(self.advance().text)
            t = SBinOp(op, t, self.prod())
        return t

    def prod(self) -> SurfaceTerm:
        t = self.app()
        while self.tok.kind == "sym" and self.tok.text == "*":
            self.advance()
            t = SBinOp(PrimOp.MUL, t, self.app())
        return t

    def starts_atom(self) -> bool:
        t = self.tok
        return t.kind in ("ident", "nat") or (t.kind == "sym" and t.text == "(")

    def app(self) -> SurfaceTerm:
        if self.at_kw_term():
            return self.term()
        t = self.atom()
        while True:
            if self.starts_atom():
                t = SApp(t, self.atom())
            elif self.at_kw_term():
                return SApp(t, self.term())
            else:
                return t

    def atom(self) -> SurfaceTerm:
        t = self.tok
        if t.kind == "ident":
            self.advance()
            return SVar(t.text)
        if t.kind == "nat":
            self.advance()
            n = int(t.text)
            if n > NAT_MAX:
                raise self.error(f"literal {t.text} exceeds the 64-bit range", t)
            return SLit(n)
        if t.kind == "sym" and t.text == "(":
            self.advance()
            self.open_parens.append(t)
            inner = self.term()
            self.expect_sym(")")
            self.open_parens.pop()
            return inner
        if t.kind == "sym" and t.text == ")":
            raise self.error("unbalanced parentheses: unexpected ')'")
        if t.kind == "kw":
            raise self.error(f"reserved word {t.text!r} is not allowed here")
        raise self.error(f"expected a term, found {self.describe(t)}")


def parse(text: str) -> SurfaceTerm:
    return _Parser(text).parse()


# -- resolution -------------------------------------------------------------

def resolve(t: SurfaceTerm) -> tuple[CoreTerm, frozenset]:
    """Replace names by de Bruijn indices and desugar ``let``."""
    core = _resolve(t, ())
    return core, nodes_of(core)


def _resolve(t: SurfaceTerm, scope: tuple) -> CoreTerm:
    if isinstance(t, SVar):
        for i, name in enumerate(scope):
            if name == t.name:
                return Var(i)
        raise UnboundVariable(t.name)
    if isinstance(t, SLam):
        return Lam(_resolve(t.body, (t.param,) + scope))
    if isinstance(t, SApp):
        return App(_resolve(t.fn, scope), _resolve(t.arg, scope))
    if isinstance(t, SLit):
        return Lit(t.n)
    if isinstance(t, SBinOp):
        return Op(t.op, _resolve(t.lhs, scope), _resolve(t.rhs, scope))
    if isinstance(t, SIf0):
        return If0(_resolve(t.cond, scope), _resolve(t.then, scope), _resolve(t.else_, scope))
    if isinstance(t, SAt):
        return At(_resolve(t.body, scope), t.node)
    if isinstance(t, SLet):
        return App(Lam(_resolve(t.body, (t.name,) + scope)), _resolve(t.bound, scope))
    raise TypeError(f"not a surface term: {t!r}")


def parse_program(text: str) -> CoreTerm:
    """Parse, resolve and reject open ``@`` bodies."""
    core, _ = resolve(parse(text))
    bad = check_closed_at(core)
    if bad:
        raise ValueError("; ".join(str(v) for v in bad))
    return core


def free_indices(t: CoreTerm, depth: int = 0) -> set:
    """Free de Bruijn indices of ``t``, relative to its own scope."""
    if isinstance(t, Var):
        return {t.index - depth} if t.index >= depth else set()
    if isinstance(t, Lam):
        return free_indices(t.body, depth + 1)
    out = set()
    for c in children(t):
        out |= free_indices(c, depth)
    return out


def check_closed_at(t: CoreTerm) -> list[Violation]:
    out = []

    def walk(u, path):
        if isinstance(u, At):
            for i in sorted(free_indices(u.body)):
                out.append(Violation(path, i))
        for k, c in enumerate(children(u)):
            walk(c, path + (k,))

    walk(t, ())
    return out


# -- pretty printing --------------------------------------------------------

def pretty(t: CoreTerm) -> str:
    """Render a core term as parseable surface syntax, binders named by depth."""
    return _pp(t, 0, 0)


def _paren(s: str, level: int, need: int) -> str:
    return f"({s})" if level < need else s


def _pp(t: CoreTerm, depth: int, need: int) -> str:
    if isinstance(t, Var):
        return f"x{depth - 1 - t.index}"
    if isinstance(t, Lit):
        return str(t.n)
    if isinstance(t, Lam):
        return _paren(f"fn x{depth}. {_pp(t.body, depth + 1, 0)}", 0, need)
    if isinstance(t, If0):
        s = (f"if0 {_pp(t.cond, depth, 0)} then {_pp(t.then, depth, 0)} "
             f"else {_pp(t.else_, depth, 0)}")
        return _paren(s, 0, need)
    if isinstance(t, At):
        return _paren(f"{_pp(t.body, depth, 1)} @ {t.node}", 1, need)
    if isinstance(t, Op):
        if t.op is PrimOp.MUL:
            s = f"{_pp(t.lhs, depth, 3)} * {_pp(t.rhs, depth, 4)}"
            return _paren(s, 3, need)
        s = f"{_pp(t.lhs, depth, 2)} {t.op.value} {_pp(t.rhs, depth, 3)}"
        return _paren(s, 2, need)
    if isinstance(t, App):
        return _paren(f"{_pp(t.fn, depth, 4)} {_pp(t.arg, depth, 5)}", 4, need)
    raise TypeError(f"not a core term: {t!r}")


# -- random closed programs -------------------------------------------------

NAT = "nat"
_ARG_TYPES = (NAT, (NAT, NAT))
_TOP_TYPES = (NAT, NAT, NAT, (NAT, NAT))


def _min_size(ty, ctx) -> int:
    if ty == NAT or ty in ctx:
        return 1
    return 1 + _min_size(ty[1], (ty[0],) + ctx)


def _split(rng: random.Random, budget: int, mins: list[int]) -> list[int]:
    extra = budget - sum(mins)
    cuts = sorted(rng.randint(0, extra) for _ in range(len(mins) - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [extra])]
    return [m + p for m, p in zip(mins, parts)]


def _gen(rng: random.Random, ty, ctx: tuple, budget: int, nodes: tuple) -> CoreTerm:
    opts = []  # (weight, kind)
    leaf_w = 4 if budget <= 3 else 1
    if ty == NAT:
        opts.append((leaf_w, "lit"))
    vars_ok = [i for i, t in enumerate(ctx) if t == ty]
    if vars_ok:
        opts.append((leaf_w * 2, "var"))
    if ty != NAT and budget >= 1 + _min_size(ty[1], (ty[0],) + ctx):
        opts.append((4, "lam"))
    if ty == NAT and budget >= 3:
        opts.append((3, "op"))
    if budget >= 2 + 2 * _min_size(ty, ctx):
        opts.append((2, "if0"))
    arg_tys = [a for a in _ARG_TYPES
               if budget >= 1 + _min_size((a, ty), ctx) + _min_size(a, ctx)]
    if arg_tys:
        opts.append((4, "app"))
    if nodes and budget >= 1 + _min_size(ty, ()):
        opts.append((2, "at"))

    total = sum(w for w, _ in opts)
    r = rng.uniform(0, total)
    kind = opts[-1][1]
    for w, k in opts:
        if r < w:
            kind = k
            break
        r -= w

    if kind == "lit":
        return Lit(rng.randint(0, 4))
    if kind == "var":
        return Var(rng.choice(vars_ok))
    if kind == "lam":
        inner = (ty[0],) + ctx
        return Lam(_gen(rng, ty[1], inner, budget - 1, nodes))
    if kind == "op":
        b1, b2 = _split(rng, budget - 1, [1, 1])
        op = rng.choice(list(PrimOp))
        return Op(op, _gen(rng, NAT, ctx, b1, nodes), _gen(rng, NAT, ctx, b2, nodes))
    if kind == "if0":
        m = _min_size(ty, ctx)
        b0, b1, b2 = _split(rng, budget - 1, [1, m, m])
        return If0(_gen(rng, NAT, ctx, b0, nodes), _gen(rng, ty, ctx, b1, nodes),
                   _gen(rng, ty, ctx, b2, nodes))
    if kind == "app":
        a = rng.choice(arg_tys)
        b1, b2 = _split(rng, budget - 1, [_min_size((a, ty), ctx), _min_size(a, ctx)])
        return App(_gen(rng, (a, ty), ctx, b1, nodes), _gen(rng, a, ctx, b2, nodes))
    # at: the body is generated in the empty scope, so it is closed
    return At(_gen(rng, ty, (), budget - 1, nodes), rng.choice(nodes))


def gen_term(seed: int, size: int, nodes=()) -> CoreTerm:
    """Deterministic random closed program with at most ``size`` AST nodes.

    Terms are simply typed over naturals and functions, so they never get
    stuck on a type error; ``@`` annotations wrap closed subterms only.
    """
    if size < 1:
        raise ValueError("size must be at least 1")
    rng = random.Random(seed)
    node_list = tuple(sorted(nodes))
    tops = [t for t in _TOP_TYPES if _min_size(t, ()) <= size]
    return _gen(rng, rng.choice(tops), (), size, node_list)
