"""Surface syntax for protocols (``.camp`` files), printers and builders.

Grammar::

    protocol := "protocol" ID "{" "roles" ID ("," ID)* ";" G "}"
    G        := ID "->" ID ":" payload "." G
              | ID "->" ID "{" ID "." G ("," ID "." G)* "}"
              | ID "~>" ID "!" payload "." G        split send
              | ID "~>" ID "?" payload "." G        split receive (by the right role)
              | "rec" ID "." G | "continue" ID | "end"
    payload  := "<" TYPE "^" size ("@" cost)? ">"
    cost     := NUM | ID | cost "+" cost | "max" "(" cost ("," cost)+ ")"
              | NUM "*" cost | "size" "(" size ")" | "(" cost ")"

A bare ``G`` (without the ``protocol`` header) is accepted too; its roles are
declared in order of first appearance.  Runtime forms print with a ``=>``
marker and are not parseable.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .core_types import (
    END,
    Add,
    Branch,
    BranchT,
    Const,
    CostExpr,
    End,
    Eval,
    GlobalType,
    LBranch,
    LEnd,
    LocalType,
    LPending,
    LRec,
    LRecv,
    LSelect,
    LSend,
    LVar,
    Msg,
    MsgT,
    Rec,
    RecCall,
    Recv,
    RecvAct,
    Role,
    SAdd,
    Scale,
    SConst,
    Send,
    SendAct,
    SizedType,
    SizeExpr,
    SizeOf,
    SMul,
    SVar,
    Var,
    ZERO,
    as_cost,
    broadcast,
    cmax,
    format_cost,
    format_type,
    guarded,
    map_children,
    roles_of,
    sized,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass
class Protocol:
    name: str
    roles: tuple
    body: GlobalType
    spans: dict = field(default_factory=dict)  # branch label path -> (line, col)

    def role(self, name: str) -> Role:
        for r in self.roles:
            if r.name == name:
                return r
        raise KeyError(name)

    def span_of(self, path: Sequence[str]):
        path = tuple(path)
        while path and path not in self.spans:
            path = path[:-1]
        return self.spans.get(path)


# ---------------------------------------------------------------------------
# Lexer

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|//[^\n]*|\#[^\n]*)
  | (?P<num>\d+(?:\.\d+)?(?:/\d+)?)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym>->|~>|=>|[{}<>^@.,;:!?+*()\[\]])
    """,
    re.VERBOSE,
)

KEYWORDS = {"protocol", "roles", "rec", "continue", "end", "max", "size"}


@dataclass
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(text: str) -> list:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        chunk = m.group()
        if kind != "ws":
            tokens.append(Token(kind, chunk, line, pos - line_start + 1))
        nl = chunk.count("\n")
        if nl:
            line += nl
            line_start = pos + chunk.rfind("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def _number(text: str) -> Fraction:
    return Fraction(text)


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0
        self.roles: dict = {}
        self.auto_roles = False
        self.spans: dict = {}

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, message: str, tok: Token | None = None):
        tok = tok or self.tok
        raise ParseError(message, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.text == text and self.tok.kind != "eof"

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            self.error(f"expected {text!r}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    def ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "id" or self.tok.text in KEYWORDS:
            found = self.tok.text or "end of input"
            self.error(f"expected {what}, found {found!r}")
        t = self.tok
        self.i += 1
        return t

    # protocol structure
    def protocol(self) -> Protocol:
        if self.at("protocol"):
            self.expect("protocol")
            name = self.ident("protocol name").text
            self.expect("{")
            self.expect("roles")
            self.declare(self.ident("role name"))
            while self.at(","):
                self.expect(",")
                self.declare(self.ident("role name"))
            self.expect(";")
            body = self.global_type([])
            self.expect("}")
        else:
            name = "anonymous"
            self.auto_roles = True
            body = self.global_type([])
        if self.tok.kind != "eof":
            self.error(f"unexpected trailing input {self.tok.text!r}")
        roles = tuple(sorted(self.roles.values()))
        return Protocol(name, roles, body, self.spans)

    def declare(self, tok: Token) -> Role:
        if tok.text in self.roles:
            self.error(f"role {tok.text} declared twice", tok)
        r = Role(len(self.roles), tok.text)
        self.roles[tok.text] = r
        return r

    def role(self, tok: Token) -> Role:
        if tok.text not in self.roles:
            if self.auto_roles:
                return self.declare(tok)
            self.error(f"undeclared role {tok.text}", tok)
        return self.roles[tok.text]

    def global_type(self, scope: list, path: tuple = ()) -> GlobalType:
        tok = self.tok
        if self.at("end"):
            self.i += 1
            return END
        if self.at("continue"):
            self.i += 1
            name = self.ident("recursion variable")
            for depth, bound in enumerate(reversed(scope)):
                if bound == name.text:
                    return RecCall(depth, name.text)
            self.error(f"unbound recursion variable {name.text}", name)
        if self.at("rec"):
            self.i += 1
            name = self.ident("recursion variable")
            self.expect(".")
            body = self.global_type(scope + [name.text], path)
            g = Rec(body, name.text)
            if not guarded(g):
                self.error(f"unguarded recursion on {name.text}", tok)
            return g
        a_tok = self.ident("role name")
        if self.at("=>"):
            self.error("runtime forms cannot be parsed")
        if self.at("->"):
            self.i += 1
            b_tok = self.ident("role name")
            a, b = self.role(a_tok), self.role(b_tok)
            if a == b:
                self.error(f"self-message on role {a}", a_tok)
            if self.at(":"):
                self.i += 1
                ty, cost = self.payload()
                self.expect(".")
                return Msg(a, b, ty, cost, self.global_type(scope, path))
            self.expect("{")
            self.spans.setdefault(path, (tok.line, tok.col))
            arms = []
            seen = set()
            while True:
                lt = self.ident("label")
                if lt.text in seen:
                    self.error(f"duplicate label {lt.text}", lt)
                seen.add(lt.text)
                self.spans[path + (lt.text,)] = (lt.line, lt.col)
                self.expect(".")
                arms.append((lt.text, self.global_type(scope, path + (lt.text,))))
                if self.at(","):
                    self.i += 1
                    continue
                break
            self.expect("}")
            return Branch(a, b, tuple(arms))
        if self.at("~>"):
            self.i += 1
            b_tok = self.ident("role name")
            a, b = self.role(a_tok), self.role(b_tok)
            if a == b:
                self.error(f"self-message on role {a}", a_tok)
            if self.at("!"):
                self.i += 1
                ptok = self.tok
                ty, cost = self.payload()
                if cost != ZERO:
                    self.error("a split send carries no cost", ptok)
                self.expect(".")
                return SendAct(a, b, ty, self.global_type(scope, path))
            self.expect("?")
            ty, cost = self.payload()
            self.expect(".")
            return RecvAct(b, a, ty, cost, self.global_type(scope, path))
        self.error(f"expected '->' or '~>' after role {a_tok.text}")

    def payload(self):
        self.expect("<")
        ty = self.sized_type()
        cost = ZERO
        if self.at("@"):
            self.i += 1
            cost = self.cost_expr()
        self.expect(">")
        return ty, cost

    def sized_type(self) -> SizedType:
        base = self.ident("type name").text
        args = []
        if self.at("["):
            self.i += 1
            args.append(self.sized_type())
            while self.at(","):
                self.i += 1
                args.append(self.sized_type())
            self.expect("]")
        self.expect("^")
        return SizedType(base, self.size_expr(), tuple(args))

    def size_expr(self) -> SizeExpr:
        out = self.size_term()
        while self.at("+"):
            self.i += 1
            out = SAdd(out, self.size_term())
        return out

    def size_term(self) -> SizeExpr:
        if self.tok.kind == "num":
            k = _number(self.tok.text)
            self.i += 1
            if self.at("*"):
                self.i += 1
                return SMul(k, self.size_term())
            return SConst(k)
        if self.at("("):
            self.i += 1
            e = self.size_expr()
            self.expect(")")
            return e
        return SVar(self.ident("size variable").text)

    def cost_expr(self) -> CostExpr:
        out = self.cost_term()
        while self.at("+"):
            self.i += 1
            out = Add(out, self.cost_term())
        return out

    def cost_term(self) -> CostExpr:
        if self.tok.kind == "num":
            k = _number(self.tok.text)
            self.i += 1
            if self.at("*"):
                self.i += 1
                return Scale(k, self.cost_term())
            return Const(k)
        if self.at("("):
            self.i += 1
            e = self.cost_expr()
            self.expect(")")
            return e
        if self.at("max"):
            self.i += 1
            self.expect("(")
            args = [self.cost_expr()]
            while self.at(","):
                self.i += 1
                args.append(self.cost_expr())
            self.expect(")")
            if len(args) < 2:
                self.error("max needs at least two arguments")
            return cmax(*args)
        if self.at("size"):
            self.i += 1
            self.expect("(")
            s = self.size_expr()
            self.expect(")")
            return SizeOf(s)
        if self.tok.kind == "id" and self.tok.text in ("csend", "crecv") and self.peek().text == "(":
            kind = self.tok.text
            self.i += 2
            ty = self.sized_type()
            self.expect(")")
            return Send(ty) if kind == "csend" else Recv(ty)
        return Var(self.ident("cost term").text)


def parse(text: str) -> Protocol:
    """Parse a protocol (or a bare global type); raises ``ParseError``."""
    text = text.replace("\r\n", "\n")
    return _Parser(text).protocol()


def parse_global(text: str) -> GlobalType:
    return parse(text).body


# ---------------------------------------------------------------------------
# Printers


def _fresh(name: str, stack: list) -> str:
    if name not in stack:
        return name
    i = 1
    while f"{name}{i}" in stack:
        i += 1
    return f"{name}{i}"


def print_payload(ty: SizedType, cost: CostExpr | None) -> str:
    text = format_type(ty)
    if cost is not None and cost != ZERO:
        text += " @ " + format_cost(cost, flat=False)
    return f"<{text}>"


def print_global(g: GlobalType, stack: list | None = None) -> str:
    """Canonical surface syntax; runtime forms use the one-way ``=>`` marker."""
    stack = [] if stack is None else stack
    if isinstance(g, End):
        return "end"
    if isinstance(g, RecCall):
        if 0 <= g.index < len(stack):
            return f"continue {stack[-1 - g.index]}"
        return f"continue {g.name}"
    if isinstance(g, Rec):
        name = _fresh(g.name, stack)
        return f"rec {name}. {print_global(g.body, stack + [name])}"
    if isinstance(g, Msg):
        return f"{g.sender}->{g.receiver}:{print_payload(g.payload, g.cost)}. {print_global(g.cont, stack)}"
    if isinstance(g, Branch):
        arms = ", ".join(f"{l}. {print_global(k, stack)}" for l, k in g.branches)
        return f"{g.sender}->{g.receiver}{{{arms}}}"
    if isinstance(g, SendAct):
        return f"{g.sender}~>{g.receiver}!{print_payload(g.payload, None)}. {print_global(g.cont, stack)}"
    if isinstance(g, RecvAct):
        return f"{g.sender}~>{g.receiver}?{print_payload(g.payload, g.cost)}. {print_global(g.cont, stack)}"
    if isinstance(g, MsgT):
        return f"{g.sender}=>{g.receiver}:{print_payload(g.payload, g.cost)}. {print_global(g.cont, stack)}"
    if isinstance(g, BranchT):
        arms = ", ".join(f"{l}. {print_global(k, stack)}" for l, k in g.branches)
        return f"{g.sender}=>{g.receiver}[{g.branches[g.chosen][0]}]{{{arms}}}"
    if isinstance(g, Eval):
        return f"=>{g.role}({print_payload(g.payload, g.cost)}). {print_global(g.cont, stack)}"
    raise TypeError(g)


def print_protocol(g: GlobalType | Protocol, name: str = "main", roles: Iterable[Role] | None = None) -> str:
    if isinstance(g, Protocol):
        name, roles, g = g.name, g.roles, g.body
    declared = sorted(set(roles) if roles is not None else roles_of(g))
    by_id = {r.id: r for r in declared}
    n = max(by_id) + 1 if by_id else 0
    names = [by_id[i].name if i in by_id else f"_r{i}" for i in range(n)]
    if not names:
        names = ["_r0"]
    return f"protocol {name} {{\n  roles {', '.join(names)};\n  {print_global(g)}\n}}\n"


def print_local(l: LocalType, stack: list | None = None) -> str:
    stack = [] if stack is None else stack
    if isinstance(l, LEnd):
        return "end"
    if isinstance(l, LVar):
        if 0 <= l.index < len(stack):
            return f"continue {stack[-1 - l.index]}"
        return f"continue {l.name}"
    if isinstance(l, LRec):
        name = _fresh(l.name, stack)
        return f"rec {name}. {print_local(l.body, stack + [name])}"
    if isinstance(l, LSend):
        return f"{l.peer}!{print_payload(l.payload, None)}. {print_local(l.cont, stack)}"
    if isinstance(l, LRecv):
        return f"{l.peer}?{print_payload(l.payload, l.cost)}. {print_local(l.cont, stack)}"
    if isinstance(l, LSelect):
        arms = ", ".join(f"{lab}. {print_local(k, stack)}" for lab, k in l.branches)
        return f"{l.peer}(+){{{arms}}}"
    if isinstance(l, LBranch):
        arms = ", ".join(f"{lab}. {print_local(k, stack)}" for lab, k in l.branches)
        return f"{l.peer}&{{{arms}}}"
    if isinstance(l, LPending):
        return f"({print_payload(l.payload, l.cost)}). {print_local(l.cont, stack)}"
    raise TypeError(l)


# ---------------------------------------------------------------------------
# Builders


def mk_role(name: str, id: int) -> Role:
    return Role(id, name)


def mk_roles(*names: str) -> tuple:
    return tuple(Role(i, n) for i, n in enumerate(names))


def message(p: Role, q: Role, payload: SizedType, cost=0, cont: GlobalType = END) -> GlobalType:
    if p == q:
        raise ValueError(f"self-message on role {p}")
    return Msg(p, q, payload, as_cost(cost), cont)


def choice(p: Role, q: Role, arms) -> GlobalType:
    arms = list(arms.items()) if isinstance(arms, dict) else list(arms)
    labels = [l for l, _ in arms]
    if len(set(labels)) != len(labels):
        raise ValueError("duplicate labels in choice")
    if p == q:
        raise ValueError(f"self-message on role {p}")
    return Branch(p, q, tuple(arms))


def send_act(p: Role, q: Role, payload: SizedType, cont: GlobalType = END) -> GlobalType:
    return SendAct(p, q, payload, cont)


def recv_act(q: Role, p: Role, payload: SizedType, cost=0, cont: GlobalType = END) -> GlobalType:
    """``q`` receives from ``p``."""
    return RecvAct(q, p, payload, as_cost(cost), cont)


def var(name: str) -> GlobalType:
    """Placeholder for a recursion variable, bound by an enclosing ``g_rec``."""
    return RecCall(-1, name)


def g_rec(name: str, body: GlobalType | Callable[[GlobalType], GlobalType]) -> GlobalType:
    if callable(body):
        body = body(var(name))

    def bind(t, depth):
        if isinstance(t, RecCall) and t.index == -1 and t.name == name:
            return RecCall(depth, name)
        return map_children(t, lambda k, under: bind(k, depth + 1 if under else depth))

    g = Rec(bind(body, 0), name)
    if not guarded(g):
        raise ValueError(f"unguarded recursion on {name}")
    return g


def chain(steps: Sequence, cont: GlobalType = END) -> GlobalType:
    """Sequence of messages ``(p, q, payload, cost)`` ending in ``cont``."""
    out = cont
    for p, q, ty, c in reversed(list(steps)):
        out = message(p, q, ty, c, out)
    return out


def pipe(roles: Sequence[Role], stages: Sequence, cont: GlobalType = END) -> GlobalType:
    """``roles[0] -> roles[1] -> ...`` with one ``(payload, cost)`` stage per hop."""
    if len(stages) != len(roles) - 1:
        raise ValueError("pipe needs one stage per consecutive pair of roles")
    return chain([(roles[i], roles[i + 1], ty, c) for i, (ty, c) in enumerate(stages)], cont)


def rpipe(stages: Sequence, roles: Sequence[Role] | None = None) -> GlobalType:
    roles = roles or mk_roles(*[f"p{i}" for i in range(len(stages) + 1)])
    return g_rec("X", lambda x: pipe(roles, stages, x))


def pipeline(n: int) -> GlobalType:
    """Recursive pipeline over ``n`` roles."""
    if n < 2:
        raise ValueError("a pipeline needs at least two roles")
    roles = mk_roles(*[f"p{i}" for i in range(n)])
    stages = [(sized(f"t{i + 1}"), Var(f"c{i + 1}")) for i in range(n - 1)]
    return rpipe(stages, roles)


def ring(n: int, recursive: bool = True) -> GlobalType:
    if n < 2:
        raise ValueError("a ring needs at least two roles")
    roles = mk_roles(*[f"r{i}" for i in range(n)])
    steps = [(roles[i], roles[(i + 1) % n], sized(f"t{i + 1}"), Var(f"c{i + 1}")) for i in range(n)]
    if recursive:
        return g_rec("X", lambda x: chain(steps, x))
    return chain(steps)


def master_worker(n: int, branching: bool = True) -> GlobalType:
    """Master ``m1`` hands tasks to ``n`` workers whose results go to ``m2``."""
    if n < 1:
        raise ValueError("master-worker needs at least one worker")
    m1, m2 = Role(0, "m1"), Role(1, "m2")
    ws = [Role(2 + i, f"w{i + 1}") for i in range(n)]
    t1, t2 = sized("tau1"), sized("tau2")
    tasks = [(m1, w, t1, Var("c1")) for w in ws]
    results = [(w, m2, t2, Var("c2")) for w in reversed(ws)]

    def body(x):
        work = chain(tasks + results, x)
        if not branching:
            return work
        return broadcast(m1, [m2] + ws, [("more", work), ("stop", END)])

    return g_rec("X", body)


def butterfly(n: int) -> GlobalType:
    """Butterfly exchange over ``2**n`` participants (one level per bit)."""
    if n < 1:
        raise ValueError("butterfly needs at least one level")
    size = 2 ** n
    ps = mk_roles(*[f"P{i}" for i in range(size)])
    steps = []
    for lvl in range(n):
        span = 2 ** (n - lvl)
        half = span // 2
        for i in range(2 ** lvl):
            for j in range(half):
                for k, k2 in ((0, 1), (1, 0)):
                    a = ps[i * span + k * half + j]
                    b = ps[i * span + k2 * half + j]
                    steps.append((a, b, sized("d", SVar("n")), Var("c")))
    return chain(steps)


def divide_conquer(depth: int) -> GlobalType:
    """Mergesort-style split to ``2**depth`` roles, then pairwise merges back."""
    if depth < 1:
        raise ValueError("divide and conquer needs depth >= 1")
    ps = mk_roles(*[f"p{i}" for i in range(2 ** depth)])
    steps = []
    for lvl in range(depth):
        part = SMul(Fraction(1, 2 ** (lvl + 1)), SVar("n"))
        for i in range(2 ** lvl):
            steps.append((ps[i], ps[i + 2 ** lvl], SizedType("arr", part), Var("sort") if lvl == depth - 1 else ZERO))
    for lvl in reversed(range(depth)):
        part = SMul(Fraction(1, 2 ** (lvl + 1)), SVar("n"))
        for i in range(2 ** lvl):
            steps.append((ps[i + 2 ** lvl], ps[i], SizedType("arr", part), Var("merge")))
    return chain(steps)


def scatter_gather() -> GlobalType:
    p, q, r, s = mk_roles("p", "q", "r", "s")
    t1, t2 = sized("tau1"), sized("tau2")
    return chain([(p, q, t1, Var("c1")), (p, r, t1, Var("c1")), (q, s, t2, 0), (r, s, t2, 0)])


def ping_pong() -> GlobalType:
    p, q = mk_roles("p", "q")
    return g_rec("X", lambda x: chain([(p, q, sized("tau1"), Var("c1")), (q, p, sized("tau2"), Var("c2"))], x))
