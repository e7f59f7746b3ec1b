"""Protocol and cost ASTs shared by every analysis.

All nodes are immutable.  Structural equality ignores recursion-variable
names: variables are stored as binder-relative (de Bruijn) indices, so two
alpha-equivalent types compare equal.  Hashes are cached on first use because
exploration code keys dictionaries on whole types.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence, Union

Number = Union[int, Fraction, str]


def as_fraction(k: Number) -> Fraction:
    return k if isinstance(k, Fraction) else Fraction(k)


def node(cls):
    """Frozen dataclass with a cached hash and a hash-guarded equality."""
    cls = dataclass(frozen=True, eq=False)(cls)
    names = tuple(f.name for f in dataclasses.fields(cls) if f.compare)
    tag = cls.__name__

    def __hash__(self):
        try:
            return self.__dict__["_hash"]
        except KeyError:
            h = hash((tag,) + tuple(getattr(self, n) for n in names))
            object.__setattr__(self, "_hash", h)
            return h

    def __eq__(self, other):
        if self is other:
            return True
        if other.__class__ is not self.__class__:
            return NotImplemented
        if hash(self) != hash(other):
            return False
        return all(getattr(self, n) == getattr(other, n) for n in names)

    cls.__hash__ = __hash__
    cls.__eq__ = __eq__
    return cls


# ---------------------------------------------------------------------------
# Sizes and payload types


class SizeExpr:
    __slots__ = ()

    def __add__(self, other):
        return SAdd(self, as_size(other))

    def __radd__(self, other):
        return SAdd(as_size(other), self)

    def __rmul__(self, k):
        return SMul(as_fraction(k), self)

    def __str__(self):
        return format_size(self)


@node
class SConst(SizeExpr):
    k: Fraction

    def __post_init__(self):
        k = as_fraction(self.k)
        if k < 0:
            raise ValueError(f"negative size constant {k}")
        object.__setattr__(self, "k", k)


@node
class SVar(SizeExpr):
    name: str


@node
class SAdd(SizeExpr):
    left: SizeExpr
    right: SizeExpr


@node
class SMul(SizeExpr):
    k: Fraction
    expr: SizeExpr

    def __post_init__(self):
        k = as_fraction(self.k)
        if k < 0:
            raise ValueError(f"negative size factor {k}")
        object.__setattr__(self, "k", k)


def as_size(s) -> SizeExpr:
    if isinstance(s, SizeExpr):
        return s
    if isinstance(s, str):
        return SVar(s)
    return SConst(as_fraction(s))


@node
class SizedType:
    base: str
    size: SizeExpr = SConst(1)
    args: tuple = ()

    def __str__(self):
        return format_type(self)


UNIT = SizedType("unit", SConst(1))


def sized(base: str, size=1, args: Sequence[SizedType] = ()) -> SizedType:
    return SizedType(base, as_size(size), tuple(args))


# ---------------------------------------------------------------------------
# Cost expressions


class CostExpr:
    __slots__ = ()

    def __add__(self, other):
        return Add(self, as_cost(other))

    def __radd__(self, other):
        return Add(as_cost(other), self)

    def __rmul__(self, k):
        return Scale(as_fraction(k), self)

    def __str__(self):
        return format_cost(self)


@node
class Const(CostExpr):
    k: Fraction

    def __post_init__(self):
        object.__setattr__(self, "k", as_fraction(self.k))


@node
class SizeOf(CostExpr):
    size: SizeExpr


@node
class Var(CostExpr):
    name: str


@node
class Send(CostExpr):
    ty: SizedType


@node
class Recv(CostExpr):
    ty: SizedType


@node
class Add(CostExpr):
    left: CostExpr
    right: CostExpr


@node
class Max(CostExpr):
    left: CostExpr
    right: CostExpr


@node
class Scale(CostExpr):
    k: Fraction
    expr: CostExpr

    def __post_init__(self):
        k = as_fraction(self.k)
        if k < 0:
            raise ValueError(f"negative scale factor {k}")
        object.__setattr__(self, "k", k)


@node
class Sub(CostExpr):
    left: CostExpr
    right: CostExpr


ZERO = Const(Fraction(0))


def as_cost(c) -> CostExpr:
    if isinstance(c, CostExpr):
        return c
    if isinstance(c, str):
        return Var(c)
    return Const(as_fraction(c))


def cmax(*args) -> CostExpr:
    """Right-nested binary max of one or more expressions."""
    items = [as_cost(a) for a in args]
    if not items:
        raise ValueError("cmax needs at least one argument")
    out = items[-1]
    for e in reversed(items[:-1]):
        out = Max(e, out)
    return out


def csum(args: Iterable) -> CostExpr:
    items = [as_cost(a) for a in args]
    if not items:
        return ZERO
    out = items[0]
    for e in items[1:]:
        out = Add(out, e)
    return out


# ---------------------------------------------------------------------------
# Roles and labels


@dataclass(frozen=True, order=True)
class Role:
    id: int
    name: str

    def __str__(self):
        return self.name


Label = str


# ---------------------------------------------------------------------------
# Global types


class GlobalType:
    __slots__ = ()

    def __str__(self):
        from .frontend import print_global

        return print_global(self)


@node
class Msg(GlobalType):
    sender: Role
    receiver: Role
    payload: SizedType
    cost: CostExpr
    cont: GlobalType


@node
class Branch(GlobalType):
    sender: Role
    receiver: Role
    branches: tuple  # of (Label, GlobalType)


@node
class Rec(GlobalType):
    body: GlobalType
    name: str = field(default="X", compare=False)


@node
class RecCall(GlobalType):
    index: int
    name: str = field(default="X", compare=False)


@node
class End(GlobalType):
    pass


@node
class MsgT(GlobalType):
    sender: Role
    receiver: Role
    payload: SizedType
    cost: CostExpr
    cont: GlobalType


@node
class BranchT(GlobalType):
    sender: Role
    receiver: Role
    chosen: int
    branches: tuple


@node
class Eval(GlobalType):
    role: Role
    payload: SizedType
    cost: CostExpr
    cont: GlobalType


@node
class SendAct(GlobalType):
    sender: Role
    receiver: Role
    payload: SizedType
    cont: GlobalType


@node
class RecvAct(GlobalType):
    receiver: Role
    sender: Role
    payload: SizedType
    cost: CostExpr
    cont: GlobalType


END = End()

INTERACTIONS = (Msg, Branch, MsgT, BranchT, SendAct, RecvAct)
RUNTIME_FORMS = (MsgT, BranchT, Eval)
SPLIT_FORMS = (SendAct, RecvAct)


# ---------------------------------------------------------------------------
# Local types


class LocalType:
    __slots__ = ()

    def __str__(self):
        from .frontend import print_local

        return print_local(self)


@node
class LSend(LocalType):
    peer: Role
    payload: SizedType
    cont: LocalType


@node
class LRecv(LocalType):
    peer: Role
    payload: SizedType
    cost: CostExpr
    cont: LocalType


@node
class LSelect(LocalType):
    peer: Role
    branches: tuple


@node
class LBranch(LocalType):
    peer: Role
    branches: tuple


@node
class LRec(LocalType):
    body: LocalType
    name: str = field(default="X", compare=False)


@node
class LVar(LocalType):
    index: int
    name: str = field(default="X", compare=False)


@node
class LEnd(LocalType):
    pass


@node
class LPending(LocalType):
    payload: SizedType
    cost: CostExpr
    cont: LocalType


LEND = LEnd()


# ---------------------------------------------------------------------------
# Generic traversal over both kinds of types

_BRANCHING = (Branch, BranchT, LSelect, LBranch)
_BINDERS = (Rec, LRec)
_VARS = (RecCall, LVar)


def children(t) -> Iterator:
    if isinstance(t, _BRANCHING):
        for _, k in t.branches:
            yield k
    elif isinstance(t, _BINDERS):
        yield t.body
    elif hasattr(t, "cont"):
        yield t.cont


def map_children(t, f):
    """Rebuild ``t`` with ``f(child, under_binder)`` applied to each child."""
    if isinstance(t, _BRANCHING):
        return dataclasses.replace(t, branches=tuple((l, f(k, False)) for l, k in t.branches))
    if isinstance(t, _BINDERS):
        return dataclasses.replace(t, body=f(t.body, True))
    if hasattr(t, "cont"):
        return dataclasses.replace(t, cont=f(t.cont, False))
    return t


def shift(t, d: int, cutoff: int = 0):
    """Add ``d`` to every variable index >= ``cutoff`` (free in ``t``)."""
    if d == 0:
        return t
    if isinstance(t, _VARS):
        return dataclasses.replace(t, index=t.index + d) if t.index >= cutoff else t
    return map_children(t, lambda k, b: shift(k, d, cutoff + 1 if b else cutoff))


def subst(t, s, j: int = 0):
    """Replace variable ``j`` in ``t`` by ``s`` and drop that binder level."""
    if isinstance(t, _VARS):
        if t.index == j:
            return shift(s, j)
        if t.index > j:
            return dataclasses.replace(t, index=t.index - 1)
        return t
    return map_children(t, lambda k, b: subst(k, s, j + 1 if b else j))


def unfold(t):
    """One-step unfolding of a recursive type: body[rec/X]."""
    if not isinstance(t, _BINDERS):
        raise TypeError("unfold expects a recursive type")
    return subst(t.body, t)


def free_vars(t, depth: int = 0) -> set:
    """Free variable indices of ``t`` relative to its root."""
    if isinstance(t, _VARS):
        return {t.index - depth} if t.index >= depth else set()
    out: set = set()
    for k in children(t):
        out |= free_vars(k, depth + 1 if isinstance(t, _BINDERS) else depth)
    return out


def is_closed(t) -> bool:
    return not free_vars(t)


def count_binders(t) -> int:
    n = 1 if isinstance(t, _BINDERS) else 0
    return n + sum(count_binders(k) for k in children(t))


# ---------------------------------------------------------------------------
# Syntactic operations


def roles_of(t) -> set:
    """Every role occurring syntactically in a global or local type."""
    out: set = set()
    stack = [t]
    seen: set = set()
    while stack:
        x = stack.pop()
        if id(x) in seen:
            continue
        seen.add(id(x))
        for name in ("sender", "receiver", "role", "peer"):
            r = getattr(x, name, None)
            if isinstance(r, Role):
                out.add(r)
        stack.extend(children(x))
    return out


def guarded(t) -> bool:
    """True iff every variable is separated from its binder by an interaction.

    A binder whose body is immediately another binder is unguarded as well:
    it does not advance the protocol before the inner one takes over.
    """

    def go(x, unguarded: frozenset, depth: int) -> bool:
        if isinstance(x, _VARS):
            level = depth - 1 - x.index
            return level not in unguarded
        if isinstance(x, _BINDERS):
            if isinstance(x.body, _BINDERS + _VARS):
                return False
            return go(x.body, unguarded | {depth}, depth + 1)
        if isinstance(x, INTERACTIONS) or isinstance(x, (LSend, LRecv, LSelect, LBranch)):
            unguarded = frozenset()
        return all(go(k, unguarded, depth) for k in children(x))

    return go(t, frozenset(), 0)


def broadcast(sender: Role, receivers: Sequence[Role], branches: Sequence) -> GlobalType:
    """Expand a one-to-many label selection into nested binary branchings."""
    receivers = list(receivers)
    if not receivers:
        raise ValueError("broadcast needs at least one receiver")
    if sender in receivers:
        raise ValueError(f"broadcast sender {sender} is also a receiver")
    if len(set(receivers)) != len(receivers):
        raise ValueError("duplicate receivers in broadcast")
    branches = [(l, g) for l, g in branches]

    def chain(i: int, cont: GlobalType, label: str) -> GlobalType:
        if i == len(receivers):
            return cont
        return Branch(sender, receivers[i], ((label, chain(i + 1, cont, label)),))

    first = receivers[0]
    return Branch(sender, first, tuple((l, chain(1, g, l)) for l, g in branches))


def binder_names(t) -> list:
    """Names of recursion binders in pre-order (outermost first, left to right)."""
    out = [t.name] if isinstance(t, _BINDERS) else []
    for k in children(t):
        out.extend(binder_names(k))
    return out


# ---------------------------------------------------------------------------
# Text rendering of sizes, types and costs (shared by the printer and reports)


def format_number(k: Fraction) -> str:
    k = as_fraction(k)
    return str(k.numerator) if k.denominator == 1 else f"{k.numerator}/{k.denominator}"


def format_size(s: SizeExpr, top: bool = True) -> str:
    if isinstance(s, SConst):
        return format_number(s.k)
    if isinstance(s, SVar):
        return s.name
    if isinstance(s, SAdd):
        text = f"{format_size(s.left)} + {format_size(s.right, False)}"
        return text if top else f"({text})"
    if isinstance(s, SMul):
        return f"{format_number(s.k)}*{format_size(s.expr, False)}"
    raise TypeError(s)


def format_type(t: SizedType) -> str:
    head = t.base
    if t.args:
        head += "[" + ", ".join(format_type(a) for a in t.args) + "]"
    size = format_size(t.size, top=False)
    return f"{head}^{size}"


def format_cost(e: CostExpr, top: bool = True, flat: bool = True) -> str:
    """Render a cost expression.

    With ``flat`` nested sums and maxima are flattened for reading; without
    it the binary structure is kept so the text parses back to the same tree.
    """
    if isinstance(e, Const):
        return format_number(e.k)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, SizeOf):
        return f"size({format_size(e.size)})"
    if isinstance(e, Send):
        return f"csend({format_type(e.ty)})"
    if isinstance(e, Recv):
        return f"crecv({format_type(e.ty)})"
    if isinstance(e, Max):
        if flat:
            parts = []
            _collect(e, Max, parts)
            return "max(" + ", ".join(format_cost(p, True, flat) for p in parts) + ")"
        return f"max({format_cost(e.left, True, flat)}, {format_cost(e.right, True, flat)})"
    if isinstance(e, Add):
        if flat:
            parts = []
            _collect(e, Add, parts)
            text = " + ".join(format_cost(p, False, flat) for p in parts)
        else:
            text = f"{format_cost(e.left, True, flat)} + {format_cost(e.right, False, flat)}"
        return text if top else f"({text})"
    if isinstance(e, Sub):
        text = f"{format_cost(e.left, True, flat)} - {format_cost(e.right, False, flat)}"
        return text if top else f"({text})"
    if isinstance(e, Scale):
        return f"{format_number(e.k)}*{format_cost(e.expr, False, flat)}"
    raise TypeError(e)


def _collect(e, kind, out):
    if isinstance(e, kind):
        _collect(e.left, kind, out)
        _collect(e.right, kind, out)
    else:
        out.append(e)


def unroll(t, ks):
    """Unroll every recursion binder; ``ks`` lists iteration counts per binder.

    Binders are numbered in pre-order (outermost first, left to right), and
    zero iterations leave ``end``.  A single integer applies to every binder.
    """
    n = count_binders(t)
    if isinstance(ks, int):
        ks = [ks] * n
    ks = list(ks)
    if len(ks) != n:
        raise ValueError(f"unroll needs {n} iteration counts, got {len(ks)}")
    if any(k < 0 for k in ks):
        raise ValueError("iteration counts must be nonnegative")
    counts = iter(ks)
    end = LEND if isinstance(t, LocalType) else END

    def go(x):
        if isinstance(x, _BINDERS):
            k = next(counts)
            body = go(x.body)
            out = end
            for _ in range(k):
                out = subst(body, out)
            return out
        return map_children(x, lambda c, _: go(c))

    return go(t)
