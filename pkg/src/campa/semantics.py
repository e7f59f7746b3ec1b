"""Asynchronous operational semantics of global types and configurations.

Global types step through in-transit (``MsgT``/``BranchT``) and pending
computation (``Eval``) forms; configurations pair each role's local type with
per-channel FIFO queues.  Both systems are explored exhaustively on unrolled,
recursion-free types.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

from .core_types import (
    LEND,
    Branch,
    BranchT,
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
    RecvAct,
    Role,
    SendAct,
    SizedType,
    format_cost,
    format_type,
    node,
    roles_of,
    unfold,
    unroll,
)
from .projection import project_all


class BudgetExceeded(RuntimeError):
    """Exploration hit its state cap."""


class SemanticsError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Actions


class Action:
    __slots__ = ()
    kind_order = 0

    @property
    def subject(self) -> Role:
        raise NotImplementedError

    def sort_key(self):
        raise NotImplementedError

    def __lt__(self, other):
        return self.sort_key() < other.sort_key()


@node
class ASend(Action):
    sender: Role
    receiver: Role
    ty: SizedType

    @property
    def subject(self):
        return self.sender

    def sort_key(self):
        return (0, self.sender.id, self.receiver.id, format_type(self.ty))

    def __str__(self):
        return f"{self.sender}{self.receiver}!{format_type(self.ty)}"


@node
class ARecv(Action):
    sender: Role
    receiver: Role
    ty: SizedType

    @property
    def subject(self):
        return self.receiver

    def sort_key(self):
        return (1, self.sender.id, self.receiver.id, format_type(self.ty))

    def __str__(self):
        return f"{self.sender}{self.receiver}?{format_type(self.ty)}"


@node
class ASelect(Action):
    sender: Role
    receiver: Role
    label: str

    @property
    def subject(self):
        return self.sender

    def sort_key(self):
        return (2, self.sender.id, self.receiver.id, self.label)

    def __str__(self):
        return f"{self.sender}{self.receiver}(+){self.label}"


@node
class ABranch(Action):
    sender: Role
    receiver: Role
    label: str

    @property
    def subject(self):
        return self.receiver

    def sort_key(self):
        return (3, self.sender.id, self.receiver.id, self.label)

    def __str__(self):
        return f"{self.sender}{self.receiver}(&){self.label}"


@node
class ARun(Action):
    role: Role
    cost: CostExpr

    @property
    def subject(self):
        return self.role

    def sort_key(self):
        return (4, self.role.id, -1, format_cost(self.cost))

    def __str__(self):
        return f"{self.role}@{format_cost(self.cost)}"


def subj(a: Action) -> Role:
    return a.subject


def format_trace(tr: Iterable[Action]) -> str:
    return " . ".join(str(a) for a in tr) or "(empty)"


def trace_key(tr) -> tuple:
    return tuple(a.sort_key() for a in tr)


# ---------------------------------------------------------------------------
# Global LTS


@lru_cache(maxsize=1 << 18)
def global_steps(g: GlobalType) -> tuple:
    """All ``(action, successor)`` pairs of ``g``; empty for ``end``."""
    if isinstance(g, End):
        return ()
    if isinstance(g, RecCall):
        raise SemanticsError("free recursion variable in a stepping type")
    if isinstance(g, Rec):
        return global_steps(unfold(g))
    if isinstance(g, Msg):
        out = [(ASend(g.sender, g.receiver, g.payload), MsgT(g.sender, g.receiver, g.payload, g.cost, g.cont))]
        for a, k in global_steps(g.cont):
            if a.subject not in (g.sender, g.receiver):
                out.append((a, Msg(g.sender, g.receiver, g.payload, g.cost, k)))
        return tuple(out)
    if isinstance(g, Branch):
        out = []
        for j, (label, _) in enumerate(g.branches):
            out.append((ASelect(g.sender, g.receiver, label), BranchT(g.sender, g.receiver, j, g.branches)))
        arm_steps = [_deterministic(global_steps(k)) for _, k in g.branches]
        shared = set(arm_steps[0])
        for steps in arm_steps[1:]:
            shared &= set(steps)
        for a in sorted(shared):
            if a.subject in (g.sender, g.receiver):
                continue
            arms = tuple((label, steps[a]) for (label, _), steps in zip(g.branches, arm_steps))
            out.append((a, Branch(g.sender, g.receiver, arms)))
        return tuple(out)
    if isinstance(g, MsgT):
        out = [(ARecv(g.sender, g.receiver, g.payload), Eval(g.receiver, g.payload, g.cost, g.cont))]
        for a, k in global_steps(g.cont):
            if a.subject != g.receiver:
                out.append((a, MsgT(g.sender, g.receiver, g.payload, g.cost, k)))
        return tuple(out)
    if isinstance(g, BranchT):
        label, chosen = g.branches[g.chosen]
        out = [(ABranch(g.sender, g.receiver, label), chosen)]
        for a, k in global_steps(chosen):
            if a.subject != g.receiver:
                arms = list(g.branches)
                arms[g.chosen] = (label, k)
                out.append((a, BranchT(g.sender, g.receiver, g.chosen, tuple(arms))))
        return tuple(out)
    if isinstance(g, Eval):
        out = [(ARun(g.role, g.cost), g.cont)]
        for a, k in global_steps(g.cont):
            if a.subject != g.role:
                out.append((a, Eval(g.role, g.payload, g.cost, k)))
        return tuple(out)
    if isinstance(g, (SendAct, RecvAct)):
        raise SemanticsError("split actions step through configurations (use the projected semantics)")
    raise TypeError(g)


def _deterministic(steps) -> dict:
    out = {}
    for a, k in steps:
        if a in out and out[a] != k:
            raise SemanticsError(f"nondeterministic step on {a}")
        out[a] = k
    return out


# ---------------------------------------------------------------------------
# Configurations


@dataclass(frozen=True)
class Configuration:
    """Local types per role plus FIFO queues keyed by (sender, receiver)."""

    locals: tuple  # sorted ((Role, LocalType), ...)
    queues: tuple = ()  # sorted (((Role, Role), items), ...) nonempty only

    @staticmethod
    def make(locals: dict, queues: dict | None = None) -> "Configuration":
        qs = tuple(sorted((k, tuple(v)) for k, v in (queues or {}).items() if v))
        return Configuration(tuple(sorted(locals.items())), qs)

    def local(self, r: Role) -> LocalType:
        for role, l in self.locals:
            if role == r:
                return l
        return LEND

    def queue(self, p: Role, q: Role) -> tuple:
        for k, v in self.queues:
            if k == (p, q):
                return v
        return ()

    def with_local(self, r: Role, l: LocalType) -> "Configuration":
        return Configuration(tuple((role, l if role == r else old) for role, old in self.locals), self.queues)

    def with_queue(self, p: Role, q: Role, items: tuple) -> "Configuration":
        d = dict(self.queues)
        if items:
            d[(p, q)] = items
        else:
            d.pop((p, q), None)
        return Configuration(self.locals, tuple(sorted(d.items())))

    @property
    def finished(self) -> bool:
        return all(isinstance(_head(l), LEnd) for _, l in self.locals)

    def describe(self) -> list:
        lines = [f"{r}: {l}" for r, l in self.locals]
        for (p, q), items in self.queues:
            shown = ", ".join(x if isinstance(x, str) else format_type(x) for x in items)
            lines.append(f"queue {p}{q}: [{shown}]")
        return lines


def _head(l: LocalType) -> LocalType:
    while isinstance(l, LRec):
        l = unfold(l)
    return l


def initial_configuration(g: GlobalType) -> Configuration:
    return Configuration.make(project_all(g))


def config_steps(cfg: Configuration) -> list:
    """All enabled steps of a configuration (send, receive, run, select, branch)."""
    out = []
    for r, l in cfg.locals:
        l = _head(l)
        if isinstance(l, LSend):
            q = cfg.queue(r, l.peer)
            nxt = cfg.with_local(r, l.cont).with_queue(r, l.peer, q + (l.payload,))
            out.append((ASend(r, l.peer, l.payload), nxt))
        elif isinstance(l, LRecv):
            q = cfg.queue(l.peer, r)
            if q and q[0] == l.payload:
                nxt = cfg.with_local(r, LPending(l.payload, l.cost, l.cont)).with_queue(l.peer, r, q[1:])
                out.append((ARecv(l.peer, r, l.payload), nxt))
        elif isinstance(l, LPending):
            out.append((ARun(r, l.cost), cfg.with_local(r, l.cont)))
        elif isinstance(l, LSelect):
            q = cfg.queue(r, l.peer)
            for label, k in l.branches:
                nxt = cfg.with_local(r, k).with_queue(r, l.peer, q + (label,))
                out.append((ASelect(r, l.peer, label), nxt))
        elif isinstance(l, LBranch):
            q = cfg.queue(l.peer, r)
            if q and isinstance(q[0], str):
                for label, k in l.branches:
                    if label == q[0]:
                        out.append((ABranch(l.peer, r, label), cfg.with_local(r, k).with_queue(l.peer, r, q[1:])))
        elif isinstance(l, (LEnd, LVar)):
            pass
        else:
            raise TypeError(l)
    return out


# ---------------------------------------------------------------------------
# Exploration


def _resolve_unroll(g: GlobalType, ks) -> GlobalType:
    return g if ks is None else unroll(g, ks)


def enumerate_traces(g: GlobalType, ks=None, state_cap: int = 10**6) -> list:
    """Every complete trace of ``unroll(g, ks)`` in sorted order.

    ``state_cap`` bounds the number of visited path nodes; exceeding it raises
    ``BudgetExceeded``.
    """
    start = _resolve_unroll(g, ks)
    traces = []
    visited = 0
    stack = [(start, ())]
    while stack:
        cur, path = stack.pop()
        visited += 1
        if visited > state_cap:
            raise BudgetExceeded(f"trace enumeration exceeded {state_cap} states")
        steps = global_steps(cur)
        if not steps:
            if not isinstance(cur, End):
                raise SemanticsError(f"stuck global type: {cur}")
            traces.append(path)
            continue
        for a, k in steps:
            stack.append((k, path + (a,)))
    traces.sort(key=trace_key)
    return traces


def count_traces(g: GlobalType, ks=None) -> int:
    """Number of complete traces, counted over the deduplicated state graph."""
    start = _resolve_unroll(g, ks)
    memo: dict = {}

    def count(x):
        if x in memo:
            return memo[x]
        steps = global_steps(x)
        n = 1 if not steps else sum(count(k) for _, k in steps)
        memo[x] = n
        return n

    return count(start)


@dataclass
class DeadlockReport:
    deadlock_free: bool
    states: int
    stuck: Configuration | None = None
    trace: tuple = ()
    orphans: list = field(default_factory=list)  # finished configurations with leftover messages

    def __bool__(self):
        return self.deadlock_free

    def lines(self) -> list:
        if self.deadlock_free:
            return [f"deadlock-free ({self.states} configurations explored)"]
        out = [f"deadlock after: {format_trace(self.trace)}"]
        out.extend("  " + s for s in self.stuck.describe())
        return out


def explore_configurations(cfg: Configuration, state_cap: int = 10**6, allow_orphans: bool = False) -> DeadlockReport:
    """Breadth-first search for a stuck configuration."""
    parent: dict = {cfg: None}
    todo = deque([cfg])
    orphans = []
    while todo:
        cur = todo.popleft()
        steps = config_steps(cur)
        if not steps:
            ok = cur.finished and (not cur.queues or allow_orphans)
            if cur.finished and cur.queues:
                orphans.append(cur)
            if not ok:
                return DeadlockReport(False, len(parent), cur, _path(parent, cur), orphans)
            continue
        for a, nxt in steps:
            if nxt not in parent:
                parent[nxt] = (cur, a)
                if len(parent) > state_cap:
                    raise BudgetExceeded(f"configuration exploration exceeded {state_cap} states")
                todo.append(nxt)
    return DeadlockReport(True, len(parent), None, (), orphans)


def _path(parent: dict, cur) -> tuple:
    out = []
    while parent[cur] is not None:
        cur, a = parent[cur]
        out.append(a)
    return tuple(reversed(out))


def deadlock_free(g: GlobalType, ks=None, state_cap: int = 10**6, allow_orphans: bool = False) -> DeadlockReport:
    """Explore the projected configuration of ``unroll(g, ks)`` from empty queues."""
    return explore_configurations(initial_configuration(_resolve_unroll(g, ks)), state_cap, allow_orphans)


@dataclass
class EquivalenceReport:
    equivalent: bool
    pairs: int
    depth: int
    trace: tuple = ()
    only_global: tuple = ()
    only_local: tuple = ()

    def __bool__(self):
        return self.equivalent


def trace_equiv(g: GlobalType, ks=None, depth: int = 14, state_cap: int = 10**6) -> EquivalenceReport:
    """Compare depth-bounded trace sets of the global LTS and its projection.

    Both systems are deterministic per action, so the trace sets up to
    ``depth`` agree iff the enabled actions agree on every jointly reachable
    pair of states at depth < ``depth``.
    """
    start = _resolve_unroll(g, ks)
    cfg = initial_configuration(start)
    seen = {(start, cfg)}
    layer = [((start, cfg), ())]
    for d in range(depth):
        nxt_layer = []
        for (gs, cs), path in layer:
            gsteps = _deterministic(global_steps(gs))
            csteps = _deterministic(config_steps(cs))
            if set(gsteps) != set(csteps):
                return EquivalenceReport(
                    False, len(seen), depth, path,
                    tuple(sorted(set(gsteps) - set(csteps))), tuple(sorted(set(csteps) - set(gsteps))),
                )
            for a in sorted(gsteps):
                pair = (gsteps[a], csteps[a])
                if pair not in seen:
                    seen.add(pair)
                    if len(seen) > state_cap:
                        raise BudgetExceeded(f"equivalence check exceeded {state_cap} state pairs")
                    nxt_layer.append((pair, path + (a,)))
        layer = nxt_layer
        if not layer:
            break
    return EquivalenceReport(True, len(seen), depth)


def roles_in(g: GlobalType) -> list:
    return sorted(roles_of(g))
