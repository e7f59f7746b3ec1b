"""Asynchronous message optimization: normal forms and the ``G1 <= G2`` check.

Split actions are ``SendAct`` (``pq!!<t>``) and ``RecvAct`` (``qp??<t>``).  Two
actions depend on each other exactly when they use the same channel (same
sender and receiver); independent actions may be permuted.  The normal form
splits every message, sorts each run of split actions into its least
linear extension under the key "sends before receives, then by role ids",
and moves sends out of and receives into branches while the side conditions
allow it.  Recursion binders are barriers: nothing crosses a ``mu``.
"""
from __future__ import annotations

import dataclasses
import random
from dataclasses import dataclass, field
from typing import Sequence

from .algebra import Binding, CostEnv, EnvComparison, ZeroSend, compare_envs, env_atoms, sample_bindings
from .core_types import (
    END,
    Branch,
    BranchT,
    End,
    GlobalType,
    Msg,
    Rec,
    RecCall,
    RecvAct,
    SendAct,
    map_children,
)
from .cost import global_cost_ext
from .semantics import DeadlockReport, deadlock_free

__all__ = [
    "RULES", "split_messages", "normal_form", "random_normal_form", "RewriteRun", "optim_leq", "explain_leq",
    "OptDeadlockReport", "check_opt_deadlock", "OptCostReport", "check_opt_cost",
]

RULES = ("Init", "Out", "In", "Opt", "OBra", "IBra")

_ACTS = (SendAct, RecvAct)


def split_messages(g: GlobalType) -> GlobalType:
    """Apply Init everywhere: ``p->q<t@c>.G`` becomes ``pq!!<t>.qp??<t@c>.G``."""
    if isinstance(g, Msg):
        cont = split_messages(g.cont)
        return SendAct(g.sender, g.receiver, g.payload, RecvAct(g.receiver, g.sender, g.payload, g.cost, cont))
    return map_children(g, lambda k, _u: split_messages(k))


# ---------------------------------------------------------------------------
# Runs of split actions


def _channel(a) -> tuple:
    return (a.sender, a.receiver)


def _key(a) -> tuple:
    if isinstance(a, SendAct):
        return (0, a.sender.id, a.receiver.id)
    return (1, a.receiver.id, a.sender.id)


def _dependent(a, b) -> bool:
    return _channel(a) == _channel(b)


def _segment(t) -> tuple:
    """Leading split actions of ``t`` (with ``end`` continuations) and the rest."""
    acts = []
    while isinstance(t, _ACTS):
        acts.append(dataclasses.replace(t, cont=END))
        t = t.cont
    return acts, t


def _rebuild(acts: Sequence, tail: GlobalType) -> GlobalType:
    for a in reversed(acts):
        tail = dataclasses.replace(a, cont=tail)
    return tail


def _sorted_run(acts: Sequence) -> list:
    """Least linear extension of ``acts`` under the same-channel order."""
    pending = list(acts)
    out = []
    while pending:
        best = None
        for j, a in enumerate(pending):
            if any(_dependent(a, b) for b in pending[:j]):
                continue
            if best is None or _key(a) < _key(pending[best]):
                best = j
        out.append(pending.pop(best))
    return out


def _movable_sends(acts: Sequence) -> list:
    """Indices of sends with no earlier action on their channel."""
    return [j for j, a in enumerate(acts)
            if isinstance(a, SendAct) and not any(_dependent(a, b) for b in acts[:j])]


def _pullable(br: Branch) -> list:
    """Sends that OBra may lift out of every arm of ``br``."""
    segs = [_segment(k)[0] for _, k in br.branches]
    out = []
    for j in _movable_sends(segs[0]):
        s = segs[0][j]
        if _channel(s) == (br.sender, br.receiver) or s in out:
            continue
        if all(any(seg[i] == s for i in _movable_sends(seg)) for seg in segs[1:]):
            out.append(s)
    return out


def _remove_first(t, s) -> GlobalType:
    """Drop the first movable occurrence of send ``s`` from the run leading ``t``."""
    acts, tail = _segment(t)
    j = next(i for i in _movable_sends(acts) if acts[i] == s)
    return _rebuild(acts[:j] + acts[j + 1:], tail)


def _obra(br: Branch, s) -> Branch:
    return Branch(br.sender, br.receiver, tuple((l, _remove_first(k, s)) for l, k in br.branches))


def _ibra(br: Branch, r) -> Branch:
    return Branch(br.sender, br.receiver, tuple((l, dataclasses.replace(r, cont=k)) for l, k in br.branches))


def _pushable(acts: Sequence, br: Branch) -> list:
    """Indices of receives IBra may push from ``acts`` into the arms of ``br``."""
    return [j for j, a in enumerate(acts)
            if isinstance(a, RecvAct) and _channel(a) != (br.sender, br.receiver)
            and not any(_dependent(a, b) for b in acts[j + 1:])]


# ---------------------------------------------------------------------------
# Deterministic normal form


def _nf(t: GlobalType) -> GlobalType:
    acts, tail = _segment(t)
    if isinstance(tail, Branch):
        acts, tail = _settle_branch(acts, tail)
    elif isinstance(tail, Rec):
        tail = Rec(_nf(tail.body), tail.name)
    elif not isinstance(tail, (RecCall, End)):
        tail = map_children(tail, lambda k, _u: _nf(k))
    return _rebuild(_sorted_run(acts), tail)


def _settle_branch(acts: list, br: Branch) -> tuple:
    """OBra and IBra at one branch until neither applies."""
    acts = list(acts)
    while True:
        br = Branch(br.sender, br.receiver, tuple((l, _nf(k)) for l, k in br.branches))
        pull = _pullable(br)
        if pull:
            s = min(pull, key=_key)
            acts.append(s)
            br = _obra(br, s)
            continue
        push = _pushable(acts, br)
        if push:
            r = acts.pop(push[-1])
            br = _ibra(br, r)
            continue
        return acts, br


def normal_form(g: GlobalType) -> GlobalType:
    """Canonical representative of ``g`` under the optimization rules."""
    return _nf(split_messages(g))


# ---------------------------------------------------------------------------
# Seeded single-step rewriting (used to check that rule order does not matter)


def _redexes(t: GlobalType) -> list:
    """Callables returning ``t`` rewritten by one rule somewhere inside it."""
    out = []
    if isinstance(t, Msg):
        out.append(lambda: SendAct(t.sender, t.receiver, t.payload,
                                   RecvAct(t.receiver, t.sender, t.payload, t.cost, t.cont)))
    if isinstance(t, _ACTS):
        acts, tail = _segment(t)
        b = acts[0]
        for j in range(1, len(acts)):
            a = acts[j]
            if _key(a) < _key(b) and not any(_dependent(a, c) for c in acts[:j]):
                # Out / In / Opt: move ``a`` in front of the independent block before it
                out.append(lambda j=j: _rebuild([acts[j]] + acts[:j] + acts[j + 1:], tail))
        if isinstance(tail, Branch) and 0 in _pushable(acts, tail):
            out.append(lambda: _rebuild(acts[1:], _ibra(tail, acts[0])))
    if isinstance(t, Branch):
        for s in _pullable(t):
            out.append(lambda s=s: dataclasses.replace(s, cont=_obra(t, s)))
        for i, (l, k) in enumerate(t.branches):
            for f in _redexes(k):
                out.append(lambda i=i, f=f: Branch(t.sender, t.receiver,
                                                   t.branches[:i] + ((t.branches[i][0], f()),) + t.branches[i + 1:]))
    elif isinstance(t, Rec):
        out.extend(lambda f=f: Rec(f(), t.name) for f in _redexes(t.body))
    elif hasattr(t, "cont"):
        out.extend(lambda f=f: dataclasses.replace(t, cont=f()) for f in _redexes(t.cont))
    return out


def _metric(t: GlobalType) -> tuple:
    """(messages, sum of send branch depths, minus sum of receive branch depths, key word)."""
    msgs = sends = recvs = 0
    word = []
    stack = [(t, 0)]
    while stack:
        x, d = stack.pop()
        if isinstance(x, Msg):
            msgs += 1
        elif isinstance(x, SendAct):
            sends += d
        elif isinstance(x, RecvAct):
            recvs += d
        if isinstance(x, _ACTS):
            word.append(_key(x))
        if isinstance(x, (Branch, BranchT)):
            stack.extend((k, d + 1) for _, k in reversed(x.branches))
        elif isinstance(x, Rec):
            stack.append((x.body, d))
        elif hasattr(x, "cont"):
            stack.append((x.cont, d))
    return (msgs, sends, -recvs, tuple(word))


@dataclass
class RewriteRun:
    result: GlobalType
    steps: int
    metrics: list = field(default_factory=list)

    @property
    def decreasing(self) -> bool:
        return all(a > b for a, b in zip(self.metrics, self.metrics[1:]))


def random_normal_form(g: GlobalType, seed: int = 0, max_steps: int = 100_000) -> RewriteRun:
    """Rewrite ``g`` by randomly chosen single steps until no rule applies."""
    rng = random.Random(seed)
    metrics = [_metric(g)]
    steps = 0
    while True:
        options = _redexes(g)
        if not options:
            return RewriteRun(g, steps, metrics)
        if steps >= max_steps:
            raise RuntimeError(f"no normal form within {max_steps} steps")
        g = rng.choice(options)()
        steps += 1
        metrics.append(_metric(g))


# ---------------------------------------------------------------------------
# Deciding G1 <= G2


def _paths(g: GlobalType) -> dict:
    """Maximal paths keyed by branch choices; events are (kind, channel, ordinal)."""
    out = {}

    def walk(t, labels, events, counts):
        while True:
            if isinstance(t, SendAct):
                ev = ("send", (t.sender.id, t.receiver.id))
            elif isinstance(t, RecvAct):
                ev = ("recv", (t.sender.id, t.receiver.id))
            elif isinstance(t, Branch):
                ev = ("branch", (t.sender.id, t.receiver.id))
            elif isinstance(t, Rec):
                ev = ("mu", None)
            elif isinstance(t, RecCall):
                ev = ("call", t.index)
            elif isinstance(t, End):
                out[labels] = events
                return
            else:
                ev = (type(t).__name__, None)
            n = counts.get(ev, 0)
            counts = {**counts, ev: n + 1}
            events = events + (ev + (n,),)
            if isinstance(t, Branch):
                for l, k in t.branches:
                    walk(k, labels + ((ev[1], l),), events, counts)
                return
            if isinstance(t, RecCall):
                out[labels] = events
                return
            t = t.body if isinstance(t, Rec) else t.cont

    walk(g, (), (), {})
    return out


# (earlier in G2, earlier in G1) pairs a rule may swap toward the optimized side
_ALLOWED_SWAPS = {("recv", "send"), ("send", "send"), ("recv", "recv"), ("branch", "send"), ("recv", "branch")}


def explain_leq(g1: GlobalType, g2: GlobalType) -> list:
    """Reasons why ``g1`` is not an optimization of ``g2`` (empty when it is)."""
    s1, s2 = split_messages(g1), split_messages(g2)
    if _nf(s1) != _nf(s2):
        return ["normal forms differ"]
    p1, p2 = _paths(s1), _paths(s2)
    if set(p1) != set(p2):
        return ["branch structure differs"]
    reasons = []
    for labels, ev2 in p2.items():
        ev1 = p1[labels]
        if sorted(ev1) != sorted(ev2):
            reasons.append(f"path {labels}: different actions")
            continue
        pos1 = {e: i for i, e in enumerate(ev1)}
        for i, x in enumerate(ev2):
            for y in ev2[i + 1:]:
                if pos1[x] > pos1[y] and (x[0], y[0]) not in _ALLOWED_SWAPS:
                    reasons.append(f"path {labels}: {y[0]} {y[1]} moved before {x[0]} {x[1]}")
    return reasons


def optim_leq(g1: GlobalType, g2: GlobalType) -> bool:
    """Whether ``g1`` is an asynchronous optimization of ``g2``."""
    return not explain_leq(g1, g2)


# ---------------------------------------------------------------------------
# Consequences of G1 <= G2


@dataclass
class OptDeadlockReport:
    related: bool
    deadlock: DeadlockReport
    reasons: list = field(default_factory=list)

    @property
    def deadlock_free(self) -> bool:
        return bool(self.deadlock)

    @property
    def basis(self) -> str:
        return "optimization of a deadlock-free type" if self.related else "safety by exploration, not by the relation"

    @property
    def ok(self) -> bool:
        return self.related and self.deadlock_free


def check_opt_deadlock(g1: GlobalType, g2: GlobalType | None = None, ks=1, state_cap: int = 10**6,
                       allow_orphans: bool = True) -> OptDeadlockReport:
    """Explore ``g1``'s configuration for deadlocks and say whether ``g1 <= g2``.

    Orphan messages left in queues at the end of a run are accepted by
    default, since optimized types commonly send ahead of the last receive.
    """
    reasons = ["no source type given"] if g2 is None else explain_leq(g1, g2)
    report = deadlock_free(g1, ks, state_cap=state_cap, allow_orphans=allow_orphans)
    return OptDeadlockReport(not reasons, report, reasons)


@dataclass
class OptCostReport:
    related: bool
    comparison: EnvComparison
    optimized: CostEnv
    original: CostEnv
    reasons: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.related and self.comparison.holds


def check_opt_cost(g1: GlobalType, g2: GlobalType, ks=(), samples: int = 100, seed: int = 42,
                   bindings: Sequence[Binding] | None = None, zero_send: bool = True) -> OptCostReport:
    """Compare ``cost(g1)`` with ``cost(g2)`` at sampled bindings (send costs forced to 0 by default)."""
    reasons = explain_leq(g1, g2)
    e1, e2 = global_cost_ext(g1, ks), global_cost_ext(g2, ks)
    if bindings is None:
        bindings = sample_bindings(env_atoms(e1) | env_atoms(e2), samples, seed)
    if zero_send:
        bindings = [ZeroSend(b) for b in bindings]
    return OptCostReport(not reasons, compare_envs(e1, e2, bindings), e1, e2, reasons)
