"""Trace cost, global-type cost and the bounded-cost soundness harness.

One interpreter serves both symbolic and numeric evaluation: it is written
against a small arithmetic interface (``lit``, ``add``, ``max``, ``zero``)
implemented once over max-plus normal forms and once over vectors of scaled
integers, one lane per sampled binding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .algebra import (
    NF_ZERO,
    Binding,
    CostEnv,
    atoms_of,
    nf_add,
    nf_max,
    normalize,
    sample_bindings,
    to_expr,
)
from .core_types import (
    UNIT,
    Branch,
    BranchT,
    CostExpr,
    End,
    Eval,
    GlobalType,
    Msg,
    MsgT,
    Rec,
    RecCall,
    Recv,
    RecvAct,
    Role,
    Send,
    SendAct,
    children,
    unroll,
)
from .projection import has_split_actions
from .semantics import (
    ABranch,
    ARecv,
    ARun,
    ASelect,
    ASend,
    Action,
    BudgetExceeded,
    config_steps,
    global_steps,
    initial_configuration,
)

__all__ = [
    "CostError", "CostState", "action_cost", "trace_cost", "unroll", "global_cost",
    "global_cost_state", "global_cost_ext", "wf_dep_queue", "check_soundness", "SoundnessReport",
]


class CostError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Arithmetic back-ends


class SymbolicArith:
    zero = NF_ZERO

    def __init__(self, label_costs: bool = True):
        self.label_costs = label_costs

    def lit(self, e: CostExpr):
        return normalize(e)

    @staticmethod
    def add(a, b):
        return nf_add(a, b)

    @staticmethod
    def max(a, b):
        return nf_max(a, b)

    def send(self, ty):
        if ty is None:
            return self.lit(Send(UNIT)) if self.label_costs else self.zero
        return self.lit(Send(ty))

    def recv(self, ty):
        if ty is None:
            return self.lit(Recv(UNIT)) if self.label_costs else self.zero
        return self.lit(Recv(ty))


class NumericArith(SymbolicArith):
    """Exact evaluation under many bindings at once.

    Every value is multiplied by a common denominator so that all arithmetic
    stays in integers; int64 lanes are used unless the worst case could
    overflow, in which case Python integers are kept in object arrays.
    """

    def __init__(self, bindings: Sequence[Binding], exprs: Iterable[CostExpr], label_costs: bool = True,
                 magnitude_hint: int = 1):
        super().__init__(label_costs)
        self.bindings = list(bindings)
        exprs = list(exprs) + [Send(UNIT), Recv(UNIT)]
        nfs = [normalize(e) for e in exprs]
        dc = 1
        for nf in nfs:
            for const, coeffs in nf.terms:
                dc = math.lcm(dc, const.denominator, *(c.denominator for _, c in coeffs))
        atoms = set()
        for nf in nfs:
            atoms |= nf.atoms()
        dv = 1
        self._atom_values = {}
        for a in sorted(atoms):
            vals = [Fraction(b.atom_value(a)) for b in self.bindings]
            self._atom_values[a] = vals
            dv = math.lcm(dv, *(v.denominator for v in vals))
        self.scale = dc * dv
        self._cache = {}
        raw = {e: self._exact(nf) for e, nf in zip(exprs, nfs)}
        biggest = max((max(v) for v in raw.values() if v), default=0)
        self.dtype = np.int64 if biggest * max(magnitude_hint, 1) * 4 < 2**62 else object
        self.zero = np.zeros(len(self.bindings), dtype=self.dtype)
        for e, v in raw.items():
            self._cache[e] = np.array(v, dtype=self.dtype)

    def _exact(self, nf) -> list:
        out = []
        for i in range(len(self.bindings)):
            best = None
            for const, coeffs in nf.terms:
                v = const + sum((c * self._atom_values[a][i] for a, c in coeffs), Fraction(0))
                best = v if best is None or v > best else best
            scaled = best * self.scale
            if scaled.denominator != 1:
                raise CostError("internal: value not representable at the chosen scale")
            out.append(int(scaled))
        return out

    def lit(self, e: CostExpr):
        hit = self._cache.get(e)
        if hit is None:
            hit = np.array(self._exact(normalize(e)), dtype=self.dtype)
            self._cache[e] = hit
        return hit

    @staticmethod
    def add(a, b):
        return a + b

    @staticmethod
    def max(a, b):
        return np.maximum(a, b)

    def to_fraction(self, v, i: int) -> Fraction:
        return Fraction(int(v[i]), self.scale)


# ---------------------------------------------------------------------------
# States: an environment (role -> value) and a dependency queue
# ((sender, receiver) -> tuple of availability times), both plain dicts.


@dataclass(frozen=True)
class CostState:
    env: CostEnv = field(default_factory=CostEnv)
    queue: tuple = ()  # sorted (((Role, Role), (CostExpr, ...)), ...)

    def queue_dict(self) -> dict:
        return {k: tuple(v) for k, v in self.queue}

    def __str__(self):
        qs = "; ".join(f"{p}{q} -> [{', '.join(map(str, v))}]" for (p, q), v in self.queue)
        return f"({self.env}, [{qs}])"


def _to_internal(arith, state: CostState | None):
    if state is None:
        return {}, {}
    env = {r: arith.lit(e) for r, e in state.env.items()}
    queue = {k: tuple(arith.lit(e) for e in v) for k, v in state.queue}
    return env, queue


def _to_state(env: dict, queue: dict) -> CostState:
    return CostState(
        CostEnv({r: to_expr(v) for r, v in env.items()}),
        tuple(sorted((k, tuple(to_expr(x) for x in v)) for k, v in queue.items() if v)),
    )


def _get(arith, env, r):
    v = env.get(r)
    return arith.zero if v is None else v


def _push(queue: dict, key, v) -> dict:
    out = dict(queue)
    out[key] = queue.get(key, ()) + (v,)
    return out


def _pop(queue: dict, key, what: str):
    items = queue.get(key, ())
    if not items:
        raise CostError(f"{what}: empty dependency queue {key[0]}{key[1]}")
    out = dict(queue)
    if len(items) == 1:
        del out[key]
    else:
        out[key] = items[1:]
    return items[0], out


def _send(arith, env, queue, p, q, c):
    """``T[p (+) c]`` and append the sender's new time to queue ``pq``."""
    env = dict(env)
    env[p] = arith.add(_get(arith, env, p), c)
    return env, _push(queue, (p, q), env[p])


def _after(arith, env, gate, r, c):
    """``T[gate | r (+) c]``."""
    env = dict(env)
    env[r] = arith.add(arith.max(_get(arith, env, r), gate), c)
    return env


def _action(arith, a: Action, env: dict, queue: dict):
    if isinstance(a, ASend):
        return _send(arith, env, queue, a.sender, a.receiver, arith.send(a.ty))
    if isinstance(a, ASelect):
        return _send(arith, env, queue, a.sender, a.receiver, arith.send(None))
    if isinstance(a, ARecv):
        gate, queue = _pop(queue, (a.sender, a.receiver), "malformed trace")
        return _after(arith, env, gate, a.receiver, arith.recv(a.ty)), queue
    if isinstance(a, ABranch):
        gate, queue = _pop(queue, (a.sender, a.receiver), "malformed trace")
        return _after(arith, env, gate, a.receiver, arith.recv(None)), queue
    if isinstance(a, ARun):
        return _after(arith, env, arith.zero, a.role, arith.lit(a.cost)), queue
    raise TypeError(a)


def _env_max(arith, envs: list) -> dict:
    out: dict = {}
    for e in envs:
        for r in e:
            out[r] = arith.max(_get(arith, out, r), e[r]) if r in out else e[r]
    # roles absent from some arm count as 0, which never exceeds a present value
    return out


def _queue_max(arith, queues: list) -> dict:
    first = queues[0]
    for q in queues[1:]:
        if {k: len(v) for k, v in q.items()} != {k: len(v) for k, v in first.items()}:
            raise CostError("branches leave differently shaped dependency queues")
    return {k: tuple(_fold_max(arith, [q[k][i] for q in queues]) for i in range(len(v))) for k, v in first.items()}


def _fold_max(arith, vals):
    out = vals[0]
    for v in vals[1:]:
        out = arith.max(out, v)
    return out


def _gcost(arith, g: GlobalType, env: dict, queue: dict):
    """Global-type cost of a recursion-free type from ``(env, queue)``."""
    while True:
        if isinstance(g, End):
            return env, queue
        if isinstance(g, Msg):
            env, _ = _send(arith, env, {}, g.sender, g.receiver, arith.send(g.payload))
            env = _after(arith, env, env[g.sender], g.receiver, arith.add(arith.recv(g.payload), arith.lit(g.cost)))
            g = g.cont
        elif isinstance(g, Branch):
            env, _ = _send(arith, env, {}, g.sender, g.receiver, arith.send(None))
            env = _after(arith, env, env[g.sender], g.receiver, arith.recv(None))
            results = [_gcost(arith, k, env, queue) for _, k in g.branches]
            return _env_max(arith, [r[0] for r in results]), _queue_max(arith, [r[1] for r in results])
        elif isinstance(g, MsgT):
            gate, queue = _pop(queue, (g.sender, g.receiver), "ill-formed dependency queue")
            env = _after(arith, env, gate, g.receiver, arith.add(arith.recv(g.payload), arith.lit(g.cost)))
            g = g.cont
        elif isinstance(g, BranchT):
            gate, queue = _pop(queue, (g.sender, g.receiver), "ill-formed dependency queue")
            env = _after(arith, env, gate, g.receiver, arith.recv(None))
            g = g.branches[g.chosen][1]
        elif isinstance(g, Eval):
            env = _after(arith, env, arith.zero, g.role, arith.lit(g.cost))
            g = g.cont
        elif isinstance(g, SendAct):
            env, queue = _send(arith, env, queue, g.sender, g.receiver, arith.send(g.payload))
            g = g.cont
        elif isinstance(g, RecvAct):
            gate, queue = _pop(queue, (g.sender, g.receiver), "ill-ordered optimized type")
            env = _after(arith, env, gate, g.receiver, arith.add(arith.recv(g.payload), arith.lit(g.cost)))
            g = g.cont
        elif isinstance(g, (Rec, RecCall)):
            raise CostError("global cost needs a recursion-free type; unroll first")
        else:
            raise TypeError(g)


# ---------------------------------------------------------------------------
# Public symbolic API


def action_cost(a: Action, s: CostState | None = None, label_costs: bool = True) -> CostState:
    arith = SymbolicArith(label_costs)
    env, queue = _to_internal(arith, s)
    return _to_state(*_action(arith, a, env, queue))


def trace_cost_state(tr: Iterable[Action], s: CostState | None = None, label_costs: bool = True) -> CostState:
    arith = SymbolicArith(label_costs)
    env, queue = _to_internal(arith, s)
    for a in tr:
        env, queue = _action(arith, a, env, queue)
    return _to_state(env, queue)


def trace_cost(tr: Iterable[Action], label_costs: bool = True) -> CostEnv:
    """Per-role cost of a trace, starting from zero costs and empty queues."""
    return trace_cost_state(tr, None, label_costs).env


def global_cost_state(g: GlobalType, ks=(), s: CostState | None = None, label_costs: bool = True) -> CostState:
    arith = SymbolicArith(label_costs)
    env, queue = _to_internal(arith, s)
    return _to_state(*_gcost(arith, unroll(g, ks), env, queue))


def global_cost(g: GlobalType, ks=(), s: CostState | None = None, label_costs: bool = True) -> CostEnv:
    """Upper bound on every trace's cost after unrolling recursion ``ks`` times."""
    return global_cost_state(g, ks, s, label_costs).env


def global_cost_ext(g: GlobalType, ks=(), s: CostState | None = None, label_costs: bool = True) -> CostEnv:
    """Global cost of a type with split send/receive actions.

    Receives pop the availability time pushed by the matching earlier send on
    the same channel; a receive with nothing to pop is an ill-ordered type.
    """
    return global_cost_state(g, ks, s, label_costs).env


# ---------------------------------------------------------------------------
# Well-formed dependency queues


def wf_dep_queue(g: GlobalType, queue) -> bool:
    """Whether ``queue`` holds exactly the entries ``g`` still has to consume."""
    if isinstance(queue, CostState):
        queue = queue.queue_dict()
    lengths = {k: len(v) for k, v in dict(queue).items() if len(v)}
    return _wf(g, lengths)


def _wf(g, lengths: dict) -> bool:
    while True:
        if isinstance(g, End):
            return not any(lengths.values())
        if isinstance(g, Msg):
            if lengths.get((g.sender, g.receiver), 0):
                return False
            g = g.cont
        elif isinstance(g, MsgT):
            key = (g.sender, g.receiver)
            if not lengths.get(key, 0):
                return False
            lengths = dict(lengths)
            lengths[key] -= 1
            g = g.cont
        elif isinstance(g, Eval):
            g = g.cont
        elif isinstance(g, BranchT):
            key = (g.sender, g.receiver)
            if not lengths.get(key, 0):
                return False
            lengths = dict(lengths)
            lengths[key] -= 1
            g = g.branches[g.chosen][1]
        elif isinstance(g, Branch):
            if lengths.get((g.sender, g.receiver), 0):
                return False
            return all(_wf(k, lengths) for _, k in g.branches)
        else:
            return False


# ---------------------------------------------------------------------------
# Soundness harness


def cost_annotations(g) -> list:
    """Every cost-relevant expression of a type (payload send/recv and annotations)."""
    out = []
    seen = set()
    stack = [g]
    while stack:
        x = stack.pop()
        if id(x) in seen:
            continue
        seen.add(id(x))
        ty = getattr(x, "payload", None)
        if ty is not None:
            out.append(Send(ty))
            out.append(Recv(ty))
        c = getattr(x, "cost", None)
        if isinstance(c, CostExpr):
            out.append(c)
        stack.extend(children(x))
    return list(dict.fromkeys(out))


def _size(g) -> int:
    n, stack = 0, [g]
    while stack:
        x = stack.pop()
        n += 1
        stack.extend(children(x))
    return n


@dataclass
class Violation:
    kind: str  # "bound", "wf", "preservation" or "determinism"
    role: Role | None
    binding: int | None
    lhs: Fraction | None
    rhs: Fraction | None
    trace: tuple = ()

    def describe(self) -> str:
        from .semantics import format_trace

        who = f" role {self.role}" if self.role is not None else ""
        vals = f" ({self.lhs} > {self.rhs} at binding {self.binding})" if self.lhs is not None else ""
        return f"{self.kind}{who}{vals} after {format_trace(self.trace)}"


@dataclass
class SoundnessReport:
    traces: int
    states: int
    transitions: int
    samples: int
    split: bool
    global_env: CostEnv
    violations: list
    tight: dict  # role -> max trace cost equals the bound under every binding
    strict: dict  # role -> some trace is strictly cheaper under some binding
    max_trace: dict  # role -> per-binding maximum over traces (Fractions)
    bound: dict  # role -> per-binding bound (Fractions)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def count(self, kind: str) -> int:
        return sum(1 for v in self.violations if v.kind == kind)


def _key(arith, env: dict, queue: dict):
    return (
        tuple((r, v.tobytes() if arith.dtype is not object else tuple(v)) for r, v in sorted(env.items())),
        tuple((k, tuple(x.tobytes() if arith.dtype is not object else tuple(x) for x in v))
              for k, v in sorted(queue.items()) if v),
    )


def check_soundness(g: GlobalType, ks=(), samples: int = 100, seed: int = 42, state_cap: int = 10**6,
                    bindings: Sequence[Binding] | None = None, label_costs: bool = True,
                    max_violations: int = 20) -> SoundnessReport:
    """Check every complete trace of ``unroll(g, ks)`` against the global cost.

    States of the transition system are paired with the exact numeric cost
    state under every sampled binding; deduplicating these pairs visits each
    distinct (type, cost) situation once while still covering every trace,
    and path counts give the number of traces covered.  For ordinary global
    types each transition is additionally checked for queue well-formedness
    and for cost preservation.  Types with split actions run through the
    projected configurations and are only checked at complete traces.
    """
    start = unroll(g, ks)
    split = has_split_actions(start)
    exprs = cost_annotations(start)
    if bindings is None:
        atoms = set()
        for e in exprs + [Send(UNIT), Recv(UNIT)]:
            atoms |= atoms_of(e)
        bindings = sample_bindings(atoms, samples, seed)
    arith = NumericArith(bindings, exprs, label_costs, magnitude_hint=_size(start))
    n = len(bindings)

    bound_env, bound_queue = _gcost(arith, start, {}, {})
    roles = sorted(bound_env)
    violations: list = []
    value_cache: dict = {}

    def value(state, env, queue):
        k = (state, _key(arith, env, queue))
        hit = value_cache.get(k)
        if hit is None:
            hit = _gcost(arith, state, env, queue)[0]
            value_cache[k] = hit
        return hit

    def record(v: Violation, parents, node):
        if len(violations) < max_violations:
            v.trace = _witness(parents, node)
            violations.append(v)
        else:
            violations.append(v)

    lts_start = initial_configuration(start) if split else start
    steps_of = config_steps if split else global_steps
    node0 = (lts_start, _key(arith, {}, {}))
    layer = {node0: ({}, {}, 1)}
    parents: dict = {node0: None}
    states = 1
    transitions = 0
    traces = 0
    max_trace = {r: arith.zero.copy() for r in roles}
    min_trace = {r: None for r in roles}
    if not split and not wf_dep_queue(start, {}):
        violations.append(Violation("wf", None, None, None, None))
    while layer:
        nxt: dict = {}
        for node, (env, queue, paths) in layer.items():
            state = node[0]
            steps = steps_of(state)
            if not steps:
                traces += paths
                finished = isinstance(state, End) if not split else state.finished
                if not finished:
                    record(Violation("stuck", None, None, None, None), parents, node)
                    continue
                for r in set(env) | set(roles):
                    v = _get(arith, env, r)
                    b = _get(arith, bound_env, r)
                    if r not in max_trace:
                        max_trace[r] = arith.zero.copy()
                        min_trace[r] = None
                    max_trace[r] = np.maximum(max_trace[r], v)
                    min_trace[r] = v if min_trace[r] is None else np.minimum(min_trace[r], v)
                    bad = np.nonzero(v > b)[0]
                    if len(bad):
                        i = int(bad[0])
                        record(Violation("bound", r, i, arith.to_fraction(v, i), arith.to_fraction(b, i)), parents, node)
                continue
            if not split:
                seen_actions = {}
                for a, succ in steps:
                    if a in seen_actions and seen_actions[a] != succ:
                        record(Violation("determinism", a.subject, None, None, None), parents, node)
                    seen_actions[a] = succ
                here = value(state, env, queue)
            for a, succ in steps:
                transitions += 1
                env2, queue2 = _action(arith, a, env, queue)
                key = (succ, _key(arith, env2, queue2))
                if key in nxt:
                    e, q, p = nxt[key]
                    nxt[key] = (e, q, p + paths)
                    continue
                nxt[key] = (env2, queue2, paths)
                parents[key] = (node, a)
                states += 1
                if states > state_cap:
                    raise BudgetExceeded(f"soundness exploration exceeded {state_cap} states")
                if split:
                    continue
                if not wf_dep_queue(succ, {k: v for k, v in queue2.items()}):
                    record(Violation("wf", a.subject, None, None, None), parents, key)
                there = value(succ, env2, queue2)
                for r in set(here) | set(there):
                    lhs, rhs = _get(arith, there, r), _get(arith, here, r)
                    bad = np.nonzero(lhs > rhs)[0]
                    if len(bad):
                        i = int(bad[0])
                        record(Violation("preservation", r, i, arith.to_fraction(lhs, i), arith.to_fraction(rhs, i)),
                               parents, key)
        layer = nxt

    tight, strict, mt, bd = {}, {}, {}, {}
    for r in sorted(max_trace):
        b = _get(arith, bound_env, r)
        tight[r] = bool(np.all(max_trace[r] == b))
        strict[r] = bool(min_trace[r] is not None and np.any(min_trace[r] < b))
        mt[r] = [arith.to_fraction(max_trace[r], i) for i in range(n)]
        bd[r] = [arith.to_fraction(b, i) for i in range(n)]
    symbolic = global_cost(g, ks, label_costs=label_costs)
    return SoundnessReport(traces, states, transitions, n, split, symbolic, violations, tight, strict, mt, bd)


def _witness(parents: dict, node) -> tuple:
    out = []
    while parents.get(node) is not None:
        node, a = parents[node]
        out.append(a)
    return tuple(reversed(out))


def roles_by_name(env: CostEnv) -> dict:
    return {r.name: e for r, e in env.items()}
