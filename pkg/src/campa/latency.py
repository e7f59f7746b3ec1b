"""Cost recurrences, difference equations and per-iteration latency."""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

import numpy as np

from .algebra import (
    Binding,
    CostEnv,
    NormalForm,
    env_atoms,
    evaluate,
    evaluate_many,
    nf_add,
    nf_atom,
    nf_leq,
    nf_max,
    nf_scale,
    normalize,
    sample_bindings,
    to_expr,
)
from .core_types import (
    END,
    UNIT,
    Branch,
    Eval,
    GlobalType,
    Msg,
    Rec,
    RecCall,
    Role,
    Scale,
    SendAct,
    Sub,
    Var,
    children,
    count_binders,
    map_children,
    roles_of,
    shift,
    subst,
)
from .cost import SymbolicArith, _gcost, check_soundness, global_cost
from .semantics import BudgetExceeded

__all__ = [
    "LatencyError", "SplitPart", "split_nested", "Recurrence", "recurrence", "LatencyResult", "latency",
    "latency_nested", "latency_rel", "interaction_count", "NestedBinding", "LatencyReport",
    "check_latency_theorems",
]


class LatencyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Splitting nested recursion


@dataclass(frozen=True)
class SplitPart:
    name: str  # binder name of the loop this part describes
    protocol: GlobalType  # at most one recursion binder
    inner: tuple = ()  # (parameter, inner loop name, roles) for each directly nested loop

    @property
    def params(self) -> tuple:
        return tuple(p for p, _, _ in self.inner)


def charge_var(param: str, loop: str, role: Role) -> Var:
    """Cost variable standing for ``param * costw(loop)(role)``."""
    return Var(f"{param}*{loop}[{role.name}]")


def _prune(t):
    """Drop the paths of a loop body that return to the loop (index 0)."""

    def go(x, depth):
        if isinstance(x, RecCall):
            return None if x.index == depth else x
        if isinstance(x, Branch):
            arms = tuple((l, k2) for l, k in x.branches if (k2 := go(k, depth)) is not None)
            return Branch(x.sender, x.receiver, arms) if arms else None
        kids = list(children(x))
        if not kids:
            return x
        k = go(kids[0], depth + 1 if isinstance(x, Rec) else depth)
        return None if k is None else map_children(x, lambda _c, _u: k)

    return go(t, 0)


def _close_outer(body):
    """References past the loop's own binder (to enclosing loops) become ``end``."""
    if isinstance(body, RecCall):
        return END if body.index > 0 else body
    return map_children(body, lambda k, _u: _close_outer(k))


def split_nested(g: GlobalType) -> list:
    """Split ``g`` into parts with at most one recursion binder each.

    A nested loop is replaced in its parent by a per-role charge
    ``k_i * costw(inner)`` (a cost variable named ``k_i*Y[role]``) followed
    by the loop's exit paths.  Parts are listed innermost first; the last
    one stands for ``g``.
    """
    if count_binders(g) <= 1:
        return [SplitPart(_first_binder(g) or "-", g)]
    parts: list = []
    counter = iter(range(1, 10**6))

    def flatten(body):
        refs = []

        def go(x):
            if not isinstance(x, Rec):
                return map_children(x, lambda k, _u: go(k))
            inner_body, inner_refs = flatten(x.body)
            parts.append(SplitPart(x.name, Rec(_close_outer(inner_body), x.name), inner_refs))
            param = f"k{next(counter)}"
            roles = tuple(sorted(roles_of(x)))
            refs.append((param, x.name, roles))
            exit_path = _prune(inner_body)
            rest = END if exit_path is None else shift(exit_path, -1, 0)
            for r in reversed(roles):
                rest = Eval(r, UNIT, charge_var(param, x.name, r), rest)
            return rest

        return go(body), tuple(refs)

    top_refs = []

    def top(x):
        if isinstance(x, Rec):
            body, refs = flatten(x.body)
            top_refs.extend(refs)
            return Rec(body, x.name)
        return map_children(x, lambda k, _u: top(k))

    g2 = top(g)
    parts.append(SplitPart(_first_binder(g) or "-", g2, tuple(top_refs)))
    return parts


def _first_binder(g):
    stack = [g]
    while stack:
        x = stack.pop()
        if isinstance(x, Rec):
            return x.name
        stack.extend(reversed(list(children(x))))
    return None


class NestedBinding(Binding):
    """Binding that also resolves the charge variables introduced by ``split_nested``.

    ``params`` gives each iteration parameter a value and ``latencies`` maps
    inner loop names to their per-role latency.
    """

    def __init__(self, base: Binding, params: Mapping[str, Fraction], latencies: Mapping[str, CostEnv]):
        self.base = base
        self.params = {k: Fraction(v) for k, v in params.items()}
        self.latencies = latencies

    def atom_value(self, atom):
        if atom[0] == "var" and "*" in atom[1] and atom[1].endswith("]"):
            param, rest = atom[1].split("*", 1)
            loop, role = rest[:-1].split("[", 1)
            env = self.latencies[loop]
            expr = next((e for r, e in env.items() if r.name == role), None)
            inner = Fraction(0) if expr is None else evaluate(expr, self)
            return self.params[param] * inner
        return self.base.atom_value(atom)


# ---------------------------------------------------------------------------
# Recurrences


def _split_prefix(g: GlobalType):
    """``(prefix with the loop replaced by end, loop)`` for a type with one binder."""
    n = count_binders(g)
    if n != 1:
        raise LatencyError(f"recurrences need exactly one recursion binder, found {n}; split nested loops first")
    loop = None

    def go(x):
        nonlocal loop
        if isinstance(x, Rec):
            loop = x
            return END
        if isinstance(x, Branch):
            raise LatencyError("a branch before the recursion is not supported")
        return map_children(x, lambda k, _u: go(k))

    prefix = go(g)
    return prefix, loop


@dataclass
class Recurrence:
    """``T(n+1) = cost([end/X]G, T(n))`` with ``T(0)`` the cost of any prefix."""

    prefix: GlobalType
    body: GlobalType  # the loop body with the recursion variable replaced by end
    name: str
    label_costs: bool = True

    def __post_init__(self):
        self._arith = SymbolicArith(self.label_costs)
        self._states = [_gcost(self._arith, self.prefix, {}, {})]

    def state(self, n: int):
        while len(self._states) <= n:
            env, queue = self._states[-1]
            self._states.append(_gcost(self._arith, self.body, env, queue))
        return self._states[n]

    def env_nf(self, n: int) -> dict:
        return dict(self.state(n)[0])

    def T(self, n: int) -> CostEnv:
        return CostEnv({r: to_expr(v) for r, v in self.state(n)[0].items()})

    def roles(self) -> list:
        return sorted(set(roles_of(self.body)) | set(roles_of(self.prefix)))

    def equations(self) -> CostEnv:
        """``T(n+1)`` in terms of symbols ``T_r(n)`` (and ``W_pq.i(n)`` for queued times)."""
        env0, queue0 = self.state(1)
        seeds = {r: nf_atom(("var", f"T_{r.name}(n)")) for r in self.roles()}
        queue = {k: tuple(nf_atom(("var", f"W_{k[0].name}{k[1].name}.{i}(n)")) for i in range(len(v)))
                 for k, v in queue0.items()}
        env, _ = _gcost(self._arith, self.body, seeds, queue)
        return CostEnv({r: to_expr(v) for r, v in env.items()})


def recurrence(g: GlobalType, label_costs: bool = True) -> Recurrence:
    prefix, loop = _split_prefix(g)
    return Recurrence(prefix, subst(loop.body, END), loop.name, label_costs)


# ---------------------------------------------------------------------------
# Differences and latency


def _term_sub(u, v):
    """``u - v`` as a term when every component of the difference is nonnegative."""
    const = u[0] - v[0]
    if const < 0:
        return None
    acc = dict(u[1])
    for a, c in v[1]:
        d = acc.get(a, Fraction(0)) - c
        if d < 0:
            return None
        acc[a] = d
    return const, tuple(sorted((a, c) for a, c in acc.items() if c))


def _values(terms, atoms: list, points) -> np.ndarray:
    """Max over ``terms`` at every point (columns of ``points``; row 0 is the constant)."""
    col = {a: i + 1 for i, a in enumerate(atoms)}
    M = np.zeros((len(terms), len(atoms) + 1))
    for r, (const, cs) in enumerate(terms):
        M[r, 0] = float(const)
        for a, c in cs:
            M[r, col[a]] = float(c)
    return M @ points


def difference(a: NormalForm, b: NormalForm):
    """Max-plus ``d`` with ``a + d = b`` when one exists.

    Candidates are nonnegative differences of terms of ``b`` and ``a``.  A
    candidate must pass a floating-point screen at fixed sample points and
    then an exact proof of ``a + d <= b``; ``d`` is the maximum of the
    proven ones.  Returns ``(d, exact)`` where ``exact`` tells whether
    ``a + d`` equals ``b``; ``d`` is None when the screen already rules
    out an exact difference.
    """
    cands = []
    for u in b.terms:
        for v in a.terms:
            t = _term_sub(u, v)
            if t is not None and t not in cands:
                cands.append(t)
    if not cands:
        return None, False
    atoms = sorted(a.atoms() | b.atoms())
    rng = np.random.default_rng(7)
    points = np.vstack([np.ones(24), rng.uniform(0.0, 1.0, size=(len(atoms), 24))])
    top_a = _values(a.terms, atoms, points).max(axis=0)
    top_b = _values(b.terms, atoms, points).max(axis=0)
    dvals = _values(cands, atoms, points)
    tol = 1e-9 * (1 + np.abs(top_b))
    screened = [dv for dv in dvals if np.all(top_a + dv <= top_b + tol)]
    if not screened or np.any(top_a + np.max(screened, axis=0) < top_b - tol):
        return None, False  # even every screened candidate together falls short of b
    verified = []
    for t, dv in zip(cands, dvals):
        if np.all(top_a + dv <= top_b + tol):
            d = NormalForm((t,))
            if nf_leq(nf_add(a, d), b):
                verified.append(d)
    if not verified:
        return None, False
    out = verified[0]
    for d in verified[1:]:
        out = nf_max(out, d)
    return out, nf_add(a, out) == b


@dataclass
class LatencyResult:
    env: CostEnv  # per-role latency (Sub-free unless ``numeric``)
    index: int  # first n with delta(n) = delta(n+1)
    deltas: list  # list of CostEnv, delta(0), delta(1), ...
    numeric: bool = False  # stabilization confirmed only by sampled evaluation
    recurrence: Recurrence | None = None


def _delta(rec: Recurrence, n: int):
    a, b = rec.env_nf(n), rec.env_nf(n + 1)
    out, exact = {}, True
    for r in sorted(set(a) | set(b)):
        x, y = a.get(r, NormalForm(((Fraction(0), ()),))), b.get(r)
        d, ok = difference(x, y)
        exact = exact and ok
        out[r] = d
    return out, exact


def latency(g: GlobalType, n_max: int = 8, samples: int = 100, seed: int = 42, label_costs: bool = True) -> LatencyResult:
    """Stabilized per-iteration cost increase of a single-loop protocol.

    Exact evaluation at sampled bindings locates the first candidate index
    cheaply; the symbolic differences are then computed from there on.  If
    they do not cancel exactly, the result is ``T(k+1) - T(k)`` flagged as
    ``numeric``.
    """
    rec = recurrence(g, label_costs)
    roles = rec.roles()
    # every atom of the body has reached each role after a few iterations
    atoms = set()
    for n in range(min(n_max, 3) + 1):
        atoms |= {a for v in rec.env_nf(n).values() for a in v.atoms()}
    bindings = sample_bindings(atoms, samples, seed)
    zero = NormalForm(((Fraction(0), ()),))

    def sampled(n):
        a, b = rec.env_nf(n), rec.env_nf(n + 1)
        cols = [[y - x for x, y in zip(evaluate_many(a.get(r, zero), bindings), evaluate_many(b.get(r, zero), bindings))]
                for r in roles]
        return list(zip(*cols))

    values = [sampled(0), sampled(1)]
    start = None
    for n in range(1, n_max):
        values.append(sampled(n + 1))
        if values[n] == values[n + 1]:
            start = n
            break
    if start is None:
        raise LatencyError(f"latency did not stabilize by n = {n_max}")
    deltas = {}

    def delta(n):
        if n not in deltas:
            deltas[n] = _delta(rec, n)
        return deltas[n]

    for n in range(start, n_max):
        d0, ok0 = delta(n)
        d1, ok1 = delta(n + 1)
        if not (ok0 and ok1):
            break
        if d0 == d1:
            env = CostEnv({r: to_expr(v) for r, v in d0.items()})
            return LatencyResult(env, n, [_env(deltas[i][0]) if i in deltas else None for i in range(n + 2)], False, rec)
    a, b = rec.T(start), rec.T(start + 1)
    env = CostEnv({r: Sub(b.get(r), a.get(r)) for r in roles})
    return LatencyResult(env, start, [_env(deltas[i][0]) if i in deltas and deltas[i][1] else None
                                      for i in range(start + 2)], True, rec)


def _env(d: dict) -> CostEnv | None:
    if any(v is None for v in d.values()):
        return None
    return CostEnv({r: to_expr(v) for r, v in d.items()})


def latency_nested(g: GlobalType, n_max: int = 8, label_costs: bool = True) -> list:
    """``(part, LatencyResult or None)`` for every part of ``split_nested(g)``."""
    out = []
    for part in split_nested(g):
        if count_binders(part.protocol) == 0:
            out.append((part, None))
        else:
            out.append((part, latency(part.protocol, n_max, label_costs=label_costs)))
    return out


def interaction_count(g: GlobalType, p: Role) -> int:
    """Interactions of a loop body involving ``p`` (a split send and receive count once)."""
    n = 0
    stack = [g]
    while stack:
        x = stack.pop()
        if isinstance(x, (Msg, Branch, SendAct)) and p in (x.sender, x.receiver):
            n += 1
        stack.extend(children(x))
    return n


def latency_rel(g: GlobalType, p: Role, n_max: int = 8, label_costs: bool = True) -> CostEnv:
    """Latency divided by the number of interactions of ``p`` per iteration."""
    _, loop = _split_prefix(g)
    count = interaction_count(loop.body, p)
    if count == 0:
        raise LatencyError(f"role {p} takes part in no interaction of the loop body")
    res = latency(g, n_max, label_costs=label_costs)
    k = Fraction(1, count)
    out = {}
    for r, e in res.env.items():
        out[r] = Scale(k, e) if res.numeric else to_expr(nf_scale(k, normalize(e)))
    return CostEnv(out)


# ---------------------------------------------------------------------------
# Latency theorems under sampled bindings


def _expr_values(e, bindings) -> list:
    if e is None:
        return [Fraction(0)] * len(bindings)
    if isinstance(e, Sub):
        return [x - y for x, y in zip(_expr_values(e.left, bindings), _expr_values(e.right, bindings))]
    if isinstance(e, Scale):
        return [e.k * x for x in _expr_values(e.expr, bindings)]
    return evaluate_many(normalize(e), bindings)


def _env_values(env: CostEnv, roles, bindings) -> list:
    """``[{role: value}]`` per binding."""
    cols = {r: _expr_values(env.get(r), bindings) for r in roles}
    return [{r: cols[r][i] for r in roles} for i in range(len(bindings))]


@dataclass
class LatencyReport:
    index: int
    checked: int = 0
    correspondence: list = field(default_factory=list)  # violations (k1, k2, role, binding, lhs, rhs)
    soundness: list = field(default_factory=list)  # violations (k, role, binding, lhs, rhs)
    trace_level: list = field(default_factory=list)  # k values checked against enumerated traces
    global_level: list = field(default_factory=list)  # k values checked against global cost only

    @property
    def ok(self) -> bool:
        return not self.correspondence and not self.soundness

    def __bool__(self):
        return self.ok


def check_latency_theorems(g: GlobalType, ks: Iterable[int] = range(1, 7), samples: int = 100, seed: int = 42,
                           trace_state_cap: int = 5_000, n_max: int = 8, result: LatencyResult | None = None) -> LatencyReport:
    """Check both latency theorems for iteration counts ``ks``.

    (i) ``cost(G, k1) - cost(G, k2) <= (k1 - k2) * costw(G)`` for stabilized
    ``k2 < k1``; (ii) every complete trace of ``unroll(G, k)`` costs at most
    ``k * costw(G) + cost(G, k0)``.  Part (ii) runs over traces while the
    exploration fits in ``trace_state_cap`` states and otherwise falls back
    to the global cost, which bounds every trace; once one ``k`` exceeds
    the cap, larger ones go straight to the global cost.
    """
    res = result if result is not None else latency(g, n_max)
    k0 = res.index
    ks = sorted(set(ks))
    costs = {k: global_cost(g, [k]) for k in set(ks) | {k0}}
    atoms = env_atoms(res.env)
    for env in costs.values():
        atoms |= env_atoms(env)
    from .cost import cost_annotations
    from .core_types import Recv, Send

    for e in cost_annotations(g) + [Send(UNIT), Recv(UNIT)]:
        atoms |= normalize(e).atoms()
    bindings = sample_bindings(atoms, samples, seed)
    roles = sorted(roles_of(g))
    report = LatencyReport(k0)
    lat = _env_values(res.env, roles, bindings)
    val = {k: _env_values(costs[k], roles, bindings) for k in costs}
    for k2 in ks:
        if k2 < k0:
            continue
        for k1 in ks:
            if k1 <= k2:
                continue
            for i in range(len(bindings)):
                for r in roles:
                    lhs = val[k1][i][r] - val[k2][i][r]
                    rhs = (k1 - k2) * lat[i][r]
                    report.checked += 1
                    if lhs > rhs:
                        report.correspondence.append((k1, k2, r, i, lhs, rhs))
    exhausted = False
    for k in ks:
        try:
            if exhausted:
                raise BudgetExceeded(trace_state_cap)
            sound = check_soundness(g, [k], bindings=bindings, state_cap=trace_state_cap)
            tops = {r: sound.max_trace.get(r) for r in roles}
            report.trace_level.append(k)
        except BudgetExceeded:
            exhausted = True
            tops = {r: [val[k][i][r] for i in range(len(bindings))] for r in roles}
            report.global_level.append(k)
        for i in range(len(bindings)):
            for r in roles:
                lhs = tops[r][i] if tops[r] is not None else Fraction(0)
                rhs = k * lat[i][r] + val[k0][i][r]
                report.checked += 1
                if lhs > rhs:
                    report.soundness.append((k, r, i, lhs, rhs))
    return report
