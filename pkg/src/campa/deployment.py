"""Hardware descriptions, role placement and resource-bounded cost.

Each node has a number of cores, each with a core-availability time.  An
interaction claims the least-loaded core of the sender's node and of the
receiver's node (lowest index on ties); the roles' accumulated times snap to
the times of the cores they used.
"""
from __future__ import annotations

import json
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from .algebra import Binding, ModelBinding, UnboundSymbol, evaluate, linear_size
from .core_types import (
    UNIT,
    Branch,
    BranchT,
    End,
    Eval,
    GlobalType,
    Msg,
    MsgT,
    Rec,
    RecCall,
    RecvAct,
    Recv,
    Role,
    Send,
    SendAct,
    SizedType,
    format_size,
    roles_of,
    unroll,
)

__all__ = [
    "DeploymentError", "CostCurve", "fit_cost_curve", "AffineLatency", "TableLatency", "HardwareSpec",
    "ResourceState", "resource_cost", "resource_state", "load_architecture", "dump_architecture",
    "load_bindings", "to_fraction",
]


class DeploymentError(ValueError):
    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


def to_fraction(x) -> Fraction:
    """Exact value of a JSON number or a string such as ``"3/4"``."""
    if isinstance(x, bool):
        raise DeploymentError(f"expected a number, got {x!r}")
    if isinstance(x, float):
        return Fraction(repr(x))
    try:
        return Fraction(x)
    except (TypeError, ValueError):
        raise DeploymentError(f"expected a number, got {x!r}") from None


# ---------------------------------------------------------------------------
# Cost curves fitted from profiles


@dataclass(frozen=True)
class CostCurve:
    """Natural cubic spline through ``(size, time)`` knots, exact over rationals."""

    xs: tuple
    ys: tuple
    m: tuple  # second derivatives at the knots

    @property
    def domain(self) -> tuple:
        return self.xs[0], self.xs[-1]

    def raw(self, x) -> Fraction:
        x = Fraction(x)
        lo, hi = self.domain
        if x < lo or x > hi:
            raise DeploymentError(f"size {x} outside the measured range [{lo}, {hi}]")
        i = min(max(bisect_right(self.xs, x) - 1, 0), len(self.xs) - 2)
        x0, x1 = self.xs[i], self.xs[i + 1]
        h = x1 - x0
        a, b = (x1 - x) / h, (x - x0) / h
        return (a * self.ys[i] + b * self.ys[i + 1]
                + ((a ** 3 - a) * self.m[i] + (b ** 3 - b) * self.m[i + 1]) * h * h / 6)

    def __call__(self, x) -> Fraction:
        v = self.raw(x)
        if v < 0:
            warnings.warn(f"fitted cost at size {x} is negative ({float(v):.6g}); using 0", stacklevel=2)
            return Fraction(0)
        return v

    def to_json(self) -> list:
        return [[str(x), str(y)] for x, y in zip(self.xs, self.ys)]


def fit_cost_curve(samples: Sequence) -> CostCurve:
    """Natural cubic spline through measured ``(size, time)`` pairs."""
    pts = sorted((to_fraction(x), to_fraction(y)) for x, y in samples)
    if len(pts) < 2:
        raise DeploymentError("a cost curve needs at least two samples")
    xs = [x for x, _ in pts]
    ys = [y for _, y in pts]
    if any(a == b for a, b in zip(xs, xs[1:])):
        raise DeploymentError("duplicate sample sizes")
    if any(y < 0 for y in ys):
        raise DeploymentError("sample times must be nonnegative")
    n = len(xs)
    m = [Fraction(0)] * n
    if n > 2:
        h = [xs[i + 1] - xs[i] for i in range(n - 1)]
        # tridiagonal system for the interior second derivatives (Thomas algorithm)
        sub = [h[i - 1] for i in range(1, n - 1)]
        diag = [2 * (h[i - 1] + h[i]) for i in range(1, n - 1)]
        sup = [h[i] for i in range(1, n - 1)]
        rhs = [6 * ((ys[i + 1] - ys[i]) / h[i] - (ys[i] - ys[i - 1]) / h[i - 1]) for i in range(1, n - 1)]
        for i in range(1, len(diag)):
            w = sub[i] / diag[i - 1]
            diag[i] -= w * sup[i - 1]
            rhs[i] -= w * rhs[i - 1]
        inner = [Fraction(0)] * len(diag)
        inner[-1] = rhs[-1] / diag[-1]
        for i in range(len(diag) - 2, -1, -1):
            inner[i] = (rhs[i] - sup[i] * inner[i + 1]) / diag[i]
        m[1:-1] = inner
    return CostCurve(tuple(xs), tuple(ys), tuple(m))


# ---------------------------------------------------------------------------
# Hardware


@dataclass(frozen=True)
class AffineLatency:
    base: Fraction = Fraction(0)
    per_unit: Fraction = Fraction(0)

    def __call__(self, size) -> Fraction:
        return self.base + self.per_unit * Fraction(size)

    def to_json(self) -> dict:
        return {"affine": {"base": str(self.base), "per_unit": str(self.per_unit)}}


@dataclass(frozen=True)
class TableLatency:
    curve: CostCurve

    def __call__(self, size) -> Fraction:
        return self.curve(size)

    def to_json(self) -> dict:
        return {"table": self.curve.to_json()}


ZERO_LATENCY = AffineLatency()


@dataclass
class HardwareSpec:
    nodes: dict  # node name -> core count
    latency: dict = field(default_factory=dict)  # (from, to) -> latency function of size
    overhead: dict = field(default_factory=dict)  # node -> factor on local computation

    def lat(self, a: str, b: str) -> Callable:
        """Latency function between two nodes (symmetric fallback; 0 within a node)."""
        f = self.latency.get((a, b)) or self.latency.get((b, a))
        if f is not None:
            return f
        if a == b:
            return ZERO_LATENCY
        raise DeploymentError(f"no latency given between nodes {a} and {b}")

    def factor(self, node: str) -> Fraction:
        return Fraction(self.overhead.get(node, 1))

    def problems(self, mapping: Mapping | None = None, roles: Sequence[Role] = ()) -> list:
        out = []
        for n, c in self.nodes.items():
            if not isinstance(c, int) or c < 1:
                out.append(f"node {n}: core count must be a positive integer, got {c!r}")
        for a, b in self.latency:
            for x in (a, b):
                if x not in self.nodes:
                    out.append(f"latency {a}->{b}: unknown node {x}")
        for n in self.overhead:
            if n not in self.nodes:
                out.append(f"overhead: unknown node {n}")
        if mapping is not None:
            for r, n in mapping.items():
                if n not in self.nodes:
                    out.append(f"role {_name(r)} mapped to unknown node {n}")
            for r in roles:
                if _lookup(mapping, r) is None:
                    out.append(f"role {r.name} is not mapped to a node")
            used = sorted({n for n in mapping.values() if n in self.nodes})
            for a in used:
                for b in used:
                    if a < b and (a, b) not in self.latency and (b, a) not in self.latency:
                        out.append(f"no latency given between nodes {a} and {b}")
        return out


def _name(r) -> str:
    return r.name if isinstance(r, Role) else str(r)


def _lookup(mapping: Mapping, r: Role):
    if r in mapping:
        return mapping[r]
    return mapping.get(r.name)


# ---------------------------------------------------------------------------
# Resource-bounded cost


@dataclass
class ResourceState:
    times: dict  # Role -> accumulated time
    cores: dict  # node -> tuple of core-availability times
    queues: dict = field(default_factory=dict)  # (sender, receiver) -> availability times


class _Resources:
    def __init__(self, hw: HardwareSpec, mapping: Mapping, b: Binding, label_costs: bool):
        self.hw, self.mapping, self.b, self.label_costs = hw, mapping, b, label_costs

    def node(self, r: Role) -> str:
        n = _lookup(self.mapping, r)
        if n is None:
            raise DeploymentError(f"role {r.name} is not mapped to a node")
        if n not in self.hw.nodes:
            raise DeploymentError(f"role {r.name} mapped to unknown node {n}")
        return n

    def csend(self, ty) -> Fraction:
        if ty is None:
            return evaluate(Send(UNIT), self.b) if self.label_costs else Fraction(0)
        return evaluate(Send(ty), self.b)

    def crecv(self, ty) -> Fraction:
        if ty is None:
            return evaluate(Recv(UNIT), self.b) if self.label_costs else Fraction(0)
        return evaluate(Recv(ty), self.b)

    def size(self, ty: SizedType | None) -> Fraction:
        if ty is None:
            return Fraction(1)
        const, coeffs = linear_size(ty.size)
        return const + sum((c * self.b.atom_value(("size", v)) for v, c in coeffs), Fraction(0))

    def run(self, st: ResourceState, r: Role, gate: Fraction, amount: Fraction) -> Fraction:
        """Claim the least-loaded core of ``r``'s node from ``gate`` on; return the new time."""
        n = self.node(r)
        cores = st.cores.setdefault(n, (Fraction(0),) * self.hw.nodes[n])
        i = min(range(len(cores)), key=lambda j: (cores[j], j))
        t = max(cores[i], st.times.get(r, Fraction(0)), gate) + amount
        st.cores[n] = cores[:i] + (t,) + cores[i + 1:]
        st.times[r] = t
        return t

    def send(self, st, p, ty) -> Fraction:
        return self.run(st, p, Fraction(0), self.csend(ty))

    def recv(self, st, p, q, ty, avail, cost) -> None:
        f = self.hw.lat(self.node(p), self.node(q))
        lat = f.base if isinstance(f, AffineLatency) and f.per_unit == 0 else f(self.size(ty))
        work = evaluate(cost, self.b) * self.hw.factor(self.node(q)) if cost is not None else Fraction(0)
        self.run(st, q, avail, self.crecv(ty) + lat + work)


def _copy(st: ResourceState) -> ResourceState:
    return ResourceState(dict(st.times), dict(st.cores), dict(st.queues))


def _pop(st: ResourceState, key) -> Fraction:
    items = st.queues.get(key, ())
    if not items:
        raise DeploymentError(f"ill-ordered type: nothing to receive on {key[0]}{key[1]}")
    st.queues[key] = items[1:]
    if not st.queues[key]:
        del st.queues[key]
    return items[0]


def _merge(states: list) -> ResourceState:
    times: dict = {}
    cores: dict = {}
    for s in states:
        for r, t in s.times.items():
            times[r] = max(times.get(r, t), t)
        for n, cs in s.cores.items():
            cores[n] = tuple(max(a, b) for a, b in zip(cores[n], cs)) if n in cores else cs
    first = states[0].queues
    for s in states[1:]:
        if {k: len(v) for k, v in s.queues.items()} != {k: len(v) for k, v in first.items()}:
            raise DeploymentError("branches leave differently shaped dependency queues")
    queues = {k: tuple(max(s.queues[k][i] for s in states) for i in range(len(v))) for k, v in first.items()}
    return ResourceState(times, cores, queues)


def _walk(res: _Resources, g: GlobalType, st: ResourceState) -> ResourceState:
    while True:
        if isinstance(g, End):
            return st
        if isinstance(g, Msg):
            avail = res.send(st, g.sender, g.payload)
            res.recv(st, g.sender, g.receiver, g.payload, avail, g.cost)
            g = g.cont
        elif isinstance(g, Branch):
            avail = res.send(st, g.sender, None)
            res.recv(st, g.sender, g.receiver, None, avail, None)
            return _merge([_walk(res, k, _copy(st)) for _, k in g.branches])
        elif isinstance(g, SendAct):
            avail = res.send(st, g.sender, g.payload)
            key = (g.sender, g.receiver)
            st.queues[key] = st.queues.get(key, ()) + (avail,)
            g = g.cont
        elif isinstance(g, (RecvAct, MsgT)):
            avail = _pop(st, (g.sender, g.receiver))
            res.recv(st, g.sender, g.receiver, g.payload, avail, g.cost)
            g = g.cont
        elif isinstance(g, BranchT):
            avail = _pop(st, (g.sender, g.receiver))
            res.recv(st, g.sender, g.receiver, None, avail, None)
            g = g.branches[g.chosen][1]
        elif isinstance(g, Eval):
            res.run(st, g.role, Fraction(0), evaluate(g.cost, res.b) * res.hw.factor(res.node(g.role)))
            g = g.cont
        elif isinstance(g, (Rec, RecCall)):
            raise DeploymentError("resource cost needs a recursion-free type; give unroll counts")
        else:
            raise TypeError(g)


def resource_state(g: GlobalType, ks, hw: HardwareSpec, mapping: Mapping, b: Binding,
                   label_costs: bool = True) -> ResourceState:
    roles = sorted(roles_of(g))
    problems = hw.problems(mapping, roles)
    if problems:
        raise DeploymentError(problems)
    res = _Resources(hw, mapping, b, label_costs)
    st = ResourceState({r: Fraction(0) for r in roles}, {n: (Fraction(0),) * c for n, c in hw.nodes.items()})
    return _walk(res, unroll(g, ks), st)


def resource_cost(g: GlobalType, ks, hw: HardwareSpec, mapping: Mapping, b: Binding,
                  label_costs: bool = True) -> dict:
    """Per-role execution time on ``hw`` with roles placed by ``mapping`` (role or role name -> node)."""
    return resource_state(g, ks, hw, mapping, b, label_costs).times


# ---------------------------------------------------------------------------
# JSON documents


def _latency_fn(entry: dict, where: str):
    if "affine" in entry:
        a = entry["affine"]
        return AffineLatency(to_fraction(a.get("base", 0)), to_fraction(a.get("per_unit", 0)))
    if "table" in entry:
        return TableLatency(fit_cost_curve(entry["table"]))
    raise DeploymentError(f"{where}: expected 'affine' or 'table'")


def load_architecture(text: str) -> tuple:
    """Parse an architecture document into ``(HardwareSpec, {role name: node})``."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DeploymentError(f"invalid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise DeploymentError("architecture must be a JSON object")
    problems = []
    nodes = doc.get("nodes")
    if not isinstance(nodes, dict) or not nodes:
        problems.append("'nodes' must be a nonempty object of core counts")
        nodes = {}
    latency = {}
    for i, e in enumerate(doc.get("latency", [])):
        try:
            latency[(e["from"], e["to"])] = _latency_fn(e, f"latency[{i}]")
        except KeyError as k:
            problems.append(f"latency[{i}]: missing {k}")
        except DeploymentError as err:
            problems.extend(err.problems)
    overhead = {}
    for n, f in doc.get("overhead", {}).items():
        try:
            overhead[n] = to_fraction(f)
        except DeploymentError as err:
            problems.append(f"overhead {n}: {err}")
    mapping = doc.get("mapping", {})
    if not isinstance(mapping, dict):
        problems.append("'mapping' must be an object from role to node")
        mapping = {}
    hw = HardwareSpec(dict(nodes), latency, overhead)
    problems.extend(hw.problems(mapping))
    if problems:
        raise DeploymentError(problems)
    return hw, dict(mapping)


def dump_architecture(hw: HardwareSpec, mapping: Mapping) -> str:
    doc = {
        "nodes": dict(hw.nodes),
        "latency": [{"from": a, "to": b, **f.to_json()} for (a, b), f in hw.latency.items()],
        "mapping": {_name(r): n for r, n in mapping.items()},
    }
    if hw.overhead:
        doc["overhead"] = {n: str(f) for n, f in hw.overhead.items()}
    return json.dumps(doc, indent=2)


def _cost_model(entries: list, kind: str):
    table = {}
    for i, e in enumerate(entries):
        if "type" not in e:
            raise DeploymentError(f"{kind}[{i}]: missing 'type'")
        table[(e["type"], e.get("size_expr"))] = _latency_fn(e, f"{kind}[{i}]")

    def model(ty: SizedType, size: Fraction) -> Fraction:
        f = table.get((ty.base, format_size(ty.size))) or table.get((ty.base, None))
        if f is None:
            raise UnboundSymbol(f"no {kind} cost given for type {ty.base}")
        return f(size)

    return model


def load_bindings(text: str) -> ModelBinding:
    """Parse a bindings document (sizes, cost variables, send/receive cost models)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise DeploymentError(f"invalid JSON: {e}") from None
    sizes = {k: to_fraction(v) for k, v in doc.get("sizes", {}).items()}
    vars_ = {k: to_fraction(v) for k, v in doc.get("vars", {}).items()}
    return ModelBinding(sizes, vars_, _cost_model(doc.get("send", []), "send"), _cost_model(doc.get("recv", []), "recv"))
