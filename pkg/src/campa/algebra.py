"""Symbolic max-plus cost algebra.

Expressions over nonnegative atoms (size variables, cost variables and the
uninterpreted send/receive costs of payload types) are brought into a
canonical max-plus polynomial: a set of affine terms, none of which is
bounded above by the others on the nonnegative orthant.  A term is bounded
by the others exactly when some convex combination of them dominates it
coefficient-wise, which is decided with an exact rational simplex.  Two
expressions denote the same function iff their normal forms are identical.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core_types import (
    ZERO,
    Add,
    Const,
    CostExpr,
    Max,
    Role,
    SAdd,
    Scale,
    SConst,
    Send,
    Recv,
    SizedType,
    SizeExpr,
    SizeOf,
    SMul,
    Sub,
    SVar,
    Var,
    as_fraction,
    format_cost,
    format_number,
)

F0 = Fraction(0)
F1 = Fraction(1)


class AlgebraError(ValueError):
    pass


class UnboundSymbol(AlgebraError):
    pass


# ---------------------------------------------------------------------------
# Atoms

def linear_size(s: SizeExpr) -> tuple:
    """Size expression as ``(const, ((var, coef), ...))`` with sorted vars."""
    acc: dict = {}
    const = _linear_size(s, F1, acc)
    return const, tuple(sorted((v, c) for v, c in acc.items() if c != 0))


def _linear_size(s, k, acc) -> Fraction:
    if isinstance(s, SConst):
        return k * s.k
    if isinstance(s, SVar):
        acc[s.name] = acc.get(s.name, F0) + k
        return F0
    if isinstance(s, SAdd):
        return _linear_size(s.left, k, acc) + _linear_size(s.right, k, acc)
    if isinstance(s, SMul):
        return _linear_size(s.expr, k * s.k, acc)
    raise TypeError(s)


def size_from_linear(key: tuple) -> SizeExpr:
    const, coeffs = key
    parts = []
    for v, c in coeffs:
        parts.append(SVar(v) if c == 1 else SMul(c, SVar(v)))
    if const != 0 or not parts:
        parts.append(SConst(const))
    out = parts[0]
    for p in parts[1:]:
        out = SAdd(out, p)
    return out


def canonical_type(t: SizedType) -> SizedType:
    return SizedType(t.base, size_from_linear(linear_size(t.size)))


def send_atom(t: SizedType) -> tuple:
    return ("send", t.base, linear_size(t.size))


def recv_atom(t: SizedType) -> tuple:
    return ("recv", t.base, linear_size(t.size))


def atom_expr(atom: tuple) -> CostExpr:
    kind = atom[0]
    if kind == "size":
        return SizeOf(SVar(atom[1]))
    if kind == "var":
        return Var(atom[1])
    ty = SizedType(atom[1], size_from_linear(atom[2]))
    return Send(ty) if kind == "send" else Recv(ty)


def atom_label(atom: tuple) -> str:
    return format_cost(atom_expr(atom))


# ---------------------------------------------------------------------------
# Normal forms

# A term is (const, ((atom, coef), ...)) with positive coefficients sorted by atom.

def _term_key(t):
    return (t[1], t[0])


@dataclass(frozen=True)
class NormalForm:
    terms: tuple

    def __str__(self):
        return format_cost(to_expr(self))

    @property
    def is_zero(self) -> bool:
        return self.terms == ((F0, ()),)

    def atoms(self) -> set:
        return {a for _, cs in self.terms for a, _ in cs}


NF_ZERO = NormalForm(((F0, ()),))


def nf_const(k) -> NormalForm:
    return NormalForm(((as_fraction(k), ()),))


def nf_atom(atom: tuple, k=F1) -> NormalForm:
    k = as_fraction(k)
    if k == 0:
        return NF_ZERO
    return NormalForm(((F0, ((atom, k),)),))


def _add_terms(a, b):
    const = a[0] + b[0]
    if not a[1]:
        return const, b[1]
    if not b[1]:
        return const, a[1]
    acc = dict(a[1])
    for atom, c in b[1]:
        acc[atom] = acc.get(atom, F0) + c
    return const, tuple(sorted(acc.items()))


@lru_cache(maxsize=None)
def nf_add(a: NormalForm, b: NormalForm) -> NormalForm:
    if a.is_zero:
        return b
    if b.is_zero:
        return a
    return _reduce({_add_terms(x, y) for x in a.terms for y in b.terms})


@lru_cache(maxsize=None)
def nf_max(a: NormalForm, b: NormalForm) -> NormalForm:
    if a == b:
        return a
    return _reduce(set(a.terms) | set(b.terms))


def nf_scale(k, a: NormalForm) -> NormalForm:
    k = as_fraction(k)
    if k == 0:
        return NF_ZERO
    return NormalForm(tuple(sorted(((k * c, tuple((x, k * v) for x, v in cs)) for c, cs in a.terms), key=_term_key)))


def nf_sum(items: Iterable[NormalForm]) -> NormalForm:
    out = NF_ZERO
    for x in items:
        out = nf_add(out, x)
    return out


def nf_maximum(items: Iterable[NormalForm]) -> NormalForm:
    out = None
    for x in items:
        out = x if out is None else nf_max(out, x)
    return NF_ZERO if out is None else out


class _TermMatrix:
    """Terms as rows of one integer matrix (columns: constant, then atoms)."""

    def __init__(self, terms: Sequence):
        atoms = sorted({a for _, cs in terms for a, _ in cs})
        col = {a: i + 1 for i, a in enumerate(atoms)}
        scale = math.lcm(*(t[0].denominator for t in terms), *(c.denominator for _, cs in terms for _, c in cs))
        rows = []
        for const, cs in terms:
            row = [0] * (len(atoms) + 1)
            row[0] = int(const * scale)
            for a, c in cs:
                row[col[a]] = int(c * scale)
            rows.append(row)
        big = max((abs(v) for r in rows for v in r), default=0)
        # perceptron points are scaled to 2**20; keep exact checks inside int64
        self.dtype = np.int64 if big * (len(atoms) + 1) < 2**40 else object
        self.M = np.array(rows, dtype=self.dtype).reshape(len(rows), len(atoms) + 1)

    def bounded(self, i: int, others: Sequence[int]) -> bool:
        """Whether row ``i`` is <= the max of rows ``others`` on the nonnegative orthant."""
        t = self.M[i]
        need = np.nonzero(t > 0)[0]
        if len(need) == 0:
            return True  # the zero term is below any nonnegative term
        tn = t[need]
        O = self.M[list(others)][:, need]
        if np.any(np.all(O >= tn, axis=1)):
            return True
        if np.any(np.all(O < tn, axis=0)):
            return False
        D = tn - O
        if _separating_point(D):
            return False
        rows = [[int(v) for v in O[:, k]] for k in range(len(need))]
        return _convex_feasible(rows, [int(v) for v in tn])


def _separating_point(D) -> bool:
    """Search for ``x >= 0`` with ``D @ x > 0`` row-wise.

    A normalized perceptron in floating point proposes the point; it counts
    only after an exact integer check, so ``True`` is always correct and
    ``False`` merely means "not found".
    """
    F = D.astype(float)
    norms = np.linalg.norm(F, axis=1)
    if np.any(norms == 0):
        return False
    x = np.ones(F.shape[1])
    for _ in range(60):
        s = F @ x
        low = int(np.argmin(s))
        if s[low] > 1e-9 * x.sum():
            break
        x = np.maximum(x + F[low] / norms[low], 0.0)
    else:
        return False
    xi = np.rint(x / x.max() * 2**20).astype(np.int64)
    if D.dtype == object:
        return all(sum(int(a) * int(b) for a, b in zip(row, xi)) > 0 for row in D)
    return bool(np.all(D @ xi > 0))


def _reduce(terms: set) -> NormalForm:
    """Drop every term bounded by the maximum of the others."""
    ordered = sorted(terms, key=_term_key)
    if len(ordered) == 1:
        return NormalForm(tuple(ordered))
    tm = _TermMatrix(ordered)
    M = tm.M
    n = len(ordered)
    # cheap pass: drop terms dominated componentwise by a single other (distinct) term
    alive = []
    for i in range(n):
        ge = np.all(M >= M[i], axis=1)
        ge[i] = False
        if not np.any(ge):
            alive.append(i)
    # greedy pass against the kept terms, largest first
    keep: list = []
    for i in sorted(alive, key=lambda i: (-int(M[i].sum()), _term_key(ordered[i]))):
        if not keep or not tm.bounded(i, keep):
            keep.append(i)
    # final pass: nothing kept may be redundant with respect to the rest
    j = 0
    while j < len(keep):
        others = keep[:j] + keep[j + 1:]
        if others and tm.bounded(keep[j], others):
            keep.pop(j)
        else:
            j += 1
    return NormalForm(tuple(sorted((ordered[i] for i in keep), key=_term_key)))


def _bounded_by(t, others: Sequence) -> bool:
    """Whether term ``t`` is <= max(others) everywhere on the nonnegative orthant."""
    tm = _TermMatrix([t] + list(others))
    return tm.bounded(0, range(1, len(others) + 1))


def _reduced(row: list) -> list:
    g = math.gcd(*row)
    return row if g in (0, 1) else [x // g for x in row]


def _convex_feasible(A: list, b: list) -> bool:
    """Exists lambda >= 0 with sum(lambda) = 1 and A @ lambda >= b (exact).

    Phase one of the simplex method on an integer tableau: every row is kept
    as a primitive integer vector, which represents the same equation up to
    a positive factor and avoids rational arithmetic.
    """
    m, n = len(A), len(A[0])
    # columns: lambda (n) | surplus (m) | artificial (m + 1) | rhs
    width = n + m + (m + 1)
    tab = []
    for i in range(m):
        row = [int(v) for v in A[i]] + [0] * m + [0] * (m + 1) + [int(b[i])]
        row[n + i] = -1
        row[n + m + i] = 1
        tab.append(row)
    row = [1] * n + [0] * m + [0] * (m + 1) + [1]
    row[n + m + m] = 1
    tab.append(row)
    basis = [n + m + i for i in range(m + 1)]
    art_start = n + m
    # phase-one objective: minus the sum of the rows (every artificial has coefficient 1)
    cost = [0] * (width + 1)
    for r in tab:
        for j in list(range(art_start)) + [width]:
            cost[j] -= r[j]
    while True:
        enter = next((j for j in range(art_start) if cost[j] < 0), None)
        if enter is None:
            break
        best = None
        for i, r in enumerate(tab):
            e = r[enter]
            if e > 0:
                if best is None:
                    best = i
                    continue
                br = tab[best]
                lhs, rhs = r[width] * br[enter], br[width] * e
                if lhs < rhs or (lhs == rhs and basis[i] < basis[best]):
                    best = i
        if best is None:
            break  # unbounded direction cannot occur in phase one
        prow = tab[best]
        pv = prow[enter]
        for i, r in enumerate(tab):
            f = r[enter]
            if i != best and f != 0:
                tab[i] = _reduced([x * pv - f * y for x, y in zip(r, prow)])
        f = cost[enter]
        cost = _reduced([x * pv - f * y for x, y in zip(cost, prow)])
        basis[best] = enter
    return cost[width] == 0


def nf_leq(a: NormalForm, b: NormalForm) -> bool:
    """Exact symbolic a <= b over all nonnegative atom values."""
    return all(_bounded_by(t, b.terms) for t in a.terms)


# ---------------------------------------------------------------------------
# Conversion between expressions and normal forms

_SEEDED: dict = {}


def normalize(e) -> NormalForm:
    """Canonical max-plus normal form of a subtraction-free expression."""
    if isinstance(e, NormalForm):
        return e
    hit = _SEEDED.get(e)
    return hit if hit is not None else _normalize(e)


@lru_cache(maxsize=None)
def _normalize(e) -> NormalForm:
    if isinstance(e, Const):
        if e.k < 0:
            raise AlgebraError("negative constant in cost expression")
        return nf_const(e.k)
    if isinstance(e, Var):
        return nf_atom(("var", e.name))
    if isinstance(e, SizeOf):
        const, coeffs = linear_size(e.size)
        return NormalForm(((const, tuple((("size", v), c) for v, c in coeffs)),))
    if isinstance(e, Send):
        return nf_atom(send_atom(e.ty))
    if isinstance(e, Recv):
        return nf_atom(recv_atom(e.ty))
    if isinstance(e, Add):
        return nf_add(normalize(e.left), normalize(e.right))
    if isinstance(e, Max):
        return nf_max(normalize(e.left), normalize(e.right))
    if isinstance(e, Scale):
        return nf_scale(e.k, normalize(e.expr))
    if isinstance(e, Sub):
        raise AlgebraError("subtraction cannot be normalized")
    raise TypeError(f"not a cost expression: {e!r}")


def _term_expr(t) -> CostExpr:
    const, coeffs = t
    parts = []
    for atom, c in coeffs:
        a = atom_expr(atom)
        parts.append(a if c == 1 else Scale(c, a))
    if const != 0 or not parts:
        parts.append(Const(const))
    out = parts[0]
    for p in parts[1:]:
        out = Add(out, p)
    return out


def to_expr(nf: NormalForm) -> CostExpr:
    """Canonical expression for a normal form (normalizes back to ``nf``)."""
    exprs = [_term_expr(t) for t in nf.terms]
    out = exprs[-1]
    for e in reversed(exprs[:-1]):
        out = Max(e, out)
    # seed the memo so normalizing a canonical expression again is a lookup
    _SEEDED[out] = nf
    return out


def simplify(e: CostExpr) -> CostExpr:
    return to_expr(normalize(e))


def equivalent(a: CostExpr, b: CostExpr) -> bool:
    return normalize(a) == normalize(b)


def leq(a: CostExpr, b: CostExpr) -> bool:
    return nf_leq(normalize(a), normalize(b))


def atoms_of(e) -> set:
    """Atoms of an expression, including those under subtraction."""
    if isinstance(e, NormalForm):
        return e.atoms()
    if isinstance(e, Sub):
        return atoms_of(e.left) | atoms_of(e.right)
    if isinstance(e, (Add, Max)):
        return atoms_of(e.left) | atoms_of(e.right)
    if isinstance(e, Scale):
        return atoms_of(e.expr)
    return normalize(e).atoms()


def format_nf(nf: NormalForm) -> str:
    return format_cost(to_expr(nf))


# ---------------------------------------------------------------------------
# Bindings and evaluation


class Binding:
    """Assignment of nonnegative rationals to every atom."""

    def atom_value(self, atom: tuple) -> Fraction:
        raise NotImplementedError


class SampledBinding(Binding):
    def __init__(self, values: Mapping[tuple, Fraction], default: Fraction | None = None):
        self.values = dict(values)
        self.default = default

    def atom_value(self, atom):
        try:
            return self.values[atom]
        except KeyError:
            if self.default is not None:
                return self.default
            raise UnboundSymbol(f"unbound symbol {atom_label(atom)}") from None

    def __repr__(self):
        return f"SampledBinding({len(self.values)} atoms)"


CostModel = Callable[[SizedType, Fraction], Fraction]


class ModelBinding(Binding):
    """Concrete sizes and variables plus send/receive cost functions of size."""

    def __init__(self, sizes: Mapping[str, Fraction] | None = None, vars: Mapping[str, Fraction] | None = None,
                 send: CostModel | None = None, recv: CostModel | None = None):
        self.sizes = {k: as_fraction(v) for k, v in (sizes or {}).items()}
        self.vars = {k: as_fraction(v) for k, v in (vars or {}).items()}
        self.send = send
        self.recv = recv

    def size_value(self, key: tuple) -> Fraction:
        const, coeffs = key
        total = const
        for v, c in coeffs:
            if v not in self.sizes:
                raise UnboundSymbol(f"unbound size variable {v}")
            total += c * self.sizes[v]
        return total

    def atom_value(self, atom):
        kind = atom[0]
        if kind == "size":
            if atom[1] not in self.sizes:
                raise UnboundSymbol(f"unbound size variable {atom[1]}")
            return self.sizes[atom[1]]
        if kind == "var":
            if atom[1] not in self.vars:
                raise UnboundSymbol(f"unbound cost variable {atom[1]}")
            return self.vars[atom[1]]
        model = self.send if kind == "send" else self.recv
        if model is None:
            raise UnboundSymbol(f"no {kind} cost model for {atom_label(atom)}")
        ty = SizedType(atom[1], size_from_linear(atom[2]))
        return as_fraction(model(ty, self.size_value(atom[2])))


class ZeroSend(Binding):
    """Wraps a binding and forces every send cost to zero."""

    def __init__(self, inner: Binding):
        self.inner = inner

    def atom_value(self, atom):
        return F0 if atom[0] == "send" else self.inner.atom_value(atom)


def evaluate(e, b: Binding) -> Fraction:
    if isinstance(e, NormalForm):
        return _eval_nf(e, b)
    return _eval(e, b)


def _eval_nf(nf: NormalForm, b: Binding) -> Fraction:
    best = None
    for const, coeffs in nf.terms:
        v = const + sum((c * b.atom_value(a) for a, c in coeffs), F0)
        if best is None or v > best:
            best = v
    return best


def evaluate_many(nf: NormalForm, bindings: Sequence[Binding]) -> list:
    """Exact values of ``nf`` at every binding, computed on scaled integers."""
    atoms = sorted(nf.atoms())
    vals = [[b.atom_value(a) for a in atoms] for b in bindings]
    vscale = math.lcm(1, *(v.denominator for row in vals for v in row))
    tscale = math.lcm(1, *(t[0].denominator for t in nf.terms), *(c.denominator for t in nf.terms for _, c in t[1]))
    col = {a: i for i, a in enumerate(atoms)}
    coef = np.zeros((len(nf.terms), len(atoms)), dtype=object)
    const = np.array([int(t[0] * tscale) * vscale for t in nf.terms], dtype=object)
    for r, (_, cs) in enumerate(nf.terms):
        for a, c in cs:
            coef[r, col[a]] = int(c * tscale)
    X = np.array([[int(v * vscale) for v in row] for row in vals], dtype=object).reshape(len(bindings), len(atoms))
    totals = (X @ coef.T + const).max(axis=1) if atoms else np.array([const.max()] * len(bindings), dtype=object)
    return [Fraction(int(v), tscale * vscale) for v in totals]


def _eval(e, b) -> Fraction:
    if isinstance(e, Const):
        return e.k
    if isinstance(e, Add):
        return _eval(e.left, b) + _eval(e.right, b)
    if isinstance(e, Max):
        return max(_eval(e.left, b), _eval(e.right, b))
    if isinstance(e, Scale):
        return e.k * _eval(e.expr, b)
    if isinstance(e, Sub):
        return _eval(e.left, b) - _eval(e.right, b)
    if isinstance(e, Var):
        return b.atom_value(("var", e.name))
    if isinstance(e, SizeOf):
        const, coeffs = linear_size(e.size)
        return const + sum((c * b.atom_value(("size", v)) for v, c in coeffs), F0)
    if isinstance(e, Send):
        return b.atom_value(send_atom(e.ty))
    if isinstance(e, Recv):
        return b.atom_value(recv_atom(e.ty))
    raise TypeError(f"not a cost expression: {e!r}")


def sample_bindings(atoms: Iterable[tuple], n: int = 100, seed: int = 42,
                    high: int = 1000, denominator: int = 4) -> list:
    """Seeded bindings drawing each atom from rationals in [0, high]."""
    rng = random.Random(seed)
    ordered = sorted(set(atoms))
    out = []
    for _ in range(n):
        out.append(SampledBinding({a: Fraction(rng.randint(0, high * denominator), denominator) for a in ordered}))
    return out


# ---------------------------------------------------------------------------
# Cost environments


class CostEnv(Mapping):
    """Finite map from roles to cost expressions; absent roles cost 0."""

    __slots__ = ("_data", "_hash")

    def __init__(self, data: Mapping | Iterable = ()):
        items = dict(data)
        self._data = {r: items[r] for r in sorted(items)}
        self._hash = None

    def __getitem__(self, r):
        return self._data[r]

    def __iter__(self):
        return iter(self._data)

    def __len__(self):
        return len(self._data)

    def get(self, r, default=None):
        if r in self._data:
            return self._data[r]
        return ZERO if default is None else default

    def set(self, r: Role, e: CostExpr) -> "CostEnv":
        d = dict(self._data)
        d[r] = e
        return CostEnv(d)

    def normalized(self) -> dict:
        return {r: normalize(e) for r, e in self._data.items()}

    def __eq__(self, other):
        if not isinstance(other, CostEnv):
            return NotImplemented
        return self._data == other._data

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(tuple(self._data.items()))
        return self._hash

    def __repr__(self):
        inner = "; ".join(f"{r.name} -> {format_cost(e)}" for r, e in self._data.items())
        return f"[{inner}]"

    __str__ = __repr__


def env_equiv(t1: CostEnv, t2: CostEnv) -> bool:
    """Role-wise normal-form equality (absent roles are 0)."""
    for r in set(t1) | set(t2):
        if normalize(t1.get(r)) != normalize(t2.get(r)):
            return False
    return True


def env_max(t1: CostEnv, t2: CostEnv) -> CostEnv:
    out = {}
    for r in set(t1) | set(t2):
        out[r] = to_expr(nf_max(normalize(t1.get(r)), normalize(t2.get(r))))
    return CostEnv(out)


def env_add_after(t: CostEnv, gate: CostExpr, r: Role, c: CostExpr) -> CostEnv:
    """``t[r -> max(t(r), gate) + c]``."""
    v = nf_add(nf_max(normalize(t.get(r)), normalize(gate)), normalize(c))
    return t.set(r, to_expr(v))


def env_add(t: CostEnv, r: Role, c: CostExpr) -> CostEnv:
    """``t[r (+) c]``: the update with gate 0."""
    return env_add_after(t, ZERO, r, c)


def env_add_after_role(t: CostEnv, gate_role: Role, r: Role, c: CostExpr) -> CostEnv:
    """``t[r' | r (+) c]``: the update gated by another role's time."""
    return env_add_after(t, t.get(gate_role), r, c)


@dataclass
class EnvComparison:
    holds: bool
    proved: bool
    violations: list  # (role, binding index, lhs value, rhs value)

    @property
    def method(self) -> str:
        return "proved" if self.proved else "sampled"


def compare_envs(t1: CostEnv, t2: CostEnv, bindings: Sequence[Binding]) -> EnvComparison:
    violations = []
    for r in sorted(set(t1) | set(t2)):
        a, b = t1.get(r), t2.get(r)
        for i, bd in enumerate(bindings):
            va, vb = evaluate(a, bd), evaluate(b, bd)
            if va > vb:
                violations.append((r, i, va, vb))
    proved = False
    if not violations:
        try:
            proved = all(nf_leq(normalize(t1.get(r)), normalize(t2.get(r))) for r in set(t1) | set(t2))
        except AlgebraError:
            proved = False
    return EnvComparison(not violations, proved, violations)


def env_leq(t1: CostEnv, t2: CostEnv, bindings: Sequence[Binding]) -> bool:
    return compare_envs(t1, t2, bindings).holds


def env_atoms(t: CostEnv) -> set:
    out: set = set()
    for e in t.values():
        out |= atoms_of(e)
    return out


def evaluate_env(t: CostEnv, b: Binding) -> dict:
    return {r: evaluate(e, b) for r, e in t.items()}


# ---------------------------------------------------------------------------
# JSON encoding of cost equations

def size_to_json(s: SizeExpr):
    if isinstance(s, SConst):
        return {"op": "const", "args": [format_number(s.k)]}
    if isinstance(s, SVar):
        return {"op": "var", "args": [s.name]}
    if isinstance(s, SAdd):
        return {"op": "add", "args": [size_to_json(s.left), size_to_json(s.right)]}
    if isinstance(s, SMul):
        return {"op": "scale", "args": [format_number(s.k), size_to_json(s.expr)]}
    raise TypeError(s)


def size_from_json(d) -> SizeExpr:
    op, args = d["op"], d["args"]
    if op == "const":
        return SConst(Fraction(args[0]))
    if op == "var":
        return SVar(args[0])
    if op == "add":
        return SAdd(size_from_json(args[0]), size_from_json(args[1]))
    if op == "scale":
        return SMul(Fraction(args[0]), size_from_json(args[1]))
    raise AlgebraError(f"unknown size op {op!r}")


def expr_to_json(e: CostExpr):
    if isinstance(e, Const):
        return {"op": "const", "args": [format_number(e.k)]}
    if isinstance(e, Var):
        return {"op": "var", "args": [e.name]}
    if isinstance(e, SizeOf):
        return {"op": "size", "args": [size_to_json(e.size)]}
    if isinstance(e, (Send, Recv)):
        op = "send" if isinstance(e, Send) else "recv"
        return {"op": op, "args": [e.ty.base, size_to_json(e.ty.size)]}
    if isinstance(e, Add):
        return {"op": "add", "args": [expr_to_json(e.left), expr_to_json(e.right)]}
    if isinstance(e, Max):
        return {"op": "max", "args": [expr_to_json(e.left), expr_to_json(e.right)]}
    if isinstance(e, Scale):
        return {"op": "scale", "args": [format_number(e.k), expr_to_json(e.expr)]}
    if isinstance(e, Sub):
        return {"op": "sub", "args": [expr_to_json(e.left), expr_to_json(e.right)]}
    raise TypeError(e)


def expr_from_json(d) -> CostExpr:
    op, args = d["op"], d["args"]
    if op == "const":
        return Const(Fraction(args[0]))
    if op == "var":
        return Var(args[0])
    if op == "size":
        return SizeOf(size_from_json(args[0]))
    if op in ("send", "recv"):
        ty = SizedType(args[0], size_from_json(args[1]))
        return Send(ty) if op == "send" else Recv(ty)
    if op in ("add", "max", "sub"):
        cls = {"add": Add, "max": Max, "sub": Sub}[op]
        return cls(expr_from_json(args[0]), expr_from_json(args[1]))
    if op == "scale":
        return Scale(Fraction(args[0]), expr_from_json(args[1]))
    raise AlgebraError(f"unknown cost op {op!r}")


def env_to_json(t: CostEnv) -> list:
    return [{"role": r.name, "expr": expr_to_json(e)} for r, e in t.items()]
