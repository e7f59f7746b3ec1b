"""Endpoint projection, merging and well-formedness of global types."""
from __future__ import annotations

from dataclasses import dataclass, field

from .core_types import (
    LEND,
    Branch,
    BranchT,
    End,
    Eval,
    GlobalType,
    LBranch,
    LocalType,
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
    children,
    free_vars,
    guarded,
    roles_of,
)


class ProjectionError(ValueError):
    """Projection is undefined; ``path`` lists the branch labels leading to the failure."""

    def __init__(self, message: str, path: tuple = ()):
        super().__init__(message)
        self.message = message
        self.path = tuple(path)

    def __str__(self):
        where = " at " + "/".join(self.path) if self.path else ""
        return f"{self.message}{where}"


class MergeError(ProjectionError):
    pass


def merge(l1: LocalType, l2: LocalType) -> LocalType:
    if l1 == l2:
        return l1
    if isinstance(l1, LBranch) and isinstance(l2, LBranch) and l1.peer == l2.peer:
        arms = dict(l1.branches)
        for label, k in l2.branches:
            if label in arms:
                try:
                    arms[label] = merge(arms[label], k)
                except MergeError as err:
                    raise MergeError(err.message, (label,) + err.path) from None
            else:
                arms[label] = k
        return LBranch(l1.peer, tuple(sorted(arms.items(), key=lambda kv: kv[0])))
    if isinstance(l1, LRec) and isinstance(l2, LRec):
        return LRec(merge(l1.body, l2.body), l1.name)
    raise MergeError(f"cannot merge {_head(l1)} with {_head(l2)}")


def _head(l: LocalType) -> str:
    text = str(l)
    return text if len(text) <= 60 else text[:57] + "..."


def _project(g: GlobalType, p: Role, ext: bool, path: tuple) -> LocalType:
    if isinstance(g, End):
        return LEND
    if isinstance(g, RecCall):
        return LVar(g.index, g.name)
    if isinstance(g, Rec):
        body = _project(g.body, p, ext, path)
        return LEND if isinstance(body, LVar) else LRec(body, g.name)
    if isinstance(g, Msg):
        cont = _project(g.cont, p, ext, path)
        if g.sender == p:
            return LSend(g.receiver, g.payload, cont)
        if g.receiver == p:
            return LRecv(g.sender, g.payload, g.cost, cont)
        return cont
    if isinstance(g, Branch):
        arms = []
        for label, k in g.branches:
            arms.append((label, _project(k, p, ext, path + (label,))))
        if g.sender == p:
            return LSelect(g.receiver, tuple(arms))
        if g.receiver == p:
            return LBranch(g.sender, tuple(arms))
        out = arms[0][1]
        for label, l in arms[1:]:
            try:
                out = merge(out, l)
            except MergeError as err:
                raise MergeError(err.message, path + (label,) + err.path) from None
        return out
    if ext and isinstance(g, SendAct):
        cont = _project(g.cont, p, ext, path)
        return LSend(g.receiver, g.payload, cont) if g.sender == p else cont
    if ext and isinstance(g, RecvAct):
        cont = _project(g.cont, p, ext, path)
        return LRecv(g.sender, g.payload, g.cost, cont) if g.receiver == p else cont
    if isinstance(g, (MsgT, BranchT, Eval)):
        raise ProjectionError(f"runtime form {type(g).__name__} has no projection", path)
    raise ProjectionError(f"split action {type(g).__name__} needs the extended projection", path)


def project(g: GlobalType, p: Role) -> LocalType:
    """Local type of role ``p``; raises ``ProjectionError`` when undefined."""
    return _project(g, p, False, ())


def project_ext(g: GlobalType, p: Role) -> LocalType:
    """Projection that also covers split send and receive actions."""
    return _project(g, p, True, ())


def has_split_actions(g: GlobalType) -> bool:
    stack = [g]
    while stack:
        x = stack.pop()
        if isinstance(x, (SendAct, RecvAct)):
            return True
        stack.extend(children(x))
    return False


def project_any(g: GlobalType, p: Role) -> LocalType:
    return project_ext(g, p) if has_split_actions(g) else project(g, p)


def project_all(g: GlobalType) -> dict:
    return {r: project_any(g, r) for r in sorted(roles_of(g))}


@dataclass
class WFReport:
    ok: bool
    failures: list = field(default_factory=list)  # (role or None, message, path)
    locals: dict = field(default_factory=dict)

    def __bool__(self):
        return self.ok

    def lines(self) -> list:
        out = []
        for role, msg, path in self.failures:
            who = f"role {role}: " if role is not None else ""
            where = f" (branch path {'/'.join(path)})" if path else ""
            out.append(f"{who}{msg}{where}")
        return out


def structural_issues(g: GlobalType) -> list:
    issues = []
    if free_vars(g):
        issues.append((None, "unbound recursion variable", ()))
    if not guarded(g):
        issues.append((None, "unguarded recursion", ()))

    def walk(x, path):
        if isinstance(x, (Msg, Branch, MsgT, BranchT, SendAct, RecvAct)) and x.sender == x.receiver:
            issues.append((None, f"self-message on role {x.sender}", path))
        if isinstance(x, (Branch, BranchT)):
            labels = [l for l, _ in x.branches]
            if len(set(labels)) != len(labels):
                issues.append((None, "duplicate branch labels", path))
            for l, k in x.branches:
                walk(k, path + (l,))
            return
        for k in children(x):
            walk(k, path)

    walk(g, ())
    return issues


def well_formed(g: GlobalType) -> WFReport:
    """Projectable onto every role (and structurally sane)."""
    failures = structural_issues(g)
    local = {}
    for r in sorted(roles_of(g)):
        try:
            local[r] = project_any(g, r)
        except ProjectionError as err:
            failures.append((r, err.message, err.path))
    return WFReport(not failures, failures, local)
