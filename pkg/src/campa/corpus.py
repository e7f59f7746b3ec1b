"""Reference protocols used by the tests, the CLI and the bundled ``.camp`` files."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .core_types import GlobalType, LRec, LRecv, LSend, LVar, Var, count_binders, sized
from .frontend import (
    Protocol,
    chain,
    choice,
    divide_conquer,
    g_rec,
    master_worker,
    mk_roles,
    parse,
    ping_pong,
    recv_act,
    ring,
    rpipe,
    scatter_gather,
    send_act,
)
from .semantics import Configuration

PROTOCOL_DIR = Path(__file__).parent / "protocols"


def pipeline3() -> GlobalType:
    p, q, r = mk_roles("p", "q", "r")
    return rpipe([(sized("tau1"), Var("c1")), (sized("tau2"), Var("c2"))], (p, q, r))


def str_int() -> GlobalType:
    return parse("p->q:<str^n @ 3*size(n)>. q->p:<int^i @ 6>. end").body


def ring2() -> GlobalType:
    p, q = mk_roles("p", "q")
    return chain([(p, q, sized("tau1"), Var("c1")), (q, p, sized("tau2"), Var("c2"))])


def ring2_optimized() -> GlobalType:
    """Both sends first, then each receive with its computation."""
    p, q = mk_roles("p", "q")
    t1, t2 = sized("tau1"), sized("tau2")
    return send_act(p, q, t1, send_act(q, p, t2, recv_act(q, p, t1, Var("c1"), recv_act(p, q, t2, Var("c2")))))


def _g1g2(swap: bool) -> GlobalType:
    p, q1, q2, r = mk_roles("p", "q1", "q2", "r")
    t, t2 = sized("tau"), sized("tau2")
    tail = recv_act(q1, p, t, Var("c1"), recv_act(q2, p, t, Var("c2"), send_act(q2, r, t2, recv_act(r, q2, t2))))
    first, second = (q2, q1) if swap else (q1, q2)
    return send_act(p, first, t, send_act(p, second, t, tail))


def g1_sends_first_to_q1() -> GlobalType:
    return _g1g2(False)


def g2_sends_first_to_q2() -> GlobalType:
    return _g1g2(True)


def double_buffering() -> GlobalType:
    """Source ``p``, sink ``q`` and a two-buffer service ``r``."""
    p, q, r = mk_roles("p", "q", "r")
    r1, r2 = sized("r1"), sized("r2")
    copy, drain = Var("copy"), Var("drain")

    def half(ready, s, t, u, x):
        return recv_act(p, r, ready, 0, chain(
            [(p, r, sized(s), copy), (q, r, sized(t), 0), (r, q, sized(u), drain)],
            send_act(r, p, ready, x)))

    loop = g_rec("X", lambda x: half(r1, "s1", "t1", "u1", half(r2, "s2", "t2", "u2", x)))
    return send_act(r, p, r1, send_act(r, p, r2, loop))


def nested_loops() -> GlobalType:
    """An outer loop around an inner loop that either repeats or returns."""
    p, q = mk_roles("p", "q")

    def outer(x):
        inner = g_rec("Y", lambda y: choice(q, p, [("l1", y), ("l2", x)]))
        return chain([(p, q, sized("tau"), Var("c1"))], inner)

    return g_rec("X", outer)


def receive_first_ring() -> Configuration:
    """Three roles that each wait for their predecessor before sending."""
    p, q, r = mk_roles("p", "q", "r")
    t = sized("tau")
    c = Var("c")
    locals_ = {
        p: LRec(LRecv(r, t, c, LSend(q, t, LVar(0, "X"))), "X"),
        q: LRec(LRecv(p, t, c, LSend(r, t, LVar(0, "X"))), "X"),
        r: LRec(LRecv(q, t, c, LSend(p, t, LVar(0, "X"))), "X"),
    }
    return Configuration.make(locals_)


def receive_first_ring_global() -> GlobalType:
    """The same receive-first ring written with split actions."""
    p, q, r = mk_roles("p", "q", "r")
    t, c = sized("tau"), Var("c")
    return g_rec("X", lambda x: recv_act(p, r, t, c, send_act(p, q, t,
                               recv_act(q, p, t, c, send_act(q, r, t,
                               recv_act(r, q, t, c, send_act(r, p, t, x)))))))


def ring3_optimized() -> GlobalType:
    """Ring of three where every role sends before it receives."""
    p, q, r = mk_roles("p", "q", "r")
    t, c = sized("tau"), Var("c")
    return g_rec("X", lambda x: send_act(p, q, t, send_act(q, r, t, send_act(r, p, t,
                                recv_act(q, p, t, c, recv_act(r, q, t, c, recv_act(p, r, t, c, x)))))))


def ring3_uniform() -> GlobalType:
    p, q, r = mk_roles("p", "q", "r")
    t, c = sized("tau"), Var("c")
    return g_rec("X", lambda x: chain([(p, q, t, c), (q, r, t, c), (r, p, t, c)], x))


@dataclass(frozen=True)
class Entry:
    name: str
    build: object
    unrolls: tuple  # iteration vectors exercised by the property suites
    split: bool = False

    @property
    def protocol(self) -> GlobalType:
        return self.build()

    @property
    def path(self) -> Path:
        return PROTOCOL_DIR / f"{self.name}.camp"

    def load(self) -> Protocol:
        return parse(self.path.read_text(encoding="utf-8"))


def _ks(g_builder, values=(1, 2)):
    n = count_binders(g_builder())
    return ((),) if n == 0 else tuple(tuple([k] * n) for k in values)


def _entry(name, build, split=False):
    return Entry(name, build, _ks(build), split)


CORPUS = {
    e.name: e
    for e in [
        _entry("scatter_gather", scatter_gather),
        _entry("pipeline", pipeline3),
        _entry("ping_pong", ping_pong),
        _entry("ring3", lambda: ring(3)),
        _entry("master_worker2", lambda: master_worker(2)),
        _entry("master_worker3", lambda: master_worker(3)),
        _entry("mergesort2", lambda: divide_conquer(2)),
        _entry("double_buffering", double_buffering, split=True),
    ]
}

EXTRA = {
    e.name: e
    for e in [
        _entry("str_int", str_int),
        _entry("ring2", ring2),
        _entry("ring2_optimized", ring2_optimized, split=True),
        _entry("g1", g1_sends_first_to_q1, split=True),
        _entry("g2", g2_sends_first_to_q2, split=True),
        _entry("nested_loops", nested_loops),
        _entry("receive_first_ring", receive_first_ring_global, split=True),
        _entry("ring3_uniform", ring3_uniform),
        _entry("ring3_optimized", ring3_optimized, split=True),
    ]
}

ALL = {**CORPUS, **EXTRA}


def get(name: str) -> GlobalType:
    return ALL[name].protocol
