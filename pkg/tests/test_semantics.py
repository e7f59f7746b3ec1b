import pytest

from campa.core_types import END, LEND, LBranch, LRecv, LSend, MsgT, Var, sized, unfold, unroll
from campa.corpus import CORPUS, receive_first_ring
from campa.frontend import message, mk_roles, scatter_gather
from campa.semantics import (
    ABranch,
    ARecv,
    ARun,
    ASend,
    BudgetExceeded,
    Configuration,
    config_steps,
    deadlock_free,
    enumerate_traces,
    explore_configurations,
    global_steps,
    initial_configuration,
    trace_equiv,
)

from oracles import all_traces

p, q, r, s = mk_roles("p", "q", "r", "s")
tau, tau1, tau2 = sized("tau"), sized("tau1"), sized("tau2")
c, c1 = Var("c"), Var("c1")


def test_global_send_step():
    g = message(p, q, tau, c)
    assert global_steps(g) == ((ASend(p, q, tau), MsgT(p, q, tau, c, END)),)


def test_end_has_no_steps():
    assert global_steps(END) == ()


def test_independent_prefixes_both_enabled():
    g = message(p, r, tau, c, message(q, r, tau2, c))
    assert {a for a, _ in global_steps(g)} == {ASend(p, r, tau), ASend(q, r, tau2)}


def test_configuration_send_receive_run():
    cfg = Configuration.make({p: LSend(q, tau, LEND), q: LRecv(p, tau, c, LEND)})
    (a1, cfg1), = config_steps(cfg)
    assert a1 == ASend(p, q, tau) and cfg1.queue(p, q) == (tau,)
    (a2, cfg2), = config_steps(cfg1)
    assert a2 == ARecv(p, q, tau) and cfg2.queue(p, q) == ()
    (a3, cfg3), = config_steps(cfg2)
    assert a3 == ARun(q, c) and cfg3.finished and config_steps(cfg3) == []


def test_configuration_branch_follows_queued_label():
    cfg = Configuration.make({q: LBranch(p, (("l1", LEND), ("l2", LSend(p, tau, LEND))))}, {(p, q): ["l2"]})
    (a, nxt), = config_steps(cfg)
    assert a == ABranch(p, q, "l2")
    assert nxt.local(q) == LSend(p, tau, LEND)


def test_single_message_has_one_trace():
    assert enumerate_traces(message(p, q, tau, c)) == [(ASend(p, q, tau), ARecv(p, q, tau), ARun(q, c))]


def test_end_has_the_empty_trace():
    assert enumerate_traces(END) == [()]


def test_scatter_gather_contains_both_sample_traces():
    zero = message(p, q, tau1).cost
    tr1 = (ASend(p, q, tau1), ARecv(p, q, tau1), ARun(q, c1), ASend(q, s, tau2), ARecv(q, s, tau2), ARun(s, zero),
           ASend(p, r, tau1), ARecv(p, r, tau1), ARun(r, c1), ASend(r, s, tau2), ARecv(r, s, tau2), ARun(s, zero))
    tr2 = (ASend(p, q, tau1), ASend(p, r, tau1), ARecv(p, r, tau1), ARun(r, c1), ARecv(p, q, tau1), ARun(q, c1),
           ASend(r, s, tau2), ASend(q, s, tau2), ARecv(q, s, tau2), ARun(s, zero), ARecv(r, s, tau2), ARun(s, zero))
    traces = set(enumerate_traces(scatter_gather()))
    assert tr1 in traces and tr2 in traces


@pytest.mark.parametrize("name", ["scatter_gather", "pipeline", "ping_pong", "ring3", "master_worker2", "mergesort2"])
def test_enumeration_matches_naive_search(name):
    e = CORPUS[name]
    ks = e.unrolls[0]
    g = unroll(e.protocol, ks)
    done, stuck = all_traces(g, global_steps, lambda x: x == END)
    assert not stuck
    assert sorted(enumerate_traces(e.protocol, ks)) == sorted(set(done))


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_corpus_is_deadlock_free(name):
    e = CORPUS[name]
    for ks in e.unrolls:
        assert deadlock_free(e.protocol, ks, allow_orphans=e.split)


def test_receive_first_ring_deadlocks_immediately():
    report = explore_configurations(receive_first_ring())
    assert not report.deadlock_free
    assert report.trace == ()
    # everyone waits on an empty queue
    assert report.stuck.queues == ()
    assert all(isinstance(unfold(l), LRecv) for _, l in report.stuck.locals)


def test_finished_configuration_is_deadlock_free():
    assert explore_configurations(Configuration.make({p: LEND, q: LEND}))


def test_exploration_budget():
    with pytest.raises(BudgetExceeded):
        deadlock_free(CORPUS["master_worker3"].protocol, (2,), state_cap=50)


def test_trace_equivalence_examples():
    assert trace_equiv(message(p, q, tau, c), None, depth=3)
    assert trace_equiv(CORPUS["ping_pong"].protocol, (1,), depth=14)
    assert trace_equiv(END, None)


def _prefixes(start, steps, depth):
    out = {()}
    layer = [(start, ())]
    for _ in range(depth):
        nxt = []
        for st, tr in layer:
            for a, st2 in steps(st):
                t = tr + (a,)
                if t not in out:
                    out.add(t)
                    nxt.append((st2, t))
        layer = nxt
    return out


@pytest.mark.parametrize("name", ["scatter_gather", "pipeline", "ping_pong", "ring3"])
def test_trace_equivalence_against_prefix_sets(name):
    e = CORPUS[name]
    g = unroll(e.protocol, e.unrolls[-1])
    glob = _prefixes(g, global_steps, 10)
    loc = _prefixes(initial_configuration(g), config_steps, 10)
    assert glob == loc
    assert trace_equiv(e.protocol, e.unrolls[-1], depth=10)
