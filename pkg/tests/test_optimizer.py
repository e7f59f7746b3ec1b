import itertools

import pytest

from campa.algebra import equivalent
from campa.core_types import Max, Recv, RecvAct, Send, SendAct, Var, count_binders, sized
from campa.corpus import (
    ALL,
    double_buffering,
    g1_sends_first_to_q1,
    g2_sends_first_to_q2,
    receive_first_ring_global,
    ring2,
    ring2_optimized,
    ring3_optimized,
    ring3_uniform,
)
from campa.cost import global_cost_ext
from campa.frontend import message, mk_roles, ping_pong, recv_act, send_act
from campa.optimizer import (
    check_opt_cost,
    check_opt_deadlock,
    explain_leq,
    normal_form,
    optim_leq,
    random_normal_form,
    split_messages,
)

p, q, r = mk_roles("p", "q", "r")
tau, tau1, tau2 = sized("tau"), sized("tau1"), sized("tau2")
c = Var("c")


def test_init_splits_a_message():
    assert split_messages(message(p, q, tau, c)) == send_act(p, q, tau, recv_act(q, p, tau, c))


def test_normal_form_of_optimized_ring_puts_sends_first():
    nf = normal_form(ring2())
    assert isinstance(nf, SendAct) and isinstance(nf.cont, SendAct)
    assert isinstance(nf.cont.cont, RecvAct)
    assert nf == normal_form(ring2_optimized())


def test_relation_is_reflexive_on_the_corpus():
    for e in ALL.values():
        assert optim_leq(e.protocol, e.protocol), e.name


def test_ring_optimization_accepted_one_way():
    assert optim_leq(ring2_optimized(), ring2())
    assert not optim_leq(ring2(), ring2_optimized())
    assert optim_leq(ring3_optimized(), ring3_uniform())


def test_out_example_is_accepted():
    g1, g2 = g1_sends_first_to_q1(), g2_sends_first_to_q2()
    assert normal_form(g1) == normal_form(g2)
    assert optim_leq(g1, g2)


def test_unrelated_types_are_rejected_with_reasons():
    assert explain_leq(receive_first_ring_global(), ring3_uniform())
    assert not optim_leq(ring2(), ping_pong())


def test_moving_a_receive_ahead_of_a_send_is_rejected():
    # q receives before it sends: the reverse of the ring optimization
    early = send_act(p, q, tau1, recv_act(q, p, tau1, 0, send_act(q, p, tau2, recv_act(p, q, tau2))))
    late = send_act(p, q, tau1, send_act(q, p, tau2, recv_act(q, p, tau1, 0, recv_act(p, q, tau2))))
    assert optim_leq(late, early)
    assert not optim_leq(early, late)


@pytest.mark.parametrize("name", sorted(ALL))
def test_normal_form_is_idempotent(name):
    nf = normal_form(ALL[name].protocol)
    assert normal_form(nf) == nf


@pytest.mark.parametrize("name", sorted(ALL))
def test_random_rewriting_reaches_the_same_normal_form(name):
    g = ALL[name].protocol
    nf = normal_form(g)
    for seed in range(50):
        run = random_normal_form(g, seed)
        assert run.result == nf, seed
        assert run.decreasing


def test_deadlock_check_of_optimized_types():
    rep = check_opt_deadlock(ring3_optimized(), ring3_uniform(), ks=2)
    assert rep.ok and rep.related
    db = check_opt_deadlock(double_buffering(), None, ks=2)
    assert db.deadlock_free and not db.related
    bad = check_opt_deadlock(receive_first_ring_global(), ring3_uniform())
    assert not bad.deadlock_free and not bad.related


def _accepted_pairs():
    names = sorted(ALL)
    for a, b in itertools.product(names, names):
        if a != b and optim_leq(ALL[a].protocol, ALL[b].protocol):
            yield a, b


ACCEPTED = list(_accepted_pairs())


def test_expected_pairs_are_accepted():
    assert {("ring2_optimized", "ring2"), ("ring3_optimized", "ring3_uniform"), ("g1", "g2")} <= set(ACCEPTED)


@pytest.mark.parametrize("a,b", ACCEPTED)
def test_optimization_never_costs_more_without_send_costs(a, b):
    g1, g2 = ALL[a].protocol, ALL[b].protocol
    ks = [1] * count_binders(g1)
    rep = check_opt_cost(g1, g2, ks, samples=100)
    assert rep.ok, rep.comparison.violations[:2]


def test_send_costs_can_make_the_reordering_slower():
    rep = check_opt_cost(g1_sends_first_to_q1(), g2_sends_first_to_q2(), zero_send=False)
    assert rep.related and not rep.comparison.holds


def test_optimized_ring_cost():
    gate = Max(Send(tau1), Send(tau2))
    env = {x.name: e for x, e in global_cost_ext(ring2_optimized()).items()}
    assert equivalent(env["p"], gate + Recv(tau2) + Var("c2"))
    assert equivalent(env["q"], gate + Recv(tau1) + Var("c1"))
