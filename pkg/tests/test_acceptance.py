"""Acceptance criteria, one test each.

Every test prints a single ``[PASS]``/``[FAIL]`` line with its runtime and
budget, so ``pytest tests/test_acceptance.py -s`` (or running this file
directly) gives a compact summary.
"""
import time
from contextlib import contextmanager
from fractions import Fraction

import pytest

from campa.algebra import equivalent, evaluate
from campa.core_types import Max, Recv, Scale, SizeOf, Send, SVar, Var, cmax, count_binders, roles_of, sized, unroll
from campa.corpus import (
    ALL,
    CORPUS,
    g1_sends_first_to_q1,
    g2_sends_first_to_q2,
    receive_first_ring,
    ring2,
    ring2_optimized,
    str_int,
)
from campa.cost import check_soundness, global_cost, global_cost_ext, trace_cost
from campa.deployment import AffineLatency, HardwareSpec, resource_cost
from campa.frontend import (
    butterfly,
    master_worker,
    mk_roles,
    parse,
    ping_pong,
    pipeline,
    print_protocol,
    ring,
    rpipe,
    scatter_gather,
)
from campa.latency import check_latency_theorems, latency, latency_rel
from campa.optimizer import check_opt_cost, normal_form, optim_leq, random_normal_form
from campa.projection import well_formed
from campa.semantics import deadlock_free, enumerate_traces, explore_configurations, trace_equiv

from oracles import World, world_for

p, q, r = mk_roles("p", "q", "r")
tau1, tau2 = sized("tau1"), sized("tau2")
c1, c2 = Var("c1"), Var("c2")
cs1, cs2, cr1, cr2 = Send(tau1), Send(tau2), Recv(tau1), Recv(tau2)


@contextmanager
def criterion(capsys, number: int, title: str, budget: float, already: float = 0.0):
    """Time the block (plus ``already`` seconds spent in fixtures) and print one summary line."""
    start = time.perf_counter() - already
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        ok = ok and elapsed < budget
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({elapsed:.2f}s, budget {budget:g}s)")
    assert elapsed < budget, f"criterion {number} took {elapsed:.2f}s (budget {budget:g}s)"


def same(env, expected):
    got = {x.name: e for x, e in env.items()}
    assert set(got) == set(expected)
    for name, e in expected.items():
        assert equivalent(got[name], e), (name, got[name], e)


def test_criterion_1_closed_form_cost_equations(capsys):
    with criterion(capsys, 1, "closed-form symbolic cost equations", 1.0):
        same(global_cost(scatter_gather()), {
            "p": Scale(2, cs1),
            "q": cs1 + cr1 + c1 + cs2,
            "r": Scale(2, cs1) + cr1 + c1 + cs2,
            "s": Max(cr2, cs1) + cs1 + cr1 + c1 + cs2 + cr2,
        })
        tp, tq, tr = cs1, cr1 + c1 + cs2, cr2 + c2
        pipe = rpipe([(tau1, c1), (tau2, c2)], (p, q, r))
        for k in range(1, 9):
            same(global_cost(pipe, [k]), {
                "p": Scale(k, tp),
                "q": tp + tq + Scale(k - 1, Max(tp, tq)),
                "r": tp + tq + tr + Scale(k - 1, cmax(tp, tq, tr)),
            })
        tp, tq = cs1 + cr2 + c2, cr1 + c1 + cs2
        for k in range(1, 9):
            same(global_cost(ping_pong(), [k]), {"p": Scale(k, tp + tq), "q": cs1 + tq + Scale(k - 1, tp + tq)})
        (tr_,) = enumerate_traces(str_int())
        str_n, int_i = sized("str", "n"), sized("int", "i")
        base = Send(str_n) + Recv(str_n) + Scale(3, SizeOf(SVar("n"))) + Send(int_i)
        same(trace_cost(tr_), {"p": base + Recv(int_i) + 6, "q": base})


def _soundness_reports():
    for name, e in sorted(CORPUS.items()):
        for ks in e.unrolls:
            yield name, ks, check_soundness(e.protocol, ks, samples=100)


@pytest.fixture(scope="module")
def soundness():
    start = time.perf_counter()
    reports = list(_soundness_reports())
    return reports, time.perf_counter() - start


def test_criterion_2_bounded_cost_soundness(capsys, soundness):
    reports, elapsed = soundness
    with criterion(capsys, 2, "trace cost bounded by global cost on the corpus", 60.0, elapsed):
        assert {name for name, _, _ in reports} == set(CORPUS)
        for name, ks, rep in reports:
            assert rep.samples == 100 and rep.traces > 0
            assert rep.count("bound") == 0, (name, ks, [v.describe() for v in rep.violations[:3]])


def test_criterion_3_stepwise_preservation(capsys, soundness):
    reports, _ = soundness
    with criterion(capsys, 3, "queue well-formedness and cost preservation at every transition", 1.0):
        total = sum(rep.transitions for _, _, rep in reports)
        assert total >= 10_000, total
        for name, ks, rep in reports:
            assert rep.count("wf") == 0 and rep.count("preservation") == 0 and rep.count("determinism") == 0, name


def test_criterion_4_lts_correspondence_and_deadlock_freedom(capsys):
    with criterion(capsys, 4, "trace equivalence and deadlock-freedom", 60.0):
        for name, e in sorted(CORPUS.items()):
            for ks in e.unrolls:
                if not e.split:
                    assert trace_equiv(e.protocol, ks, depth=14), (name, ks)
                assert well_formed(e.protocol), name
                assert deadlock_free(e.protocol, ks, allow_orphans=e.split), (name, ks)
        assert not explore_configurations(receive_first_ring()).deadlock_free


def test_criterion_5_latency(capsys):
    with criterion(capsys, 5, "latency stabilization, closed forms and theorems", 30.0):
        single = [n for n, e in CORPUS.items() if count_binders(e.protocol) == 1]
        assert single
        for name in single:
            g = CORPUS[name].protocol
            res = latency(g)
            assert res.index <= 4, name
            rep = check_latency_theorems(g, ks=range(1, 7), samples=100, result=res)
            assert rep.ok, (name, rep.correspondence[:1], rep.soundness[:1])
        tp, tq, tr = cs1, cr1 + c1 + cs2, cr2 + c2
        same(latency(rpipe([(tau1, c1), (tau2, c2)], (p, q, r))).env, {"p": tp, "q": Max(tp, tq),
                                                                         "r": cmax(tp, tq, tr)})
        tp, tq = cs1 + cr2 + c2, cr1 + c1 + cs2
        same(latency(ping_pong()).env, {"p": tp + tq, "q": tp + tq})
        t1, t, t2 = cs1, cr1 + c1 + cs2, cr2 + c2
        for n in (2, 3):
            g = master_worker(n, branching=False)
            m2 = next(x for x in roles_of(g) if x.name == "m2")
            expected = {"m1": t1, "m2": cmax(t1, Scale(Fraction(1, n), t), t2)}
            expected.update({f"w{i}": Max(t1, Scale(Fraction(1, n), t)) for i in range(1, n + 1)})
            same(latency_rel(g, m2), expected)


def test_criterion_6_optimization(capsys):
    with criterion(capsys, 6, "asynchronous optimization", 30.0):
        assert optim_leq(ring2_optimized(), ring2())
        assert optim_leq(g1_sends_first_to_q1(), g2_sends_first_to_q2())
        for name, e in ALL.items():
            g = e.protocol
            nf = normal_form(g)
            assert normal_form(nf) == nf, name
            for seed in range(50):
                assert random_normal_form(g, seed).result == nf, (name, seed)
        pairs = [(a, b) for a in ALL for b in ALL if a != b and optim_leq(ALL[a].protocol, ALL[b].protocol)]
        assert ("ring2_optimized", "ring2") in pairs and ("g1", "g2") in pairs
        for a, b in pairs:
            g1, g2 = ALL[a].protocol, ALL[b].protocol
            rep = check_opt_cost(g1, g2, [1] * count_binders(g1), samples=100, zero_send=True)
            assert rep.comparison.holds, (a, b)
        gate = Max(cs1, cs2)
        same(global_cost_ext(ring2_optimized()), {"p": gate + cr2 + c2, "q": gate + cr1 + c1})


def test_criterion_7_deployment(capsys):
    with criterion(capsys, 7, "deployment degradation and core monotonicity", 10.0):
        for name, e in sorted(CORPUS.items()):
            names = sorted(x.name for x in roles_of(e.protocol))
            hw = HardwareSpec({n: 1 for n in names}, {(a, b): AffineLatency() for a in names for b in names if a < b})
            mapping = {n: n for n in names}
            for ks in e.unrolls:
                g = unroll(e.protocol, ks)
                env = global_cost_ext(g)
                for seed in range(20):
                    bd = world_for(g, seed).binding()
                    assert resource_cost(g, (), hw, mapping, bd) == {x: evaluate(v, bd) for x, v in env.items()}, name
        mw = master_worker(5)
        bd = World(vars={"c1": 10, "c2": 3}, send={t: (1, 0) for t in ("tau1", "tau2", "unit")},
                   recv={t: (1, 0) for t in ("tau1", "tau2", "unit")}).binding()
        mapping = {"m1": "a", "m2": "a", **{f"w{i}": "b" for i in range(1, 6)}}
        prev = None
        for cores in range(1, 6):
            hw = HardwareSpec({"a": 1, "b": cores}, {("a", "b"): AffineLatency(Fraction(2))})
            got = resource_cost(mw, [1], hw, mapping, bd)
            if prev is not None:
                assert all(got[x] <= prev[x] for x in got), cores
            prev = got


def test_criterion_8_frontend(capsys):
    with criterion(capsys, 8, "parse/print round-trip and generator well-formedness", 5.0):
        for name, e in ALL.items():
            g = e.protocol
            assert parse(print_protocol(g, name)).body == g, name
        for n in range(2, 9):
            for g in (pipeline(n), ring(n), master_worker(n)):
                assert well_formed(g)
        for levels in (1, 2, 3):
            assert well_formed(butterfly(levels))


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
