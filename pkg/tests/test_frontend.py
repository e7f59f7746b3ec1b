from pathlib import Path

import pytest

from campa.core_types import END, Const, Msg, Rec, RecCall, Scale, SizeOf, SVar, Var, roles_of, sized
from campa.corpus import ALL, str_int
from campa.frontend import (
    ParseError,
    butterfly,
    divide_conquer,
    g_rec,
    master_worker,
    message,
    mk_roles,
    parse,
    parse_global,
    pipe,
    pipeline,
    print_global,
    print_protocol,
    ring,
    rpipe,
)
from campa.projection import well_formed

ROOT = Path(__file__).resolve().parent.parent


def test_string_int_example_parses_to_the_ast():
    g = parse_global("p->q:<str^n @ 3*size(n)>. q->p:<int^i @ 6>. end")
    p, q = mk_roles("p", "q")
    assert g == message(p, q, sized("str", "n"), Scale(3, SizeOf(SVar("n"))), message(q, p, sized("int", "i"), 6))
    assert g == str_int()


def test_recursion_parses_with_default_cost():
    g = parse_global("rec X. p->q:<t^1>. continue X")
    p, q = mk_roles("p", "q")
    assert g == Rec(Msg(p, q, sized("t"), Const(0), RecCall(0, "X")), "X")


@pytest.mark.parametrize("text,fragment", [
    ("rec X. continue X", "unguarded"),
    ("p->q:<t^1>. continue Y", "unbound recursion variable Y"),
    ("p->p:<t^1>. end", "self-message"),
    ("p->q:<t^1> end", "expected"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as info:
        parse(text)
    assert fragment in str(info.value)


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse("protocol x {\n  roles p, q;\n  p->q:<t^1> . q->p:<t^1 @ > . end\n}")
    assert (info.value.line, info.value.col) == (3, 28)


def test_roles_get_declaration_order_ids():
    proto = parse("protocol x { roles q, p; p->q:<t^1>. end }")
    assert [(r.name, r.id) for r in proto.roles] == [("q", 0), ("p", 1)]


def test_end_prints_as_end():
    assert print_global(END) == "end"


@pytest.mark.parametrize("name", sorted(ALL))
def test_corpus_round_trips(name):
    g = ALL[name].protocol
    assert parse(print_protocol(g, name)).body == g
    text = ALL[name].path.read_text(encoding="utf-8")
    assert ALL[name].load().body == g
    assert print_protocol(parse(text)) == text


def test_example_protocol_files_parse():
    files = sorted((ROOT / "protocols").glob("*.camp"))
    assert files
    for f in files:
        proto = parse(f.read_text(encoding="utf-8"))
        assert well_formed(proto.body), f.name


def test_pipe_under_rec_is_the_two_stage_pipeline():
    p, q, r = mk_roles("p", "q", "r")
    t1, t2, c1, c2 = sized("t1"), sized("t2"), Var("c1"), Var("c2")
    expected = Rec(Msg(p, q, t1, c1, Msg(q, r, t2, c2, RecCall(0, "X"))), "X")
    assert g_rec("X", lambda x: pipe((p, q, r), [(t1, c1), (t2, c2)], x)) == expected
    assert rpipe([(t1, c1), (t2, c2)], (p, q, r)) == expected


def test_master_worker_two():
    g = master_worker(2)
    assert {r.name for r in roles_of(g)} == {"m1", "m2", "w1", "w2"}
    assert g == ALL["master_worker2"].load().body


def test_butterfly_one_level_exchanges_both_ways():
    g = butterfly(1)
    p0, p1 = mk_roles("P0", "P1")
    d = sized("d", SVar("n"))
    assert g == message(p0, p1, d, Var("c"), message(p1, p0, d, Var("c")))


@pytest.mark.parametrize("size", range(2, 9))
def test_generators_are_well_formed(size):
    for g in (pipeline(size), ring(size), ring(size, recursive=False), master_worker(size),
              master_worker(size, branching=False)):
        assert well_formed(g)


@pytest.mark.parametrize("levels", [1, 2, 3])
def test_butterfly_is_well_formed(levels):
    g = butterfly(levels)
    assert len(roles_of(g)) == 2 ** levels
    assert well_formed(g)


@pytest.mark.parametrize("build,arg", [(pipeline, 1), (ring, 1), (master_worker, 0), (butterfly, 0),
                                       (divide_conquer, 0)])
def test_generators_reject_bad_sizes(build, arg):
    with pytest.raises(ValueError):
        build(arg)
