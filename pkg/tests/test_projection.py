import pytest

from campa.core_types import END, LEND, ZERO, Branch, LBranch, LRec, LRecv, LSend, LVar, Var, roles_of, sized
from campa.corpus import ALL, CORPUS, ring2_optimized
from campa.frontend import choice, g_rec, message, mk_roles, scatter_gather
from campa.projection import MergeError, ProjectionError, merge, project, project_all, project_ext, well_formed

tau, tau1, tau2 = sized("tau"), sized("tau1"), sized("tau2")
c = Var("c")


def two_masters():
    m1, m2, w1, w2 = mk_roles("m1", "m2", "w1", "w2")
    g = message(m1, w1, tau1, 0, message(m1, w2, tau1, 0, message(w1, m2, tau2, 0, message(w2, m2, tau2))))
    return g, (m1, m2, w1, w2)


def test_two_master_example_roles_and_local_types():
    g, (m1, m2, w1, w2) = two_masters()
    assert roles_of(g) == {m1, m2, w1, w2}
    assert project(g, m1) == LSend(w1, tau1, LSend(w2, tau1, LEND))
    assert project(g, w1) == LRecv(m1, tau1, ZERO, LSend(m2, tau2, LEND))
    assert project(g, m2) == LRecv(w1, tau2, ZERO, LRecv(w2, tau2, ZERO, LEND))


def test_branching_projection_onto_third_party():
    p, q, r = mk_roles("p", "q", "r")

    def body(x):
        return choice(p, q, [
            ("l1", choice(q, r, [("l2", choice(p, r, [("l3", x)]))])),
            ("l4", choice(q, r, [("l5", choice(p, r, [("l6", END)]))])),
        ])

    g = g_rec("X", body)
    expected = LRec(LBranch(q, (("l2", LBranch(p, (("l3", LVar(0)),))), ("l5", LBranch(p, (("l6", LEND),))))))
    assert project(g, r) == expected


def test_end_projects_to_end():
    p, = mk_roles("p")
    assert project(END, p) == LEND


def test_merge_rules():
    p, q = mk_roles("p", "q")
    l = LSend(q, tau, LEND)
    assert merge(l, l) == l
    left = LBranch(p, (("l1", LEND),))
    right = LBranch(p, (("l2", LEND),))
    assert merge(left, right) == LBranch(p, (("l1", LEND), ("l2", LEND)))
    with pytest.raises(MergeError):
        merge(LSend(p, tau, LEND), LSend(q, tau, LEND))


def test_well_formed_examples():
    assert well_formed(scatter_gather())
    assert well_formed(END)
    p, q, r = mk_roles("p", "q", "r")
    bad = choice(p, q, [("l1", message(q, r, tau, c)), ("l2", message(r, q, tau, c))])
    report = well_formed(bad)
    assert not report
    (role, msg, path), = report.failures
    assert role == r and path == ("l2",)
    assert "cannot merge" in msg
    assert report.lines() == [f"role r: {msg} (branch path l2)"]


def test_well_formed_rejects_structural_problems():
    p, q = mk_roles("p", "q")
    dup = Branch(p, q, (("l", END), ("l", END)))
    assert not well_formed(dup)
    selfmsg = Branch(p, p, (("l", END),))
    assert any("self-message" in m for _, m, _ in well_formed(selfmsg).failures)


def test_extended_projection_of_optimized_ring():
    p, q = mk_roles("p", "q")
    g = ring2_optimized()
    assert project_ext(g, q) == LSend(p, tau2, LRecv(p, tau1, Var("c1"), LEND))
    assert project_ext(g, p) == LSend(q, tau1, LRecv(q, tau2, Var("c2"), LEND))
    with pytest.raises(ProjectionError):
        project(g, p)


@pytest.mark.parametrize("name", sorted(ALL))
def test_extended_projection_is_conservative(name):
    g = ALL[name].protocol
    if ALL[name].split:
        return
    for r in roles_of(g):
        assert project_ext(g, r) == project(g, r)


@pytest.mark.parametrize("name", sorted(ALL))
def test_corpus_is_well_formed(name):
    report = well_formed(ALL[name].protocol)
    assert report, report.lines()
    assert set(report.locals) == roles_of(ALL[name].protocol)


def test_project_all_covers_every_role():
    g = CORPUS["master_worker3"].protocol
    local = project_all(g)
    assert set(local) == roles_of(g)
