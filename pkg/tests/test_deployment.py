import json
import warnings
from fractions import Fraction

import numpy as np
import pytest
from scipy.interpolate import CubicSpline

from campa.algebra import evaluate
from campa.core_types import roles_of, sized, unroll
from campa.corpus import CORPUS
from campa.cost import global_cost_ext
from campa.deployment import (
    AffineLatency,
    DeploymentError,
    HardwareSpec,
    TableLatency,
    dump_architecture,
    fit_cost_curve,
    load_architecture,
    load_bindings,
    resource_cost,
    to_fraction,
)
from campa.frontend import master_worker, message, mk_roles

from oracles import World, schedule_master_worker, world_for

p, q, r = mk_roles("p", "q", "r")
tau = sized("tau")


def dedicated(g):
    names = sorted(x.name for x in roles_of(g))
    lat = {(a, b): AffineLatency() for a in names for b in names if a < b}
    return HardwareSpec({n: 1 for n in names}, lat), {n: n for n in names}


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_dedicated_nodes_reduce_to_global_cost(name):
    e = CORPUS[name]
    hw, mapping = dedicated(e.protocol)
    for ks in e.unrolls:
        g = unroll(e.protocol, ks)
        env = global_cost_ext(g)
        for seed in range(20):
            bd = world_for(g, seed).binding()
            got = resource_cost(g, (), hw, mapping, bd)
            assert got == {x: evaluate(v, bd) for x, v in env.items()}, (ks, seed)


def _mw_hw(cores, lat=2):
    hw = HardwareSpec({"a": 1, "b": cores}, {("a", "b"): AffineLatency(Fraction(lat))})
    mapping = {"m1": "a", "m2": "a", **{f"w{i}": "b" for i in range(1, 6)}}
    return hw, mapping


def _mw_world():
    return World(vars={"c1": 10, "c2": 3}, send={t: (1, 0) for t in ("tau1", "tau2", "unit")},
                 recv={t: (1, 0) for t in ("tau1", "tau2", "unit")})


@pytest.mark.parametrize("cores", range(1, 6))
def test_master_worker_matches_hand_schedule(cores):
    hw, mapping = _mw_hw(cores)
    got = resource_cost(master_worker(5), [1], hw, mapping, _mw_world().binding())
    want = schedule_master_worker(5, cores, 1, 1, 10, 3, 2)
    assert {x.name: v for x, v in got.items()} == want


def test_master_worker_never_slower_with_more_cores():
    g = master_worker(5)
    for lat in (0, 2, 7):
        prev = None
        for cores in range(1, 6):
            hw, mapping = _mw_hw(cores, lat)
            got = resource_cost(g, [1], hw, mapping, _mw_world().binding())
            if prev is not None:
                assert all(got[x] <= prev[x] for x in got), (lat, cores)
            prev = got


def test_latency_between_nodes_adds_to_the_receiver():
    g = message(p, q, tau, 0)
    bd = World(sizes={}, send={"tau": (2, 0)}, recv={"tau": (3, 0)}).binding()
    near = resource_cost(g, (), HardwareSpec({"a": 1, "b": 1}, {("a", "b"): AffineLatency(Fraction(0))}),
                         {"p": "a", "q": "b"}, bd)
    far = resource_cost(g, (), HardwareSpec({"a": 1, "b": 1}, {("a", "b"): AffineLatency(Fraction(5))}),
                        {"p": "a", "q": "b"}, bd)
    assert far[p] == near[p] == 2
    assert far[q] - near[q] == 5


def test_roles_on_one_core_serialize():
    g = message(p, r, tau, 0, message(q, r, tau, 0))
    bd = World(send={"tau": (4, 0)}, recv={"tau": (1, 0)}).binding()
    shared = resource_cost(g, (), HardwareSpec({"a": 1, "b": 1}, {("a", "b"): AffineLatency()}),
                           {"p": "a", "q": "a", "r": "b"}, bd)
    apart = resource_cost(g, (), HardwareSpec({"a": 1, "b": 1, "c": 1},
                                              {(x, y): AffineLatency() for x in "abc" for y in "abc" if x < y}),
                          {"p": "a", "q": "c", "r": "b"}, bd)
    assert apart[q] == 4 and shared[q] == 8


def test_unmapped_role_is_reported():
    hw = HardwareSpec({"a": 1})
    with pytest.raises(DeploymentError, match="role q is not mapped"):
        resource_cost(message(p, q, tau), (), hw, {"p": "a"}, World(send={"tau": (1, 0)}).binding())


# cost curves


def test_two_samples_give_a_line():
    f = fit_cost_curve([(0, 1), (10, 21)])
    assert f(5) == 11 and f(Fraction(1, 2)) == 2


def test_linear_samples_are_reproduced():
    f = fit_cost_curve([(x, 3 * x) for x in range(1, 6)])
    assert f(3) == 9 and f(Fraction(7, 2)) == Fraction(21, 2)


def test_spline_agrees_with_natural_cubic_spline():
    xs = [1, 2, 3, 4]
    f = fit_cost_curve([(x, x * x) for x in xs])
    ref = CubicSpline(np.array(xs, float), np.array([x * x for x in xs], float), bc_type="natural")
    for x in np.linspace(1, 4, 31):
        assert float(f(Fraction(repr(float(x))))) == pytest.approx(float(ref(x)), abs=1e-9)
    assert abs(float(f(Fraction(5, 2))) - 6.25) / 6.25 < 0.02
    for x in xs:
        assert f(x) == x * x


def test_spline_rejects_bad_input():
    with pytest.raises(DeploymentError, match="duplicate"):
        fit_cost_curve([(1, 1), (1, 2)])
    with pytest.raises(DeploymentError):
        fit_cost_curve([(1, 1)])
    with pytest.raises(DeploymentError, match="outside"):
        fit_cost_curve([(1, 1), (2, 2)])(3)


def test_negative_interpolant_is_clamped_with_a_warning():
    f = fit_cost_curve([(0, 0), (1, 10), (2, 0), (3, 0), (4, 10)])
    assert f.raw(Fraction(5, 2)) < 0
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        assert f(Fraction(5, 2)) == 0
    assert caught


def test_to_fraction():
    assert to_fraction("3/4") == Fraction(3, 4)
    assert to_fraction(0.1) == Fraction(1, 10)
    with pytest.raises(DeploymentError):
        to_fraction(True)


# documents


ARCH = {
    "nodes": {"n1": 1, "n2": 4},
    "latency": [{"from": "n1", "to": "n2", "affine": {"base": 2, "per_unit": "1/2"}}],
    "mapping": {"p": "n1", "q": "n2"},
}


def test_architecture_round_trip():
    hw, mapping = load_architecture(json.dumps(ARCH))
    assert hw.nodes == {"n1": 1, "n2": 4} and mapping == {"p": "n1", "q": "n2"}
    assert hw.lat("n1", "n2")(4) == 4 and hw.lat("n2", "n2")(4) == 0
    hw2, mapping2 = load_architecture(dump_architecture(hw, mapping))
    assert hw2 == hw and mapping2 == mapping


def test_architecture_with_table_latency():
    doc = dict(ARCH, latency=[{"from": "n1", "to": "n2", "table": [[1, 1], [2, 4], [3, 9]]}])
    hw, _ = load_architecture(json.dumps(doc))
    assert isinstance(hw.latency[("n1", "n2")], TableLatency)
    assert hw.lat("n1", "n2")(2) == 4


def test_architecture_errors_name_the_problem():
    with pytest.raises(DeploymentError, match="role q mapped to unknown node n9"):
        load_architecture(json.dumps(dict(ARCH, mapping={"p": "n1", "q": "n9"})))
    with pytest.raises(DeploymentError, match="nodes"):
        load_architecture(json.dumps({"mapping": {}}))
    with pytest.raises(DeploymentError, match="invalid JSON"):
        load_architecture("{")


def test_bindings_document():
    doc = {
        "sizes": {"n": 4},
        "vars": {"c": "5/2"},
        "send": [{"type": "tau", "affine": {"base": 1, "per_unit": 2}}],
        "recv": [{"type": "tau", "table": [[0, 0], [10, 10]]}],
    }
    bd = load_bindings(json.dumps(doc))
    g = message(p, q, sized("tau", "n"), "c")
    env = global_cost_ext(g)
    assert evaluate(env[p], bd) == 9
    assert evaluate(env[q], bd) == 9 + 4 + Fraction(5, 2)


@pytest.mark.parametrize("name", sorted(CORPUS))
def test_raising_one_latency_never_speeds_anyone_up(name):
    e = CORPUS[name]
    g = unroll(e.protocol, e.unrolls[0])
    hw, mapping = dedicated(g)
    bd = world_for(g, 0).binding()
    base = resource_cost(g, (), hw, mapping, bd)
    for pair in hw.latency:
        slower = HardwareSpec(hw.nodes, {**hw.latency, pair: AffineLatency(Fraction(5))})
        got = resource_cost(g, (), slower, mapping, bd)
        assert all(got[x] >= base[x] for x in base), pair
