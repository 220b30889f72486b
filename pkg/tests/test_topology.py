import pytest
from hypothesis import given, settings, strategies as st

from feps.generate import random_topology, ring_topology
from feps.topology import (
    FailureSpec,
    Topology,
    TopologyError,
    dump_topology,
    load_topology,
    remove_component,
    single_failures,
    validate_protectable,
)


def test_t1_shape(t1):
    assert len(t1.routers) == 5
    assert len(t1.links) == 10
    assert t1.neighbors(3) == (2, 4, 5)


@pytest.mark.parametrize("doc, msg", [
    ("routers 1\nrouter 512\n", "router id exceeds 9-bit range"),
    ("routers 1\nrouter 1\nlink 1 1 cost 1\n", "self loop"),
    ("routers 2\nrouter 1\nrouter 2\nlink 1 2 cost 0\n", "cost < 1"),
    ("routers 2\nrouter 1\nrouter 2\nlink 1 2 cost 1\nlink 2 1 cost 1\n", "duplicate link"),
    ("routers 2\nrouter 1\nlink 1 2 cost 1\n", "dangling endpoint"),
    ("routers 3\nrouter 1\nrouter 2\nlink 1 2 cost 1\n", "header declares 3"),
    ("routers 2\nrouter 1\nrouter 2\nlink 1 2 cost 1\nsrlg 1 1-2\n", "fewer than 2 members"),
    ("routers 3\nrouter 1\nrouter 2\nrouter 3\nlink 1 2 cost 1\n", "not strongly connected"),
    ("routers 2\nrouter 1\nrouter 2\nlink 1 2 cost 1\nbogus\n", "unknown keyword"),
])
def test_parse_errors(doc, msg):
    with pytest.raises(TopologyError, match=msg):
        load_topology(doc)


def test_error_carries_line_number():
    with pytest.raises(TopologyError) as ei:
        load_topology("routers 1\n\nrouter 1\nlink 1 1 cost 1\n")
    assert "4" in str(ei.value)


def test_asymmetric_costs_and_options():
    t = load_topology("routers 2\nrouter 1 loopback 0x0a000001\nrouter 2\n"
                      "link 1 2 cost_ab 3 cost_ba 7 capacity 1e9\nprefix net9 2\n")
    assert t.cost(1, 2) == 3 and t.cost(2, 1) == 7
    assert t.link(1, 2).capacity == 1_000_000_000
    assert dict(t.loopbacks) == {1: 0x0A000001}
    assert ("net9", 2) in t.announced_prefixes()


def test_fail_link(t1):
    g = remove_component(t1, FailureSpec.link(1, 2))
    assert not g.has_link(1, 2) and not g.has_link(2, 1)
    assert len(g.links) == 8


def test_fail_link_expands_srlg(t3):
    g = remove_component(t3, FailureSpec.link(1, 2))
    assert not g.has_link(1, 2) and not g.has_link(1, 4)
    assert g.neighbors(1) == (5,)


def test_fail_router(t1):
    g = remove_component(t1, FailureSpec.router(3))
    assert g.routers == (1, 2, 4, 5)
    assert g.neighbors(5) == ()
    assert {l.uid for l in g.links} == {(1, 2), (1, 4)}


def test_unknown_component(t1):
    with pytest.raises(KeyError):
        remove_component(t1, FailureSpec.link(1, 5))
    with pytest.raises(KeyError):
        remove_component(t1, FailureSpec.srlg(9))


def test_failure_parse_roundtrip():
    for s in ("link 6-8", "router 6", "srlg 2"):
        assert str(FailureSpec.parse(s)) == s
    assert FailureSpec.parse("link 8-6") == FailureSpec.link(6, 8)
    with pytest.raises(ValueError):
        FailureSpec.parse("link 6")


def test_protectability_t1(t1):
    rep = validate_protectable(t1)
    assert rep.of_kind("router") == [(FailureSpec.router(3), 5)]
    # 3-5 is a bridge, so link failures are not clean either
    assert rep.of_kind("link") == [(FailureSpec.link(3, 5), 5)]
    assert not rep.protectable()


def test_protectability_ring():
    assert validate_protectable(ring_topology(4), ["link"]).protectable()


def test_srlg_isolates_router():
    t = Topology.build([(1, 2, 1), (2, 3, 1), (1, 4, 1), (4, 3, 1), (3, 5, 1)], srlgs=[[(1, 2), (1, 4)]])
    rep = validate_protectable(t, ["srlg"])
    assert (FailureSpec.srlg(1), 1) in rep.entries


def test_single_failures_order(t3):
    kinds = [f.kind for f in single_failures(t3)]
    assert kinds == ["link"] * 6 + ["router"] * 5 + ["srlg"]


def test_interfaces_are_dense(t1):
    for r in t1.routers:
        nis = [t1.interface(r, n) for n in t1.neighbors(r)]
        assert nis == list(range(len(nis)))
        assert all(t1.interface_neighbor(r, t1.interface(r, n)) == n for n in t1.neighbors(r))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000), st.booleans())
def test_dump_load_roundtrip(n, seed, asym):
    t = random_topology(n, 3.0, seed=seed, max_cost=9, asymmetric=asym, srlg_groups=1)
    back = load_topology(dump_topology(t))
    assert dump_topology(back) == dump_topology(t)
    assert set(back.links) == set(t.links)


def test_load_is_deterministic(t2):
    text = dump_topology(t2)
    assert load_topology(text) == load_topology(text)
