import pytest
from hypothesis import given, settings, strategies as st

from feps.generate import random_topology, ring_topology
from feps.notvia import (
    NotViaAddress,
    UnprotectedFailure,
    next_next_hop,
    notvia_addresses,
    notvia_fib_counts,
    notvia_recovery_path,
    path_avoids,
    recovery_failures,
)
from feps.topology import FailureSpec, Topology


def test_next_next_hop(t2, t4):
    assert next_next_hop(t2, 1, 3) == 3
    assert next_next_hop(t4, 1, 6) == 3
    assert next_next_hop(t2, 1, 2) == 2
    with pytest.raises(ValueError):
        next_next_hop(t2, 1, 1)


def test_recovery_t2_router(t2):
    p = notvia_recovery_path(t2, 1, 3, FailureSpec.router(2))
    assert p.routers == (1, 4, 5, 3) and p.cost == 12


def test_recovery_t4_elongation(t4):
    p = notvia_recovery_path(t4, 1, 6, FailureSpec.router(2))
    assert p.routers == (1, 4, 5, 6, 3, 6)
    assert len(p) == 6
    assert notvia_recovery_path(t4, 1, 6, FailureSpec.router(2), count_distinct=True).routers == (1, 4, 5, 6, 3)


def test_recovery_adjacent_link(t2):
    p = notvia_recovery_path(t2, 1, 2, FailureSpec.link(1, 2))
    assert p.routers == (1, 4, 5, 3, 2)


def test_recovery_unprotected(t1):
    with pytest.raises(UnprotectedFailure):
        notvia_recovery_path(t1, 5, 1, FailureSpec.link(3, 5))
    with pytest.raises(UnprotectedFailure):
        notvia_recovery_path(t1, 2, 5, FailureSpec.router(3))


def test_addresses_ring():
    t = ring_topology(4)
    assert [len(notvia_addresses(t, r)) for r in t.routers] == [2, 2, 2, 2]
    assert notvia_fib_counts(t, 1) == (6, 3)


def test_addresses_pair():
    t = Topology.build([(1, 2, 1)])
    assert notvia_fib_counts(t, 1) == (1, 1)
    assert notvia_fib_counts(t, 2) == (1, 1)


def test_fib_counts_t1(t1):
    assert notvia_fib_counts(t1, 1) == (8, 4)


def test_srlg_address(t3):
    addrs = notvia_addresses(t3, 1)
    assert NotViaAddress(1, ("srlg", 1)) in addrs
    assert len(addrs) == 4
    # routers 1 and 4 each add the SRLG on top of their links
    assert notvia_fib_counts(t3, 2)[0] == (3 + 1) + 3 + (2 + 1) + 2


def test_recovery_failures(t2):
    assert recovery_failures(t2, 1, 3) == [FailureSpec.link(1, 2), FailureSpec.router(2)]
    assert recovery_failures(t2, 1, 2) == [FailureSpec.link(1, 2)]


@settings(max_examples=40, deadline=None)
@given(st.integers(4, 12), st.integers(0, 100_000), st.integers(0, 2))
def test_detour_avoids_failure(n, seed, groups):
    t = random_topology(n, 3.5, seed=seed, max_cost=4, srlg_groups=groups)
    for sr in t.routers:
        for dr in t.routers:
            if sr == dr:
                continue
            for f in recovery_failures(t, sr, dr):
                try:
                    p = notvia_recovery_path(t, sr, dr, f)
                except UnprotectedFailure:
                    continue
                nnh = next_next_hop(t, sr, dr)
                head = p.routers[: p.routers.index(nnh) + 1]
                assert path_avoids(t, head, f)
                assert p.routers[0] == sr and p.routers[-1] == dr
