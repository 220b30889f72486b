"""Seeded random topologies for property tests, sweeps and benchmarks."""

from __future__ import annotations

import numpy as np

from .topology import DEFAULT_CAPACITY, Topology, undirected


def random_topology(
    n: int,
    avg_degree: float = 3.0,
    seed: int = 0,
    max_cost: int = 1,
    asymmetric: bool = False,
    srlg_groups: int = 0,
    capacity: int = DEFAULT_CAPACITY,
    first_id: int = 1,
) -> Topology:
    """Connected random graph on ``n`` routers with about ``n * avg_degree / 2``
    links: a random spanning tree plus uniformly drawn extra links.

    Costs are uniform in [1, max_cost], per direction when ``asymmetric``.
    ``srlg_groups`` disjoint groups of 2-3 links are drawn from the links.
    """
    if n < 2:
        raise ValueError("need at least two routers")
    rng = np.random.default_rng(seed)
    ids = list(range(first_id, first_id + n))
    order = rng.permutation(n)
    edges: set[tuple[int, int]] = set()
    for i in range(1, n):
        a = ids[order[i]]
        b = ids[order[rng.integers(0, i)]]
        edges.add(undirected(a, b))
    target = min(max(n - 1, round(n * avg_degree / 2)), n * (n - 1) // 2)
    while len(edges) < target:
        a, b = rng.choice(n, size=2, replace=False)
        edges.add(undirected(ids[a], ids[b]))
    out = []
    for a, b in sorted(edges):
        c_ab = int(rng.integers(1, max_cost + 1))
        c_ba = int(rng.integers(1, max_cost + 1)) if asymmetric else c_ab
        out.append((a, b, c_ab, c_ba))
    groups = []
    if srlg_groups:
        pool = [e[:2] for e in out]
        rng.shuffle(pool)
        k = 0
        for _ in range(srlg_groups):
            size = int(rng.integers(2, 4))
            if k + size > len(pool):
                break
            groups.append(pool[k:k + size])
            k += size
    return Topology.build(out, routers=ids, srlgs=groups, capacity=capacity)


def complete_topology(n: int, cost: int = 1) -> Topology:
    return Topology.build([(a, b, cost) for a in range(1, n + 1) for b in range(a + 1, n + 1)])


def ring_topology(n: int, cost: int = 1) -> Topology:
    return Topology.build([(i, i % n + 1, cost) for i in range(1, n + 1)])
