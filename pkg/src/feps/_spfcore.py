"""Dense shortest-path kernels over an int64 cost matrix (0 = no link).

Two interchangeable implementations per kernel: ``*_loop`` (scalar loops,
compiled by numba) and ``*_numpy`` (vectorized).  The module-level names
``dijkstra``, ``lex_tree`` and ``all_pairs`` point at the selected backend.
"""

import numpy as np

from ._jit import USE_NUMBA, jit_always

INF = np.int64(1) << 60


def _dijkstra_loop(cost, src):
    n = cost.shape[0]
    dist = np.full(n, INF, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    dist[src] = 0
    for _ in range(n):
        u = -1
        best = INF
        for v in range(n):
            if not done[v] and dist[v] < best:
                best = dist[v]
                u = v
        if u < 0:
            break
        done[u] = True
        for v in range(n):
            c = cost[u, v]
            if c > 0 and not done[v]:
                nd = best + c
                if nd < dist[v]:
                    dist[v] = nd
    return dist


def _lex_tree_loop(cost, dist, src):
    """Predecessor array of the lexicographically smallest shortest paths.

    Nodes are finalized in distance order; a node's path is the smallest
    (by index sequence) among ``path(u) + [v]`` over tight predecessors u.
    """
    n = cost.shape[0]
    pred = np.full(n, -1, dtype=np.int64)
    paths = np.full((n, n), -1, dtype=np.int64)
    plen = np.zeros(n, dtype=np.int64)
    paths[src, 0] = src
    plen[src] = 1
    order = np.argsort(dist, kind="mergesort")
    for oi in range(n):
        v = order[oi]
        if v == src or dist[v] >= INF:
            continue
        best = -1
        for u in range(n):
            c = cost[u, v]
            if c <= 0 or dist[u] >= INF or dist[u] + c != dist[v]:
                continue
            if best < 0:
                best = u
                continue
            # compare path(u) + [v] with path(best) + [v]
            m = min(plen[u], plen[best]) + 1
            smaller = False
            for i in range(m):
                a = paths[u, i] if i < plen[u] else v
                b = paths[best, i] if i < plen[best] else v
                if a != b:
                    smaller = a < b
                    break
            if smaller:
                best = u
        pred[v] = best
        for i in range(plen[best]):
            paths[v, i] = paths[best, i]
        paths[v, plen[best]] = v
        plen[v] = plen[best] + 1
    return pred


def _all_pairs_loop(cost):
    """Distance matrix and lexicographic next-hop matrix (-1: none/self)."""
    n = cost.shape[0]
    dist = np.empty((n, n), dtype=np.int64)
    for s in range(n):
        dist[s] = _dijkstra_loop_j(cost, s)
    nh = np.full((n, n), -1, dtype=np.int64)
    for x in range(n):
        for d in range(n):
            if d == x or dist[x, d] >= INF:
                continue
            for y in range(n):
                c = cost[x, y]
                if c > 0 and dist[y, d] < INF and c + dist[y, d] == dist[x, d]:
                    nh[x, d] = y
                    break
    return dist, nh


def _dijkstra_numpy(cost, src):
    n = cost.shape[0]
    dist = np.full(n, INF, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[src] = 0
    has = cost > 0
    for _ in range(n):
        cand = np.where(done, INF, dist)
        u = int(np.argmin(cand))
        if cand[u] >= INF:
            break
        done[u] = True
        row = has[u] & ~done
        nd = dist[u] + cost[u]
        upd = row & (nd < dist)
        dist[upd] = nd[upd]
    return dist


def _lex_tree_numpy(cost, dist, src):
    n = cost.shape[0]
    pred = np.full(n, -1, dtype=np.int64)
    paths: dict[int, tuple] = {src: (src,)}
    reach = dist < INF
    for v in np.argsort(dist, kind="mergesort"):
        v = int(v)
        if v == src or not reach[v]:
            continue
        col = cost[:, v]
        tight = np.nonzero((col > 0) & reach & (dist + col == dist[v]))[0]
        best = min((int(u) for u in tight), key=lambda u: paths[u] + (v,))
        pred[v] = best
        paths[v] = paths[best] + (v,)
    return pred


def _all_pairs_numpy(cost):
    n = cost.shape[0]
    dist = np.stack([_dijkstra_numpy(cost, s) for s in range(n)]) if n else np.zeros((0, 0), np.int64)
    nh = np.full((n, n), -1, dtype=np.int64)
    reach = dist < INF
    for x in range(n):
        pending = reach[x].copy()
        pending[x] = False
        for y in np.nonzero(cost[x] > 0)[0]:
            ok = pending & reach[y] & (cost[x, y] + dist[y] == dist[x])
            nh[x, ok] = y
            pending &= ~ok
    return dist, nh


dijkstra_numba = jit_always(_dijkstra_loop)
_dijkstra_loop_j = dijkstra_numba
lex_tree_numba = jit_always(_lex_tree_loop)
all_pairs_numba = jit_always(_all_pairs_loop)

dijkstra_numpy = _dijkstra_numpy
lex_tree_numpy = _lex_tree_numpy
all_pairs_numpy = _all_pairs_numpy

if USE_NUMBA:
    dijkstra, lex_tree, all_pairs = dijkstra_numba, lex_tree_numba, all_pairs_numba
else:
    dijkstra, lex_tree, all_pairs = dijkstra_numpy, lex_tree_numpy, all_pairs_numpy
