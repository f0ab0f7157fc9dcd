"""Exact shortest-path betweenness and collective influence on simple graphs."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from numba import njit

from .errors import InvalidArgument
from .hypergraph import SimpleGraph


@njit(cache=True)
def _brandes(n, indptr, indices):
    bc = np.zeros(n)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[:] = -1
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head, tail = 0, 1
        while head < tail:
            v = order[head]
            head += 1
            dv = dist[v] + 1
            for p in range(indptr[v], indptr[v + 1]):
                w = indices[p]
                if dist[w] < 0:
                    dist[w] = dv
                    order[tail] = w
                    tail += 1
                if dist[w] == dv:
                    sigma[w] += sigma[v]
        # predecessors of w are the neighbours one level closer to s
        for i in range(tail - 1, 0, -1):
            w = order[i]
            coeff = (1.0 + delta[w]) / sigma[w]
            dw = dist[w] - 1
            for p in range(indptr[w], indptr[w + 1]):
                v = indices[p]
                if dist[v] == dw:
                    delta[v] += sigma[v] * coeff
            bc[w] += delta[w]
    return bc


def betweenness(g: SimpleGraph) -> np.ndarray:
    """Unnormalised betweenness; unordered pairs counted once, endpoints excluded."""
    if g.num_nodes == 0:
        return np.zeros(0)
    return _brandes(g.num_nodes, g.indptr, g.indices) / 2.0


def hop_sets(g: SimpleGraph, k: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Boolean matrices of nodes at distance exactly ``k`` and at distance 1..k."""
    n = g.num_nodes
    adj = sp.csr_matrix((np.ones(g.indices.size, dtype=np.int8), g.indices, g.indptr), shape=(n, n))
    reached = sp.identity(n, dtype=bool, format="csr")
    frontier = reached
    for _ in range(k):
        nxt = (frontier.astype(np.int64) @ adj) > 0
        nxt = (nxt.astype(np.int8) - nxt.multiply(reached).astype(np.int8)) > 0
        reached = reached + nxt
        frontier = nxt.tocsr()
    ball = (reached.astype(np.int8) - sp.identity(n, dtype=np.int8, format="csr")) > 0
    return frontier, ball.tocsr()


def collective_influence(g: SimpleGraph, k: int = 2, ball: bool = False) -> np.ndarray:
    """(deg(v) - 1) times the summed degree surplus over v's k-hop set.

    The k-hop set is the frontier at distance exactly ``k``; with
    ``ball=True`` it is every node at distance 1..k instead.
    """
    if k < 1:
        raise InvalidArgument("hop radius k must be >= 1")
    if g.num_nodes == 0:
        return np.zeros(0)
    surplus = g.degrees.astype(np.float64) - 1.0
    exact, within = hop_sets(g, k)
    hops = within if ball else exact
    ci = surplus * (hops.astype(np.float64) @ surplus)
    ci[surplus <= 0] = 0.0
    return ci
