"""Hypernetwork representation, incidence semantics and connectivity."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import InvalidArgument


@dataclass(frozen=True, eq=False)
class Hypernetwork:
    """Immutable hypernetwork over dense node ids ``0..num_nodes-1``.

    Hyperedges are stored as sorted tuples; the incidence matrix is derived
    on demand. ``parent_ids`` records, for each node, its id in the network
    this one was derived from by :func:`remove_nodes` (``None`` for a root).
    """

    num_nodes: int
    hyperedges: tuple[tuple[int, ...], ...]
    node_labels: Optional[tuple[str, ...]] = None
    parent_ids: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if self.num_nodes < 0:
            raise InvalidArgument("num_nodes must be non-negative")
        edges = []
        for e in self.hyperedges:
            members = tuple(sorted(set(int(v) for v in e)))
            if not members:
                raise InvalidArgument("hyperedges must be non-empty")
            if len(members) != len(tuple(e)):
                raise InvalidArgument(f"hyperedge {tuple(e)} repeats a node id")
            if members[0] < 0 or members[-1] >= self.num_nodes:
                raise InvalidArgument(f"hyperedge {members} has ids outside [0, {self.num_nodes})")
            edges.append(members)
        object.__setattr__(self, "hyperedges", tuple(edges))
        if self.node_labels is not None:
            labels = tuple(str(x) for x in self.node_labels)
            if len(labels) != self.num_nodes:
                raise InvalidArgument("node_labels must have one entry per node")
            object.__setattr__(self, "node_labels", labels)

    @classmethod
    def _trusted(cls, num_nodes, edges, labels=None, parent_ids=None) -> "Hypernetwork":
        """Construct without validation from already-sorted, in-range hyperedges."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "num_nodes", num_nodes)
        object.__setattr__(obj, "hyperedges", edges)
        object.__setattr__(obj, "node_labels", labels)
        object.__setattr__(obj, "parent_ids", parent_ids)
        return obj

    @classmethod
    def from_edges(cls, edges: Iterable[Iterable[int]], num_nodes: Optional[int] = None) -> "Hypernetwork":
        edges = [tuple(e) for e in edges]
        if num_nodes is None:
            num_nodes = 1 + max((max(e) for e in edges if e), default=-1)
        return cls(num_nodes, tuple(edges))

    @classmethod
    def from_labelled_edges(cls, edges: Iterable[Iterable[object]]) -> "Hypernetwork":
        """Build from hyperedges over arbitrary labels, ids in first-appearance order."""
        index: dict[str, int] = {}
        dense = []
        for e in edges:
            members = []
            for tok in e:
                key = str(tok)
                if key not in index:
                    index[key] = len(index)
                if index[key] not in members:
                    members.append(index[key])
            dense.append(tuple(members))
        return cls(len(index), tuple(dense), tuple(index))

    @property
    def num_edges(self) -> int:
        return len(self.hyperedges)

    def label(self, v: int) -> str:
        return self.node_labels[v] if self.node_labels is not None else str(v)

    def node_id(self, label: object) -> int:
        if self.node_labels is None:
            return int(label)
        try:
            return self.node_labels.index(str(label))
        except ValueError:
            raise InvalidArgument(f"unknown node label {label!r}") from None

    @cached_property
    def edge_sizes(self) -> np.ndarray:
        return np.fromiter((len(e) for e in self.hyperedges), dtype=np.int64, count=self.num_edges)

    @cached_property
    def incidence_edge(self) -> np.ndarray:
        """Hyperedge index of every (node, hyperedge) incidence, grouped by hyperedge."""
        return np.repeat(np.arange(self.num_edges, dtype=np.int64), self.edge_sizes)

    @cached_property
    def incidence_node(self) -> np.ndarray:
        if not self.hyperedges:
            return np.zeros(0, dtype=np.int64)
        return np.fromiter((v for e in self.hyperedges for v in e), dtype=np.int64,
                           count=int(self.edge_sizes.sum()))

    @cached_property
    def edge_ptr(self) -> np.ndarray:
        ptr = np.zeros(self.num_edges + 1, dtype=np.int64)
        np.cumsum(self.edge_sizes, out=ptr[1:])
        return ptr

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """H with H[v, e] = 1 iff v is in e (N x M, float64)."""
        return self.incidence_t.T.tocsr()

    @cached_property
    def incidence_t(self) -> sp.csr_matrix:
        """H transposed (M x N); its data order matches ``incidence_node``."""
        data = np.ones(self.incidence_node.size)
        return sp.csr_matrix((data, self.incidence_node, self.edge_ptr),
                             shape=(self.num_edges, self.num_nodes))

    def __eq__(self, other):
        if not isinstance(other, Hypernetwork):
            return NotImplemented
        return (self.num_nodes == other.num_nodes and self.hyperedges == other.hyperedges
                and self.node_labels == other.node_labels)

    def __hash__(self):
        return hash((self.num_nodes, self.hyperedges))


@dataclass(frozen=True, eq=False)
class SimpleGraph:
    """Undirected simple graph in CSR form (sorted neighbours, no loops)."""

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray

    @classmethod
    def from_edges(cls, num_nodes: int, edges: Iterable[tuple[int, int]]) -> "SimpleGraph":
        pairs = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
        return cls._from_pairs(num_nodes, pairs[:, 0], pairs[:, 1])

    @classmethod
    def _from_pairs(cls, num_nodes, u, w):
        keep = u != w
        u, w = u[keep], w[keep]
        src = np.concatenate([u, w])
        dst = np.concatenate([w, u])
        if src.size:
            key = np.unique(src * num_nodes + dst)
            src, dst = key // num_nodes, key % num_nodes
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(src, minlength=num_nodes), out=indptr[1:])
        return cls(num_nodes, indptr, dst.astype(np.int64))

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    @property
    def adjacency(self) -> list[np.ndarray]:
        return [self.neighbors(v) for v in range(self.num_nodes)]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    @property
    def num_edges(self) -> int:
        return int(self.indices.size // 2)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, int(w)) for u in range(self.num_nodes) for w in self.neighbors(u) if u < w]

    def to_networkx(self):
        import networkx as nx

        g = nx.Graph()
        g.add_nodes_from(range(self.num_nodes))
        g.add_edges_from(self.edges())
        return g


@dataclass(frozen=True)
class ComponentLabel:
    """Component ids for hyperedges and nodes, with per-component sizes.

    Components are numbered in order of first appearance: hyperedges by
    index, then nodes lying in no hyperedge. ``gcc`` is ``None`` when the
    hypernetwork has no hyperedges.
    """

    edge_component: np.ndarray
    node_component: np.ndarray
    edge_count: np.ndarray
    node_count: np.ndarray
    gcc: Optional[int]

    @property
    def gcc_size(self) -> int:
        return 0 if self.gcc is None else int(self.node_count[self.gcc])

    @property
    def gcc_nodes(self) -> np.ndarray:
        if self.gcc is None:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.node_component == self.gcc)

    @property
    def gcc_edges(self) -> np.ndarray:
        if self.gcc is None:
            return np.zeros(0, dtype=np.int64)
        return np.flatnonzero(self.edge_component == self.gcc)


def _check_node(g: Hypernetwork, v: int) -> int:
    if not 0 <= v < g.num_nodes:
        raise InvalidArgument(f"node id {v} outside [0, {g.num_nodes})")
    return int(v)


def hyperdegrees(g: Hypernetwork) -> np.ndarray:
    return np.bincount(g.incidence_node, minlength=g.num_nodes).astype(np.int64)


def hyperdegree(g: Hypernetwork, v: int) -> int:
    """Number of hyperedges containing ``v``."""
    v = _check_node(g, v)
    return sum(1 for e in g.hyperedges if v in e)


def degree(g: Hypernetwork, v: int) -> int:
    """Number of distinct nodes sharing at least one hyperedge with ``v``."""
    v = _check_node(g, v)
    neighbours = set()
    for e in g.hyperedges:
        if v in e:
            neighbours.update(e)
    neighbours.discard(v)
    return len(neighbours)


def degrees(g: Hypernetwork) -> np.ndarray:
    return two_section(g).degrees


def degree_multiplicity(g: Hypernetwork, v: int) -> int:
    """Row sum of H H^T minus the hyperdegree: co-memberships counted with multiplicity."""
    v = _check_node(g, v)
    return sum(len(e) - 1 for e in g.hyperedges if v in e)


def two_section(g: Hypernetwork) -> SimpleGraph:
    """Clique expansion: ``u`` and ``w`` are adjacent iff some hyperedge holds both."""
    us, ws = [], []
    for e in g.hyperedges:
        k = len(e)
        if k < 2:
            continue
        arr = np.asarray(e, dtype=np.int64)
        i, j = np.triu_indices(k, 1)
        us.append(arr[i])
        ws.append(arr[j])
    if us:
        u, w = np.concatenate(us), np.concatenate(ws)
    else:
        u = w = np.zeros(0, dtype=np.int64)
    return SimpleGraph._from_pairs(g.num_nodes, u, w)


def _label_components(n, m, inc_node, inc_edge):
    """Components of the bipartite node/hyperedge graph, numbered by first appearance."""
    # vertices 0..m-1 are hyperedges, m.. are nodes
    adj = sp.csr_matrix((np.ones(inc_edge.size, dtype=np.int8), (inc_edge, inc_node + m)),
                        shape=(m + n, m + n))
    _, raw = connected_components(adj, directed=False)
    uniq, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty_like(order)
    remap[order] = np.arange(order.size)
    label = remap[inverse]
    return label[:m].astype(np.int64), label[m:].astype(np.int64), int(uniq.size)


def _pick_gcc(edge_count, node_count):
    # components are numbered by smallest hyperedge index, so the lowest id wins the final tie
    key = edge_count.astype(np.float64) * (node_count.max() + 1) + node_count
    return int(np.flatnonzero(key == key.max())[0])


def components(g: Hypernetwork) -> ComponentLabel:
    n, m = g.num_nodes, g.num_edges
    if m == 0:
        ids = np.arange(n, dtype=np.int64)
        return ComponentLabel(np.zeros(0, dtype=np.int64), ids, np.zeros(n, dtype=np.int64),
                              np.ones(n, dtype=np.int64), None)
    edge_comp, node_comp, ncomp = _label_components(n, m, g.incidence_node, g.incidence_edge)
    edge_count = np.bincount(edge_comp, minlength=ncomp)
    node_count = np.bincount(node_comp, minlength=ncomp)
    return ComponentLabel(edge_comp, node_comp, edge_count, node_count, _pick_gcc(edge_count, node_count))


def gcc_size_without(g: Hypernetwork, removed: np.ndarray) -> int:
    """GCC node count of ``g`` with the nodes flagged in ``removed`` deleted (ids not remapped)."""
    keep = ~removed[g.incidence_node]
    if not keep.any():
        return 0
    inc_node = g.incidence_node[keep]
    inc_edge = g.incidence_edge[keep]
    live_edges, inc_edge = np.unique(inc_edge, return_inverse=True)
    live_nodes, inc_node = np.unique(inc_node, return_inverse=True)
    m, n = live_edges.size, live_nodes.size
    edge_comp, node_comp, ncomp = _label_components(n, m, inc_node, inc_edge)
    edge_count = np.bincount(edge_comp, minlength=ncomp)
    node_count = np.bincount(node_comp, minlength=ncomp)
    return int(node_count[_pick_gcc(edge_count, node_count)])


def connectivity(g: Hypernetwork) -> float:
    """Fraction of the network's nodes lying in the GCC."""
    if g.num_nodes == 0:
        raise InvalidArgument("connectivity of an empty hypernetwork is undefined")
    return components(g).gcc_size / g.num_nodes


def gcc_size(g: Hypernetwork) -> int:
    return components(g).gcc_size


def remove_nodes(g: Hypernetwork, nodes: Iterable[int]) -> Hypernetwork:
    """Delete ``nodes`` from every hyperedge and from the node set.

    Emptied hyperedges are dropped and survivors are renumbered densely.
    The result's ``parent_ids[new] == old`` and ``old_to_new(result)`` give
    the id correspondence.
    """
    drop = np.zeros(g.num_nodes, dtype=bool)
    for v in nodes:
        drop[_check_node(g, v)] = True
    kept = np.flatnonzero(~drop)
    new_id = np.full(g.num_nodes, -1, dtype=np.int64)
    new_id[kept] = np.arange(kept.size)
    live = ~drop[g.incidence_node]
    members = new_id[g.incidence_node[live]]
    counts = np.bincount(g.incidence_edge[live], minlength=g.num_edges)
    counts = counts[counts > 0]
    # relabelling is monotone, so every hyperedge stays sorted
    edges = tuple(tuple(a.tolist()) for a in np.split(members, np.cumsum(counts)[:-1])) if counts.size else ()
    labels = None
    if g.node_labels is not None:
        labels = tuple(g.node_labels[v] for v in kept)
    out = Hypernetwork._trusted(int(kept.size), edges, labels, kept)
    out.__dict__["incidence_node"] = members
    out.__dict__["edge_sizes"] = counts
    return out


def old_to_new(g: Hypernetwork) -> dict[int, int]:
    if g.parent_ids is None:
        return {v: v for v in range(g.num_nodes)}
    return {int(old): new for new, old in enumerate(g.parent_ids)}


def restrict_to_gcc(g: Hypernetwork) -> Hypernetwork:
    """Sub-hypernetwork induced by the GCC (nodes outside it removed)."""
    comp = components(g)
    keep = set(comp.gcc_nodes.tolist())
    out = remove_nodes(g, [v for v in range(g.num_nodes) if v not in keep])
    return out


def relabel(g: Hypernetwork, perm: Sequence[int], edge_order: Optional[Sequence[int]] = None) -> Hypernetwork:
    """Apply node permutation ``perm`` (old id -> new id) and optional hyperedge reordering."""
    perm = list(perm)
    edges = [g.hyperedges[i] for i in (edge_order if edge_order is not None else range(g.num_edges))]
    return Hypernetwork(g.num_nodes, tuple(tuple(perm[v] for v in e) for e in edges))
