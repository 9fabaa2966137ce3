"""Immutable simple undirected graphs plus orderings, encodings, and sequences.

Adjacency is stored as one Python int bitmask per node, which keeps neighbour
tests, induced subgraphs, and connectivity checks cheap at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import InputError

Ordering = tuple[int, ...]


def bit_indices(mask: int) -> list[int]:
    """Indices of set bits, ascending."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes 0..n-1; ``adj[i]`` is a neighbour bitmask."""

    n: int
    adj: tuple[int, ...]

    def __post_init__(self):
        if self.n <= 0:
            raise InputError("graph must have at least one node")
        if len(self.adj) != self.n:
            raise InputError("adjacency row count must equal node count")
        full = (1 << self.n) - 1
        for i, row in enumerate(self.adj):
            if row & ~full:
                raise InputError(f"adjacency row {i} references nodes outside 0..{self.n - 1}")
            if row >> i & 1:
                raise InputError(f"self-loop at node {i}")
        for i in range(self.n):
            for j in bit_indices(self.adj[i]):
                if j > i and not self.adj[j] >> i & 1:
                    raise InputError(f"asymmetric adjacency between {i} and {j}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        rows = [0] * max(n, 1)
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise InputError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise InputError(f"self-loop at node {u}")
            rows[u] |= 1 << v
            rows[v] |= 1 << u
        return cls(n, tuple(rows))

    def has_edge(self, u: int, v: int) -> bool:
        return bool(self.adj[u] >> v & 1)

    def neighbors(self, u: int) -> list[int]:
        return bit_indices(self.adj[u])

    def degree(self, u: int) -> int:
        return self.adj[u].bit_count()

    def edges(self) -> list[tuple[int, int]]:
        """Edges as (u, v) pairs with u < v, lexicographically sorted."""
        high = [(u, v) for u in range(self.n) for v in bit_indices(self.adj[u]) if v > u]
        return high

    @property
    def edge_count(self) -> int:
        return sum(row.bit_count() for row in self.adj) // 2


def degree_sequence(g: Graph) -> tuple[int, ...]:
    """Sorted (ascending) multiset of node degrees."""
    return tuple(sorted(g.degree(u) for u in range(g.n)))


def adjacency_matrix(g: Graph) -> np.ndarray:
    """Dense symmetric 0/1 adjacency matrix, float64."""
    a = np.zeros((g.n, g.n))
    for u in range(g.n):
        for v in bit_indices(g.adj[u]):
            a[u, v] = 1.0
    return a


def is_connected(g: Graph) -> bool:
    seen = 1
    frontier = 1
    while frontier:
        nxt = 0
        for u in bit_indices(frontier):
            nxt |= g.adj[u]
        frontier = nxt & ~seen
        seen |= frontier
    return seen == (1 << g.n) - 1


def validate_ordering(g: Graph, order: Sequence[int]) -> Ordering:
    pi = tuple(int(v) for v in order)
    if len(pi) != g.n or sorted(pi) != list(range(g.n)):
        raise InputError(f"ordering must be a permutation of 0..{g.n - 1}")
    return pi


def induced_subgraph(g: Graph, nodes: Sequence[int]) -> Graph:
    """Subgraph on ``nodes``; node i of the result is ``nodes[i]``."""
    sel = list(nodes)
    if len(set(sel)) != len(sel):
        raise InputError("induced subgraph nodes must be distinct")
    for u in sel:
        if not 0 <= u < g.n:
            raise InputError(f"node {u} out of range")
    k = len(sel)
    rows = [0] * k
    for i in range(k):
        for j in range(i + 1, k):
            if g.adj[sel[i]] >> sel[j] & 1:
                rows[i] |= 1 << j
                rows[j] |= 1 << i
    return Graph(k, tuple(rows))


@dataclass(frozen=True)
class LowerTriangularEncoding:
    """Strictly lower-triangular adjacency bits of an ordered graph.

    ``rows[k]`` has k+1 binary entries and describes the node at position k+1:
    entry j is 1 iff it is adjacent to the node at position j.  A single-node
    graph has no rows.
    """

    n: int
    rows: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.n <= 0:
            raise InputError("encoding must cover at least one node")
        if len(self.rows) != self.n - 1:
            raise InputError("encoding must have n - 1 rows")
        for k, row in enumerate(self.rows):
            if len(row) != k + 1:
                raise InputError(f"row {k} must have {k + 1} entries, got {len(row)}")
            if any(b not in (0, 1) for b in row):
                raise InputError(f"row {k} entries must be 0 or 1")


def encode_adjacency(g: Graph, order: Sequence[int]) -> LowerTriangularEncoding:
    """Lower-triangular encoding of g with nodes relabeled by ``order``."""
    pi = validate_ordering(g, order)
    rows = tuple(
        tuple(int(g.has_edge(pi[t], pi[j])) for j in range(t))
        for t in range(1, g.n)
    )
    return LowerTriangularEncoding(g.n, rows)


def decode_adjacency(enc: LowerTriangularEncoding) -> Graph:
    edges = [
        (j, k + 1)
        for k, row in enumerate(enc.rows)
        for j, bit in enumerate(row)
        if bit
    ]
    return Graph.from_edges(enc.n, edges)


@dataclass(frozen=True)
class GraphSequence:
    """Prefix graphs of an ordered construction; ``steps[t]`` has t+1 nodes.

    Node labels inside each step are insertion labels: node i of ``steps[t]``
    is the (i+1)-th node added, so each step extends the previous one.
    """

    steps: tuple[Graph, ...]

    def __post_init__(self):
        if not self.steps:
            raise InputError("sequence must contain at least one step")
        for t, step in enumerate(self.steps):
            if step.n != t + 1:
                raise InputError(f"step {t} must have {t + 1} nodes, got {step.n}")
        for t in range(1, len(self.steps)):
            prev, cur = self.steps[t - 1], self.steps[t]
            if any(cur.adj[i] & ((1 << t) - 1) != prev.adj[i] for i in range(t)):
                raise InputError(f"step {t - 1} is not a prefix of step {t}")

    @property
    def n(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> Graph:
        return self.steps[-1]


def ordering_to_sequence(g: Graph, order: Sequence[int]) -> GraphSequence:
    pi = validate_ordering(g, order)
    return GraphSequence(tuple(induced_subgraph(g, pi[:t]) for t in range(1, g.n + 1)))


def _joint_refinement(g1: Graph, g2: Graph) -> tuple[list[int], list[int]]:
    """Stable colors comparable across the two graphs (refined on their union)."""
    n1 = g1.n
    adj = [g1.adj[u] for u in range(n1)] + [g2.adj[u] << n1 for u in range(g2.n)]
    colors = [0] * (n1 + g2.n)
    while True:
        sigs = [
            (colors[u], tuple(sorted(colors[v] for v in bit_indices(adj[u]))))
            for u in range(len(adj))
        ]
        ids = {s: i for i, s in enumerate(sorted(set(sigs)))}
        new = [ids[s] for s in sigs]
        if len(ids) == len(set(colors)):
            return new[:n1], new[n1:]
        colors = new


def isomorphic(g1: Graph, g2: Graph) -> bool:
    """Exact isomorphism test: refinement-based pruning plus backtracking."""
    if g1.n != g2.n:
        return False
    if degree_sequence(g1) != degree_sequence(g2):
        return False
    c1, c2 = _joint_refinement(g1, g2)
    if sorted(c1) != sorted(c2):
        return False
    n = g1.n
    targets: dict[int, list[int]] = {}
    for v in range(n):
        targets.setdefault(c2[v], []).append(v)
    mapping = [-1] * n

    def extend(i: int, used: int) -> bool:
        if i == n:
            return True
        for j in targets.get(c1[i], ()):
            if used >> j & 1:
                continue
            if all((g1.adj[i] >> k & 1) == (g2.adj[j] >> mapping[k] & 1) for k in range(i)):
                mapping[i] = j
                if extend(i + 1, used | 1 << j):
                    return True
        mapping[i] = -1
        return False

    return extend(0, 0)


def all_graphs(n: int) -> Iterator[Graph]:
    """Every labeled simple graph on n nodes (2^C(n,2) of them)."""
    pairs = list(combinations(range(n), 2))
    for bits in range(1 << len(pairs)):
        yield Graph.from_edges(n, [pairs[i] for i in range(len(pairs)) if bits >> i & 1])
