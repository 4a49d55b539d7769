"""Undirected simple graphs, random generators and structural statistics."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from gnnspace import kernels
from gnnspace.errors import ConvergenceError, DomainError, ParameterError


@dataclass(frozen=True)
class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    ``edges`` is stored canonically: each pair as ``(u, v)`` with ``u < v``,
    sorted lexicographically.
    """

    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"graph needs at least one node, got n={self.n}")
        canon = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise ParameterError(f"self-loop on node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise ParameterError(f"edge ({u}, {v}) out of range for n={self.n}")
            pair = (u, v) if u < v else (v, u)
            if pair in canon:
                raise ParameterError(f"duplicate edge {pair}")
            canon.add(pair)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @classmethod
    def from_edges(cls, n, edges):
        """Build from any iterable of pairs, silently dropping duplicates."""
        canon = {(min(u, v), max(u, v)) for u, v in edges}
        return cls(n, tuple(canon))

    @property
    def num_edges(self):
        return len(self.edges)

    @cached_property
    def csr(self):
        """(indptr, indices) with per-node sorted neighbor lists."""
        deg = np.zeros(self.n + 1, dtype=np.int64)
        if self.edges:
            e = np.asarray(self.edges, dtype=np.int64)
            src = np.concatenate([e[:, 0], e[:, 1]])
            dst = np.concatenate([e[:, 1], e[:, 0]])
            order = np.lexsort((dst, src))
            src, dst = src[order], dst[order]
            np.add.at(deg, src + 1, 1)
        else:
            dst = np.zeros(0, dtype=np.int64)
        return np.cumsum(deg), dst

    @cached_property
    def directed_edges(self):
        """(src, dst) arrays listing both orientations of every edge."""
        if not self.edges:
            z = np.zeros(0, dtype=np.int64)
            return z, z
        e = np.asarray(self.edges, dtype=np.int64)
        return (np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]]))

    def neighbors(self, v):
        indptr, indices = self.csr
        return indices[indptr[v]:indptr[v + 1]].tolist()

    def degrees(self):
        indptr, _ = self.csr
        return np.diff(indptr)

    def adjacency(self):
        return [self.neighbors(v) for v in range(self.n)]

    def to_json(self):
        return {"n": self.n, "edges": [list(e) for e in self.edges]}

    def canonical_json(self):
        return json.dumps(self.to_json(), separators=(",", ":"), sort_keys=True)

    @classmethod
    def from_json(cls, obj):
        return cls(int(obj["n"]), tuple(tuple(e) for e in obj["edges"]))


@dataclass(frozen=True)
class GraphStats:
    avg_clustering: float
    avg_path_length: float | None
    node_clustering: np.ndarray
    pagerank: np.ndarray


# -- generators -------------------------------------------------------------

def _rng(seed):
    return seed if isinstance(seed, random.Random) else random.Random(seed)


def generate_small_world(n, k, p, seed=None):
    """Watts-Strogatz graph: ring lattice of degree ``k`` with each edge rewired w.p. ``p``.

    Rewiring keeps the source endpoint and picks a new target uniformly among
    nodes that are neither the source nor already adjacent to it, so the edge
    count stays ``n*k/2``.
    """
    if k < 2 or k % 2 or n <= k:
        raise ParameterError(f"small-world needs even k >= 2 and n > k, got n={n}, k={k}")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"rewiring probability must be in [0, 1], got {p}")
    rng = _rng(seed)
    adj = [set() for _ in range(n)]
    for u in range(n):
        for j in range(1, k // 2 + 1):
            w = (u + j) % n
            adj[u].add(w)
            adj[w].add(u)
    for j in range(1, k // 2 + 1):
        for u in range(n):
            v = (u + j) % n
            if rng.random() < p:
                if len(adj[u]) >= n - 1:
                    continue
                w = rng.randrange(n)
                while w == u or w in adj[u]:
                    w = rng.randrange(n)
                adj[u].discard(v)
                adj[v].discard(u)
                adj[u].add(w)
                adj[w].add(u)
    edges = [(u, w) for u in range(n) for w in adj[u] if u < w]
    return Graph(n, tuple(edges))


def generate_scale_free(n, m, p_triad, seed=None):
    """Holme-Kim powerlaw-cluster graph.

    Growth starts from a complete graph on ``m`` nodes; every new node adds
    ``m`` edges, the first by preferential attachment and each further one
    either closing a triangle (w.p. ``p_triad``) or by preferential attachment.
    """
    if not 1 <= m < n:
        raise ParameterError(f"scale-free needs 1 <= m < n, got n={n}, m={m}")
    if not 0.0 <= p_triad <= 1.0:
        raise ParameterError(f"triad probability must be in [0, 1], got {p_triad}")
    rng = _rng(seed)
    adj = [set() for _ in range(n)]
    repeated = []  # node multiset weighted by degree (seed nodes enter once)
    for u in range(m):
        for v in range(u + 1, m):
            adj[u].add(v)
            adj[v].add(u)
        repeated.append(u)
    for source in range(m, n):
        # the seed is a clique, so the first newcomer takes every seed node
        if source == m:
            targets = list(range(m))
        else:
            targets = []
            chosen = set()
            target = rng.choice(repeated)
            targets.append(target)
            chosen.add(target)
            while len(targets) < m:
                if rng.random() < p_triad:
                    cands = [w for w in sorted(adj[target]) if w not in chosen]
                    if cands:
                        nbr = rng.choice(cands)
                        targets.append(nbr)
                        chosen.add(nbr)
                        continue
                target = rng.choice(repeated)
                while target in chosen:
                    target = rng.choice(repeated)
                targets.append(target)
                chosen.add(target)
        for t in targets:
            adj[source].add(t)
            adj[t].add(source)
        repeated.extend(targets)
        repeated.extend([source] * m)
    edges = [(u, w) for u in range(n) for w in adj[u] if u < w]
    return Graph(n, tuple(edges))


# -- statistics -------------------------------------------------------------

def node_clustering(g):
    indptr, indices = g.csr
    tri = kernels.triangle_counts(indptr, indices, g.n).astype(np.float64)
    deg = np.diff(indptr).astype(np.float64)
    out = np.zeros(g.n)
    ok = deg >= 2
    out[ok] = 2.0 * tri[ok] / (deg[ok] * (deg[ok] - 1.0))
    return out


def avg_clustering(g):
    return float(np.mean(node_clustering(g)))


def pagerank(g, damping=0.85, tol=1e-9, max_iter=200):
    """Power iteration with uniform teleport; dangling mass is spread uniformly."""
    n = g.n
    if n == 1:
        return np.ones(1)
    src, dst = g.directed_edges
    deg = g.degrees().astype(np.float64)
    dangling = deg == 0
    inv = np.zeros(n)
    inv[~dangling] = 1.0 / deg[~dangling]
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        flow = np.zeros(n)
        np.add.at(flow, dst, x[src] * inv[src])
        new = damping * (flow + x[dangling].sum() / n) + (1.0 - damping) / n
        new /= new.sum()
        change = np.abs(new - x).sum()
        x = new
        if change < tol:
            return x
    raise ConvergenceError(f"pagerank did not converge in {max_iter} iterations", last=x)


def is_connected(g):
    if g.n == 1:
        return True
    seen = np.zeros(g.n, dtype=bool)
    seen[0] = True
    stack = [0]
    adj = g.adjacency()
    while stack:
        v = stack.pop()
        for u in adj[v]:
            if not seen[u]:
                seen[u] = True
                stack.append(u)
    return bool(seen.all())


def avg_path_length(g):
    """Mean shortest-path distance over ordered pairs of distinct nodes."""
    if g.n == 1:
        raise DomainError("average path length needs at least two nodes")
    indptr, indices = g.csr
    total, pairs = kernels.bfs_distance_sum(indptr, indices, g.n)
    if pairs != g.n * (g.n - 1):
        raise DomainError("average path length is undefined on a disconnected graph")
    return total / pairs


def graph_stats(g):
    nc = node_clustering(g)
    apl = avg_path_length(g) if g.n > 1 and is_connected(g) else None
    return GraphStats(float(nc.mean()), apl, nc, pagerank(g))
