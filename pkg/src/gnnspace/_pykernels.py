"""Pure-Python/numpy implementations of the compiled kernels (same signatures)."""

from collections import deque

import numpy as np


def segment_sum(values, seg, num_segments):
    out = np.zeros((num_segments, values.shape[1]), dtype=np.float64)
    np.add.at(out, seg, values)
    return out


def segment_max(values, seg, num_segments):
    n, d = values.shape
    out = np.full((num_segments, d), -np.inf)
    np.maximum.at(out, seg, values)
    # first row index attaining the max, per (segment, column)
    hit = values == out[seg]
    rows = np.broadcast_to(np.arange(n)[:, None], (n, d))
    cand = np.where(hit, rows, n)
    arg = np.full((num_segments, d), n, dtype=np.int64)
    np.minimum.at(arg, seg, cand)
    empty = arg == n
    arg[empty] = -1
    out[empty] = 0.0
    return out, arg


def bfs_distance_sum(indptr, indices, n):
    adj = [indices[indptr[v]:indptr[v + 1]].tolist() for v in range(n)]
    total = 0
    pairs = 0
    for src in range(n):
        dist = [-1] * n
        dist[src] = 0
        queue = deque([src])
        while queue:
            v = queue.popleft()
            dv = dist[v] + 1
            for u in adj[v]:
                if dist[u] < 0:
                    dist[u] = dv
                    total += dv
                    pairs += 1
                    queue.append(u)
    return total, pairs


def triangle_counts(indptr, indices, n):
    neigh = [set(indices[indptr[v]:indptr[v + 1]].tolist()) for v in range(n)]
    tri = np.zeros(n, dtype=np.int64)
    for v in range(n):
        nv = neigh[v]
        for a in nv:
            if a <= v:
                continue
            for b in nv & neigh[a]:
                if b > a:
                    tri[v] += 1
                    tri[a] += 1
                    tri[b] += 1
    return tri


def pair_counts(x, y):
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(len(x), k=1)
    dx = dx[iu]
    dy = dy[iu]
    prod = dx * dy
    conc = int(np.count_nonzero(prod > 0))
    disc = int(np.count_nonzero(prod < 0))
    tx = int(np.count_nonzero((dx == 0) & (dy != 0)))
    ty = int(np.count_nonzero((dy == 0) & (dx != 0)))
    return conc, disc, tx, ty
