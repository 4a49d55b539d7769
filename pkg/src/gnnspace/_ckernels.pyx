# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors gnnspace._pykernels function by function."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def segment_sum(double[:, ::1] values, cnp.int64_t[::1] seg, Py_ssize_t num_segments):
    cdef Py_ssize_t e, j, s
    cdef Py_ssize_t n = values.shape[0], d = values.shape[1]
    out_arr = np.zeros((num_segments, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for e in range(n):
        s = seg[e]
        for j in range(d):
            out[s, j] += values[e, j]
    return out_arr


def segment_max(double[:, ::1] values, cnp.int64_t[::1] seg, Py_ssize_t num_segments):
    """Per-segment column max and the first row index attaining it (-1 for empty segments)."""
    cdef Py_ssize_t e, j, s
    cdef Py_ssize_t n = values.shape[0], d = values.shape[1]
    out_arr = np.zeros((num_segments, d), dtype=np.float64)
    arg_arr = np.full((num_segments, d), -1, dtype=np.int64)
    cdef double[:, ::1] out = out_arr
    cdef cnp.int64_t[:, ::1] arg = arg_arr
    for e in range(n):
        s = seg[e]
        for j in range(d):
            if arg[s, j] < 0 or values[e, j] > out[s, j]:
                out[s, j] = values[e, j]
                arg[s, j] = e
    return out_arr, arg_arr


def bfs_distance_sum(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices, Py_ssize_t n):
    """Sum of shortest-path distances over reachable ordered pairs, and the number of such pairs."""
    cdef Py_ssize_t src, head, tail, v, u, k
    cdef cnp.int64_t total = 0, pairs = 0
    dist_arr = np.empty(n, dtype=np.int64)
    queue_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] dist = dist_arr
    cdef cnp.int64_t[::1] queue = queue_arr
    for src in range(n):
        for v in range(n):
            dist[v] = -1
        dist[src] = 0
        queue[0] = src
        head = 0
        tail = 1
        while head < tail:
            v = queue[head]
            head += 1
            for k in range(indptr[v], indptr[v + 1]):
                u = indices[k]
                if dist[u] < 0:
                    dist[u] = dist[v] + 1
                    total += dist[u]
                    pairs += 1
                    queue[tail] = u
                    tail += 1
    return total, pairs


def triangle_counts(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices, Py_ssize_t n):
    """Triangles through each node; neighbor lists must be sorted."""
    cdef Py_ssize_t v, a, b, i, j, ia, ja, ea, eb
    tri_arr = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] tri = tri_arr
    for v in range(n):
        for i in range(indptr[v], indptr[v + 1]):
            a = indices[i]
            if a <= v:
                continue
            # count common neighbors w > a of v and a
            ia = indptr[v]
            ea = indptr[v + 1]
            ja = indptr[a]
            eb = indptr[a + 1]
            while ia < ea and ja < eb:
                if indices[ia] < indices[ja]:
                    ia += 1
                elif indices[ia] > indices[ja]:
                    ja += 1
                else:
                    b = indices[ia]
                    if b > a:
                        tri[v] += 1
                        tri[a] += 1
                        tri[b] += 1
                    ia += 1
                    ja += 1
    return tri_arr


def pair_counts(double[::1] x, double[::1] y):
    """Concordant, discordant, tied-only-in-x, tied-only-in-y pair counts."""
    cdef Py_ssize_t i, j, n = x.shape[0]
    cdef cnp.int64_t conc = 0, disc = 0, tx = 0, ty = 0
    cdef double dx, dy
    for i in range(n):
        for j in range(i + 1, n):
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx == 0 and dy == 0:
                continue
            elif dx == 0:
                tx += 1
            elif dy == 0:
                ty += 1
            elif (dx > 0) == (dy > 0):
                conc += 1
            else:
                disc += 1
    return conc, disc, tx, ty
