"""Anchor models, rank-correlation task similarity and design transfer between tasks."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from gnnspace import kernels
from gnnspace.errors import ParameterError, UndefinedMetricError
from gnnspace.evaluator import pearson


@dataclass
class PerfMatrix:
    """Protocol-mean metric per (design, task); ``values[i, j]`` is design i on task j."""

    designs: list
    tasks: list
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.designs), len(self.tasks)):
            raise ParameterError(
                f"values shape {self.values.shape} != ({len(self.designs)}, {len(self.tasks)})")

    def column(self, task):
        return self.values[:, self.tasks.index(task)]

    def subset(self, designs):
        rows = [self.designs.index(d) for d in designs]
        return PerfMatrix(list(designs), list(self.tasks), self.values[rows])

    def digest(self):
        h = hashlib.sha256()
        h.update(json.dumps([self.designs, self.tasks]).encode())
        h.update(np.ascontiguousarray(self.values).tobytes())
        return h.hexdigest()

    @classmethod
    def from_rows(cls, rows):
        """Build from ``(task, design, value)`` triples; every cell must be present."""
        tasks = sorted({r[0] for r in rows})
        designs = sorted({r[1] for r in rows})
        values = np.full((len(designs), len(tasks)), np.nan)
        ti = {t: j for j, t in enumerate(tasks)}
        di = {d: i for i, d in enumerate(designs)}
        for t, d, v in rows:
            values[di[d], ti[t]] = float(v)
        if np.isnan(values).any():
            i, j = np.argwhere(np.isnan(values))[0]
            raise ParameterError(f"missing result for design {designs[i]} on task {tasks[j]}")
        return cls(designs, tasks, values)


@dataclass
class SimilarityMatrix:
    tasks: list
    values: np.ndarray
    undefined: np.ndarray

    def get(self, a, b):
        return float(self.values[self.tasks.index(a), self.tasks.index(b)])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task"] + self.tasks)
            for t, row, bad in zip(self.tasks, self.values, self.undefined):
                w.writerow([t] + ["nan" if b else repr(float(v)) for v, b in zip(row, bad)])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        tasks = rows[0][1:]
        vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        return cls(tasks, np.nan_to_num(vals), np.isnan(vals))


def select_anchors(perf, M):
    """Pick ``M`` designs spread over the performance range.

    Designs are ranked by mean metric over tasks (best first, ties by listing
    order), cut into ``M`` contiguous groups whose sizes differ by at most one,
    and the lower-median member of each group is taken.
    """
    D = len(perf.designs)
    if not 2 <= M <= D:
        raise ParameterError(f"need 2 <= M <= D, got M={M}, D={D}")
    mean = perf.values.mean(axis=1)
    order = np.lexsort((np.arange(D), -mean))
    anchors = []
    for group in np.array_split(order, M):
        anchors.append(perf.designs[group[(len(group) - 1) // 2]])
    return anchors


def kendall_tau_b(x, y):
    """Kendall rank correlation with the tau-b tie correction."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        raise ParameterError("kendall_tau_b needs two sequences of equal length >= 2")
    conc, disc, tx, ty = kernels.pair_counts(x, y)
    denom = (conc + disc + tx) * (conc + disc + ty)
    if denom == 0:
        raise UndefinedMetricError("kendall tau-b undefined: an input is constant")
    return (conc - disc) / np.sqrt(denom)


def similarity_matrix(anchor_perf):
    """Pairwise tau-b between task columns; undefined cells are flagged and left at 0."""
    if len(anchor_perf.designs) < 2:
        raise ParameterError("need at least 2 anchor models")
    T = len(anchor_perf.tasks)
    vals = np.eye(T)
    bad = np.zeros((T, T), dtype=bool)
    for i in range(T):
        for j in range(i + 1, T):
            try:
                v = kendall_tau_b(anchor_perf.values[:, i], anchor_perf.values[:, j])
            except UndefinedMetricError:
                v = 0.0
                bad[i, j] = bad[j, i] = True
            vals[i, j] = vals[j, i] = v
    return SimilarityMatrix(list(anchor_perf.tasks), vals, bad)


def transfer_rank(design, results):
    """Normalized position of ``design`` among all designs evaluated on a task.

    ``results`` maps design id -> metric. Position is the min-rank (ties share
    the better place); 1.0 means best, 0.0 worst.
    """
    if design not in results:
        raise ParameterError(f"design {design} has no result on the target task")
    vals = np.asarray(list(results.values()), dtype=np.float64)
    N = len(vals)
    if N < 2:
        raise ParameterError("transfer rank needs at least 2 designs")
    position = 1 + int(np.count_nonzero(vals > results[design]))
    return 1.0 - (position - 1) / (N - 1)


def best_designs(perf):
    """Best design per task (first listed on ties)."""
    return {t: perf.designs[int(np.argmax(perf.values[:, j]))] for j, t in enumerate(perf.tasks)}


def transfer_matrix(perf):
    """``out[i, j]`` = normalized rank on task j of the best design of task i."""
    best = best_designs(perf)
    T = len(perf.tasks)
    out = np.ones((T, T))
    cols = {t: dict(zip(perf.designs, perf.values[:, j])) for j, t in enumerate(perf.tasks)}
    for i, ti in enumerate(perf.tasks):
        for j, tj in enumerate(perf.tasks):
            out[i, j] = transfer_rank(best[ti], cols[tj])
    return out


def transfer_correlation(sim, transfer):
    """Pearson r between similarity and transfer rank over ordered pairs i != j."""
    s = np.asarray(sim.values if isinstance(sim, SimilarityMatrix) else sim, dtype=np.float64)
    t = np.asarray(transfer, dtype=np.float64)
    if s.shape != t.shape or s.shape[0] != s.shape[1]:
        raise ParameterError(f"matrix shapes differ: {s.shape} vs {t.shape}")
    off = ~np.eye(s.shape[0], dtype=bool)
    return pearson(s[off], t[off])


def write_anchors(path, anchors, perf):
    with open(path, "w") as fh:
        json.dump({"anchors": list(anchors), "source_perf_hash": perf.digest(),
                   "num_candidates": len(perf.designs)}, fh, indent=2)


def read_anchors(path):
    with open(path) as fh:
        return json.load(fh)["anchors"]
