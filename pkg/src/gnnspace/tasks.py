"""Synthetic task generation, splits, link-prediction tasks and task files."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from gnnspace.errors import ParameterError, PartialFillError, TaskConstructionError, TaskFormatError
from gnnspace.graph import (
    Graph,
    avg_path_length,
    generate_scale_free,
    generate_small_world,
    is_connected,
    node_clustering,
    pagerank,
)

FAMILIES = ("small_world", "scale_free")
DATASET_NAMES = {"small_world": "smallworld", "scale_free": "scalefree"}
FEATURE_KINDS = ("const", "onehot", "clustering", "pagerank")
NODE_LABEL_KINDS = ("clustering", "pagerank")
GRAPH_LABEL_KINDS = ("path",)
NUM_LABEL_BINS = 10
LINK_EMBED_DIM = 16

# generator parameter sweep used to hit the (C, L) grid
SMALL_WORLD_K = (2, 4, 6, 8, 10, 12)
SCALE_FREE_M = (1, 2, 3, 4, 5, 6)
NODE_RANGE = (32, 64)


@dataclass
class GraphSet:
    graphs: list
    family: str
    grid_bin: list = field(default_factory=list)

    def __len__(self):
        return len(self.graphs)


@dataclass
class Task:
    """A prediction problem over a list of graphs.

    ``features`` stacks node feature rows for all graphs in order. ``labels``
    holds one class per node (node tasks), per graph (graph tasks) or per
    candidate pair (link tasks, whose pairs live in ``pairs`` as
    ``(graph, u, v)`` rows).
    """

    id: str
    level: str
    graphs: list
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    metric: str
    pairs: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.pairs is not None:
            self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 3)
        self.validate()

    @property
    def node_offsets(self):
        return np.concatenate([[0], np.cumsum([g.n for g in self.graphs])]).astype(np.int64)

    @property
    def num_nodes(self):
        return int(sum(g.n for g in self.graphs))

    @property
    def feature_dim(self):
        return self.features.shape[1]

    @property
    def output_dim(self):
        """Model output width: class logits, or node embedding width for link tasks."""
        return LINK_EMBED_DIM if self.level == "link" else self.num_classes

    def num_units(self):
        if self.level == "node":
            return self.num_nodes
        if self.level == "graph":
            return len(self.graphs)
        return len(self.pairs)

    def validate(self):
        if self.level not in ("node", "graph", "link"):
            raise TaskFormatError(f"unknown level {self.level!r}", "/level")
        if self.metric not in ("accuracy", "roc_auc"):
            raise TaskFormatError(f"unknown metric {self.metric!r}", "/metric")
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise TaskFormatError(
                f"expected {self.num_nodes} feature rows, got {self.features.shape[0]}", "/features")
        expected = {"node": self.num_nodes, "graph": len(self.graphs)}.get(self.level)
        if self.level == "link":
            if self.pairs is None:
                raise TaskFormatError("link task needs candidate pairs", "/pairs")
            expected = len(self.pairs)
        if len(self.labels) != expected:
            raise TaskFormatError(f"expected {expected} labels, got {len(self.labels)}", "/labels")
        bad = np.flatnonzero((self.labels < 0) | (self.labels >= self.num_classes))
        if len(bad):
            raise TaskFormatError(
                f"label {self.labels[bad[0]]} outside [0, {self.num_classes})", f"/labels/{bad[0]}")

    def to_json(self):
        out = {
            "id": self.id,
            "level": self.level,
            "num_classes": int(self.num_classes),
            "metric": self.metric,
            "graphs": [g.to_json() for g in self.graphs],
            "features": self.features.tolist(),
            "labels": self.labels.tolist(),
        }
        if self.pairs is not None:
            out["pairs"] = self.pairs.tolist()
        return out

    def canonical_json(self):
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.canonical_json())


@dataclass(frozen=True)
class Split:
    seed: int
    train: np.ndarray
    val: np.ndarray


# -- grid filling -----------------------------------------------------------

def _bin_index(value, lo, hi, grid):
    """Half-open bins over [lo, hi) with the last bin closed at ``hi``; None if outside."""
    if value < lo or value > hi:
        return None
    return min(int((value - lo) / (hi - lo) * grid), grid - 1)


def _candidate(family, rng):
    n = rng.randint(*NODE_RANGE)
    if family == "small_world":
        k = rng.choice(SMALL_WORLD_K)
        return generate_small_world(n, k, rng.random(), rng)
    m = rng.choice(SCALE_FREE_M)
    return generate_scale_free(n, m, rng.random(), rng)


def fill_statistic_grid(family, c_range=(0.3, 0.6), l_range=(1.8, 3.0), grid=8, per_bin=4,
                        seed=0, budget=200_000):
    """Rejection-sample connected graphs until every (C, L) bin holds ``per_bin`` graphs.

    Candidates are drawn from one seeded stream, so the result depends only on
    the arguments. Raises :class:`PartialFillError` if ``budget`` candidates are
    exhausted first.
    """
    if family not in FAMILIES:
        raise ParameterError(f"unknown graph family {family!r}")
    if grid < 1 or per_bin < 1:
        raise ParameterError("grid and per_bin must be positive")
    rng = random.Random(seed)
    counts = np.zeros((grid, grid), dtype=np.int64)
    graphs, bins = [], []
    needed = grid * grid * per_bin
    for _ in range(budget):
        g = _candidate(family, rng)
        if not is_connected(g):
            continue
        row = _bin_index(float(np.mean(node_clustering(g))), *c_range, grid)
        if row is None:
            continue
        col = _bin_index(avg_path_length(g), *l_range, grid)
        if col is None or counts[row, col] >= per_bin:
            continue
        counts[row, col] += 1
        graphs.append(g)
        bins.append((row, col))
        if len(graphs) == needed:
            break
    gs = GraphSet(graphs, family, bins)
    if len(graphs) < needed:
        unfilled = {(r, c): int(per_bin - counts[r, c])
                    for r in range(grid) for c in range(grid) if counts[r, c] < per_bin}
        raise PartialFillError(
            f"{family}: budget of {budget} candidates exhausted with {len(unfilled)} bins unfilled",
            unfilled=unfilled, graph_set=gs)
    return gs


# -- features and labels ----------------------------------------------------

def build_features(gs, kind):
    graphs = gs.graphs if isinstance(gs, GraphSet) else gs
    if kind == "const":
        return [np.ones((g.n, 1)) for g in graphs]
    if kind == "onehot":
        width = max(g.n for g in graphs)
        return [np.eye(g.n, width) for g in graphs]
    if kind == "clustering":
        return [node_clustering(g)[:, None] for g in graphs]
    if kind == "pagerank":
        return [pagerank(g)[:, None] for g in graphs]
    raise ParameterError(f"unknown feature kind {kind!r}")


def build_labels(values, bins=NUM_LABEL_BINS):
    """Equal-frequency binning into ``bins`` classes.

    Items are ordered by (value, index); position ``r`` of ``N`` maps to class
    ``floor(r * bins / N)``. Equal values then share the class of the first of
    them, so the label stays a function of the value.
    """
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    if n == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(n), values))
    ranked = (np.arange(n) * bins) // n
    sorted_vals = values[order]
    first = np.ones(n, dtype=bool)
    first[1:] = sorted_vals[1:] != sorted_vals[:-1]
    group_start = np.maximum.accumulate(np.where(first, np.arange(n), 0))
    classes = np.empty(n, dtype=np.int64)
    classes[order] = ranked[group_start]
    return classes


def _node_values(gs, kind):
    if kind == "clustering":
        return np.concatenate([node_clustering(g) for g in gs.graphs])
    return np.concatenate([pagerank(g) for g in gs.graphs])


def assemble_synthetic_tasks(sw, sf):
    tasks = []
    for gs in (sw, sf):
        name = DATASET_NAMES[gs.family]
        feats = {k: np.concatenate(build_features(gs, k)) for k in FEATURE_KINDS}
        for label_kind in NODE_LABEL_KINDS:
            labels = build_labels(_node_values(gs, label_kind))
            for fk in FEATURE_KINDS:
                if fk == label_kind:
                    continue
                tasks.append(Task(f"node-{name}-{fk}-{label_kind}", "node", list(gs.graphs),
                                  feats[fk], labels, NUM_LABEL_BINS, "accuracy"))
        path_labels = build_labels([avg_path_length(g) for g in gs.graphs])
        for fk in FEATURE_KINDS:
            tasks.append(Task(f"graph-{name}-{fk}-path", "graph", list(gs.graphs),
                              feats[fk], path_labels, NUM_LABEL_BINS, "accuracy"))
    tasks.sort(key=lambda t: (t.level != "node", t.id))
    return tasks


# -- splits -----------------------------------------------------------------

def _split_units(n, ratio, rng):
    perm = rng.permutation(n)
    k = int(round(ratio * n))
    return np.sort(perm[:k]), np.sort(perm[k:])


def make_split(task, ratio=0.8, seed=0):
    """Seeded random train/val split.

    Node tasks split node indices across all graphs (transductive), graph tasks
    split graph indices. Link tasks split each graph's positive and negative
    pairs separately so validation keeps the 1:1 class balance.
    """
    rng = np.random.default_rng(seed)
    if task.level != "link":
        train, val = _split_units(task.num_units(), ratio, rng)
        return Split(seed, train, val)
    train, val = [], []
    for gi in range(len(task.graphs)):
        for lab in (1, 0):
            idx = np.flatnonzero((task.pairs[:, 0] == gi) & (task.labels == lab))
            tr, va = _split_units(len(idx), ratio, rng)
            train.append(idx[tr])
            val.append(idx[va])
    return Split(seed, np.sort(np.concatenate(train)), np.sort(np.concatenate(val)))


def message_edges(task, split):
    """Per-graph edge tuples usable for message passing (validation positives removed)."""
    if task.level != "link":
        return [g.edges for g in task.graphs]
    hidden = {(int(g), int(min(u, v)), int(max(u, v)))
              for g, u, v in task.pairs[split.val][task.labels[split.val] == 1]}
    return [tuple(e for e in g.edges if (gi, *e) not in hidden) for gi, g in enumerate(task.graphs)]


# -- link prediction ----------------------------------------------------------

def build_link_task(gs, holdout=0.2, seed=0, features="const"):
    """Link prediction over every graph of ``gs``.

    Each graph contributes all its edges as positive pairs and an equal number
    of uniformly sampled non-edges as negatives. Pass ``ratio=1 - holdout`` to
    :func:`make_split` to hold out that fraction of each graph's pairs.
    """
    if not 0.0 < holdout < 1.0:
        raise ParameterError(f"holdout must be in (0, 1), got {holdout}")
    rng = np.random.default_rng(seed)
    graphs = gs.graphs if isinstance(gs, GraphSet) else list(gs)
    pairs, labels = [], []
    for gi, g in enumerate(graphs):
        n_non = g.n * (g.n - 1) // 2 - g.num_edges
        if g.num_edges < 5:
            raise TaskConstructionError(f"graph {gi} has {g.num_edges} edges, need at least 5")
        if n_non < g.num_edges:
            raise TaskConstructionError(f"graph {gi} has too few non-edges for 1:1 negatives")
        edge_set = set(g.edges)
        non = [(u, v) for u in range(g.n) for v in range(u + 1, g.n) if (u, v) not in edge_set]
        pick = rng.choice(len(non), size=g.num_edges, replace=False)
        for u, v in g.edges:
            pairs.append((gi, u, v))
            labels.append(1)
        for i in np.sort(pick):
            pairs.append((gi, *non[i]))
            labels.append(0)
    name = DATASET_NAMES.get(getattr(gs, "family", ""), "custom")
    feats = np.concatenate(build_features(graphs, features))
    return Task(f"linkpred-{name}-N/A-N/A", "link", graphs, feats, labels, 2, "roc_auc",
                pairs=np.asarray(pairs))


# -- external task files ------------------------------------------------------

TASK_SCHEMA = {
    "type": "object",
    "required": ["id", "level", "num_classes", "metric", "graphs", "features", "labels"],
    "properties": {
        "id": {"type": "string"},
        "level": {"enum": ["node", "graph", "link"]},
        "num_classes": {"type": "integer", "minimum": 1},
        "metric": {"enum": ["accuracy", "roc_auc"]},
        "graphs": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["n", "edges"],
                "properties": {
                    "n": {"type": "integer", "minimum": 1},
                    "edges": {"type": "array", "items": {
                        "type": "array", "minItems": 2, "maxItems": 2,
                        "items": {"type": "integer", "minimum": 0}}},
                },
            },
        },
        "features": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "labels": {"type": "array", "items": {"type": "integer"}},
        "pairs": {"type": "array", "items": {
            "type": "array", "minItems": 3, "maxItems": 3,
            "items": {"type": "integer", "minimum": 0}}},
    },
}


def _pointer(path):
    return "".join(f"/{p}" for p in path)


def parse_task(obj):
    try:
        jsonschema.validate(obj, TASK_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise TaskFormatError(exc.message, _pointer(exc.absolute_path)) from None
    graphs = []
    for gi, gobj in enumerate(obj["graphs"]):
        try:
            graphs.append(Graph.from_json(gobj))
        except ParameterError as exc:
            raise TaskFormatError(str(exc), f"/graphs/{gi}/edges") from None
    feats = obj["features"]
    if feats:
        width = len(feats[0])
        for i, row in enumerate(feats):
            if len(row) != width:
                raise TaskFormatError(
                    f"feature width {len(row)} differs from width {width} of node 0", f"/features/{i}")
    n_nodes = sum(g.n for g in graphs)
    if len(feats) != n_nodes:
        raise TaskFormatError(f"expected {n_nodes} feature rows, got {len(feats)}", "/features")
    labels = obj["labels"]
    k = obj["num_classes"]
    for i, lab in enumerate(labels):
        if not 0 <= lab < k:
            unit = {"node": "node", "graph": "graph", "link": "pair"}[obj["level"]]
            raise TaskFormatError(f"{unit} {i} has label {lab} outside [0, {k})", f"/labels/{i}")
    return Task(obj["id"], obj["level"], graphs, np.asarray(feats, dtype=np.float64).reshape(n_nodes, -1),
                labels, k, obj["metric"], pairs=obj.get("pairs"))


def load_external_task(path):
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TaskFormatError(f"invalid JSON: {exc}") from None
    return parse_task(obj)
