"""Optimizers, learning-rate schedule, metrics, training loop and evaluation protocol."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from gnnspace import autodiff as ad
from gnnspace.errors import ParameterError, TrainingError, UndefinedMetricError
from gnnspace.model import Batch, build_model, count_params, match_hidden_dim, reference_budget
from gnnspace.space import REFERENCE_HIDDEN
from gnnspace.tasks import make_split, message_edges

WEIGHT_DECAY = 5e-4
MOMENTUM = 0.9
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
PROTOCOL_SEEDS = (0, 1, 2)
TRAIN_RATIO = 0.8


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    optimizer: str
    batch_size: int
    epochs: int
    weight_decay: float = WEIGHT_DECAY
    momentum: float = MOMENTUM

    @classmethod
    def from_design(cls, design, epochs=None):
        return cls(design.lr, design.optimizer, design.batch_size,
                   design.epochs if epochs is None else epochs)


@dataclass
class ResultRecord:
    task_id: str
    design_id: str
    split_seed: int
    metric_name: str
    value: float
    final_epoch: int
    param_count: int
    config_hash: str = ""
    status: str = "ok"
    error: str = ""


def cosine_lr(step, total_steps, base_lr):
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise ParameterError(f"need 0 <= step <= total_steps and total_steps >= 1, got {step}/{total_steps}")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


# -- optimizers ---------------------------------------------------------------------

def sgd_step(params, grads, state, lr, momentum=MOMENTUM, weight_decay=WEIGHT_DECAY):
    """Heavy-ball SGD with coupled L2: v <- m*v + (g + wd*w); w <- w - lr*v (in place)."""
    vel = state.setdefault("velocity", [np.zeros_like(p) for p in params])
    for p, g, v in zip(params, grads, vel):
        v *= momentum
        v += g + weight_decay * p
        p -= lr * v
    return params, state


def adam_step(params, grads, state, lr, betas=ADAM_BETAS, eps=ADAM_EPS, weight_decay=WEIGHT_DECAY):
    """Bias-corrected Adam; the L2 term is added to the gradient (in place)."""
    b1, b2 = betas
    m = state.setdefault("m", [np.zeros_like(p) for p in params])
    v = state.setdefault("v", [np.zeros_like(p) for p in params])
    t = state["t"] = state.get("t", 0) + 1
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, mi, vi in zip(params, grads, m, v):
        g = g + weight_decay * p
        mi *= b1
        mi += (1.0 - b1) * g
        vi *= b2
        vi += (1.0 - b2) * g * g
        p -= lr * (mi / c1) / (np.sqrt(vi / c2) + eps)
    return params, state


STEPS = {"sgd": sgd_step, "adam": adam_step}


# -- metrics ---------------------------------------------------------------------------

def accuracy(logits, labels):
    if len(labels) == 0:
        raise UndefinedMetricError("accuracy over an empty set")
    return float(np.mean(np.argmax(logits, axis=1) == labels))


def roc_auc(scores, labels):
    """Mann-Whitney AUC using mid-ranks, so tied scores count one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC AUC needs both positive and negative examples")
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    ranks = np.empty(len(s))
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and s[j + 1] == s[i]:
            j += 1
        ranks[i:j + 1] = 0.5 * (i + j) + 1.0
        i = j + 1
    full = np.empty(len(s))
    full[order] = ranks
    return float((full[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


# -- batching --------------------------------------------------------------------------------

class TaskData:
    """Per-task arrays reused across batches (split-dependent for link tasks)."""

    def __init__(self, task, split):
        self.task = task
        self.split = split
        self.offsets = task.node_offsets
        self.edges = []
        for gi, edges in enumerate(message_edges(task, split)):
            if edges:
                e = np.asarray(edges, dtype=np.int64)
                self.edges.append((np.concatenate([e[:, 0], e[:, 1]]), np.concatenate([e[:, 1], e[:, 0]])))
            else:
                z = np.zeros(0, dtype=np.int64)
                self.edges.append((z, z))
        self.train_mask = np.zeros(task.num_units(), dtype=bool)
        self.train_mask[split.train] = True
        self.val_mask = np.zeros(task.num_units(), dtype=bool)
        self.val_mask[split.val] = True
        if task.level == "link":
            self.pair_graph = task.pairs[:, 0]
        self._cache = {}

    def batch(self, graph_ids):
        key = tuple(graph_ids)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        nodes, src, dst, node_graph = [], [], [], []
        shift = 0
        local = {}
        for b, gi in enumerate(graph_ids):
            lo, hi = self.offsets[gi], self.offsets[gi + 1]
            nodes.append(np.arange(lo, hi))
            s, d = self.edges[gi]
            src.append(s + shift)
            dst.append(d + shift)
            node_graph.append(np.full(hi - lo, b, dtype=np.int64))
            local[gi] = shift
            shift += hi - lo
        nodes = np.concatenate(nodes)
        batch = Batch(self.task.features[nodes], np.concatenate(src), np.concatenate(dst),
                      np.concatenate(node_graph), len(graph_ids))
        units = self._units(graph_ids, nodes, local)
        self._cache[key] = (batch, units)
        return batch, units

    def _units(self, graph_ids, nodes, local):
        """Global unit indices covered by the batch, plus link pair endpoints in batch coordinates."""
        level = self.task.level
        if level == "node":
            return nodes, None
        if level == "graph":
            return np.asarray(graph_ids, dtype=np.int64), None
        idx = np.flatnonzero(np.isin(self.pair_graph, graph_ids))
        p = self.task.pairs[idx]
        shift = np.array([local[g] for g in p[:, 0]], dtype=np.int64)
        return idx, (p[:, 1] + shift, p[:, 2] + shift)


def _link_logits(emb, ends):
    score = ad.sum(ad.multiply(ad.gather(emb, ends[0]), ad.gather(emb, ends[1])), axis=1, keepdims=True)
    return ad.concat([ad.Tensor(np.zeros((score.shape[0], 1))), score])


def _outputs(model, batch, ends, training, rng):
    out = model.forward(batch, training, rng)
    return _link_logits(out, ends) if ends is not None else out


def _batch_units(task, split):
    """Graph indices iterated per epoch: train graphs for graph tasks, every graph otherwise."""
    if task.level == "graph":
        return np.asarray(split.train, dtype=np.int64)
    return np.arange(len(task.graphs))


def train(model, task, split, cfg, seed=0, data=None):
    """Minibatch training over graphs with a cosine-annealed learning rate.

    Returns ``(model, history)`` where history holds the mean training loss of
    each epoch.
    """
    data = data or TaskData(task, split)
    rng = np.random.default_rng(seed)
    params = model.parameters()
    state = {}
    step_fn = STEPS[cfg.optimizer]
    units = _batch_units(task, split)
    per_epoch = max(1, math.ceil(len(units) / cfg.batch_size))
    total = cfg.epochs * per_epoch
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(units)
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            chunk = np.sort(order[start:start + cfg.batch_size])
            batch, (unit_idx, ends) = data.batch(chunk.tolist())
            rows = np.flatnonzero(data.train_mask[unit_idx])
            lr = cosine_lr(step, total, cfg.lr)
            step += 1
            if len(rows) == 0:
                continue
            logits = _outputs(model, batch, ends, True, rng)
            loss = ad.softmax_cross_entropy(logits, task.labels[unit_idx], rows)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
            for p in params:
                p.grad = None
            loss.backward()
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
            step_fn([p.data for p in params], grads, state, lr)
            losses.append(value)
        history.append(float(np.mean(losses)) if losses else float("nan"))
    return model, history


def predict(model, task, split, data=None, batch_size=64):
    """Evaluation-mode outputs for every unit: (unit indices, output rows)."""
    data = data or TaskData(task, split)
    graph_ids = np.arange(len(task.graphs))
    if task.level == "graph":
        graph_ids = np.sort(np.concatenate([split.train, split.val]))
    idx_all, out_all = [], []
    for start in range(0, len(graph_ids), batch_size):
        batch, (unit_idx, ends) = data.batch(graph_ids[start:start + batch_size].tolist())
        out = _outputs(model, batch, ends, False, None)
        idx_all.append(unit_idx)
        out_all.append(out.data)
    return np.concatenate(idx_all), np.concatenate(out_all)


def evaluate(model, task, split, which="val", data=None):
    """Metric on the train or validation units; the model is left untouched."""
    data = data or TaskData(task, split)
    idx, out = predict(model, task, split, data)
    mask = (data.val_mask if which == "val" else data.train_mask)[idx]
    labels = task.labels[idx[mask]]
    out = out[mask]
    if task.metric == "accuracy":
        return accuracy(out, labels)
    if out.shape[1] != 2:
        raise ParameterError("roc_auc needs a binary task")
    return roc_auc(out[:, 1] - out[:, 0], labels)


def derive_seed(*parts):
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def run_protocol(task, design, seeds=PROTOCOL_SEEDS, reference_hidden=REFERENCE_HIDDEN, epochs=None,
                 seed_for=None, config_hash="", on_error="record"):
    """Train a budget-matched model per split seed and report the final-epoch validation metric.

    Returns ``(mean, records)``. The mean is taken over successful seeds (0.0 if
    none succeeded). With ``on_error="record"`` a training failure becomes a
    failed record with value 0; with ``"raise"`` it propagates.
    """
    seed_for = seed_for or (lambda s: derive_seed(task.id, design.id, s))
    budget = reference_budget(task.feature_dim, task.output_dim, reference_hidden)
    hidden = match_hidden_dim(design, task.feature_dim, task.output_dim, budget)
    cfg = TrainConfig.from_design(design, epochs)
    records = []
    for s in seeds:
        split = make_split(task, TRAIN_RATIO, s)
        model = build_model(design, task.feature_dim, task.output_dim, hidden, _model_level(task),
                            seed=seed_for(s))
        rec = ResultRecord(task.id, design.id, int(s), task.metric, 0.0, cfg.epochs,
                           count_params(model), config_hash)
        try:
            data = TaskData(task, split)
            with np.errstate(over="ignore", invalid="ignore"):
                train(model, task, split, cfg, seed=seed_for(s), data=data)
                rec.value = float(evaluate(model, task, split, "val", data))
            if not np.isfinite(rec.value):
                raise TrainingError("non-finite validation metric", epoch=cfg.epochs)
        except TrainingError as exc:
            if on_error == "raise":
                raise TrainingError(f"seed {s}: {exc}", epoch=exc.epoch) from exc
            rec.value, rec.status, rec.error = 0.0, "failed", str(exc)
        records.append(rec)
    ok = [r.value for r in records if r.status == "ok"]
    return (float(np.mean(ok)) if ok else 0.0), records


def _model_level(task):
    return "graph" if task.level == "graph" else "node"
