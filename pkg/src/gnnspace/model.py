"""Concrete GNNs built from a Design, parameter counting and budget matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gnnspace import autodiff as ad
from gnnspace.errors import ParameterError
from gnnspace.space import REFERENCE_DESIGN, REFERENCE_HIDDEN

MAX_HIDDEN = 4096
PRELU_INIT = 0.25


@dataclass(frozen=True)
class LayerSpec:
    stage: str  # "pre", "mp" or "post"
    d_in: int
    d_out: int
    bn: bool = False
    dropout: float = 0.0
    act: str | None = None
    attention: str = "none"

    def num_params(self):
        count = self.d_in * self.d_out + self.d_out
        if self.bn:
            count += 2 * self.d_out
        if self.act == "prelu":
            count += 1
        if self.attention == "additive":
            count += 2 * self.d_out
        return count


@dataclass
class Batch:
    """Disjoint union of graphs; messages flow ``src -> dst``."""

    x: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    node_graph: np.ndarray
    num_graphs: int

    @property
    def num_nodes(self):
        return self.x.shape[0]


def mp_output_width(design, hidden):
    if design.connectivity == "skip_cat":
        return hidden * (design.mp + 1)
    return hidden


def layer_specs(design, input_dim, output_dim, hidden):
    """Layer descriptors in execution order.

    Pre-MP layers are Linear+Act. MP layer ``j`` (1-based) reads width
    ``hidden * j`` under skip_cat (all earlier MP inputs concatenated) and
    ``hidden`` otherwise. The MP stage emits ``hidden`` features, or
    ``hidden * (mp + 1)`` under skip_cat. Post-MP hidden layers use the
    activation; the final layer is plain linear.
    """
    if min(input_dim, output_dim, hidden) < 1:
        raise ParameterError("layer widths must be >= 1")
    specs = []
    d = input_dim
    for _ in range(design.pre_mp):
        specs.append(LayerSpec("pre", d, hidden, act=design.act))
        d = hidden
    for j in range(1, design.mp + 1):
        d_in = hidden * j if design.connectivity == "skip_cat" else hidden
        specs.append(LayerSpec("mp", d_in, hidden, bn=design.bn, dropout=design.dropout,
                               act=design.act, attention=design.attention))
    d = mp_output_width(design, hidden)
    for _ in range(design.post_mp - 1):
        specs.append(LayerSpec("post", d, hidden, act=design.act))
        d = hidden
    specs.append(LayerSpec("post", d, output_dim))
    return specs


def param_count(design, input_dim, output_dim, hidden):
    """Trainable parameters of ``build_model(design, ...)`` without allocating it."""
    return sum(s.num_params() for s in layer_specs(design, input_dim, output_dim, hidden))


class Layer:
    def __init__(self, spec, rng):
        self.spec = spec
        limit = np.sqrt(6.0 / (spec.d_in + spec.d_out))
        self.weight = ad.Tensor(rng.uniform(-limit, limit, (spec.d_in, spec.d_out)), True, "W")
        self.bias = ad.Tensor(np.zeros(spec.d_out), True, "b")
        self.params = [self.weight, self.bias]
        if spec.bn:
            self.gamma = ad.Tensor(np.ones(spec.d_out), True, "gamma")
            self.beta = ad.Tensor(np.zeros(spec.d_out), True, "beta")
            self.bn_state = ad.BatchNormState(spec.d_out)
            self.params += [self.gamma, self.beta]
        if spec.act == "prelu":
            self.slope = ad.Tensor(np.array([PRELU_INIT]), True, "prelu")
            self.params.append(self.slope)
        if spec.attention == "additive":
            lim = np.sqrt(6.0 / (spec.d_out + 1))
            self.att_src = ad.Tensor(rng.uniform(-lim, lim, (spec.d_out, 1)), True, "att_src")
            self.att_dst = ad.Tensor(rng.uniform(-lim, lim, (spec.d_out, 1)), True, "att_dst")
            self.params += [self.att_src, self.att_dst]

    def linear(self, h):
        return ad.add(ad.matmul(h, self.weight), self.bias)

    def activate(self, z):
        act = self.spec.act
        if act is None:
            return z
        if act == "relu":
            return ad.relu(z)
        if act == "prelu":
            return ad.prelu(z, self.slope)
        if act == "swish":
            return ad.swish(z)
        raise ParameterError(f"unknown activation {act!r}")

    def dense(self, h, training, rng):
        z = self.linear(h)
        return z, self.transform(z, training, rng)

    def transform(self, z, training, rng):
        if self.spec.bn:
            z = ad.batchnorm(z, self.gamma, self.beta, self.bn_state, training)
        z = ad.dropout(z, self.spec.dropout, training, rng)
        return self.activate(z)


def attention_weights(mode, h, src, dst, num_nodes, att_src=None, att_dst=None):
    """Per-edge weights, softmax-normalized over each destination's incoming edges.

    ``additive``: leaky_relu(h_src . a_src + h_dst . a_dst).
    ``multiplicative``: (h_src . h_dst) / sqrt(d).
    Returns an ``(E, 1)`` tensor.
    """
    if mode == "additive":
        logits = ad.leaky_relu(ad.add(ad.gather(ad.matmul(h, att_src), src),
                                      ad.gather(ad.matmul(h, att_dst), dst)))
    elif mode == "multiplicative":
        prod = ad.multiply(ad.gather(h, src), ad.gather(h, dst))
        logits = ad.scale(ad.sum(prod, axis=1, keepdims=True), 1.0 / np.sqrt(h.shape[1]))
    else:
        raise ParameterError(f"attention mode must be 'additive' or 'multiplicative', got {mode!r}")
    return ad.segment_softmax(logits, dst, num_nodes)


class Model:
    """A GNN: pre-MP MLP, message passing with the design's connectivity, post-MP MLP."""

    def __init__(self, design, input_dim, output_dim, hidden_dim, level="node", seed=0):
        self.design = design
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden_dim = hidden_dim
        self.level = level
        self.specs = layer_specs(design, input_dim, output_dim, hidden_dim)
        rng = np.random.default_rng(seed)
        self.layers = [Layer(s, rng) for s in self.specs]
        self.pre = [lay for lay in self.layers if lay.spec.stage == "pre"]
        self.mp = [lay for lay in self.layers if lay.spec.stage == "mp"]
        self.post = [lay for lay in self.layers if lay.spec.stage == "post"]

    def parameters(self):
        return [p for lay in self.layers for p in lay.params]

    def message_pass(self, layer, h, batch, training, rng):
        lin, z = layer.dense(h, training, rng)
        msg = ad.gather(z, batch.src)
        if layer.spec.attention != "none":
            w = attention_weights(layer.spec.attention, lin, batch.src, batch.dst, batch.num_nodes,
                                  getattr(layer, "att_src", None), getattr(layer, "att_dst", None))
            msg = ad.multiply(msg, w)
        return ad.segment_aggregate(msg, batch.dst, batch.num_nodes, self.design.agg)

    def embed(self, batch, training=False, rng=None):
        """Node embeddings after the MP stage, L2-normalized per node."""
        h = ad.as_tensor(batch.x)
        for layer in self.pre:
            h = layer.dense(h, training, rng)[1]
        conn = self.design.connectivity
        inputs = [h]
        for layer in self.mp:
            if conn == "skip_cat":
                x = inputs[0] if len(inputs) == 1 else ad.concat(inputs)
                inputs.append(self.message_pass(layer, x, batch, training, rng))
            elif conn == "skip_sum":
                h = ad.add(self.message_pass(layer, h, batch, training, rng), h)
            else:
                h = self.message_pass(layer, h, batch, training, rng)
        if conn == "skip_cat":
            h = ad.concat(inputs)
        return ad.l2_normalize(h)

    def forward(self, batch, training=False, rng=None):
        h = self.embed(batch, training, rng)
        if self.level == "graph":
            h = ad.segment_aggregate(h, batch.node_graph, batch.num_graphs, "mean")
        for layer in self.post:
            h = layer.dense(h, training, rng)[1]
        return h

    __call__ = forward


def build_model(design, input_dim, output_dim, hidden_dim, level="node", seed=0):
    return Model(design, input_dim, output_dim, hidden_dim, level, seed)


def count_params(model):
    return int(sum(p.size for p in model.parameters()))


def reference_budget(input_dim, output_dim, reference_hidden=REFERENCE_HIDDEN):
    """Parameter count of the fixed reference design at ``reference_hidden`` width."""
    return param_count(REFERENCE_DESIGN, input_dim, output_dim, reference_hidden)


def match_hidden_dim(design, input_dim, output_dim, budget=None, reference_hidden=REFERENCE_HIDDEN):
    """Largest hidden width in [1, MAX_HIDDEN] whose parameter count fits ``budget``."""
    if budget is None:
        budget = reference_budget(input_dim, output_dim, reference_hidden)

    def count(d):
        return param_count(design, input_dim, output_dim, d)

    if count(1) > budget:
        raise ParameterError(f"budget {budget} is below the smallest model ({count(1)} params)")
    lo, hi = 1, MAX_HIDDEN
    if count(hi) <= budget:
        return hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) <= budget:
            lo = mid
        else:
            hi = mid
    assert count(lo) <= budget < count(lo + 1), "parameter count is not monotone in hidden width"
    return lo
