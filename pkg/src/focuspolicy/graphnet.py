"""Two-layer graph attention encoder with global mean pooling.

Layer 1 runs four heads of width 32, concatenated, followed by ELU. Layer 2 is
a single head of width 64 with no activation. Attention logits are additive:
``LeakyReLU_0.2(a_self . W h_i + a_nbr . W h_j + b[type(j -> i)])`` with a
learned scalar bias per relation type (self-loops have their own type), and
are normalised over each node's incoming edges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .scenegraph import NUM_EDGE_TYPES

LAYERS = ((4, 32, True), (1, 64, False))  # (heads, head width, concat + ELU)
D_F = 64


@dataclass
class GraphBatch:
    """Disjoint union of graphs. Edges include self-loops and are sorted by destination."""

    x: object  # Tensor (N, d_in)
    src: np.ndarray
    dst: np.ndarray
    typ: np.ndarray
    graph_of: np.ndarray  # node -> graph index
    num_graphs: int

    @property
    def num_nodes(self):
        return self.x.shape[0]


class GraphEncoder:
    def __init__(self, params, gen, d_in, prefix="gat"):
        self.params = params
        self.prefix = prefix
        width = d_in
        for layer, (heads, dh, _) in enumerate(LAYERS):
            p = f"{prefix}{layer}"
            params.add(f"{p}.w", gen.normal(0.0, np.sqrt(1.0 / width), (width, heads * dh)))
            params.add(f"{p}.a_self", gen.normal(0.0, np.sqrt(1.0 / dh), (heads, dh)))
            params.add(f"{p}.a_nbr", gen.normal(0.0, np.sqrt(1.0 / dh), (heads, dh)))
            params.add(f"{p}.b_rel", np.zeros((NUM_EDGE_TYPES, heads)))
            width = heads * dh

    def layer(self, h, batch, layer, return_attention=False):
        heads, dh, concat = LAYERS[layer]
        p = self.params
        pre = f"{self.prefix}{layer}"
        n = h.shape[0]
        wh = nx.reshape(h @ p[f"{pre}.w"], (n, heads, dh))
        s_self = nx.tensor_sum(wh * p[f"{pre}.a_self"], axis=2)
        s_nbr = nx.tensor_sum(wh * p[f"{pre}.a_nbr"], axis=2)
        logits = nx.leaky_relu(
            nx.take_rows(s_self, batch.dst) + nx.take_rows(s_nbr, batch.src) + nx.take_rows(p[f"{pre}.b_rel"], batch.typ),
            0.2,
        )
        alpha = nx.segment_softmax(logits, batch.dst, n)
        msg = nx.take_rows(wh, batch.src) * nx.reshape(alpha, (alpha.shape[0], heads, 1))
        out = nx.segment_sum(nx.reshape(msg, (msg.shape[0], heads * dh)), batch.dst, n)
        if concat:
            out = nx.elu(out)
        return (out, alpha) if return_attention else out

    def node_embeddings(self, batch):
        h = batch.x
        for layer in range(len(LAYERS)):
            h = self.layer(h, batch, layer)
        return h

    def __call__(self, batch):
        """Per-graph feature F, the mean of final node embeddings (num_graphs x 64)."""
        h = self.node_embeddings(batch)
        counts = np.bincount(batch.graph_of, minlength=batch.num_graphs).astype(np.float64)
        total = nx.segment_sum(h, batch.graph_of, batch.num_graphs)
        return total * (1.0 / counts)[:, None]


def single_graph_batch(x, graph):
    """Wrap one :class:`SceneGraph` with precomputed node inputs ``x``."""
    src, dst, typ = graph.edge_arrays()
    n = len(graph.nodes)
    return GraphBatch(nx.as_tensor(x), src, dst, typ, np.zeros(n, dtype=np.int64), 1)


def encode_graph(encoder, batch):
    return encoder(batch)
