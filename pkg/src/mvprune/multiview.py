"""Random view partitions and the per-view embed + graph-convolution encoder.

Each view slices its feature columns, applies a bias-free linear embedding,
then one symmetric-normalized graph convolution with ReLU; the per-view
outputs are column-concatenated into the latent matrix Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .graphio import Graph
from .rng import substream

SPARSE_NODE_THRESHOLD = 64  # above this, message passing walks the edge list


@dataclass
class ViewPartition:
    k: int
    columns_per_view: list[list[int]]
    overlap_ratio: float
    seed: int

    @property
    def d(self) -> int:
        return len({c for cols in self.columns_per_view for c in cols})

    def to_dict(self) -> dict:
        return {"k": self.k, "columns_per_view": self.columns_per_view,
                "overlap_ratio": self.overlap_ratio, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "ViewPartition":
        return cls(d["k"], [list(map(int, c)) for c in d["columns_per_view"]],
                   d["overlap_ratio"], d["seed"])


def default_overlap_ratio(d: int, k: int) -> float:
    """0.25 when a view would have fewer than 4 features, else no overlap."""
    return 0.25 if math.ceil(d / k) < 4 else 0.0


def make_partition(d: int, k: int, overlap_ratio: float, seed: int) -> ViewPartition:
    if k < 1 or d < k:
        raise ConfigError(f"need 1 <= k <= d, got k={k}, d={d}")
    if not 0.0 <= overlap_ratio < 1.0:
        raise ConfigError(f"overlap_ratio must be in [0, 1), got {overlap_ratio}")
    rng = substream(seed, "partition")
    shuffled = [int(c) for c in rng.permutation(d)]
    base, extra = divmod(d, k)
    chunks, off = [], 0
    for i in range(k):
        width = base + (1 if i < extra else 0)
        chunks.append(shuffled[off:off + width])
        off += width
    n_shared = int(overlap_ratio * math.ceil(d / k))
    cols = []
    for i in range(k):
        view = list(chunks[i])
        if n_shared and k > 1:
            view.extend(chunks[(i + 1) % k][:n_shared])  # borrow from the cyclic successor
        cols.append(view)
    return ViewPartition(k, cols, overlap_ratio, seed)


@dataclass
class ViewEncoder:
    embed_weights: list[T.Tensor]  # d_i x e_i, bias-free
    gcn_weights: list[T.Tensor]    # e_i x h_i

    @classmethod
    def init(cls, partition: ViewPartition, latent_width: int, rng: np.random.Generator) -> "ViewEncoder":
        width = math.ceil(latent_width / partition.k)  # e_i = h_i
        embeds, gcns = [], []
        for cols in partition.columns_per_view:
            embeds.append(T.param(None, rng, (len(cols), width)))
            gcns.append(T.param(None, rng, (width, width)))
        return cls(embeds, gcns)

    @property
    def latent_width(self) -> int:
        return sum(w.cols for w in self.gcn_weights)


def normalize_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """D^{-1/2} (A + I) D^{-1/2} with degrees taken from A + I.

    Constant with respect to training; computed once per graph.
    """
    a_hat = adjacency + np.eye(adjacency.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return inv_sqrt[:, None] * a_hat * inv_sqrt[None, :]


def normalized_edges(adjacency: np.ndarray):
    """Edge-list form of normalize_adjacency (rows, cols, weights), self-loops included."""
    a_hat = adjacency + np.eye(adjacency.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    ri, ci = np.nonzero(a_hat)
    return ri, ci, inv_sqrt[ri] * a_hat[ri, ci] * inv_sqrt[ci]


def gcn_layer(h: T.Tensor, weight: T.Tensor, adjacency: np.ndarray,
              activation=T.relu, sparse: bool | None = None) -> T.Tensor:
    """One graph convolution: act(norm(A) @ h @ weight)."""
    n = adjacency.shape[0]
    if sparse is None:
        sparse = n > SPARSE_NODE_THRESHOLD
    hw = T.matmul(h, weight)
    if sparse:
        prop = T.spmm_sym(normalized_edges(adjacency), n, hw)
    else:
        prop = T.matmul(T.Tensor(normalize_adjacency(adjacency)), hw)
    return activation(prop) if activation is not None else prop


def encode_views(graph: Graph | np.ndarray, partition: ViewPartition, encoder: ViewEncoder,
                 sparse: bool | None = None) -> T.Tensor:
    """Latent matrix Z: column-concatenation of the per-view GCN outputs."""
    x = graph.features if isinstance(graph, Graph) else np.asarray(graph, dtype=np.float64)
    adjacency = graph.adjacency if isinstance(graph, Graph) else None
    if adjacency is None:
        raise ContractError("encode_views needs a Graph (adjacency is required)")
    return encode_views_xa(x, adjacency, partition, encoder, sparse=sparse)


def encode_views_xa(x: np.ndarray, adjacency: np.ndarray, partition: ViewPartition,
                    encoder: ViewEncoder, sparse: bool | None = None) -> T.Tensor:
    if len(partition.columns_per_view) != len(encoder.embed_weights):
        raise ContractError("partition and encoder view counts differ")
    x_t = T.Tensor(x)
    parts = []
    for cols, w_embed, w_gcn in zip(partition.columns_per_view,
                                    encoder.embed_weights, encoder.gcn_weights):
        if len(cols) != w_embed.rows:
            raise ContractError(
                f"view expects {w_embed.rows} columns, partition provides {len(cols)}")
        embedded = T.matmul(T.slice_cols(x_t, cols), w_embed)  # linear, no activation
        parts.append(gcn_layer(embedded, w_gcn, adjacency, sparse=sparse))
    return T.concat_cols(parts)
