"""Customer-graph construction and a two-layer graph-convolution autoencoder.

Per wave, the open customers form a graph: node features are the normalized
coordinates and an edge joins two customers whose separation is within both of
their nearest-warehouse distances. The encoder is trained offline on graphs
harvested from heuristic rollouts, then frozen; downstream policies consume
the 2-d node embeddings it produces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, load_tensors, save_tensors
from .world import Order, Warehouse, distance

SIMILARITY_CLAMP = 1e-6  # keeps the binary cross entropy finite


@dataclass
class GraphSnapshot:
    order_ids: list[int]
    features: np.ndarray   # (n, 2) normalized coordinates
    adjacency: np.ndarray  # (n, n) float 0/1, symmetric, zero diagonal


def build_graph(orders: list[Order], warehouses: list[Warehouse]) -> GraphSnapshot:
    """Snapshot of the neighbourhood graph over the given customers.

    Edge rule: d(i, j) <= min(dnw_i, dnw_j) where dnw is each customer's
    distance to its nearest warehouse, so an edge exists only when the pair is
    closer to each other than either is to any depot.
    """
    if not orders:
        raise ValueError("build_graph needs at least one order")
    n = len(orders)
    features = np.array([[o.location.x, o.location.y] for o in orders], dtype=float)
    nearest = np.array([
        min(distance(o.location, w.location) for w in warehouses) for o in orders
    ])
    adjacency = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = distance(orders[i].location, orders[j].location)
            if d <= min(nearest[i], nearest[j]):
                adjacency[i, j] = adjacency[j, i] = 1.0
    return GraphSnapshot([o.id for o in orders], features, adjacency)


def normalized_adjacency(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric renormalization D^-1/2 (A + I) D^-1/2 with self loops added."""
    a_hat = np.asarray(adjacency, dtype=float) + np.eye(len(adjacency))
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * inv_sqrt[:, None] * inv_sqrt[None, :]


class GraphEncoder:
    """Two graph-convolution layers, relu hidden, linear output (2 -> h -> 2)."""

    def __init__(self, hidden: int = 16, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng()
        self.hidden = hidden

        def glorot(fan_in, fan_out):
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            return rng.uniform(-bound, bound, size=(fan_in, fan_out))

        self.w1 = glorot(2, hidden)
        self.w2 = glorot(hidden, 2)
        self._adam_step = 0
        self._m = [np.zeros_like(self.w1), np.zeros_like(self.w2)]
        self._v = [np.zeros_like(self.w1), np.zeros_like(self.w2)]

    def encode(self, graph: GraphSnapshot) -> np.ndarray:
        """(n, 2) embedding matrix, row i for graph.order_ids[i]."""
        a_hat = normalized_adjacency(graph.adjacency)
        return self._forward(a_hat, graph.features)[0]

    def _forward(self, a_hat: np.ndarray, x: np.ndarray):
        pre1 = a_hat @ x @ self.w1
        h1 = np.maximum(pre1, 0.0)
        emb = a_hat @ h1 @ self.w2
        return emb, pre1, h1

    def gradients(self, a_hat: np.ndarray, x: np.ndarray, d_emb: np.ndarray,
                  cache=None) -> tuple[np.ndarray, np.ndarray]:
        """Backprop an upstream d(loss)/d(embedding) onto the two weight matrices."""
        if cache is None:
            cache = self._forward(a_hat, x)
        _, pre1, h1 = cache
        # emb = a_hat @ h1 @ w2 ; a_hat symmetric
        g_w2 = (a_hat @ h1).T @ d_emb
        d_h1 = (a_hat @ d_emb) @ self.w2.T
        d_pre1 = d_h1 * (pre1 > 0.0)
        g_w1 = (a_hat @ x).T @ d_pre1
        return g_w1, g_w2

    def adam_step(self, g_w1: np.ndarray, g_w2: np.ndarray, lr: float) -> None:
        self._adam_step += 1
        t = self._adam_step
        for p, g, m, v in zip((self.w1, self.w2), (g_w1, g_w2), self._m, self._v):
            m *= ADAM_BETA1
            m += (1 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1 - ADAM_BETA2) * g * g
            p -= lr * (m / (1 - ADAM_BETA1**t)) / (np.sqrt(v / (1 - ADAM_BETA2**t)) + ADAM_EPS)

    def save(self, path: str) -> None:
        save_tensors(path, {"W1": self.w1, "W2": self.w2}, {"kind": "gcn", "hidden": str(self.hidden)})

    @classmethod
    def load(cls, path: str) -> "GraphEncoder":
        tensors, meta = load_tensors(path)
        enc = cls(hidden=int(meta["hidden"]), rng=np.random.default_rng(0))
        enc.w1 = tensors["W1"]
        enc.w2 = tensors["W2"]
        return enc


def decode_similarity(e1: np.ndarray, e2: np.ndarray, max_dist: float) -> float:
    """1 - ||e1 - e2|| / max_dist; similarity of 1 means identical embeddings."""
    if max_dist <= 0.0:
        return 1.0
    return 1.0 - float(np.linalg.norm(np.asarray(e1) - np.asarray(e2))) / max_dist


def max_embedding_distance(emb: np.ndarray) -> float:
    """Largest pairwise embedding distance in the graph (similarity normalizer)."""
    if len(emb) < 2:
        return 0.0
    diff = emb[:, None, :] - emb[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


def sample_edge_pairs(graph: GraphSnapshot, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """All positive edges plus an equal number of random non-edges.

    Returns (pairs, labels): pairs is (k, 2) node indices with i < j, labels
    are 1.0 for edges and 0.0 for sampled non-edges. Graphs with fewer
    non-edges than edges contribute every non-edge they have.
    """
    n = len(graph.adjacency)
    iu, ju = np.triu_indices(n, k=1)
    edge_mask = graph.adjacency[iu, ju] > 0.5
    pos = np.stack([iu[edge_mask], ju[edge_mask]], axis=1)
    neg_all = np.stack([iu[~edge_mask], ju[~edge_mask]], axis=1)
    take = min(len(pos), len(neg_all))
    if len(neg_all) and take:
        pick = rng.choice(len(neg_all), size=take, replace=False)
        neg = neg_all[pick]
    else:
        neg = neg_all[:0]
    pairs = np.concatenate([pos, neg], axis=0)
    labels = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return pairs, labels


def _pair_scores(emb: np.ndarray, pairs: np.ndarray, max_dist: float) -> tuple[np.ndarray, np.ndarray]:
    diff = emb[pairs[:, 0]] - emb[pairs[:, 1]]
    dist = np.sqrt((diff * diff).sum(axis=1))
    if max_dist <= 0.0:
        return np.ones(len(pairs)), dist
    return 1.0 - dist / max_dist, dist


def reconstruction_loss_and_grads(
    encoder: GraphEncoder, graph: GraphSnapshot, pairs: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Binary cross entropy between pair similarity and edge label, with grads.

    The max-distance normalizer is treated as a constant during backprop (the
    sampled pairs are a subset of all graph pairs, so similarities stay in
    [0, 1] by construction).
    """
    a_hat = normalized_adjacency(graph.adjacency)
    cache = encoder._forward(a_hat, graph.features)
    emb = cache[0]
    max_dist = max_embedding_distance(emb)
    scores, dist = _pair_scores(emb, pairs, max_dist)
    s = np.clip(scores, SIMILARITY_CLAMP, 1.0 - SIMILARITY_CLAMP)
    loss = float(-np.mean(labels * np.log(s) + (1.0 - labels) * np.log(1.0 - s)))

    # d loss / d score, zero where the clamp saturates
    d_s = np.where((scores > SIMILARITY_CLAMP) & (scores < 1.0 - SIMILARITY_CLAMP),
                   (s - labels) / (s * (1.0 - s) * len(labels)), 0.0)
    d_dist = -d_s / max(max_dist, SIMILARITY_CLAMP)
    d_emb = np.zeros_like(emb)
    safe = np.maximum(dist, 1e-12)
    unit = (emb[pairs[:, 0]] - emb[pairs[:, 1]]) / safe[:, None]
    contrib = d_dist[:, None] * unit
    np.add.at(d_emb, pairs[:, 0], contrib)
    np.add.at(d_emb, pairs[:, 1], -contrib)

    g_w1, g_w2 = encoder.gradients(a_hat, graph.features, d_emb, cache)
    return loss, g_w1, g_w2


def train_encoder(
    encoder: GraphEncoder,
    graphs: list[GraphSnapshot],
    epochs: int,
    lr: float,
    rng: np.random.Generator,
) -> list[float]:
    """Offline training over the graph buffer; returns per-epoch mean losses."""
    history = []
    usable = [g for g in graphs if g.adjacency.sum() > 0]
    for _ in range(epochs):
        losses = []
        for graph in usable:
            pairs, labels = sample_edge_pairs(graph, rng)
            if not len(pairs):
                continue
            loss, g_w1, g_w2 = reconstruction_loss_and_grads(encoder, graph, pairs, labels)
            encoder.adam_step(g_w1, g_w2, lr)
            losses.append(loss)
        history.append(float(np.mean(losses)) if losses else 0.0)
    return history


def edge_auc(encoder: GraphEncoder, graphs: list[GraphSnapshot], rng: np.random.Generator) -> float:
    """Ranking AUC of pair similarity against the true edge labels."""
    scores, labels = [], []
    for graph in graphs:
        if graph.adjacency.sum() == 0:
            continue
        pairs, lab = sample_edge_pairs(graph, rng)
        if not len(pairs):
            continue
        emb = encoder.encode(graph)
        s, _ = _pair_scores(emb, pairs, max_embedding_distance(emb))
        scores.append(s)
        labels.append(lab)
    if not scores:
        return 0.5
    return ranking_auc(np.concatenate(scores), np.concatenate(labels))


def ranking_auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return 0.5
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_ranks = ranks[labels > 0.5].sum()
    return float((pos_ranks - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))
