"""Node relevance scoring model.

Given a masked case description embedding h and the case's expanded fact-rule
subgraph, the model scores how likely each candidate node is to be one of the
case's missing facts. Three stages, all trained jointly:

1. Graph convolution over the subgraph. With row-normalized directed
   adjacency A_hat = (D_out + I)^(-1) (A + I), each layer computes
   H' = relu(A_hat H W + b). Self-loops keep every node's own features in
   the mix; the row normalization makes depth insensitive to degree.

2. Additive attention pooling. Per node j, a scalar energy
   e_j = relu(w . [h, H_j] + b) feeds a softmax, and the attention-weighted
   sum Z = sum_j alpha_j H_j summarizes the subgraph relative to the query
   description.

3. A six-layer MLP scores each candidate from [Z, H_j], squashed to a
   probability with a logistic output.

Everything is float64 numpy with hand-written backward passes. The size of
the problem (dozens of nodes, d of 64) does not justify an autodiff
framework, and explicit gradients keep the finite-difference checks and the
bit-level run-to-run determinism straightforward.

Node embeddings are part of the trainable parameters. The table is keyed by
canonical label, so a node shared between cases is the same row everywhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingMatrix, init_node_embeddings, node_embedding_row
from .errors import (
    CheckpointError,
    DimensionMismatchError,
    EmptyNodeSetError,
)
from .graph import FactRuleGraph, NodeId

CHECKPOINT_VERSION = 1


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class PuModelConfig:
    dim: int = 64
    conv_layers: int = 2
    mlp_layers: int = 6  # weight layers in the score head, hidden width 2*dim
    seed: int = 0


def normalized_adjacency(graph: FactRuleGraph, order: list[NodeId]) -> np.ndarray:
    """(D_out + I)^(-1) (A + I) over the given node order."""
    n = len(order)
    index = {node: i for i, node in enumerate(order)}
    a = np.zeros((n, n))
    for e in graph.edges:
        a[index[e.source], index[e.target]] = 1.0
    deg = a.sum(axis=1)
    return (a + np.eye(n)) / (deg + 1.0)[:, None]


@dataclass
class ForwardCache:
    """Intermediate values from one case forward pass.

    Kept around for the backward pass and inspected by tests that need to
    steer clear of relu kinks when finite-differencing.
    """

    order: list[NodeId]
    scored_idx: np.ndarray
    a_hat: np.ndarray
    h_text: np.ndarray
    h0: np.ndarray
    conv_pre: list[np.ndarray]
    conv_out: list[np.ndarray]  # conv_out[0] is h0, conv_out[-1] is H
    att_pre: np.ndarray
    alpha: np.ndarray
    z: np.ndarray
    mlp_in: np.ndarray
    mlp_pre: list[np.ndarray]
    mlp_hidden: list[np.ndarray]
    logits: np.ndarray


class PuModel:
    """Trainable scorer. Parameters live in a flat name -> array dict."""

    def __init__(self, config: PuModelConfig, labels: list[str] | None = None):
        self.config = config
        d = config.dim
        if d < 1:
            raise ValueError("dim must be positive")
        rng = np.random.default_rng(config.seed)
        self.emb: EmbeddingMatrix = init_node_embeddings(labels or [], d, config.seed)
        self.conv_w = [
            rng.standard_normal((d, d)) * np.sqrt(2.0 / d)
            for _ in range(config.conv_layers)
        ]
        self.conv_b = [np.zeros(d) for _ in range(config.conv_layers)]
        self.att_w = rng.standard_normal(2 * d) * np.sqrt(2.0 / (2 * d))
        self.att_b = np.zeros(1)
        widths = [2 * d] * config.mlp_layers + [1]
        self.mlp_w = [
            rng.standard_normal((widths[i], widths[i + 1]))
            * np.sqrt(2.0 / widths[i])
            for i in range(config.mlp_layers)
        ]
        self.mlp_b = [np.zeros(widths[i + 1]) for i in range(config.mlp_layers)]

    # -- parameter plumbing ------------------------------------------------

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {"emb": self.emb.matrix}
        for i, (w, b) in enumerate(zip(self.conv_w, self.conv_b)):
            out[f"conv_w{i}"] = w
            out[f"conv_b{i}"] = b
        out["att_w"] = self.att_w
        out["att_b"] = self.att_b
        for i, (w, b) in enumerate(zip(self.mlp_w, self.mlp_b)):
            out[f"mlp_w{i}"] = w
            out[f"mlp_b{i}"] = b
        return out

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {name: np.zeros_like(arr) for name, arr in self.params().items()}

    def node_input_row(self, label: str) -> np.ndarray:
        """Table row if the label was registered, else its keyed init value.

        Labels outside the table (new narrative facts at inference time) get
        their deterministic initial embedding and receive no gradient.
        """
        if label in self.emb:
            return self.emb.row(label)
        return node_embedding_row(label, self.config.dim, self.config.seed)

    # -- forward -----------------------------------------------------------

    def forward(
        self,
        graph: FactRuleGraph,
        h_text: np.ndarray,
        scored: list[NodeId],
    ) -> ForwardCache:
        d = self.config.dim
        if h_text.shape != (d,):
            raise DimensionMismatchError(
                f"h_text has shape {h_text.shape}, expected ({d},)"
            )
        order = graph.sorted_nodes()
        if not order:
            raise EmptyNodeSetError("graph has no nodes")
        if not scored:
            raise EmptyNodeSetError("no nodes to score")
        index = {node: i for i, node in enumerate(order)}
        try:
            scored_idx = np.array([index[node] for node in scored], dtype=int)
        except KeyError as exc:
            raise ValueError(f"scored node {exc.args[0]} not in graph") from None

        a_hat = normalized_adjacency(graph, order)
        h0 = np.vstack([self.node_input_row(node.label) for node in order])

        conv_pre: list[np.ndarray] = []
        conv_out: list[np.ndarray] = [h0]
        h = h0
        for w, b in zip(self.conv_w, self.conv_b):
            pre = a_hat @ h @ w + b
            conv_pre.append(pre)
            h = np.maximum(pre, 0.0)
            conv_out.append(h)

        # additive attention over all subgraph nodes
        s_h, s_n = self.att_w[:d], self.att_w[d:]
        att_pre = (h_text @ s_h + self.att_b[0]) + h @ s_n
        energy = np.maximum(att_pre, 0.0)
        shifted = np.exp(energy - energy.max())
        alpha = shifted / shifted.sum()
        if abs(alpha.sum() - 1.0) > 1e-9:
            raise ArithmeticError("attention weights lost normalization")
        z = alpha @ h

        mlp_in = np.concatenate(
            [np.broadcast_to(z, (len(scored_idx), d)), h[scored_idx]], axis=1
        )
        x = mlp_in
        mlp_pre: list[np.ndarray] = []
        mlp_hidden: list[np.ndarray] = [x]
        for w, b in zip(self.mlp_w[:-1], self.mlp_b[:-1]):
            pre = x @ w + b
            mlp_pre.append(pre)
            x = np.maximum(pre, 0.0)
            mlp_hidden.append(x)
        logits = (x @ self.mlp_w[-1] + self.mlp_b[-1])[:, 0]

        return ForwardCache(
            order=order,
            scored_idx=scored_idx,
            a_hat=a_hat,
            h_text=h_text,
            h0=h0,
            conv_pre=conv_pre,
            conv_out=conv_out,
            att_pre=att_pre,
            alpha=alpha,
            z=z,
            mlp_in=mlp_in,
            mlp_pre=mlp_pre,
            mlp_hidden=mlp_hidden,
            logits=logits,
        )

    def scores(
        self, graph: FactRuleGraph, h_text: np.ndarray, scored: list[NodeId]
    ) -> np.ndarray:
        """Relevance probabilities for the scored nodes."""
        return sigmoid(self.forward(graph, h_text, scored).logits)

    # -- backward ----------------------------------------------------------

    def backward(
        self, cache: ForwardCache, dlogits: np.ndarray
    ) -> dict[str, np.ndarray]:
        """Gradients of sum(dlogits * logits) w.r.t. every parameter."""
        d = self.config.dim
        grads = self.zero_grads()
        h = cache.conv_out[-1]

        # score head
        dx = dlogits[:, None] @ self.mlp_w[-1].T  # (k, 2d)
        grads[f"mlp_w{len(self.mlp_w) - 1}"] += (
            cache.mlp_hidden[-1].T @ dlogits[:, None]
        )
        grads[f"mlp_b{len(self.mlp_b) - 1}"] += np.array([dlogits.sum()])
        for i in range(len(self.mlp_w) - 2, -1, -1):
            dpre = dx * (cache.mlp_pre[i] > 0.0)
            grads[f"mlp_w{i}"] += cache.mlp_hidden[i].T @ dpre
            grads[f"mlp_b{i}"] += dpre.sum(axis=0)
            dx = dpre @ self.mlp_w[i].T

        dz = dx[:, :d].sum(axis=0)
        dh = np.zeros_like(h)
        np.add.at(dh, cache.scored_idx, dx[:, d:])

        # pooled summary and attention
        dalpha = h @ dz
        dh += np.outer(cache.alpha, dz)
        denergy = cache.alpha * (dalpha - float(cache.alpha @ dalpha))
        datt_pre = denergy * (cache.att_pre > 0.0)
        grads["att_w"][:d] += datt_pre.sum() * cache.h_text
        grads["att_w"][d:] += h.T @ datt_pre
        grads["att_b"] += np.array([datt_pre.sum()])
        dh += np.outer(datt_pre, self.att_w[d:])

        # graph convolution stack
        for layer in range(len(self.conv_w) - 1, -1, -1):
            dpre = dh * (cache.conv_pre[layer] > 0.0)
            agg = cache.a_hat @ cache.conv_out[layer]
            grads[f"conv_w{layer}"] += agg.T @ dpre
            grads[f"conv_b{layer}"] += dpre.sum(axis=0)
            dh = cache.a_hat.T @ (dpre @ self.conv_w[layer].T)

        # scatter into the label-keyed table; unseen labels carry no gradient
        demb = grads["emb"]
        for row, node in enumerate(cache.order):
            idx = self.emb.index.get(node.label)
            if idx is not None:
                demb[idx] += dh[row]
        return grads

    # -- checkpointing -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "version": CHECKPOINT_VERSION,
            "kind": "pu-model",
            "dim": self.config.dim,
            "conv_layers": self.config.conv_layers,
            "mlp_layers": self.config.mlp_layers,
            "seed": self.config.seed,
            "labels": list(self.emb.labels),
        }
        arrays = {name: arr for name, arr in self.params().items()}
        arrays["__meta__"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8
        )
        with open(path, "wb") as fh:
            np.savez(fh, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "PuModel":
        path = Path(path)
        if not path.exists():
            raise CheckpointError(f"checkpoint {path} does not exist")
        with np.load(path) as data:
            if "__meta__" not in data:
                raise CheckpointError(f"checkpoint {path} has no metadata record")
            meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"checkpoint version {meta.get('version')!r} unsupported"
                )
            config = PuModelConfig(
                dim=int(meta["dim"]),
                conv_layers=int(meta["conv_layers"]),
                mlp_layers=int(meta["mlp_layers"]),
                seed=int(meta["seed"]),
            )
            model = cls(config, labels=list(meta["labels"]))
            params = model.params()
            for name, arr in params.items():
                if name not in data:
                    raise CheckpointError(f"checkpoint missing tensor {name!r}")
                stored = data[name]
                if stored.shape != arr.shape:
                    raise CheckpointError(
                        f"tensor {name!r} has shape {stored.shape}, "
                        f"expected {arr.shape}"
                    )
                arr[...] = stored
        return model
