"""Fact-rule graphs for legal case descriptions.

A case is modeled as a directed graph over two node kinds. Fact nodes hold
case-specific circumstances, rule nodes hold the legal provisions they touch.
Three relations are allowed and each fixes the endpoint kinds:

    Depends On      fact -> fact
    Complies With   fact -> rule
    Violates        fact -> rule

Graphs are immutable values. Mutating operations (masking, merging, n-hop
expansion) return new graphs and never touch their inputs, which is what makes
corpus builds replayable: the same graph, ratio and seed always reproduce the
same masked variant.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable

import numpy as np

from .errors import (
    EmptyLabelError,
    MaskNotSubsetError,
    SeedNotInGraphError,
    TooFewFactsError,
)


class NodeKind(str, Enum):
    FACT = "Fact"
    RULE = "Rule"


class Relation(str, Enum):
    DEPENDS_ON = "Depends On"
    COMPLIES_WITH = "Complies With"
    VIOLATES = "Violates"


def canonical_label(raw: str) -> str:
    """Lower-case and collapse runs of whitespace to single spaces."""
    label = " ".join(raw.lower().split())
    if not label:
        raise EmptyLabelError("node label is empty after canonicalization")
    return label


@dataclass(frozen=True, order=True)
class NodeId:
    label: str
    kind: NodeKind

    def __post_init__(self):
        if canonical_label(self.label) != self.label:
            raise ValueError(f"label {self.label!r} is not canonical")


def fact(label: str) -> NodeId:
    return NodeId(canonical_label(label), NodeKind.FACT)


def rule(label: str) -> NodeId:
    return NodeId(canonical_label(label), NodeKind.RULE)


_ENDPOINT_KINDS = {
    Relation.DEPENDS_ON: (NodeKind.FACT, NodeKind.FACT),
    Relation.COMPLIES_WITH: (NodeKind.FACT, NodeKind.RULE),
    Relation.VIOLATES: (NodeKind.FACT, NodeKind.RULE),
}


@dataclass(frozen=True, order=True)
class Edge:
    source: NodeId
    target: NodeId
    relation: Relation

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError(f"self-loop on {self.source.label!r}")
        want = _ENDPOINT_KINDS[self.relation]
        got = (self.source.kind, self.target.kind)
        if got != want:
            raise ValueError(
                f"relation {self.relation.value!r} needs {want[0].value}->"
                f"{want[1].value}, got {got[0].value}->{got[1].value}"
            )


@dataclass(frozen=True)
class FactRuleGraph:
    """Immutable directed graph over fact and rule nodes."""

    nodes: frozenset[NodeId]
    edges: frozenset[Edge]
    case_id: str | None = None

    def __post_init__(self):
        for edge in self.edges:
            for end in (edge.source, edge.target):
                if end not in self.nodes:
                    raise ValueError(f"edge endpoint {end.label!r} not in node set")

    # -- views ------------------------------------------------------------

    def facts(self) -> list[NodeId]:
        return sorted(n for n in self.nodes if n.kind is NodeKind.FACT)

    def rules(self) -> list[NodeId]:
        return sorted(n for n in self.nodes if n.kind is NodeKind.RULE)

    def sorted_nodes(self) -> list[NodeId]:
        """Facts then rules, each lexicographic. The canonical node order."""
        return self.facts() + self.rules()

    def sorted_edges(self) -> list[Edge]:
        return sorted(self.edges)

    def undirected_neighbors(self) -> dict[NodeId, set[NodeId]]:
        adj: dict[NodeId, set[NodeId]] = {n: set() for n in self.nodes}
        for e in self.edges:
            adj[e.source].add(e.target)
            adj[e.target].add(e.source)
        return adj

    def __contains__(self, node: NodeId) -> bool:
        return node in self.nodes

    def __len__(self) -> int:
        return len(self.nodes)


# Candidate sets are plain ordered tuples of fact nodes.
CandidateFactSet = tuple[NodeId, ...]


def build_graph(
    facts_: Iterable[str],
    rules_: Iterable[str],
    edges_: Iterable[tuple[str, str, Relation | str]],
    case_id: str | None = None,
) -> FactRuleGraph:
    """Assemble a graph from raw labels and (source, target, relation) triples.

    Labels are canonicalized here, so edge endpoints may be written in any
    case or spacing as long as they canonicalize to a declared node.
    """
    nodes: dict[str, NodeId] = {}
    for raw in facts_:
        n = fact(raw)
        nodes[n.label] = n
    for raw in rules_:
        n = rule(raw)
        if n.label in nodes:
            raise ValueError(f"label {n.label!r} declared as both fact and rule")
        nodes[n.label] = n
    edge_set = set()
    for src_raw, dst_raw, rel in edges_:
        rel = Relation(rel)
        src = nodes.get(canonical_label(src_raw))
        dst = nodes.get(canonical_label(dst_raw))
        if src is None or dst is None:
            missing = src_raw if src is None else dst_raw
            raise ValueError(f"edge endpoint {missing!r} is not a declared node")
        edge_set.add(Edge(src, dst, rel))
    return FactRuleGraph(frozenset(nodes.values()), frozenset(edge_set), case_id)


def merge_graphs(graphs: Iterable[FactRuleGraph]) -> FactRuleGraph:
    """Union of node and edge sets across graphs.

    Nodes with equal canonical labels collapse into one node, which is what
    lets n-hop expansion walk from one case into its neighbors. The merged
    graph carries no case id.
    """
    nodes: set[NodeId] = set()
    edges: set[Edge] = set()
    for g in graphs:
        nodes |= g.nodes
        edges |= g.edges
    return FactRuleGraph(frozenset(nodes), frozenset(edges), case_id=None)


def apply_mask(graph: FactRuleGraph, removed: Iterable[NodeId]) -> FactRuleGraph:
    """Drop the given fact nodes and every edge touching them."""
    removed = set(removed)
    fact_nodes = set(graph.facts())
    if not removed <= fact_nodes:
        bad = sorted(n.label for n in removed - fact_nodes)
        raise MaskNotSubsetError(f"not maskable fact nodes: {bad}")
    kept = frozenset(graph.nodes - removed)
    kept_edges = frozenset(
        e for e in graph.edges if e.source in kept and e.target in kept
    )
    return FactRuleGraph(kept, kept_edges, graph.case_id)


def mask_graph(
    graph: FactRuleGraph, ratio: float, seed: int
) -> tuple[FactRuleGraph, list[NodeId]]:
    """Remove a seeded random subset of fact nodes.

    Removes ceil(ratio * |facts|) facts, at least one and never all of them.
    Rule nodes are never masked. Returns the masked graph and the removed
    nodes in lexicographic order.
    """
    fact_nodes = graph.facts()
    if len(fact_nodes) < 2:
        raise TooFewFactsError(
            f"masking needs at least 2 fact nodes, graph has {len(fact_nodes)}"
        )
    k = math.ceil(ratio * len(fact_nodes))
    k = max(1, min(k, len(fact_nodes) - 1))
    rng = np.random.default_rng(seed)
    picked = rng.choice(len(fact_nodes), size=k, replace=False)
    removed = sorted(fact_nodes[i] for i in picked)
    return apply_mask(graph, removed), removed


def n_hop_subgraph(
    graph: FactRuleGraph, seeds: Iterable[NodeId], n_hops: int
) -> FactRuleGraph:
    """Induced subgraph on nodes within ``n_hops`` undirected steps of seeds.

    Distance is measured over the undirected view of the edge set. The result
    contains every edge of ``graph`` whose endpoints both survived.
    """
    seed_nodes = list(seeds)
    for s in seed_nodes:
        if s not in graph.nodes:
            raise SeedNotInGraphError(f"seed node {s.label!r} not in graph")
    if n_hops < 0:
        raise ValueError("n_hops must be nonnegative")
    adj = graph.undirected_neighbors()
    dist: dict[NodeId, int] = {s: 0 for s in seed_nodes}
    queue = deque(seed_nodes)
    while queue:
        cur = queue.popleft()
        if dist[cur] == n_hops:
            continue
        for nxt in adj[cur]:
            if nxt not in dist:
                dist[nxt] = dist[cur] + 1
                queue.append(nxt)
    kept = frozenset(dist)
    kept_edges = frozenset(
        e for e in graph.edges if e.source in kept and e.target in kept
    )
    return FactRuleGraph(kept, kept_edges, graph.case_id)


def candidate_facts(
    expanded: FactRuleGraph, known: FactRuleGraph
) -> CandidateFactSet:
    """Fact nodes of the expanded graph that the known graph lacks.

    Lexicographic order; downstream arm indices depend on it.
    """
    return tuple(n for n in expanded.facts() if n not in known.nodes)


# ---------------------------------------------------------------------------
# serialization


def graph_to_dict(graph: FactRuleGraph) -> dict:
    return {
        "case_id": graph.case_id,
        "facts": [n.label for n in graph.facts()],
        "rules": [n.label for n in graph.rules()],
        "edges": [
            {
                "source": e.source.label,
                "target": e.target.label,
                "relation": e.relation.value,
            }
            for e in graph.sorted_edges()
        ],
    }


def graph_from_dict(data: dict) -> FactRuleGraph:
    return build_graph(
        data.get("facts", []),
        data.get("rules", []),
        [(e["source"], e["target"], e["relation"]) for e in data.get("edges", [])],
        case_id=data.get("case_id"),
    )
