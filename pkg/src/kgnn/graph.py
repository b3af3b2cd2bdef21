"""Relational entity graph over the paragraphs of one question."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .knowledge import BACKWARD, COREF, FORWARD, KnowledgeStore, Mention, RelationVocabulary

__all__ = ["Mention", "EntityNode", "Edge", "EntityGraph", "GraphConfig", "build_graph", "neighbors"]


@dataclass(frozen=True)
class GraphConfig:
    vocabulary: RelationVocabulary = RelationVocabulary()
    inverse_edges: bool = True
    same_paragraph_relations: bool = True
    coref_edges: bool = True
    relation_edges: bool = True

    @property
    def kinds(self) -> list[tuple[str, str]]:
        return self.vocabulary.kinds(self.inverse_edges)

    @property
    def num_kinds(self) -> int:
        return len(self.kinds)


@dataclass(frozen=True)
class EntityNode:
    node_id: int
    entity_id: str
    paragraph_id: int
    mentions: tuple[Mention, ...]


@dataclass(frozen=True, order=True)
class Edge:
    src: int
    dst: int
    kind: int
    relation: str
    direction: str


class EntityGraph:
    def __init__(self, nodes: Sequence[EntityNode], edges: Sequence[Edge], kinds: Sequence[tuple[str, str]]):
        self.nodes = list(nodes)
        self.edges = sorted(edges)
        self.kinds = list(kinds)
        self._in: dict[tuple[int, int], list[int]] = {}
        for e in self.edges:
            if e.src == e.dst:
                raise ValueError(f"self-loop on node {e.src}")
            self._in.setdefault((e.dst, e.kind), []).append(e.src)
        for srcs in self._in.values():
            srcs.sort()

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_kinds(self) -> int:
        return len(self.kinds)

    def kind_index(self, relation: str, direction: str = FORWARD) -> int:
        return self.kinds.index((relation, direction))

    def neighbors(self, node_id: int, kind: int) -> list[int]:
        """Message sources j with an edge j -> node_id of the given kind, ascending."""
        if not 0 <= node_id < len(self.nodes):
            raise IndexError(f"unknown node {node_id}")
        return list(self._in.get((node_id, kind), ()))

    def canonical(self) -> tuple:
        """Hashable form keyed by (entity, paragraph) so relabelled graphs compare equal."""
        key = {n.node_id: (n.entity_id, n.paragraph_id) for n in self.nodes}
        nodes = sorted((key[n.node_id], tuple((m.start, m.end) for m in n.mentions)) for n in self.nodes)
        edges = sorted((key[e.src], key[e.dst], e.relation, e.direction) for e in self.edges)
        return tuple(nodes), tuple(edges)

    def to_json(self) -> dict:
        return {
            "nodes": [
                {
                    "id": n.node_id,
                    "entity": n.entity_id,
                    "paragraph": n.paragraph_id,
                    "mentions": [[m.start, m.end] for m in n.mentions],
                }
                for n in self.nodes
            ],
            "edges": [{"src": e.src, "dst": e.dst, "kind": e.relation, "dir": e.direction} for e in self.edges],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def build_graph(
    mentions_per_paragraph: Sequence[Sequence[Mention]],
    store: KnowledgeStore,
    config: GraphConfig | None = None,
) -> EntityGraph:
    config = config or GraphConfig(vocabulary=store.vocabulary)
    kinds = config.kinds
    kind_of = {k: i for i, k in enumerate(kinds)}

    grouped: dict[tuple[int, str], list[Mention]] = {}
    for mentions in mentions_per_paragraph:
        for m in mentions:
            grouped.setdefault((m.paragraph_id, m.entity_id), []).append(m)
    ordered = sorted(
        grouped.items(), key=lambda item: (item[0][0], min(m.start for m in item[1]), item[0][1])
    )
    nodes = [
        EntityNode(i, ent, par, tuple(sorted(ms, key=lambda m: (m.start, m.end))))
        for i, ((par, ent), ms) in enumerate(ordered)
    ]

    edges: list[Edge] = []
    for a in nodes:
        for b in nodes:
            if a.node_id == b.node_id:
                continue
            if a.entity_id == b.entity_id:
                if config.coref_edges and a.paragraph_id != b.paragraph_id:
                    edges.append(Edge(a.node_id, b.node_id, kind_of[(COREF, FORWARD)], COREF, FORWARD))
                continue
            if not config.relation_edges:
                continue
            if a.paragraph_id == b.paragraph_id and not config.same_paragraph_relations:
                continue
            for relation, direction in store.query_relations(a.entity_id, b.entity_id):
                if direction != FORWARD:
                    continue
                edges.append(Edge(a.node_id, b.node_id, kind_of[(relation, FORWARD)], relation, FORWARD))
                if config.inverse_edges:
                    edges.append(Edge(b.node_id, a.node_id, kind_of[(relation, BACKWARD)], relation, BACKWARD))
    return EntityGraph(nodes, edges, kinds)


def neighbors(graph: EntityGraph, node_id: int, kind: int) -> list[int]:
    return graph.neighbors(node_id, kind)
