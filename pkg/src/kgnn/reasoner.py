"""Relation-aware message passing over the entity graph and paragraph updates.

One reasoning step: pool mention tokens into node states, pass messages along
typed edges weighted by question-conditioned relation attention, copy node
updates back onto mention tokens, gate them against the paragraph rows, then
self-attend within each paragraph and add the result as a residual.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import SelfAttention
from .graph import EntityGraph
from .nn import Linear, Module, parameter, uniform


@dataclass
class GraphTensors:
    """Index arrays tying one or more entity graphs to a padded paragraph layout.

    Token rows are addressed in the flattened ``[paragraphs * max_len]`` layout.
    Graphs from different questions are laid out block-diagonally.
    """

    num_nodes: int
    num_kinds: int
    adjacency: np.ndarray  # [K, V, V] row-normalised: adjacency[r, i, j] = 1/|N_r(i)| for j in N_r(i)
    node_question: np.ndarray  # [V]
    mention_tokens: np.ndarray  # [M, Lm] flat token index
    mention_weights: np.ndarray  # [M, Lm] 1/span_len on real positions, 0 on padding
    node_mentions: np.ndarray  # [V, Km] mention index
    node_mention_mask: np.ndarray  # [V, Km] bool
    token_node: np.ndarray  # [P * max_len] node id, or V for "no entity"

    @classmethod
    def from_graphs(
        cls,
        graphs: Sequence[EntityGraph],
        paragraph_offsets: Sequence[int],
        max_len: int,
        num_paragraphs: int,
        num_kinds: int,
        question_ids: Sequence[int] | None = None,
    ) -> GraphTensors:
        question_ids = list(range(len(graphs))) if question_ids is None else list(question_ids)
        total = sum(g.num_nodes for g in graphs)
        adjacency = np.zeros((num_kinds, total, total))
        node_question = np.zeros(total, dtype=np.int64)
        spans: list[tuple[int, int]] = []  # (flat start, length)
        owners: list[list[int]] = []
        token_node = np.full(num_paragraphs * max_len, total, dtype=np.int64)
        claims: list[tuple[int, int, int, int]] = []  # (flat start, -length, node, length)

        base = 0
        for graph, offset, qid in zip(graphs, paragraph_offsets, question_ids):
            if graph.num_kinds != num_kinds:
                raise ValueError(f"graph has {graph.num_kinds} edge kinds, expected {num_kinds}")
            for node in graph.nodes:
                v = base + node.node_id
                node_question[v] = qid
                mine = []
                for m in node.mentions:
                    start = (offset + m.paragraph_id) * max_len + m.start
                    mine.append(len(spans))
                    spans.append((start, m.length))
                    claims.append((start, -m.length, v, m.length))
                owners.append(mine)
            for (dst, kind), srcs in graph._in.items():
                adjacency[kind, base + dst, [base + s for s in srcs]] = 1.0 / len(srcs)
            base += graph.num_nodes

        # earliest-starting mention wins a token, then the longer one
        for start, _, v, length in sorted(claims):
            seg = token_node[start : start + length]
            seg[seg == total] = v

        span_max = max((length for _, length in spans), default=1)
        mention_tokens = np.zeros((len(spans), span_max), dtype=np.int64)
        mention_weights = np.zeros((len(spans), span_max))
        for i, (start, length) in enumerate(spans):
            mention_tokens[i, :length] = np.arange(start, start + length)
            mention_weights[i, :length] = 1.0 / length
        k_max = max((len(o) for o in owners), default=1)
        node_mentions = np.zeros((total, k_max), dtype=np.int64)
        node_mention_mask = np.zeros((total, k_max), dtype=bool)
        for v, mine in enumerate(owners):
            node_mentions[v, : len(mine)] = mine
            node_mention_mask[v, : len(mine)] = True
        return cls(
            total,
            num_kinds,
            adjacency,
            node_question,
            mention_tokens,
            mention_weights,
            node_mentions,
            node_mention_mask,
            token_node,
        )

    @classmethod
    def single(cls, graph: EntityGraph, paragraph_lengths: Sequence[int]) -> GraphTensors:
        return cls.from_graphs(
            [graph], [0], max(paragraph_lengths), len(paragraph_lengths), graph.num_kinds
        )


def question_summary(question: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Elementwise max over (unmasked) question rows: [..., m, d] -> [..., d]."""
    if mask is not None:
        question = ag.masked_fill(question, ~np.asarray(mask, dtype=bool)[..., None], -np.inf)
    return ag.max(question, axis=-2)


class ReasonStep(Module):
    """Parameters of one reasoning step (untied across steps)."""

    def __init__(self, d: int, num_kinds: int, rng: np.random.Generator, per_relation_ffn: bool = False):
        self.num_kinds = num_kinds
        self.per_relation_ffn = per_relation_ffn
        self.node_ffn = Linear(d, d, rng)
        self.relation_attention = Linear(d, num_kinds, rng)
        emb = rng.normal(0.0, 0.1, (num_kinds, d))
        emb[0] = 0.0  # co-reference translation starts at zero
        self.relation_embedding = parameter(emb)
        if per_relation_ffn:
            self.message_weight = parameter(uniform(rng, (num_kinds, d, d), d))
            self.message_bias = parameter(np.zeros((num_kinds, 1, d)))
        else:
            self.message = Linear(d, d, rng)
        self.gate_paragraph = Linear(d, d, rng, bias=False)
        self.gate_update = Linear(d, d, rng, bias=False)
        self.gate_bias = parameter(np.zeros(d))
        self.self_attention = SelfAttention(d, rng)

    def messages(self, states: Tensor) -> Tensor:
        """phi_r(v_j) = relu(FFN(v_j + E_r)) for every kind: [K, V, d]."""
        d = states.shape[-1]
        shifted = ag.reshape(states, (1, -1, d)) + ag.reshape(self.relation_embedding, (self.num_kinds, 1, d))
        if self.per_relation_ffn:
            return ag.relu(ag.matmul(shifted, self.message_weight) + self.message_bias)
        return ag.relu(self.message(shifted))


def init_node_reprs(flat_paragraphs: Tensor, graph: GraphTensors, step: ReasonStep) -> Tensor:
    """Mention = mean of FFN(token rows); node = elementwise max over its mentions."""
    d = flat_paragraphs.shape[-1]
    if graph.num_nodes == 0:
        return Tensor(np.zeros((0, d)))
    rows = ag.relu(step.node_ffn(flat_paragraphs))
    gathered = ag.take(rows, graph.mention_tokens)  # [M, Lm, d]
    mentions = ag.sum(gathered * graph.mention_weights[..., None], axis=1)
    per_node = ag.take(mentions, graph.node_mentions)  # [V, Km, d]
    per_node = ag.masked_fill(per_node, ~graph.node_mention_mask[..., None], -np.inf)
    return ag.max(per_node, axis=1)


def relation_attention(summary: Tensor, step: ReasonStep) -> Tensor:
    """alpha = softmax over edge kinds of a projection of the question summary ([d] or [B, d])."""
    if summary.ndim == 1:
        return ag.reshape(relation_attention(ag.reshape(summary, (1, -1)), step), (-1,))
    return ag.softmax(step.relation_attention(summary), -1)


def propagate(states: Tensor, graph: GraphTensors, alpha: Tensor, step: ReasonStep) -> Tensor:
    """v_i^u = sum_r alpha_r / |N_r(i)| * sum_{j in N_r(i)} phi_r(v_j).

    ``alpha`` is ``[K]`` for a single question or ``[B, K]`` indexed through
    ``graph.node_question``. Empty neighbour sets contribute nothing.
    """
    v, d = states.shape
    if v == 0:
        return Tensor(np.zeros((0, d)))
    if alpha.ndim == 1:
        alpha = ag.reshape(alpha, (1, -1))
    node_alpha = ag.take(alpha, graph.node_question)  # [V, K]
    gathered = ag.matmul(Tensor(graph.adjacency), step.messages(states))  # [K, V, d]
    weighted = ag.swapaxes(gathered, 0, 1) * ag.reshape(node_alpha, (v, graph.num_kinds, 1))
    return ag.sum(weighted, axis=1)


def scatter_to_paragraphs(updates: Tensor, graph: GraphTensors, shape: tuple[int, int, int]) -> Tensor:
    """U at every token row: its node's update if an entity covers it, else zero."""
    d = shape[-1]
    padded = ag.concat([updates, Tensor(np.zeros((1, d)))], 0)
    return ag.reshape(ag.take(padded, graph.token_node), shape)


def gated_update(paragraphs: Tensor, updates: Tensor, step: ReasonStep) -> Tensor:
    """r = sigmoid(W^p P + W^u U + b);  r * U + (1 - r) * P."""
    gate = ag.sigmoid(step.gate_paragraph(paragraphs) + step.gate_update(updates) + step.gate_bias)
    return gate * updates + (1.0 - gate) * paragraphs


@dataclass
class StepTrace:
    nodes: Tensor
    alpha: Tensor
    node_updates: Tensor
    token_updates: Tensor
    gated: Tensor


def reason_step(
    paragraphs: Tensor,
    mask: np.ndarray,
    graph: GraphTensors,
    summary: Tensor,
    step: ReasonStep,
    trace: list[StepTrace] | None = None,
) -> Tensor:
    """P' = P + SelfAtt(gated(P, scatter(propagate(init(P)))))."""
    p, n, d = paragraphs.shape
    flat = ag.reshape(paragraphs, (p * n, d))
    nodes = init_node_reprs(flat, graph, step)
    alpha = relation_attention(summary, step)
    node_updates = propagate(nodes, graph, alpha, step)
    token_updates = scatter_to_paragraphs(node_updates, graph, (p, n, d))
    gated = gated_update(paragraphs, token_updates, step)
    if trace is not None:
        trace.append(StepTrace(nodes, alpha, node_updates, token_updates, gated))
    return paragraphs + step.self_attention(gated, mask)


def reason(
    paragraphs: Tensor,
    mask: np.ndarray,
    graph: GraphTensors,
    summary: Tensor,
    steps: Sequence[ReasonStep],
    num_steps: int,
    trace: list[StepTrace] | None = None,
) -> Tensor:
    """Apply ``num_steps`` untied reasoning steps; zero steps is the identity."""
    if num_steps < 0:
        raise ValueError("number of reasoning steps must be >= 0")
    if num_steps > len(steps):
        raise ValueError(f"{num_steps} reasoning steps requested but only {len(steps)} configured")
    for step in steps[:num_steps]:
        paragraphs = reason_step(paragraphs, mask, graph, summary, step, trace)
    return paragraphs
