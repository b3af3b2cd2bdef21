"""The full KGNN: encoder, T reasoning steps, prediction heads, batching and loss."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import PreparedExample
from .encoder import EncoderDims, Encoder
from .graph import GraphConfig
from .knowledge import DEFAULT_RELATIONS, RelationVocabulary
from .nn import Module
from .prediction import (
    Predictor,
    SharedLayout,
    decode_best_span,
    sentence_layout,
    shared_log_probs,
    span_logits,
    supporting_fact_logits,
)
from .reasoner import GraphTensors, ReasonStep, StepTrace, question_summary, reason
from .text import Vocabulary


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    word_dim: int = 32
    char_dim: int = 16
    char_width: int = 5
    char_filters: int = 32
    max_word_len: int = 16
    num_steps: int = 2
    max_steps: int = 3
    per_relation_ffn: bool = False
    max_span_len: int = 8
    sp_weight: float = 1.0
    relations: tuple[str, ...] = DEFAULT_RELATIONS
    inverse_edges: bool = True
    same_paragraph_relations: bool = True
    use_graph: bool = True

    def __post_init__(self):
        for f in ("d_model", "word_dim", "char_dim", "char_width", "char_filters", "max_word_len", "max_span_len"):
            if getattr(self, f) <= 0:
                raise ValueError(f"{f} must be positive")
        if not 0 <= self.num_steps <= self.max_steps:
            raise ValueError(f"num_steps must lie in [0, max_steps={self.max_steps}], got {self.num_steps}")
        if self.max_word_len < self.char_width:
            raise ValueError("max_word_len must be >= char_width")

    @property
    def dims(self) -> EncoderDims:
        return EncoderDims(
            self.d_model, self.word_dim, self.char_dim, self.char_width, self.char_filters, self.max_word_len
        )

    @property
    def graph_config(self) -> GraphConfig:
        return GraphConfig(
            vocabulary=RelationVocabulary(tuple(self.relations)),
            inverse_edges=self.inverse_edges,
            same_paragraph_relations=self.same_paragraph_relations,
            coref_edges=self.use_graph,
            relation_edges=self.use_graph,
        )

    @property
    def num_kinds(self) -> int:
        return self.graph_config.num_kinds

    def to_dict(self) -> dict:
        out = asdict(self)
        out["relations"] = list(self.relations)
        return out

    @classmethod
    def from_dict(cls, values: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        values = {k: v for k, v in values.items() if k in known}
        if "relations" in values:
            values["relations"] = tuple(values["relations"])
        return cls(**values)


@dataclass
class Batch:
    examples: list[PreparedExample]
    word_ids: np.ndarray
    char_ids: np.ndarray
    question_index: np.ndarray
    question_mask: np.ndarray
    paragraph_index: np.ndarray
    paragraph_mask: np.ndarray
    paragraph_question: np.ndarray
    paragraph_rows: list[list[int]]
    graph: GraphTensors
    layout: SharedLayout
    sentence_tokens: np.ndarray
    sentence_mask: np.ndarray
    sentence_question: np.ndarray
    sentence_keys: list[tuple[int, int]]
    sentence_labels: np.ndarray
    sentence_weights: np.ndarray
    gold_start: np.ndarray
    gold_end: np.ndarray

    @property
    def size(self) -> int:
        return len(self.examples)

    @property
    def max_len(self) -> int:
        return self.paragraph_index.shape[1]

    @classmethod
    def build(
        cls,
        examples: Sequence[PreparedExample],
        vocab: Vocabulary,
        config: ModelConfig,
        require_gold: bool = True,
    ) -> Batch:
        examples = list(examples)
        words: dict[str, int] = {}

        def index(tokens: list[str], width: int) -> np.ndarray:
            out = np.zeros(width, dtype=np.int64)
            for i, tok in enumerate(tokens):
                out[i] = words.setdefault(tok, len(words))
            return out

        m_max = max(len(ex.question) for ex in examples)
        q_index = np.stack([index(ex.question.tokens, m_max) for ex in examples])
        q_mask = np.zeros(q_index.shape, dtype=bool)
        for b, ex in enumerate(examples):
            q_mask[b, : len(ex.question)] = True

        lengths = [ex.lengths for ex in examples]
        n_max = max(max(ls, default=0) for ls in lengths)
        n_max = max(n_max, 1)
        rows, offsets, par_question = [], [], []
        p_index, p_mask = [], []
        for b, ex in enumerate(examples):
            offsets.append(len(par_question))
            mine = []
            for p in ex.paragraphs:
                mine.append(len(par_question))
                par_question.append(b)
                p_index.append(index(p.tokens, n_max))
                mask = np.zeros(n_max, dtype=bool)
                mask[: len(p)] = True
                p_mask.append(mask)
            rows.append(mine)

        tokens = sorted(words, key=words.get)
        word_ids = np.array([vocab.word_id(t) for t in tokens], dtype=np.int64)
        char_ids = vocab.char_matrix(tokens, config.max_word_len)

        graph = GraphTensors.from_graphs(
            [ex.graph for ex in examples], offsets, n_max, len(par_question), config.num_kinds
        )
        layout = SharedLayout.build(lengths, n_max)

        spans, sent_rows, labels, weights, sent_question = [], [], [], [], []
        for b, ex in enumerate(examples):
            for row, par, p_labels in zip(rows[b], ex.paragraphs, ex.sp_labels):
                spans.append(par.sentence_spans())
                sent_rows.append(row)
        sentence_tokens, sentence_mask, keys = sentence_layout(spans, sent_rows, n_max)
        row_question = np.asarray(par_question, dtype=np.int64)
        per_question = np.bincount(row_question[[r for r, _ in keys]], minlength=len(examples)) if keys else []
        for row, idx in keys:
            b = row_question[row]
            local = rows[b].index(row)
            labels.append(examples[b].sp_labels[local][idx])
            weights.append(1.0 / per_question[b])
            sent_question.append(b)

        gold_start = np.full(len(examples), -1, dtype=np.int64)
        gold_end = np.full(len(examples), -1, dtype=np.int64)
        for b, ex in enumerate(examples):
            span = ex.gold_span
            if span is None:
                if require_gold:
                    raise ValueError(f"question {ex.id!r}: no gold answer span")
                continue
            par, s, e = span
            if not (0 <= par < len(ex.paragraphs) and 0 <= s <= e < len(ex.paragraphs[par])):
                raise ValueError(f"question {ex.id!r}: gold span {span} outside its paragraphs")
            offset = sum(lengths[b][:par])
            gold_start[b] = offset + s
            gold_end[b] = offset + e

        return cls(
            examples=examples,
            word_ids=word_ids,
            char_ids=char_ids,
            question_index=q_index,
            question_mask=q_mask,
            paragraph_index=np.stack(p_index),
            paragraph_mask=np.stack(p_mask),
            paragraph_question=row_question,
            paragraph_rows=rows,
            graph=graph,
            layout=layout,
            sentence_tokens=sentence_tokens,
            sentence_mask=sentence_mask,
            sentence_question=np.asarray(sent_question, dtype=np.int64),
            sentence_keys=keys,
            sentence_labels=np.asarray(labels, dtype=np.float64),
            sentence_weights=np.asarray(weights, dtype=np.float64),
            gold_start=gold_start,
            gold_end=gold_end,
        )


@dataclass
class ForwardOutput:
    start_log_probs: Tensor  # [B, L]
    end_log_probs: Tensor
    sp_logits: Tensor  # [S]
    summary: Tensor
    initial: Tensor  # P-bar^(0), [P, n, d]
    final: Tensor  # P-bar^(T)
    trace: list[StepTrace] = field(default_factory=list)


@dataclass
class Prediction:
    id: str
    answer: str
    span: tuple[int, int, int]
    score: float
    sp: list[tuple[int, int]]
    sp_scores: dict[tuple[int, int], float]

    def to_json(self) -> dict:
        return {"id": self.id, "answer": self.answer, "span": list(self.span), "sp": [list(x) for x in self.sp]}


class KGNN(Module):
    def __init__(self, config: ModelConfig, vocab: Vocabulary, seed: int = 0):
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        d = config.d_model
        self.encoder = Encoder(vocab.num_words, vocab.num_chars, config.dims, rng)
        self.steps = [
            ReasonStep(d, config.num_kinds, rng, config.per_relation_ffn) for _ in range(config.max_steps)
        ]
        self.predictor = Predictor(d, rng)

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = self.encoder.named_parameters(prefix + "encoder.")
        for t, step in enumerate(self.steps):
            out.update(step.named_parameters(f"{prefix}reasoner.step{t}."))
        out.update(self.predictor.named_parameters(prefix + "predictor."))
        return out

    def trainable_parameters(self, num_steps: int | None = None) -> list[Tensor]:
        """Parameters that the loss can reach: unused reasoning steps are excluded."""
        num_steps = self.config.num_steps if num_steps is None else num_steps
        unused = {f"reasoner.step{t}." for t in range(num_steps, len(self.steps))}
        return [p for name, p in self.named_parameters().items() if not any(name.startswith(u) for u in unused)]

    def forward(self, batch: Batch, num_steps: int | None = None, keep_trace: bool = False) -> ForwardOutput:
        cfg = self.config
        num_steps = cfg.num_steps if num_steps is None else num_steps
        enc = self.encoder
        words = enc.char_encoder(batch.word_ids, batch.char_ids)
        question = enc.question_attention(ag.take(words, batch.question_index), batch.question_mask)
        paragraphs = enc.paragraph_attention(ag.take(words, batch.paragraph_index), batch.paragraph_mask)
        per_paragraph_q = ag.take(question, batch.paragraph_question)
        initial = enc.bi_attention(
            per_paragraph_q,
            paragraphs,
            batch.question_mask[batch.paragraph_question],
            batch.paragraph_mask,
        )
        summary = question_summary(question, batch.question_mask)
        trace: list[StepTrace] = []
        final = reason(
            initial, batch.paragraph_mask, batch.graph, summary, self.steps, num_steps, trace if keep_trace else None
        )
        start, end = span_logits(final, batch.paragraph_mask, self.predictor)
        p, n, d = final.shape
        sp = supporting_fact_logits(
            ag.reshape(final, (p * n, d)),
            batch.sentence_tokens,
            batch.sentence_mask,
            batch.sentence_question,
            summary,
            self.predictor,
        )
        return ForwardOutput(
            shared_log_probs(start, batch.layout),
            shared_log_probs(end, batch.layout),
            sp,
            summary,
            initial,
            final,
            trace,
        )

    def loss(self, batch: Batch, output: ForwardOutput | None = None, num_steps: int | None = None) -> Tensor:
        output = output or self.forward(batch, num_steps)
        return compute_loss(batch, output, self.config.sp_weight)

    def predict(self, batch: Batch, num_steps: int | None = None) -> list[Prediction]:
        with ag.no_grad():
            out = self.forward(batch, num_steps)
        starts = np.exp(out.start_log_probs.data)
        ends = np.exp(out.end_log_probs.data)
        sp_probs = 1.0 / (1.0 + np.exp(-out.sp_logits.data))
        sp_by_question: list[dict[tuple[int, int], float]] = [{} for _ in batch.examples]
        for (row, idx), prob in zip(batch.sentence_keys, sp_probs):
            b = int(batch.paragraph_question[row])
            sp_by_question[b][(batch.paragraph_rows[b].index(row), idx)] = float(prob)
        preds = []
        for b, ex in enumerate(batch.examples):
            par, s, e, score = decode_best_span(starts[b], ends[b], ex.lengths, self.config.max_span_len)
            chosen = sorted(k for k, v in sp_by_question[b].items() if v >= 0.5)
            preds.append(Prediction(ex.id, ex.span_text(par, s, e), (par, s, e), score, chosen, sp_by_question[b]))
        return preds


def compute_loss(batch: Batch, output: ForwardOutput, sp_weight: float = 1.0) -> Tensor:
    """Mean over questions of -log p(start) - log p(end) + sp_weight * mean sentence BCE."""
    if (batch.gold_start < 0).any():
        missing = [ex.id for ex, s in zip(batch.examples, batch.gold_start) if s < 0]
        raise ValueError(f"questions without gold spans cannot be scored: {missing[:5]}")
    b, width = output.start_log_probs.shape
    rows = np.arange(b) * width
    picked_start = ag.take(ag.reshape(output.start_log_probs, (-1,)), rows + batch.gold_start)
    picked_end = ag.take(ag.reshape(output.end_log_probs, (-1,)), rows + batch.gold_end)
    span_loss = -ag.sum(picked_start + picked_end)
    total = span_loss
    if len(batch.sentence_keys):
        x = output.sp_logits
        bce = ag.softplus(x) - x * batch.sentence_labels
        total = total + sp_weight * ag.sum(bce * batch.sentence_weights)
    return total / b


def span_loss_only(batch: Batch, output: ForwardOutput) -> Tensor:
    return compute_loss(batch, output, sp_weight=0.0)
