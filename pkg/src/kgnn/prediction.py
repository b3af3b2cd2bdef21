"""Span scoring under shared normalization, span decoding and supporting-fact scores."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .encoder import SelfAttention
from .nn import Linear, Module

log = logging.getLogger(__name__)


@dataclass
class AnswerSpan:
    paragraph_id: int
    start: int
    end: int
    text: str
    score: float


class Predictor(Module):
    # span scorers carry no bias: shared normalization is shift-invariant per question
    def __init__(self, d: int, rng: np.random.Generator):
        self.start = Linear(d, 1, rng, bias=False)
        self.end_attention = SelfAttention(d, rng, fuse_bias=False)
        self.end = Linear(2 * d, 1, rng, bias=False)
        self.supporting = Linear(2 * d, 1, rng)


def span_logits(paragraphs: Tensor, mask: np.ndarray | None, predictor: Predictor) -> tuple[Tensor, Tensor]:
    """Start logits from the rows; end logits also see a self-attended context. Shapes [..., n]."""
    start = predictor.start(paragraphs)
    context = predictor.end_attention(paragraphs, mask)
    end = predictor.end(ag.concat([paragraphs, context], -1))
    return ag.reshape(start, start.shape[:-1]), ag.reshape(end, end.shape[:-1])


@dataclass
class SharedLayout:
    """Positions of every question's tokens in the flattened paragraph layout.

    ``positions[b, k]`` is the flat index of the k-th token of question b when
    its paragraphs are concatenated in order; ``mask`` marks real positions.
    """

    positions: np.ndarray
    mask: np.ndarray
    boundaries: list[list[tuple[int, int]]]  # per question: (paragraph row, length)

    @classmethod
    def build(cls, paragraph_lengths: Sequence[Sequence[int]], max_len: int) -> SharedLayout:
        totals = [sum(lengths) for lengths in paragraph_lengths]
        if any(t == 0 for t in totals):
            raise ValueError("shared normalization over zero tokens")
        width = max(totals)
        positions = np.zeros((len(totals), width), dtype=np.int64)
        mask = np.zeros((len(totals), width), dtype=bool)
        boundaries = []
        row = 0
        for b, lengths in enumerate(paragraph_lengths):
            k = 0
            bounds = []
            for n in lengths:
                positions[b, k : k + n] = row * max_len + np.arange(n)
                bounds.append((row, n))
                row += 1
                k += n
            mask[b, :k] = True
            boundaries.append(bounds)
        return cls(positions, mask, boundaries)


def shared_log_probs(logits: Tensor, layout: SharedLayout) -> Tensor:
    """One log-softmax per question over all its paragraphs' positions: [B, L]."""
    flat = ag.reshape(logits, (-1,))
    rows = ag.masked_fill(ag.take(flat, layout.positions), ~layout.mask, -np.inf)
    return ag.log_softmax(rows, -1)


def shared_norm_distribution(start_logits: Sequence[np.ndarray], end_logits: Sequence[np.ndarray]):
    """Global start/end distributions over the concatenation of all paragraphs of one question."""
    starts = np.concatenate([np.asarray(x, dtype=np.float64) for x in start_logits])
    ends = np.concatenate([np.asarray(x, dtype=np.float64) for x in end_logits])
    if starts.size == 0:
        raise ValueError("shared normalization over zero tokens")
    return _softmax(starts), _softmax(ends)


def _softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max())
    return e / e.sum()


def decode_best_span(
    p_start: np.ndarray,
    p_end: np.ndarray,
    paragraph_lengths: Sequence[int],
    max_span_len: int = 8,
) -> tuple[int, int, int, float]:
    """argmax of p_start(s) * p_end(e) with s <= e < s + max_span_len inside one paragraph.

    Returns (paragraph, start, end, score) with token offsets local to the
    paragraph; ties go to the smallest global start, then the smallest end.
    """
    best = (-1, -1, -1, -1.0)
    offset = 0
    for par, n in enumerate(paragraph_lengths):
        if n == 0:
            continue
        s = p_start[offset : offset + n]
        e = p_end[offset : offset + n]
        scores = np.outer(s, e)
        i, j = np.indices(scores.shape)
        scores = np.where((j >= i) & (j < i + max_span_len), scores, -1.0)
        flat = int(np.argmax(scores))
        value = float(scores.reshape(-1)[flat])
        if value > best[3]:
            best = (par, flat // n, flat % n, value)
        offset += n
    return best


def supporting_fact_logits(
    flat_paragraphs: Tensor,
    sentence_tokens: np.ndarray,
    sentence_mask: np.ndarray,
    sentence_question: np.ndarray,
    summary: Tensor,
    predictor: Predictor,
) -> Tensor:
    """logit(sentence) = w . [maxpool(sentence rows); question summary] + b, shape [S]."""
    rows = ag.take(flat_paragraphs, sentence_tokens)  # [S, Ls, d]
    rows = ag.masked_fill(rows, ~sentence_mask[..., None], -np.inf)
    pooled = ag.max(rows, axis=1)
    question = ag.take(summary, sentence_question)
    logits = predictor.supporting(ag.concat([pooled, question], -1))
    return ag.reshape(logits, (-1,))


def sentence_layout(
    sentence_spans: Sequence[Sequence[tuple[int, int]]], rows: Sequence[int], max_len: int
) -> tuple[np.ndarray, np.ndarray, list[tuple[int, int]]]:
    """Token index table for every non-empty sentence; empty ones are skipped with a warning.

    Returns (tokens [S, Ls], mask [S, Ls], keys) where keys[k] = (paragraph row, sentence index).
    """
    keys, spans = [], []
    for row, par_spans in zip(rows, sentence_spans):
        for idx, (s, e) in enumerate(par_spans):
            if s < 0:
                log.warning("skipping empty sentence %d of paragraph row %d", idx, row)
                continue
            keys.append((row, idx))
            spans.append((row * max_len + s, e - s + 1))
    width = max((n for _, n in spans), default=1)
    tokens = np.zeros((len(spans), width), dtype=np.int64)
    mask = np.zeros((len(spans), width), dtype=bool)
    for k, (start, n) in enumerate(spans):
        tokens[k, :n] = np.arange(start, start + n)
        mask[k, :n] = True
    return tokens, mask, keys


def supporting_fact_scores(logits: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.asarray(logits)))
