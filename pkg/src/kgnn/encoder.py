"""Character-level encoder, self-attention and bi-attention layers.

All layers accept leading batch axes, e.g. ``[paragraphs, tokens, d]``, with an
optional boolean ``mask`` marking real (non-padding) token rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .nn import Linear, Module, parameter, uniform
from .text import TokenizedText, Vocabulary


@dataclass(frozen=True)
class EncoderDims:
    d_model: int = 64
    word_dim: int = 32
    char_dim: int = 16
    char_width: int = 5
    char_filters: int = 32
    max_word_len: int = 16


class Trilinear(Module):
    """s_ij = w1.a_i + w2.b_j + w3.(a_i * b_j).

    With ``row_term=False`` the w1 term is left out: it is constant along each
    row, so a row softmax cancels it exactly and it could never be trained.
    """

    def __init__(self, d: int, rng: np.random.Generator, row_term: bool = True):
        self.w_left = parameter(uniform(rng, (d, 1), d)) if row_term else None
        self.w_right = parameter(uniform(rng, (d, 1), d))
        self.w_mul = parameter(uniform(rng, (d,), d))

    def __call__(self, a: Tensor, b: Tensor) -> Tensor:
        right = ag.swapaxes(ag.matmul(b, self.w_right), -1, -2)
        scores = right + ag.matmul(a * self.w_mul, ag.swapaxes(b, -1, -2))
        if self.w_left is not None:
            scores = scores + ag.matmul(a, self.w_left)
        return scores


def _unsqueeze(x: Tensor, axis: int) -> Tensor:
    shape = list(x.shape)
    shape.insert(axis if axis >= 0 else len(shape) + 1 + axis, 1)
    return ag.reshape(x, shape)


def masked_row_softmax(scores: Tensor, blocked: np.ndarray) -> Tensor:
    """Softmax over the last axis ignoring blocked keys; fully blocked rows come out as zeros."""
    blocked = np.broadcast_to(blocked, scores.shape)
    live = ~blocked.all(axis=-1, keepdims=True)
    scores = ag.masked_fill(scores, blocked & live, -np.inf)
    if not live.all():
        scores = ag.masked_fill(scores, ~live, 0.0)
        return ag.softmax(scores, -1) * live.astype(np.float64)
    return ag.softmax(scores, -1)


class SelfAttention(Module):
    def __init__(self, d: int, rng: np.random.Generator, fuse_bias: bool = True):
        self.similarity = Trilinear(d, rng, row_term=False)
        self.fuse = Linear(3 * d, d, rng, bias=fuse_bias)

    def attend(self, h: Tensor, mask: np.ndarray | None = None) -> Tensor:
        n = h.shape[-2]
        blocked = np.eye(n, dtype=bool)
        if mask is not None:
            blocked = blocked | ~np.asarray(mask, dtype=bool)[..., None, :]
        weights = masked_row_softmax(self.similarity(h, h), blocked)
        return ag.matmul(weights, h)

    def __call__(self, h: Tensor, mask: np.ndarray | None = None) -> Tensor:
        attended = self.attend(h, mask)
        return h + self.fuse(ag.concat([h, attended, h * attended], -1))


class BiAttention(Module):
    def __init__(self, d: int, d_out: int, rng: np.random.Generator):
        self.similarity = Trilinear(d, rng)
        self.fuse = Linear(4 * d, d_out, rng)

    def __call__(
        self,
        q: Tensor,
        p: Tensor,
        q_mask: np.ndarray | None = None,
        p_mask: np.ndarray | None = None,
    ) -> Tensor:
        scores = self.similarity(p, q)  # [..., n, m]
        if q_mask is not None:
            scores = ag.masked_fill(scores, ~np.asarray(q_mask, dtype=bool)[..., None, :], -np.inf)
        context_to_query = ag.matmul(ag.softmax(scores, -1), q)
        best = ag.max(scores, -1)  # [..., n]
        if p_mask is not None:
            best = ag.masked_fill(best, ~np.asarray(p_mask, dtype=bool), -np.inf)
        query_to_context = ag.matmul(_unsqueeze(ag.softmax(best, -1), -2), p)  # [..., 1, d]
        fused = ag.concat([p, context_to_query, p * context_to_query, p * query_to_context], -1)
        return ag.relu(self.fuse(fused))


def char_windows(char_ids: np.ndarray, width: int) -> np.ndarray:
    """[N, L] char ids -> [N, L - width + 1, width] sliding windows."""
    n, length = char_ids.shape
    if length < width:
        raise ValueError(f"max_word_len {length} shorter than char filter width {width}")
    return np.lib.stride_tricks.sliding_window_view(char_ids, width, axis=1)


class CharEncoder(Module):
    """Word embedding + max-pooled char CNN, projected to d_model."""

    def __init__(self, num_words: int, num_chars: int, dims: EncoderDims, rng: np.random.Generator):
        self.dims = dims
        self.word_embedding = parameter(rng.normal(0.0, 1.0, (num_words, dims.word_dim)))
        self.char_embedding = parameter(rng.normal(0.0, 1.0, (num_chars, dims.char_dim)))
        fan_in = dims.char_width * dims.char_dim
        self.char_conv = Linear(fan_in, dims.char_filters, rng)
        self.project = Linear(dims.word_dim + dims.char_filters, dims.d_model, rng)

    def __call__(self, word_ids: np.ndarray, char_ids: np.ndarray) -> Tensor:
        n = len(word_ids)
        words = ag.take(self.word_embedding, word_ids)
        windows = char_windows(char_ids, self.dims.char_width)
        chars = ag.take(self.char_embedding, windows)  # [N, W, width, char_dim]
        chars = ag.reshape(chars, (n, windows.shape[1], -1))
        pooled = ag.max(self.char_conv(chars), axis=1)
        return self.project(ag.concat([words, pooled], -1))

    def encode_text(self, text: TokenizedText, vocab: Vocabulary) -> Tensor:
        word_ids = np.array([vocab.word_id(t) for t in text.tokens], dtype=np.int64)
        return self(word_ids, text.char_ids(vocab, self.dims.max_word_len))


class Encoder(Module):
    """Question / paragraph contextualisation and question-aware paragraph rows."""

    def __init__(self, num_words: int, num_chars: int, dims: EncoderDims, rng: np.random.Generator):
        d = dims.d_model
        self.char_encoder = CharEncoder(num_words, num_chars, dims, rng)
        self.question_attention = SelfAttention(d, rng)
        self.paragraph_attention = SelfAttention(d, rng)
        self.bi_attention = BiAttention(d, d, rng)
