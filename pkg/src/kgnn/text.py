"""Tokenization and vocabularies."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)
SENTENCE_END = {".", "?", "!"}

PAD, UNK = "<pad>", "<unk>"


@dataclass
class TokenizedText:
    tokens: list[str]
    sentence_ids: list[int] = field(default_factory=list)
    sentence_count: int | None = None

    def __post_init__(self):
        if not self.sentence_ids:
            self.sentence_ids = [0] * len(self.tokens)
        if len(self.sentence_ids) != len(self.tokens):
            raise ValueError("one sentence index per token required")

    @property
    def empty(self) -> bool:
        return not self.tokens

    @property
    def num_sentences(self) -> int:
        if self.sentence_count is not None:
            return self.sentence_count
        return self.sentence_ids[-1] + 1 if self.sentence_ids else 0

    def __len__(self) -> int:
        return len(self.tokens)

    def sentence_spans(self) -> list[tuple[int, int]]:
        """Inclusive token range of every sentence index (empty sentences absent)."""
        spans: dict[int, list[int]] = {}
        for i, s in enumerate(self.sentence_ids):
            spans.setdefault(s, [i, i])[1] = i
        return [tuple(spans[s]) if s in spans else (-1, -1) for s in range(self.num_sentences)]

    def char_ids(self, vocab: Vocabulary, max_word_len: int) -> np.ndarray:
        return vocab.char_matrix(self.tokens, max_word_len)


def tokenize(text: str) -> TokenizedText:
    """Split on whitespace and punctuation, keeping punctuation tokens.

    A new sentence starts after '.', '?' or '!' when whitespace follows.
    """
    tokens: list[str] = []
    sentence_ids: list[int] = []
    sentence = 0
    pending_break = False
    for match in _TOKEN_RE.finditer(text):
        if pending_break:
            sentence += 1
            pending_break = False
        tok = match.group()
        tokens.append(tok)
        sentence_ids.append(sentence)
        end = match.end()
        if tok in SENTENCE_END and end < len(text) and text[end].isspace():
            pending_break = True
    return TokenizedText(tokens, sentence_ids)


def tokenize_sentences(sentences: Iterable[str]) -> TokenizedText:
    """Tokenize pre-split sentences, keeping the given sentence boundaries."""
    tokens: list[str] = []
    sentence_ids: list[int] = []
    count = 0
    for i, sent in enumerate(sentences):
        toks = _TOKEN_RE.findall(sent)
        tokens.extend(toks)
        sentence_ids.extend([i] * len(toks))
        count = i + 1
    return TokenizedText(tokens, sentence_ids, sentence_count=count)


class Vocabulary:
    """Word and character id maps; id 0 is padding and id 1 unknown in both."""

    def __init__(self, words: dict[str, int] | None = None, chars: dict[str, int] | None = None):
        self.words = words or {PAD: 0, UNK: 1}
        self.chars = chars or {PAD: 0, UNK: 1}
        for table in (self.words, self.chars):
            if table.get(PAD) != 0 or table.get(UNK) != 1:
                raise ValueError("vocabulary must reserve id 0 for padding and 1 for unknown")
            if sorted(table.values()) != list(range(len(table))):
                raise ValueError("vocabulary ids must be dense")

    @classmethod
    def build(cls, texts: Iterable[TokenizedText], min_count: int = 1) -> Vocabulary:
        counts: dict[str, int] = {}
        chars: set[str] = set()
        for text in texts:
            for tok in text.tokens:
                key = tok.lower()
                counts[key] = counts.get(key, 0) + 1
                chars.update(tok)
        words = {PAD: 0, UNK: 1}
        for w in sorted(w for w, c in counts.items() if c >= min_count):
            words[w] = len(words)
        char_map = {PAD: 0, UNK: 1}
        for c in sorted(chars):
            char_map[c] = len(char_map)
        return cls(words, char_map)

    @property
    def num_words(self) -> int:
        return len(self.words)

    @property
    def num_chars(self) -> int:
        return len(self.chars)

    def word_id(self, token: str) -> int:
        return self.words.get(token.lower(), 1)

    def char_matrix(self, tokens: list[str], max_word_len: int) -> np.ndarray:
        out = np.zeros((len(tokens), max_word_len), dtype=np.int64)
        for i, tok in enumerate(tokens):
            for j, ch in enumerate(tok[:max_word_len]):
                out[i, j] = self.chars.get(ch, 1)
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps({"words": self.words, "chars": self.chars}, sort_keys=True, ensure_ascii=False),
            encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path) -> Vocabulary:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["words"], payload["chars"])
