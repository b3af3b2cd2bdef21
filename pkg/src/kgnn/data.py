"""Corpus records (HotpotQA-compatible) and their model-ready preparation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .graph import EntityGraph, GraphConfig, build_graph
from .knowledge import KnowledgeStore, Mention
from .text import TokenizedText, tokenize, tokenize_sentences


class CorpusError(ValueError):
    pass


@dataclass
class Paragraph:
    title: str
    sentences: list[str]


@dataclass
class Example:
    id: str
    question: str
    answer: str
    paragraphs: list[Paragraph]
    supporting_facts: list[tuple[str, int]] = field(default_factory=list)
    type: str | None = None
    level: str | None = None
    meta: dict = field(default_factory=dict)  # generator bookkeeping, ignored by the model

    def to_json(self) -> dict:
        row = {
            "id": self.id,
            "question": self.question,
            "answer": self.answer,
            "paragraphs": [{"title": p.title, "sentences": p.sentences} for p in self.paragraphs],
            "supporting_facts": [[t, i] for t, i in self.supporting_facts],
        }
        if self.type is not None:
            row["type"] = self.type
        if self.level is not None:
            row["level"] = self.level
        if self.meta:
            row["meta"] = self.meta
        return row

    @classmethod
    def from_json(cls, row: dict) -> Example:
        """Accepts both the JSON-lines schema and raw HotpotQA records (``_id``, ``context``)."""
        ident = row.get("id", row.get("_id"))
        if ident is None:
            raise CorpusError("record has neither 'id' nor '_id'")
        if "paragraphs" in row:
            paragraphs = [Paragraph(str(p["title"]), [str(s) for s in p["sentences"]]) for p in row["paragraphs"]]
        elif "context" in row:
            paragraphs = [Paragraph(str(title), [str(s) for s in sents]) for title, sents in row["context"]]
        else:
            raise CorpusError(f"record {ident!r} has neither 'paragraphs' nor 'context'")
        if "question" not in row:
            raise CorpusError(f"record {ident!r} has no question")
        facts = [(str(t), int(i)) for t, i in row.get("supporting_facts", [])]
        return cls(
            id=str(ident),
            question=str(row["question"]),
            answer=str(row.get("answer", "")),
            paragraphs=paragraphs,
            supporting_facts=facts,
            type=row.get("type"),
            level=row.get("level"),
            meta=dict(row.get("meta") or {}),
        )


def read_corpus(path: str | Path) -> list[Example]:
    """Read a JSON-lines corpus or a HotpotQA JSON array."""
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    if not stripped:
        return []
    try:
        if stripped.startswith("["):
            rows = json.loads(text)
        else:
            rows = [json.loads(line) for line in text.splitlines() if line.strip()]
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: {exc}") from None
    examples = [Example.from_json(r) for r in rows]
    seen = set()
    for ex in examples:
        if ex.id in seen:
            raise CorpusError(f"{path}: duplicate question id {ex.id!r}")
        seen.add(ex.id)
    return examples


def write_corpus(path: str | Path, examples: Iterable[Example]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            f.write(json.dumps(ex.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


@dataclass
class PreparedExample:
    example: Example
    question: TokenizedText
    paragraphs: list[TokenizedText]
    mentions: list[list[Mention]]
    graph: EntityGraph
    gold_span: tuple[int, int, int] | None
    sp_labels: list[list[int]]

    @property
    def id(self) -> str:
        return self.example.id

    @property
    def lengths(self) -> list[int]:
        return [len(p) for p in self.paragraphs]

    def span_text(self, paragraph: int, start: int, end: int) -> str:
        return " ".join(self.paragraphs[paragraph].tokens[start : end + 1])


def find_answer_span(
    answer: str, paragraphs: Sequence[TokenizedText], preferred: Sequence[int] = ()
) -> tuple[int, int, int] | None:
    """First token-level occurrence of the answer, searching preferred (gold) paragraphs first."""
    target = [t.lower() for t in tokenize(answer).tokens]
    if not target:
        return None
    order = list(dict.fromkeys(list(preferred) + list(range(len(paragraphs)))))
    n = len(target)
    for par in order:
        toks = [t.lower() for t in paragraphs[par].tokens]
        for i in range(len(toks) - n + 1):
            if toks[i : i + n] == target:
                return par, i, i + n - 1
    return None


def prepare_example(example: Example, store: KnowledgeStore, config: GraphConfig | None = None) -> PreparedExample:
    question = tokenize(example.question)
    if question.empty:
        raise CorpusError(f"question {example.id!r} is empty")
    paragraphs = [tokenize_sentences(p.sentences) for p in example.paragraphs]
    mentions = [store.link_mentions(p, i) for i, p in enumerate(paragraphs)]
    graph = build_graph(mentions, store, config)
    title_index = {p.title: i for i, p in enumerate(example.paragraphs)}
    sp_labels = [[0] * p.num_sentences for p in paragraphs]
    for title, idx in example.supporting_facts:
        par = title_index.get(title)
        if par is not None and 0 <= idx < len(sp_labels[par]):
            sp_labels[par][idx] = 1
    gold_paragraphs = sorted({title_index[t] for t, _ in example.supporting_facts if t in title_index})
    span = find_answer_span(example.answer, paragraphs, gold_paragraphs) if example.answer else None
    return PreparedExample(example, question, paragraphs, mentions, graph, span, sp_labels)
