"""Answer, supporting-fact and joint metrics (HotpotQA conventions)."""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

_ARTICLES = re.compile(r"\b(a|an|the)\b")
_PUNCT = set(string.punctuation)


class MetricsError(ValueError):
    pass


def normalize_answer(text: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    text = "".join(ch for ch in text.lower() if ch not in _PUNCT)
    return " ".join(_ARTICLES.sub(" ", text).split())


def exact_match(prediction: str, gold: str) -> float:
    return float(normalize_answer(prediction) == normalize_answer(gold))


def answer_tokens(text: str) -> list[str]:
    """Lowercased, punctuation-free tokens; articles are kept (they only matter for EM)."""
    return "".join(ch for ch in text.lower() if ch not in _PUNCT).split()


def f1_score(prediction: str, gold: str) -> tuple[float, float, float]:
    """Token-overlap (f1, precision, recall) over :func:`answer_tokens`."""
    pred = answer_tokens(prediction)
    ref = answer_tokens(gold)
    same = sum((Counter(pred) & Counter(ref)).values())
    if same == 0:
        return 0.0, 0.0, 0.0
    precision = same / len(pred)
    recall = same / len(ref)
    return 2 * precision * recall / (precision + recall), precision, recall


def sp_scores(predicted: Iterable, gold: Iterable) -> tuple[float, float, float, float]:
    """(em, f1, precision, recall) of a predicted supporting-fact set."""
    pred, ref = set(predicted), set(gold)
    tp = len(pred & ref)
    fp = len(pred - ref)
    fn = len(ref - pred)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return float(fp + fn == 0), f1, precision, recall


def joint_scores(
    answer_em: float, answer_prec: float, answer_recall: float, sp_em: float, sp_prec: float, sp_recall: float
) -> tuple[float, float]:
    """Joint (em, f1): precision and recall are products of the answer and sp ones."""
    precision = answer_prec * sp_prec
    recall = answer_recall * sp_recall
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return answer_em * sp_em, f1


@dataclass
class QuestionScore:
    id: str
    em: float
    f1: float
    sp_em: float
    sp_f1: float
    joint_em: float
    joint_f1: float

    def to_json(self) -> dict:
        return dict(vars(self))


def score_question(qid: str, answer: str, gold_answer: str, sp: Iterable, gold_sp: Iterable) -> QuestionScore:
    em = exact_match(answer, gold_answer)
    f1, prec, recall = f1_score(answer, gold_answer)
    s_em, s_f1, s_prec, s_recall = sp_scores(sp, gold_sp)
    j_em, j_f1 = joint_scores(em, prec, recall, s_em, s_prec, s_recall)
    return QuestionScore(qid, em, f1, s_em, s_f1, j_em, j_f1)


FIELDS = ("em", "f1", "sp_em", "sp_f1", "joint_em", "joint_f1")


@dataclass
class MetricsReport:
    em: float
    f1: float
    sp_em: float
    sp_f1: float
    joint_em: float
    joint_f1: float
    per_question: list[QuestionScore] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @classmethod
    def from_scores(cls, scores: Sequence[QuestionScore], config: Mapping | None = None) -> MetricsReport:
        scores = sorted(scores, key=lambda s: s.id)
        n = max(len(scores), 1)
        totals = {f: sum(getattr(s, f) for s in scores) / n for f in FIELDS}
        return cls(**totals, per_question=list(scores), config=dict(config or {}))

    def aggregates(self) -> dict[str, float]:
        return {f: getattr(self, f) for f in FIELDS}

    def to_json(self, per_question: bool = True) -> dict:
        out = self.aggregates()
        out["config"] = self.config
        out["count"] = len(self.per_question)
        if per_question:
            out["per_question"] = [s.to_json() for s in self.per_question]
        return out


@dataclass
class GoldRecord:
    id: str
    answer: str
    supporting_facts: set


def evaluate_predictions(
    predictions: Mapping[str, tuple[str, Iterable]],
    gold: Sequence[GoldRecord],
    config: Mapping | None = None,
) -> MetricsReport:
    """Score ``{id: (answer, sp set)}`` against gold records; the id sets must coincide."""
    gold_ids = {g.id for g in gold}
    missing = sorted(gold_ids - set(predictions))
    extra = sorted(set(predictions) - gold_ids)
    if missing or extra:
        raise MetricsError(f"prediction/gold id mismatch: missing {missing[:5]}, unexpected {extra[:5]}")
    scores = []
    for g in gold:
        answer, sp = predictions[g.id]
        scores.append(score_question(g.id, answer, g.answer, sp, g.supporting_facts))
    return MetricsReport.from_scores(scores, config)
