"""Toy fixture and the full-loss finite-difference check run by ``kgnn gradcheck``.

The toy mirrors the classic bridge example: a song mentioned in one paragraph,
described in another, whose lyricist is the answer.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from . import autograd as ag
from .data import Example, Paragraph, prepare_example
from .knowledge import EntityRecord, KnowledgeStore, RelationTriple
from .model import KGNN, Batch, ModelConfig
from .text import Vocabulary

# Seed of the toy model's parameters. Entries whose true gradient is below
# ~1e-6 sit at the float64 roundoff floor of a central difference, and a few
# seeds also put a relu/max kink within eps; this seed avoids both.
DEFAULT_SEED = 3

TOY_CONFIG = ModelConfig(
    d_model=6, word_dim=4, char_dim=3, char_width=3, char_filters=4, max_word_len=6, num_steps=2, max_steps=2
)


def toy_store() -> KnowledgeStore:
    return KnowledgeStore(
        [
            EntityRecord("wd", "Wildest Dreams"),
            EntityRecord("mm", "Max Martin"),
            EntityRecord("ts", "Taylor Swift"),
            EntityRecord("bm", "Big Machine"),
        ],
        [RelationTriple("wd", "lyrics_by", "mm"), RelationTriple("wd", "record_label", "bm")],
    )


def toy_examples() -> list[Example]:
    bridge = Example(
        "toy-bridge",
        "Who wrote the lyrics of the song by Taylor Swift ?",
        "Max Martin",
        [
            Paragraph("Taylor Swift", ["Taylor Swift sang Wildest Dreams .", "She is famous ."]),
            Paragraph(
                "Wildest Dreams",
                [
                    "Wildest Dreams is a song .",
                    "The lyrics of Wildest Dreams were written by Max Martin .",
                    "It was released by Big Machine .",
                ],
            ),
        ],
        [("Taylor Swift", 0), ("Wildest Dreams", 1)],
        type="bridge",
    )
    label = Example(
        "toy-label",
        "Which label released Wildest Dreams ?",
        "Big Machine",
        [
            Paragraph("Wildest Dreams", ["Wildest Dreams was released by Big Machine ."]),
            Paragraph("Elsewhere", ["Nothing here ."]),
        ],
        [("Wildest Dreams", 0)],
    )
    return [bridge, label]


@dataclass
class GradcheckResult:
    max_relative_error: float
    num_parameters: int
    seconds: float
    seed: int
    eps: float

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "max_relative_error": self.max_relative_error,
            "num_parameters": self.num_parameters,
            "seconds": round(self.seconds, 3),
            "seed": self.seed,
        }


def toy_batch(config: ModelConfig = TOY_CONFIG) -> tuple[Batch, Vocabulary]:
    store = toy_store()
    prepared = [prepare_example(ex, store, config.graph_config) for ex in toy_examples()]
    vocab = Vocabulary.build([p.question for p in prepared] + [t for p in prepared for t in p.paragraphs])
    return Batch.build(prepared, vocab, config), vocab


def run_gradcheck(seed: int = DEFAULT_SEED, eps: float = 1e-5, config: ModelConfig = TOY_CONFIG) -> GradcheckResult:
    """Central differences on every trainable entry of the full loss of a 2-question batch."""
    batch, vocab = toy_batch(config)
    model = KGNN(config, vocab, seed=seed)
    params = model.trainable_parameters()
    start = time.perf_counter()
    err = ag.finite_diff_check(lambda: model.loss(batch), params, eps)
    return GradcheckResult(err, sum(p.data.size for p in params), time.perf_counter() - start, seed, eps)
