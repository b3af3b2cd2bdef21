"""Layer-count and paragraph-count sweeps on synthetic bridge questions."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .data import PreparedExample
from .model import ModelConfig
from .synthetic import SyntheticTaskSpec, SyntheticWorld, chance_em, generate_questions
from .text import Vocabulary
from .training import TrainConfig, build_vocabulary, evaluate, prepare_corpus, train

log = logging.getLogger(__name__)

# joint EM / F1 on HotpotQA, kept for side-by-side display only
LAYER_REFERENCE = {1: (22.26, 53.50), 2: (22.41, 54.05), 3: (22.24, 53.49)}
# joint F1 by retrieved paragraph count
PARAGRAPH_REFERENCE = {
    "kgnn": {10: 22.20, 20: 25.02, 30: 25.12},
    "baseline": {10: 20.77, 20: 20.88, 30: 21.52},
}


@dataclass
class SweepTable:
    name: str
    columns: list[str]
    rows: list[dict]
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"name": self.name, "columns": self.columns, "rows": self.rows, "meta": self.meta}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    def _cells(self) -> list[list[str]]:
        def fmt(v):
            if isinstance(v, float):
                return f"{v:.4f}"
            return str(v)

        return [[fmt(row.get(c, "")) for c in self.columns] for row in self.rows]

    def to_tsv(self) -> str:
        lines = ["\t".join(self.columns)] + ["\t".join(r) for r in self._cells()]
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        cells = self._cells()
        widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(self.columns)]
        out = ["  ".join(c.rjust(w) for c, w in zip(self.columns, widths))]
        out.append("  ".join("-" * w for w in widths))
        out += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells]
        return "\n".join(out) + "\n"


def bridge_scores(report, prepared: Sequence[PreparedExample]) -> tuple[float, float]:
    """(answer EM, chance EM) averaged over bridge questions."""
    kinds = {p.id: p.example for p in prepared}
    bridge = [s for s in report.per_question if kinds[s.id].type == "bridge"]
    if not bridge:
        return float("nan"), float("nan")
    em = float(np.mean([s.em for s in bridge]))
    chance = float(np.mean([chance_em(kinds[s.id]) for s in bridge]))
    return em, chance


LAYER_COLUMNS = ["T", "em", "f1", "sp_f1", "joint_em", "joint_f1", "bridge_em", "chance", "best_epoch"]


def layer_sweep(
    train_set: Sequence[PreparedExample],
    dev_set: Sequence[PreparedExample],
    model_config: ModelConfig,
    train_config: TrainConfig,
    t_values: Sequence[int] = (0, 1, 2),
    vocab: Vocabulary | None = None,
    on_epoch: Callable[[int, dict], None] | None = None,
) -> SweepTable:
    """Train one model per T with the same seed and budget; score each on the dev set."""
    vocab = vocab or build_vocabulary(train_set)
    rows, histories = [], {}
    for t in t_values:
        cfg = replace(train_config, num_steps=t)
        hook = (lambda entry, t=t: on_epoch(t, entry)) if on_epoch else None
        result = train(model_config, cfg, train_set, dev_set, vocab, on_epoch=hook)
        report, _ = evaluate(result.model, dev_set, cfg.eval_batch_size)
        bridge_em, chance = bridge_scores(report, dev_set)
        row = {"T": t, **report.aggregates(), "bridge_em": bridge_em, "chance": chance, "best_epoch": result.best_epoch}
        rows.append(row)
        histories[str(t)] = result.history
        log.info("layer sweep T=%d: %s", t, json.dumps(row, sort_keys=True))
    meta = {
        "model": model_config.to_dict(),
        "train": train_config.to_dict(),
        "dev_questions": len(dev_set),
        "train_questions": len(train_set),
        "reference_joint_em_f1": {str(k): v for k, v in LAYER_REFERENCE.items()},
        "histories": histories,
    }
    return SweepTable("layer_sweep", LAYER_COLUMNS, rows, meta)


PARAGRAPH_COLUMNS = ["paragraphs", "kgnn_joint_f1", "ablation_joint_f1", "kgnn_em", "ablation_em", "chance"]


def degradation(first: float, last: float) -> dict[str, float]:
    absolute = first - last
    return {"absolute": absolute, "relative": absolute / first if first > 0 else float("nan")}


def paragraph_sweep(
    world: SyntheticWorld,
    train_set: Sequence[PreparedExample],
    model_config: ModelConfig,
    train_config: TrainConfig,
    dev_spec: SyntheticTaskSpec,
    counts: Sequence[int] = (4, 10, 20, 30),
    vocab: Vocabulary | None = None,
    on_epoch: Callable[[str, dict], None] | None = None,
) -> SweepTable:
    """Train KGNN and its no-graph ablation once, then score both as distractors grow.

    ``dev_spec`` fixes the dev questions' seed and size; its paragraph count is
    replaced by each entry of ``counts``.
    """
    vocab = vocab or build_vocabulary(train_set)
    variants = {"kgnn": model_config, "ablation": replace(model_config, use_graph=False)}
    models = {}
    for name, cfg in variants.items():
        hook = (lambda entry, name=name: on_epoch(name, entry)) if on_epoch else None
        # the ablation sees graphs without edges: isolated nodes, so every update is zero
        train_prepared = train_set if name == "kgnn" else _rebuild(train_set, world, cfg)
        models[name] = train(cfg, train_config, train_prepared, (), vocab, on_epoch=hook).model

    rows = []
    for count in counts:
        spec = replace(dev_spec, paragraphs_per_question=count)
        examples = generate_questions(world, spec)
        row = {"paragraphs": count}
        for name, cfg in variants.items():
            dev = prepare_corpus(examples, world.store, cfg, require_span=True)
            report, _ = evaluate(models[name], dev, train_config.eval_batch_size)
            row[f"{name}_joint_f1"] = report.joint_f1
            row[f"{name}_em"] = report.em
            row["chance"] = bridge_scores(report, dev)[1]
        rows.append(row)
        log.info("paragraph sweep %d: %s", count, json.dumps(row, sort_keys=True))
    meta = {
        "model": model_config.to_dict(),
        "train": train_config.to_dict(),
        "dev_spec": dev_spec.to_dict(),
        "train_questions": len(train_set),
        "reference_joint_f1": {k: {str(c): v for c, v in d.items()} for k, d in PARAGRAPH_REFERENCE.items()},
    }
    if rows:
        first, last = rows[0], rows[-1]
        meta["degradation"] = {
            name: degradation(first[f"{name}_joint_f1"], last[f"{name}_joint_f1"]) for name in variants
        }
    return SweepTable("paragraph_sweep", PARAGRAPH_COLUMNS, rows, meta)


def _rebuild(prepared: Sequence[PreparedExample], world: SyntheticWorld, config: ModelConfig) -> list[PreparedExample]:
    return prepare_corpus([p.example for p in prepared], world.store, config, require_span=True)
