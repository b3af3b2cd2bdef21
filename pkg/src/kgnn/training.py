"""Training loop, evaluation, prediction dumps and model checkpoints."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .data import Example, PreparedExample, prepare_example
from .knowledge import KnowledgeStore
from .metrics import GoldRecord, MetricsReport, evaluate_predictions
from .model import KGNN, Batch, ModelConfig, Prediction
from .nn import Adam, iter_batches
from .text import Vocabulary

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 16
    epochs: int = 10
    num_steps: int = 2
    seed: int = 0
    clip_norm: float = 5.0
    max_updates: int | None = None  # stop after this many optimizer steps
    eval_batch_size: int = 32

    def __post_init__(self):
        for name in ("lr", "batch_size", "epochs", "clip_norm", "eval_batch_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.num_steps < 0:
            raise ValueError("num_steps must be >= 0")
        if self.max_updates is not None and self.max_updates <= 0:
            raise ValueError("max_updates must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def prepare_corpus(
    examples: Sequence[Example], store: KnowledgeStore, config: ModelConfig, require_span: bool = False
) -> list[PreparedExample]:
    """Tokenize, link and build graphs; questions without an answer span are dropped
    (with a warning) when ``require_span`` is set."""
    out = []
    for ex in examples:
        prepared = prepare_example(ex, store, config.graph_config)
        if require_span and prepared.gold_span is None:
            log.warning("dropping %s: answer %r not found in its paragraphs", ex.id, ex.answer)
            continue
        out.append(prepared)
    return out


def build_vocabulary(prepared: Sequence[PreparedExample]) -> Vocabulary:
    return Vocabulary.build([p.question for p in prepared] + [t for p in prepared for t in p.paragraphs])


def gold_record(prepared: PreparedExample) -> GoldRecord:
    titles = {p.title: i for i, p in enumerate(prepared.example.paragraphs)}
    facts = {(titles[t], i) for t, i in prepared.example.supporting_facts if t in titles}
    return GoldRecord(prepared.id, prepared.example.answer, facts)


def predict(
    model: KGNN, prepared: Sequence[PreparedExample], batch_size: int = 32, num_steps: int | None = None
) -> list[Prediction]:
    preds = []
    for start in range(0, len(prepared), batch_size):
        chunk = prepared[start : start + batch_size]
        batch = Batch.build(chunk, model.vocab, model.config, require_gold=False)
        preds.extend(model.predict(batch, num_steps))
    return preds


def evaluate(
    model: KGNN,
    prepared: Sequence[PreparedExample],
    batch_size: int = 32,
    num_steps: int | None = None,
    config: dict | None = None,
) -> tuple[MetricsReport, list[Prediction]]:
    preds = predict(model, prepared, batch_size, num_steps)
    table = {p.id: (p.answer, set(p.sp)) for p in preds}
    report = evaluate_predictions(table, [gold_record(p) for p in prepared], config)
    return report, preds


def write_predictions(path: str | Path, predictions: Sequence[Prediction]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in sorted(predictions, key=lambda p: p.id):
            f.write(json.dumps(p.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def read_predictions(path: str | Path) -> dict[str, tuple[str, set]]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                row = json.loads(line)
                out[str(row["id"])] = (str(row["answer"]), {(int(a), int(b)) for a, b in row.get("sp", [])})
    return out


def save_model(path: str | Path, model: KGNN, extra: dict | None = None) -> None:
    meta = {
        "model_config": model.config.to_dict(),
        "vocab": {"words": model.vocab.words, "chars": model.vocab.chars},
    }
    meta.update(extra or {})
    ag.save_checkpoint(path, model.named_parameters(), meta)


def load_model(path: str | Path) -> tuple[KGNN, dict]:
    arrays, meta = ag.load_checkpoint(path)
    try:
        config = ModelConfig.from_dict(meta["model_config"])
        vocab = Vocabulary(meta["vocab"]["words"], meta["vocab"]["chars"])
    except KeyError as exc:
        raise ValueError(f"{path}: checkpoint lacks {exc} metadata") from None
    model = KGNN(config, vocab)
    model.load_arrays(arrays)
    return model, meta


@dataclass
class TrainResult:
    model: KGNN
    history: list[dict] = field(default_factory=list)
    best_epoch: int | None = None
    best_dev: dict | None = None
    updates: int = 0


def _diagnose(model: KGNN, epoch: int, update: int, loss: float, norm: float) -> str:
    bad = [
        name
        for name, p in model.named_parameters().items()
        if not np.all(np.isfinite(p.data)) or (p.grad is not None and not np.all(np.isfinite(p.grad)))
    ]
    return f"loss became {loss} at epoch {epoch}, update {update} (grad norm {norm}); non-finite tensors: {bad[:8]}"


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_set: Sequence[PreparedExample],
    dev_set: Sequence[PreparedExample] = (),
    vocab: Vocabulary | None = None,
    checkpoint: str | Path | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Adam on the span + supporting-fact loss; keeps (and saves) the best dev joint F1 weights.

    Deterministic given ``train_config.seed``; the history holds no timings.
    """
    if not train_set:
        raise ValueError("empty training set")
    t = train_config.num_steps
    model_config = replace(model_config, num_steps=t, max_steps=max(model_config.max_steps, t))
    vocab = vocab or build_vocabulary(train_set)
    model = KGNN(model_config, vocab, seed=train_config.seed)
    params = model.trainable_parameters()
    opt = Adam(params, train_config.lr, clip_norm=train_config.clip_norm)
    rng = np.random.default_rng([train_config.seed, 7])
    result = TrainResult(model)
    best_score, best_arrays = -1.0, None
    echo = {"model": model_config.to_dict(), "train": train_config.to_dict()}

    for epoch in range(1, train_config.epochs + 1):
        began = time.perf_counter()
        losses = []
        for idx in iter_batches(len(train_set), train_config.batch_size, rng):
            batch = Batch.build([train_set[i] for i in idx], vocab, model_config)
            opt.zero_grad()
            loss = model.loss(batch)
            value = loss.item()
            ag.backward(loss)
            norm = opt.step()
            result.updates += 1
            if not (np.isfinite(value) and np.isfinite(norm)) or not ag.parameters_finite(params):
                raise TrainingDiverged(_diagnose(model, epoch, result.updates, value, norm))
            losses.append(value)
            if train_config.max_updates and result.updates >= train_config.max_updates:
                break
        entry = {"epoch": epoch, "updates": result.updates, "train_loss": float(np.mean(losses))}
        if dev_set:
            report, _ = evaluate(model, dev_set, train_config.eval_batch_size, config=echo)
            entry["dev"] = report.aggregates()
            score = report.joint_f1
        else:
            score = -entry["train_loss"]
        if score > best_score:
            best_score = score
            result.best_epoch = epoch
            result.best_dev = entry.get("dev")
            best_arrays = {n: p.data.copy() for n, p in model.named_parameters().items()}
            if checkpoint is not None:
                save_model(checkpoint, model, {"train_config": train_config.to_dict(), "epoch": epoch, "dev": entry.get("dev")})
        result.history.append(entry)
        log.info("epoch %d: %s (%.1fs)", epoch, json.dumps(entry, sort_keys=True), time.perf_counter() - began)
        if on_epoch is not None:
            on_epoch(entry)
        if train_config.max_updates and result.updates >= train_config.max_updates:
            break

    if best_arrays is not None:
        model.load_arrays(best_arrays)
    return result
